#!/usr/bin/env python3
"""
Entry point for the levi-lab command-line tool
"""
import sys

from levilab.cli import main

if __name__ == "__main__":
    sys.exit(main())
