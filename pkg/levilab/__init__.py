"""
levi-lab: numerical toolkit for q-plurisubharmonic functions and q-pseudoconvex sets
"""
