"""
Configuration settings for the application
"""
from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings"""
    # App info
    APP_VERSION: str = "1.0.0"

    # Environment
    LOG_LEVEL: str = "WARNING"

    # Numerics
    DEFAULT_TOL: float = 1e-8  # relative to spectral radius
    GUARD_FACTOR: float = 100.0
    SYMMETRY_WARN: float = 1e-8
    FD_STEP: float = 1e-5
    FD_TOL: float = 1e-5
    BOUNDARY_TOL: float = 1e-8
    CONTACT_TOL: float = 1e-9
    ON_GRAPH_TOL: float = 1e-9

    # Runs
    DEFAULT_SEED: int = 0
    THREADS: Optional[int] = None  # None = available cores
    OUTPUT_DIR: str = "out"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="LEVILAB_",
        case_sensitive=True,
        extra="ignore"
    )


# Create a global settings object
settings = Settings()
