from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv
import pathlib

# Load environment variables from .env file
# Use absolute path to ensure it works in all contexts
env_path = pathlib.Path(__file__).parent.parent / '.env'
load_dotenv(env_path)


class Settings(BaseSettings):
    """Simulator settings; every field can be overridden with a RED_SIM_* variable"""

    model_config = SettingsConfigDict(
        env_prefix="RED_SIM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Numerical tolerances
    tolerance: float = 1e-10  # state validity, Schmidt reconstruction
    measurement_tolerance: float = 1e-9  # Kraus completeness, outcome independence
    probability_tolerance: float = 1e-8  # total probability, decomposition reconstruction
    bound_tolerance: float = 1e-9  # slack allowed before a sample counts as a violation
    zero_probability_threshold: float = 1e-12
    schmidt_cutoff: float = 1e-12

    # Reproducibility
    default_seed: int = 20040101

    # Worker pool for trials and optimizer restarts
    max_workers: int = 4

    # Phase optimizer
    optimizer_max_iters: int = 500  # full coordinate sweeps
    optimizer_tol: float = 1e-9
    optimizer_grid_points: int = 24  # coarse scan used to bracket each line search

    # Reports
    report_significant_digits: int = 12

    # API Configuration
    api_host: str = "0.0.0.0"
    api_port: int = 8000
    debug: bool = False
    log_level: Optional[str] = None

    @property
    def logging_level(self) -> str:
        """Resolved log level name"""
        if self.log_level:
            return self.log_level.upper()
        return "DEBUG" if self.debug else "INFO"


# Global settings instance
settings = Settings()
