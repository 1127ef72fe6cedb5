from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables.

    Scenario physics lives in ``ScenarioParams``; this class only covers how the
    simulator runs (logging, concurrency, where results land).
    """

    # Application settings
    app_name: str = Field(default="CV Erasure Code", description="Application name")
    app_version: str = Field(default="0.1.0", description="Application version")
    environment: Literal["development", "staging", "production"] = Field(
        default="development", description="Environment name"
    )

    # Logging settings
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="INFO", description="Logging level"
    )
    json_logs: bool = Field(
        default=False, description="Enable JSON logging (useful for batch runs)"
    )

    # Run settings
    output_dir: Path = Field(
        default=Path("results"), description="Directory receiving result files"
    )
    max_workers: int = Field(
        default=4, ge=1, le=256, description="Worker threads for sweep points"
    )
    default_seed: int = Field(
        default=20100101,
        ge=0,
        lt=2**64,
        description="Master seed used when a run does not pass --seed",
    )

    model_config = SettingsConfigDict(
        env_prefix="CVQEC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        validate_assignment=True,
    )

    @field_validator("output_dir", mode="before")
    @classmethod
    def expand_output_dir(cls, v):
        """Expand ``~`` in OUTPUT_DIR so shell-style paths work from .env files."""
        if isinstance(v, str):
            v = v.strip()
            return Path(v).expanduser()
        return v


def get_settings() -> Settings:
    """Return a Settings instance, always using current env vars."""
    return Settings()
