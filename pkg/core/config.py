"""Configuration."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings read from the environment and `.env`."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_ignore_empty=True,
        extra="ignore",
    )

    OUTPUT_ROOT: Path = Field(
        default=Path("."),
        validation_alias="ECC_OUTPUT_ROOT",
        description="Root directory for data/, models/ and reports/",
    )
    LOG_LEVEL: str = Field(
        default="INFO",
        validation_alias="ECC_LOG_LEVEL",
        description="Root logger level",
    )
    DATABASE_URL: str = Field(
        default="",
        validation_alias="ECC_DATABASE_URL",
        description="Run registry URL; defaults to a SQLite file under the output root",
    )
    MAX_PARALLEL_RUNS: int = Field(
        default=1,
        ge=1,
        validation_alias="ECC_MAX_PARALLEL_RUNS",
        description="Independent seeded runs executed concurrently",
    )

    def registry_url(self, output_root: Path) -> str:
        """Returns the registry URL for an output root."""
        if self.DATABASE_URL:
            return self.DATABASE_URL
        return f"sqlite:///{Path(output_root) / 'registry.db'}"


settings = Settings()
