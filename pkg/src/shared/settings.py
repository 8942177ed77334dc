"""Environment configuration for the simulation lab."""

from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class LabSettings(BaseSettings):
    """Settings read from NRPS_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix='NRPS_', env_file='.env', extra='ignore')

    output_dir: Path = Field(default=Path('./results'))
    log_level: str = 'INFO'
    max_locations: int = Field(default=200, ge=2)
    workers: int = Field(default=1, ge=1)
    kkt_tolerance: float = Field(default=1e-8, gt=0)
    linear_tolerance: float = Field(default=1e-9, gt=0)

    @field_validator('log_level')
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}:
            raise ValueError(f"Unknown log level: {value}")
        return value


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    return LabSettings()
