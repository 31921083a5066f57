"""
Configuration management.

Process-wide settings come from environment variables and the .env file
(Pydantic Settings). Per-run settings come from a flat key-value run
config file, optionally overridden from the command line, and are
validated into a RunConfig before any sampling starts.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import pytz
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.state import ChainConfig, Hyperparameters, ModelKind

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Exception raised when a run config cannot be read or validated."""
    pass


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Default location for fit outputs (a run config may override it)
    output_dir: str = Field(
        default="./runs",
        description="Default directory for fit outputs"
    )

    # Application Data Directory
    app_data_dir: str = Field(
        default="./data/registry",
        description="Directory for application data (run registry database)"
    )

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")

    # Timestamps in run metadata
    timezone: str = Field(default="Europe/Berlin", description="Timezone for run metadata")

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", case_sensitive=False)

    @property
    def database_url(self) -> str:
        """Get SQLite database URL."""
        return f"sqlite:///{self.database_path}"

    @property
    def database_path(self) -> Path:
        """Get SQLite database file path."""
        return Path(self.app_data_dir) / "runs.db"

    @property
    def tz(self):
        """Timezone object for run metadata; falls back to UTC on unknown names."""
        try:
            return pytz.timezone(self.timezone)
        except pytz.UnknownTimeZoneError:
            logger.warning(f"Unknown timezone '{self.timezone}', using UTC")
            return pytz.utc

    def ensure_directories(self) -> None:
        """Ensure all required directories exist."""
        Path(self.app_data_dir).mkdir(parents=True, exist_ok=True)


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
        _settings.ensure_directories()
    return _settings


def reload_settings() -> Settings:
    """Reload settings from environment."""
    global _settings
    _settings = Settings()
    _settings.ensure_directories()
    return _settings


# ============================================================================
# Run configuration
# ============================================================================

HYPER_KEYS = set(Hyperparameters.model_fields)
CHAIN_KEYS = set(ChainConfig.model_fields)
PATH_LIST_KEYS = {"data"}
PATH_KEYS = {"data", "labels", "attributes", "output_dir"}


class RunConfig(BaseModel):
    """Everything one `fit` needs: model, data, priors, chain settings, output."""

    model: ModelKind
    data: List[Path] = Field(min_length=1)
    labels: Optional[Path] = None
    attributes: Optional[Path] = None
    index_base: Optional[int] = None
    hyper: Hyperparameters = Field(default_factory=Hyperparameters)
    chain: ChainConfig = Field(default_factory=ChainConfig)
    output_dir: Optional[Path] = None

    @field_validator("index_base", mode="before")
    @classmethod
    def _parse_index_base(cls, value):
        if value is None or value == "" or str(value).lower() == "auto":
            return None
        if str(value) not in ("0", "1"):
            raise ValueError("index_base must be auto, 0 or 1")
        return int(value)

    @model_validator(mode="after")
    def _check_model_data(self) -> "RunConfig":
        if self.model == ModelKind.STATIC and len(self.data) != 1:
            raise ValueError(f"static model takes exactly one data file, got {len(self.data)}")
        if self.model != ModelKind.STATIC and len(self.data) < 2:
            raise ValueError(f"{self.model.value} needs at least 2 snapshots, got {len(self.data)}")
        return self

    def resolved_output_dir(self) -> Path:
        """Output directory from the config, or <settings.output_dir>/<model>-<seed>."""
        if self.output_dir is not None:
            return self.output_dir
        return Path(get_settings().output_dir) / f"{self.model.value}-{self.chain.seed}"

    def to_flat(self) -> Dict[str, str]:
        """Flatten back to the key-value form used in run files."""
        flat: Dict[str, str] = {
            "model": self.model.value,
            "data": ", ".join(str(p) for p in self.data),
            "index_base": "auto" if self.index_base is None else str(self.index_base),
        }
        if self.labels is not None:
            flat["labels"] = str(self.labels)
        if self.attributes is not None:
            flat["attributes"] = str(self.attributes)
        flat.update({k: repr(v) for k, v in self.hyper.model_dump().items()})
        flat.update({k: str(v) for k, v in self.chain.model_dump().items()})
        flat["output_dir"] = str(self.resolved_output_dir())
        return flat


def parse_key_value_file(path: Path) -> Dict[str, str]:
    """
    Read a flat `key = value` file.

    Blank lines and lines starting with '#' are ignored; a trailing
    '# comment' after a value is stripped.

    Raises:
        ConfigError: On a missing file or a line without '='
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    values: Dict[str, str] = {}
    with path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
            key, value = line.split("=", 1)
            values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def build_run_config(
    flat: Mapping[str, str],
    base_dir: Optional[Path] = None,
) -> RunConfig:
    """
    Validate flat key-value pairs into a RunConfig.

    Relative data, labels, attributes and output_dir paths are resolved against base_dir
    (the config file's directory) when given.

    Raises:
        ConfigError: On unknown keys or failed validation
    """
    hyper: Dict[str, str] = {}
    chain: Dict[str, str] = {}
    top: Dict[str, object] = {}

    for key, value in flat.items():
        if key in HYPER_KEYS:
            hyper[key] = value
        elif key in CHAIN_KEYS:
            chain[key] = value
        elif key in PATH_LIST_KEYS:
            top[key] = [_resolve(p.strip(), base_dir) for p in value.split(",") if p.strip()]
        elif key in ("labels", "attributes", "output_dir"):
            top[key] = _resolve(value, base_dir) if value else None
        elif key in ("model", "index_base"):
            top[key] = value or None
        else:
            raise ConfigError(f"Unknown config key: {key}")

    try:
        return RunConfig(**top, hyper=Hyperparameters(**hyper), chain=ChainConfig(**chain))
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_run_config(
    path: Path,
    overrides: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Load a run config file and apply command-line overrides.

    Args:
        path: Key-value run config file
        overrides: Flat key-value pairs that replace file entries

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If the file is missing or invalid
    """
    path = Path(path)
    flat = parse_key_value_file(path)
    for key, value in (overrides or {}).items():
        key = key.lower().replace("-", "_")
        if key in PATH_KEYS and str(value):
            # command-line paths are relative to the working directory
            value = ", ".join(str(Path(p.strip()).resolve()) for p in str(value).split(",") if p.strip())
        flat[key] = str(value)
    config = build_run_config(flat, base_dir=path.parent)
    logger.info(f"Loaded run config {path} (model={config.model.value}, seed={config.chain.seed})")
    return config


def parse_overrides(pairs: List[str]) -> Dict[str, str]:
    """Turn ['key=value', ...] into a dict, rejecting malformed entries."""
    overrides: Dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"Override must look like key=value, got '{pair}'")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve(value: str, base_dir: Optional[Path]) -> Path:
    path = Path(value).expanduser()
    if base_dir is not None and not path.is_absolute():
        return base_dir / path
    return path


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(x) for x in item.get("loc", ()))
        parts.append(f"{loc}: {item.get('msg')}" if loc else str(item.get("msg")))
    return "Invalid run config: " + "; ".join(parts)
