"""Subcommands of the `lotenet` command line; each module exposes register()."""
import json
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from app.core.errors import ConfigError, MissingFileError
from app.schemas.config import RunConfig


def load_run_config(path) -> RunConfig:
    """Parse and strictly validate a JSON run configuration."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"config not found: {path}")
    try:
        return RunConfig.model_validate(json.loads(path.read_text()))
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path}: malformed JSON ({error})") from error
    except ValidationError as error:
        raise ConfigError(f"{path}: {error.error_count()} invalid field(s): {_first_error(error)}") from error


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "config"
    return f"{location}: {first['msg']}"


def resolve_out_dir(out: Optional[str], config: RunConfig) -> Path:
    target = out or config.output_dir
    if not target:
        raise ConfigError("no output directory: pass --out or set output_dir in the config")
    return Path(target)


def add_threads(parser) -> None:
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
