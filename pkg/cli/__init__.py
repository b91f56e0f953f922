from cli.commands import build_parser, run_command
from cli.config import RunConfig, resolve_config

__all__ = ["RunConfig", "build_parser", "resolve_config", "run_command"]
