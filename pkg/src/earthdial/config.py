"""Layered run configuration: defaults < TOML file < env < CLI flags.

The fully resolved mapping is echoed into every artifact a command writes,
so a record file or eval report always carries the knobs that produced it.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Mapping

import tomli

from .errors import InvalidRange, ParseError
from .fusion import FusionConfig
from .genclient import (
    DEFAULT_BACKOFF_BASE_S,
    DEFAULT_BASE_URL,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TIMEOUT_S,
    DEFAULT_TRANSPORT_ATTEMPTS,
    ENV_MODEL,
    ENV_TIMEOUT,
    ENV_URL,
    HttpGeneratorClient,
)
from .tiler import TilerConfig

CONFIG_FILENAME = "earthdial.toml"

DEFAULTS: dict = {
    "generator": {
        "url": "",  # empty means offline template records
        "model": DEFAULT_MODEL,
        "timeout_s": DEFAULT_TIMEOUT_S,
        "max_tokens": DEFAULT_MAX_TOKENS,
        "image_transport": "base64",
        "max_in_flight": DEFAULT_MAX_IN_FLIGHT,
        "transport_attempts": DEFAULT_TRANSPORT_ATTEMPTS,
        "backoff_base_s": DEFAULT_BACKOFF_BASE_S,
        "max_attempts": 5,
    },
    "filters": {
        "min_labels": 3,
        "lum_max": 0.8,
        "cov_min": 0.5,
    },
    "tiler": {
        "tile_size": 448,
        "min_tiles": 1,
        "max_tiles": 12,
        "use_thumbnail": True,
    },
    "fusion": {
        "reduce_strategy": "bilinear",
        "reduced_rows": 4,
        "reduced_cols": 4,
        "aggregate": "concat",
        "tokens_per_tile": 256,
        "max_timesteps": 4,
    },
    "metrics": {
        "iou_threshold": 0.5,
        "unknown_label": "wrong",
    },
}


def _type_ok(expected, value) -> bool:
    if isinstance(expected, bool):
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if isinstance(expected, float):
        return isinstance(value, (int, float))
    return isinstance(value, type(expected))


def _merge_section(base: dict, incoming: Mapping, section: str) -> None:
    for key, value in incoming.items():
        if key not in base:
            raise ParseError(0, f"unknown config key {section}.{key}")
        if not _type_ok(base[key], value):
            raise ParseError(
                0,
                f"config key {section}.{key} expects "
                f"{type(base[key]).__name__}, got {type(value).__name__}",
            )
        base[key] = float(value) if isinstance(base[key], float) else value


def load_config_file(path: str | Path) -> dict:
    """Parse a TOML config file into a sections dict (no defaults applied)."""

    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(0, f"invalid TOML in {path}: {exc}") from exc


def resolve_config(
    config_path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
    search_cwd: bool = True,
) -> dict:
    """Resolve the effective config.

    ``overrides`` maps dotted keys ("filters.min_labels") to values and has
    the highest precedence; ``None`` values are ignored so unset CLI flags
    fall through.
    """

    cfg = copy.deepcopy(DEFAULTS)
    path = config_path
    if path is None and search_cwd and Path(CONFIG_FILENAME).is_file():
        path = CONFIG_FILENAME
    if path is not None:
        file_cfg = load_config_file(path)
        for section, values in file_cfg.items():
            if section not in cfg:
                raise ParseError(0, f"unknown config section {section!r}")
            if not isinstance(values, Mapping):
                raise ParseError(0, f"config section {section!r} must be a table")
            _merge_section(cfg[section], values, section)

    env = os.environ if environ is None else environ
    if env.get(ENV_URL):
        cfg["generator"]["url"] = env[ENV_URL]
    if env.get(ENV_MODEL):
        cfg["generator"]["model"] = env[ENV_MODEL]
    if env.get(ENV_TIMEOUT):
        try:
            cfg["generator"]["timeout_s"] = float(env[ENV_TIMEOUT])
        except ValueError as exc:
            raise InvalidRange(f"{ENV_TIMEOUT} must be a number, got {env[ENV_TIMEOUT]!r}") from exc

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in cfg or key not in cfg[section]:
            raise InvalidRange(f"unknown config override {dotted!r}")
        cfg[section][key] = value
    return cfg


def tiler_config(cfg: Mapping) -> TilerConfig:
    t = cfg["tiler"]
    return TilerConfig(
        tile_size=int(t["tile_size"]),
        min_tiles=int(t["min_tiles"]),
        max_tiles=int(t["max_tiles"]),
        use_thumbnail=bool(t["use_thumbnail"]),
    )


def fusion_config(cfg: Mapping) -> FusionConfig:
    f = cfg["fusion"]
    return FusionConfig(
        reduce_strategy=str(f["reduce_strategy"]),
        reduced_rows=int(f["reduced_rows"]),
        reduced_cols=int(f["reduced_cols"]),
        aggregate=str(f["aggregate"]),
        tokens_per_tile=int(f["tokens_per_tile"]),
        max_timesteps=int(f["max_timesteps"]),
    )


def generator_client(cfg: Mapping) -> HttpGeneratorClient | None:
    """Build the HTTP client, or None when no endpoint is configured."""

    g = cfg["generator"]
    if not g["url"]:
        return None
    return HttpGeneratorClient(
        base_url=str(g["url"]),
        model=str(g["model"]),
        timeout_s=float(g["timeout_s"]),
        max_tokens=int(g["max_tokens"]),
        image_transport=str(g["image_transport"]),
        max_in_flight=int(g["max_in_flight"]),
        transport_attempts=int(g["transport_attempts"]),
        backoff_base_s=float(g["backoff_base_s"]),
    )
