"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Precedence when building a
:class:`PipelineConfig` is command-line flag > file > built-in default.
The default file is named by the ``THERMOSCREEN_CONFIG`` environment variable.
"""

from __future__ import annotations

import os
import shlex
import shutil
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .detect import BaselineDetectorConfig
from .pipeline import PipelineConfig
from .radiometric import NormalizationConfig
from .screen import ScreeningConfig

ENV_VAR = "THERMOSCREEN_CONFIG"


class ConfigError(ValueError):
    pass


def _pair(text: str) -> tuple[float, float]:
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key -> (section, field, parser)
KEYS: dict[str, tuple[str, str, Any]] = {
    "lower_clamp": ("normalization", "lower_clamp", float),
    "upper_clamp": ("normalization", "upper_clamp", float),
    "normalization_mode": ("normalization", "mode", str),
    "body_band": ("detector", "body_band", _pair),
    "min_area": ("detector", "min_area", int),
    "aspect_ratio_band": ("detector", "aspect_ratio_band", _pair),
    "merge_gap": ("detector", "merge_gap", int),
    "fever_threshold": ("screening", "fever_threshold", float),
    "mask_delta_threshold": ("screening", "mask_delta_threshold", float),
    "upper_face_fraction": ("screening", "upper_face_fraction", float),
    "lower_face_fraction": ("screening", "lower_face_fraction", float),
    "detector_command": ("pipeline", "detector_command", lambda s: tuple(shlex.split(s)) or None),
    "target_fps": ("pipeline", "target_fps", float),
    "workers": ("pipeline", "workers", int),
    "include_latency": ("pipeline", "include_latency", _bool),
    "events_out": ("pipeline", "events_out", str),
    "summary_out": ("pipeline", "summary_out", str),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        values[key] = value
    return values


def load_config_file(path: Optional[str] = None) -> dict[str, str]:
    """Read ``path``, or the file named by ``THERMOSCREEN_CONFIG``; {} when neither is set."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))


def build_pipeline_config(file_values: Mapping[str, str], overrides: Mapping[str, Any] = {}) -> PipelineConfig:
    """Combine file strings with already-typed overrides (flags); None overrides are skipped."""
    sections: dict[str, dict[str, Any]] = {"normalization": {}, "detector": {}, "screening": {}, "pipeline": {}}
    for key, raw in file_values.items():
        section, name, parse = KEYS[key]
        try:
            sections[section][name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key}: {exc}") from None
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown setting {key!r}")
        section, name, _ = KEYS[key]
        sections[section][name] = value
    try:
        cfg = PipelineConfig(
            normalization=NormalizationConfig(**sections["normalization"]),
            detector=BaselineDetectorConfig(**sections["detector"]),
            screening=ScreeningConfig(**sections["screening"]),
        )
        cfg = replace(cfg, **sections["pipeline"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    validate_paths(cfg)
    return cfg


def validate_paths(cfg: PipelineConfig) -> None:
    if cfg.detector_command and shutil.which(cfg.detector_command[0]) is None \
            and not Path(cfg.detector_command[0]).is_file():
        raise ConfigError(f"detector command not found: {cfg.detector_command[0]}")
    for out in (cfg.events_out, cfg.summary_out):
        if out and not Path(out).resolve().parent.is_dir():
            raise ConfigError(f"output directory does not exist for {out}")
