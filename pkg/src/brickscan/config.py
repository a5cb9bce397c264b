"""Run configuration.

A run is controlled by one flat config: key = value lines in a file, a
couple of environment variables, and CLI flags, merged in that order with
later sources winning.  The file syntax is a strict subset of TOML: one
scalar per line, # comments, no sections, no arrays.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from .errors import ConfigError

ENV_SEED = "BRICKSCAN_SEED"
ENV_THREADS = "BRICKSCAN_THREADS"
PATTERN_SUFFIX = ".pattern"

_LINE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")
_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)"
                       r"([eE][+-]?[0-9]+)?$")


@dataclass
class RunConfig:
    """Every knob a full run reads, with its default."""
    seed: int = 7
    threads: int = 0            # 0 = all available
    train_pattern: str = "mixed_bond"
    eval_pattern: str = "bordered_band"
    pixel_size: float = 5.0
    depth_range: float = 60.0
    recess: float = 12.0
    channel: str = "height"
    n_positives: int = 400
    n_negatives: int = 1200
    dilation: float = 1.1
    crop_jitter: float = 0.3
    neg_scale_max: float = 3.0
    boot_max_iou: float = 0.4
    rays_per_pixel: int = 16
    d_min: float = 0.997
    f_max: float = 0.5
    f_target: float = 0.002
    max_stages: int = 12
    max_weak: int = 40
    feature_pool: int = 2000
    scale_factor: float = 1.15
    scan_step: float = 1.0
    min_size: int = 0           # px, 0 = base window
    max_size: int = 0           # px, 0 = image size
    min_neighbors: int = 25
    group_eps: float = 0.2
    rotated_pass: bool = False
    iou_threshold: float = 0.5
    sweep_neighbors: str = "1,5,25,50,100,150"


_FIELD_TYPES: Dict[str, type] = {f.name: f.type if isinstance(f.type, type)
                                 else {"int": int, "float": float,
                                       "str": str, "bool": bool}[f.type]
                                 for f in fields(RunConfig)}


def coerce_value(key: str, raw) -> object:
    """Convert a raw string (or already-typed value) to the key's type."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    want = _FIELD_TYPES[key]
    if isinstance(raw, str):
        text = raw.strip()
        if want is str:
            if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
                return text[1:-1]
            return text
        if want is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ConfigError(f"{key}: {text!r} is not a boolean")
        if want is int:
            if not _INT_RE.match(text):
                raise ConfigError(f"{key}: {text!r} is not an integer")
            return int(text)
        if want is float:
            if not _FLOAT_RE.match(text):
                raise ConfigError(f"{key}: {text!r} is not a number")
            return float(text)
        raise ConfigError(f"{key}: unsupported type {want}")
    if want is float and isinstance(raw, int) and not isinstance(raw, bool):
        return float(raw)
    if want is bool and not isinstance(raw, bool):
        raise ConfigError(f"{key}: expected a boolean")
    if not isinstance(raw, want) or isinstance(raw, bool) != (want is bool):
        raise ConfigError(f"{key}: expected {want.__name__}, "
                          f"got {type(raw).__name__}")
    return raw


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
            out.append(ch)
            continue
        if ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse key = value lines into typed values, rejecting anything else."""
    values: Dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {raw_line.strip()!r}")
        key, raw_value = m.group(1), m.group(2).strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = coerce_value(key, raw_value)
    return values


def load_config_file(path) -> Dict[str, object]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, object]:
    env = os.environ if environ is None else environ
    out: Dict[str, object] = {}
    if ENV_SEED in env:
        out["seed"] = coerce_value("seed", env[ENV_SEED])
    if ENV_THREADS in env:
        out["threads"] = coerce_value("threads", env[ENV_THREADS])
    return out


def make_config(file_path=None, environ: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Merge defaults < file < environment < explicit overrides."""
    merged: Dict[str, object] = {}
    if file_path is not None:
        merged.update(load_config_file(file_path))
    merged.update(env_overrides(environ))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        merged[key] = coerce_value(key, value)
    return RunConfig(**merged)


def sweep_values(cfg: RunConfig) -> List[int]:
    """The grouping thresholds the sweep command walks."""
    out: List[int] = []
    for part in cfg.sweep_neighbors.split(","):
        part = part.strip()
        if not part:
            continue
        if not _INT_RE.match(part) or int(part) < 0:
            raise ConfigError(
                f"sweep_neighbors: {part!r} is not a non-negative integer")
        out.append(int(part))
    if not out:
        raise ConfigError("sweep_neighbors lists no values")
    return out


def pattern_path(name_or_path: str) -> Path:
    """Resolve a pattern argument to a file.

    A path that exists wins; otherwise the name is looked up among the
    bundled patterns.
    """
    p = Path(name_or_path)
    if p.is_file():
        return p
    bundled = Path(__file__).parent / "patterns" / (name_or_path
                                                    + PATTERN_SUFFIX)
    if bundled.is_file():
        return bundled
    raise ConfigError(f"no pattern file or bundled pattern named "
                      f"{name_or_path!r}")


def apply_threads(threads: int = 0) -> int:
    """Set the numba worker count, clamped to what the host allows."""
    import numba

    limit = int(numba.config.NUMBA_NUM_THREADS)
    want = limit if threads <= 0 else min(int(threads), limit)
    want = max(1, want)
    numba.set_num_threads(want)
    return want
