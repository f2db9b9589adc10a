#!/usr/bin/env python3
"""
Settings for the RNGA pairing tools
Numerical defaults shared by the pipeline, with optional overrides read from
a JSON settings file.
"""

import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisSettings:
    # simulation
    step_size: float = 0.01
    horizon: float = 500.0
    clamp: Optional[float] = None
    # tuning
    derivative_filter_ratio: float = 10.0
    # pairing
    warn_threshold: float = 0.5
    near_tie_margin: float = 0.05
    max_pairing_rows: int = 10
    # minor enumeration
    minor_warn_limit: int = 10 ** 6

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.derivative_filter_ratio <= 0:
            raise ValueError(f"derivative_filter_ratio must be > 0, got {self.derivative_filter_ratio}")
        if self.clamp is not None and self.clamp <= 0:
            raise ValueError(f"clamp must be > 0 when set, got {self.clamp}")
        if self.max_pairing_rows < 1:
            raise ValueError("max_pairing_rows must be >= 1")

    def updated(self, **overrides) -> "AnalysisSettings":
        """Copy with the non-None overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


DEFAULT_SETTINGS = AnalysisSettings()


def _known_keys() -> Dict[str, type]:
    return {f.name: f.type for f in fields(AnalysisSettings)}


def load_settings(path=None) -> AnalysisSettings:
    """Defaults overlaid with the keys of a JSON settings file, if one is given."""
    if path is None:
        return DEFAULT_SETTINGS
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read settings file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"settings file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(_known_keys()))
    if unknown:
        raise ValueError(f"unknown settings in {path}: {', '.join(unknown)}")
    logger.info("Loaded settings overrides from %s: %s", path, ", ".join(sorted(data)))
    return replace(DEFAULT_SETTINGS, **data)


def save_settings(settings: AnalysisSettings, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(asdict(settings), f, indent=2)
