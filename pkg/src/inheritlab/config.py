"""
Tunable constants and the line-based ``key = value`` config format.

Precedence when the CLI resolves settings: explicit flag, then ``--config``
file, then environment, then the defaults below.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

logger = logging.getLogger(__name__)

# -------------------------------------------------------------------
# Defaults
# -------------------------------------------------------------------

DISTANCE_R0 = 10.0
GEODESIC_STEPS = 512
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
POINCARE_NODES_PER_UNIT = 32
QUAD_N_THETA = 64
QUAD_N_PHI = 128
SCHEDULE_RATIO = 1.05
SMOOTHSTEP_ORDER = 7
THREADS_ENV_VAR = "INHERITLAB_THREADS"


@dataclass(frozen=True)
class Settings:
    r0_threshold: float = DISTANCE_R0
    geodesic_steps: int = GEODESIC_STEPS
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    poincare_nodes_per_unit: int = POINCARE_NODES_PER_UNIT
    quad_n_theta: int = QUAD_N_THETA
    quad_n_phi: int = QUAD_N_PHI
    schedule_ratio: float = SCHEDULE_RATIO
    smoothstep_order: int = SMOOTHSTEP_ORDER
    maxwell_tol: float = 1e-9
    einstein_tol: float = 1e-8
    inheritance_tol: float = 1e-9
    beltrami_tol: float = 1e-8
    roundtrip_tol: float = 1e-12
    refinement_band: float = 0.2
    threads: int = 1

    def replace(self, **changes) -> "Settings":
        return dataclasses.replace(self, **changes)


DEFAULT_SETTINGS = Settings()


def _coerce(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(Settings)}
    if name not in fields:
        raise ValueError(f"Unknown config key '{name}'")
    default = getattr(DEFAULT_SETTINGS, name)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> Dict[str, object]:
    """
    Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped.
    Keys that are not Settings fields are kept as raw strings so commands can
    read their own parameters (``metric``, ``field``, ...).
    """
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Config line {lineno} is not 'key = value': {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            if str(exc).startswith("Unknown config key"):
                values[key] = raw
            else:
                raise ValueError(f"Config line {lineno}: bad value for '{key}': {raw!r}") from exc
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, object]:
    text = Path(path).read_text(encoding="utf-8")
    values = parse_config_text(text)
    logger.debug("loaded %d config entries from %s", len(values), path)
    return values


def settings_from_env(base: Optional[Settings] = None) -> Settings:
    """Apply the thread-count environment variable, the only one read."""
    base = base or DEFAULT_SETTINGS
    raw = os.environ.get(THREADS_ENV_VAR)
    if not raw:
        return base
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    if threads < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be >= 1, got {threads}")
    return base.replace(threads=threads)


def resolve_settings(file_values: Optional[Dict[str, object]] = None, **overrides) -> Settings:
    """Defaults < environment < config file < explicit overrides (None skipped)."""
    settings = settings_from_env()
    names = {f.name for f in dataclasses.fields(Settings)}
    merged = {k: v for k, v in (file_values or {}).items() if k in names}
    merged.update({k: v for k, v in overrides.items() if v is not None and k in names})
    return settings.replace(**merged)
