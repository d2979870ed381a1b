"""
Output writers: JSON reports, CSV profiles, the run manifest and SVG plots.

Everything is written single-threaded after the numbers are in.
"""

import csv
import dataclasses
import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import Settings  # noqa: E402
from .frequency import L2_THRESHOLD, DecayFit, RadialProfile  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
VERSIONED_PACKAGES = ("numpy", "scipy", "jax", "matplotlib", "inheritlab")


def _encode(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: PathLike, payload: Mapping[str, object]) -> Path:
    """Write ``payload`` through a temporary sibling file, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_encode) + "\n", encoding="utf-8")
    tmp.replace(path)
    logger.debug("wrote %s", path)
    return path


def write_csv(path: PathLike, rows: Iterable[Mapping[str, object]],
              fieldnames: Optional[Sequence[str]] = None) -> Path:
    rows = list(rows)
    if fieldnames is None:
        if not rows:
            raise ValueError(f"Cannot infer CSV columns for {path} from zero rows")
        fieldnames = list(rows[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.debug("wrote %d rows to %s", len(rows), path)
    return path


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(out_dir: PathLike, command: str, settings: Settings, seed: Optional[int],
                   params: Optional[Mapping[str, object]] = None) -> Path:
    """``manifest.json``: the command, its parameters, resolved settings, seed and versions."""
    payload = {
        "command": command,
        "params": dict(params or {}),
        "settings": dataclasses.asdict(settings),
        "seed": seed,
        "versions": package_versions(),
    }
    return write_json(Path(out_dir) / "manifest.json", payload)


# -------------------------------------------------------------------
# Plots
# -------------------------------------------------------------------

def plot_profile(profile: RadialProfile, fit: DecayFit, path: PathLike) -> Path:
    """
    log-log X(r) with the fitted power law over its window and a guide line
    of slope −2·(3/2), the decay an L² field would need.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rho = profile.rho
    positive = profile.X > 0.0

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(rho[positive], profile.X[positive], "o", markersize=3, label=f"X(r) [{profile.label}]")

    lo, hi = fit.window
    in_window = (profile.r >= lo) & (profile.r <= hi)
    fit_rho = rho[in_window]
    ax.loglog(fit_rho, np.exp(fit.intercept) * fit_rho ** fit.slope, "-",
              label=f"fit: slope {fit.slope:.3f}, p = {fit.p:.3f}")

    anchor = fit_rho[0] if fit_rho.size else rho[0]
    anchor_value = np.exp(fit.intercept) * anchor ** fit.slope
    ax.loglog(rho, anchor_value * (rho / anchor) ** (-2.0 * L2_THRESHOLD), "--", color="gray",
              label="p = 3/2 guide")

    ax.set_xlabel("r + R0")
    ax.set_ylabel("X(r)")
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    logger.debug("wrote plot %s", path)
    return path


def plot_trend(label: str, sizes: Sequence[float], values: Sequence[float], path: PathLike,
               xlabel: str = "R_max", ylabel: str = "sigma_min") -> Path:
    """Log-log trend of a probe quantity against the domain size."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(list(sizes), list(values), "o-", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def records(items: Iterable[object]) -> List[Dict[str, object]]:
    return [item.to_record() for item in items]
