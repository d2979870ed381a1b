"""
Frequency-function diagnostics for curl eigenfields on an asymptotically
flat end.

With ρ = r + R₀ and S_r either the coordinate sphere |x| = r or the
distance level set {d_R₀ = r}:

    X(r) = ρ^{-2} ∫_{S_r} |ω|²_g dσ
    E(r) = −ρ^{-2} ∫_{S_r} g(∇_N ω, ω) dσ
    F(r) = ρ e^{2k/ρ^δ} E(r) / X(r)

Profiles are sampled on a radius schedule (geometric by default); X′ is a
finite-difference derivative in log r.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy.stats import linregress

from .config import DEFAULT_SETTINGS, QUAD_N_PHI, QUAD_N_THETA, SCHEDULE_RATIO, Settings
from .errors import FrequencyUndefinedError
from .forms import OneFormField, covariant_derivative, sphere_integral
from .geometry import MetricField, composite_gauss_legendre
from .quadrature import SphereQuadrature, induced_area_density

logger = logging.getLogger(__name__)

L2_THRESHOLD = 1.5


def geometric_schedule(r_lo: float, r_hi: float, ratio: float = SCHEDULE_RATIO) -> np.ndarray:
    """r_lo, r_lo·q, r_lo·q², ... up to and including the first value ≥ r_hi."""
    if not (0.0 < r_lo < r_hi) or ratio <= 1.0:
        raise ValueError(f"Bad schedule ({r_lo}, {r_hi}, ratio={ratio})")
    n = int(math.ceil(math.log(r_hi / r_lo) / math.log(ratio) - 1e-9))
    return r_lo * ratio ** np.arange(n + 1)


@dataclass(frozen=True)
class FrequencyConfig:
    schedule: Tuple[float, ...]
    R0: float = 0.0
    delta: float = 1.0
    k: Optional[float] = None
    C2: Optional[float] = None
    n_theta: int = QUAD_N_THETA
    n_phi: int = QUAD_N_PHI
    level_set: str = "coordinate"
    threads: int = 1
    settings: Settings = DEFAULT_SETTINGS

    def __post_init__(self):
        sched = np.asarray(self.schedule, dtype=float)
        object.__setattr__(self, "schedule", tuple(float(r) for r in sched))
        if sched.size == 0:
            raise ValueError("Frequency schedule is empty")
        if np.any(sched <= 0.0) or np.any(np.diff(sched) <= 0.0):
            raise ValueError("Frequency schedule must be strictly increasing and positive")
        if self.R0 < 0.0 or not (0.0 < self.delta <= 1.0):
            raise ValueError(f"Need R0 >= 0 and δ in (0, 1], got R0={self.R0}, δ={self.delta}")
        if self.level_set not in ("coordinate", "geodesic"):
            raise ValueError(f"Unknown level set '{self.level_set}'")
        if self.level_set == "geodesic" and self.R0 < self.settings.r0_threshold:
            raise ValueError(f"Geodesic level sets need R0 >= {self.settings.r0_threshold}, got {self.R0}")
        if self.k is not None and self.k <= 0.0:
            raise ValueError(f"k must be positive, got {self.k}")

    @property
    def weight_k(self) -> float:
        """k as configured, else 2·max(C₂, 1), else 2."""
        if self.k is not None:
            return self.k
        return 2.0 * max(self.C2, 1.0) if self.C2 is not None else 2.0

    def quadrature(self, r: float) -> SphereQuadrature:
        return SphereQuadrature(r, self.n_theta, self.n_phi)

    def with_schedule(self, schedule) -> "FrequencyConfig":
        return FrequencyConfig(tuple(schedule), self.R0, self.delta, self.k, self.C2, self.n_theta,
                               self.n_phi, self.level_set, self.threads, self.settings)


@dataclass
class RadialProfile:
    r: np.ndarray
    X: np.ndarray
    E: np.ndarray
    R0: float = 0.0
    delta: float = 1.0
    k: float = 2.0
    dX_dr: Optional[np.ndarray] = None
    label: str = ""
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        if np.any(self.X < 0.0):
            raise ValueError("X(r) must be non-negative")
        if self.dX_dr is None:
            self.dX_dr = schedule_derivative(self.r, self.X)
        rho = self.rho
        with np.errstate(divide="ignore", invalid="ignore"):
            self.F = np.where(self.X > 0.0, rho * np.exp(2.0 * self.k / rho ** self.delta) * self.E / self.X, np.nan)

    @property
    def rho(self) -> np.ndarray:
        return self.r + self.R0

    @property
    def beta_pairing(self) -> np.ndarray:
        """∫ g(β, ω) dσ with β = ρ ∇_N ω."""
        return -self.rho ** 3 * self.E

    @property
    def identity_ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.dX_dr + 2.0 * self.E) * self.rho ** (1.0 + self.delta) / self.X

    def F_at(self, r: float) -> float:
        i = int(np.argmin(np.abs(self.r - r)))
        if self.X[i] == 0.0:
            raise FrequencyUndefinedError(f"X({self.r[i]:g}) = 0: the frequency is undefined there")
        return float(self.F[i])

    def to_rows(self) -> List[Dict[str, float]]:
        ratio = self.identity_ratio
        return [{"r": float(self.r[i]), "X": float(self.X[i]), "E": float(self.E[i]), "F": float(self.F[i]),
                 "dX_dr": float(self.dX_dr[i]), "identity_ratio": float(ratio[i])} for i in range(len(self.r))]


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------

def schedule_derivative(r: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    d/dr on the schedule. Geometric schedules use 5-point centered stencils
    in log r (3-point next to the ends, one-sided at the ends); anything else
    falls back to second-order np.gradient in r.
    """
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(r)
    if n < 3:
        raise ValueError(f"Need at least 3 radii to differentiate, got {n}")
    s = np.log(r)
    steps = np.diff(s)
    if not np.allclose(steps, steps[0], rtol=1e-9):
        return np.gradient(values, r, edge_order=2)
    h = steps[0]
    d = np.gradient(values, h, edge_order=2)
    if n >= 5:
        d[2:-2] = (values[:-4] - 8 * values[1:-3] + 8 * values[3:-1] - values[4:]) / (12 * h)
    return d / r


@lru_cache(maxsize=64)
def _evaluators(omega: OneFormField, metric: MetricField):
    nabla = covariant_derivative(omega, metric)

    def pointwise(x):
        return omega(x), nabla(x), metric.inverse(x)

    return jax.jit(jax.vmap(pointwise))


@lru_cache(maxsize=16)
def _curvature_evaluator(omega: OneFormField, metric: MetricField):
    nabla = covariant_derivative(omega, metric)

    def pointwise(x):
        curv = metric.curvature(x)
        return omega(x), nabla(x), curv["g_inv"], curv["ricci"], curv["sqrt_abs_det"]

    return jax.jit(jax.vmap(pointwise))


def _square_norm(w, g_inv):
    return np.real(np.einsum("nij,ni,nj->n", g_inv, w, np.conj(w)))


def _normal_pairing(w, nabla_w, g_inv, normal):
    """g(∇_N ω, ω) = N^i ∇_i ω_j g^{jk} conj(ω_k), real part."""
    return np.real(np.einsum("ni,nij,njk,nk->n", normal, nabla_w, g_inv, np.conj(w)))


def _coordinate_normal(points, g_inv):
    n = points / np.linalg.norm(points, axis=1, keepdims=True)
    up = np.einsum("nij,nj->ni", g_inv, n)
    return up / np.sqrt(np.einsum("ni,ni->n", n, up))[:, None]


def _geodesic_level_set(metric: MetricField, cfg: FrequencyConfig, r: float):
    """Nodes, weights and unit normals on {d_R₀ = r} over the unit-sphere rule."""
    from .distance import distance_to_sphere

    quad = cfg.quadrature(1.0)
    d_t, d_phi = quad.tangents
    points, normals, tan_t, tan_phi = [], [], [], []
    for u, ut, up in zip(quad.unit_nodes, d_t, d_phi):
        s = cfg.R0 + r
        for _ in range(30):
            sample = distance_to_sphere(metric, cfg.R0, s * u, settings=cfg.settings)
            slope = float(sample.gradient @ u)
            step = (sample.d - r) / slope
            s -= step
            if abs(step) <= 1e-12 * s:
                break
        sample = distance_to_sphere(metric, cfg.R0, s * u, settings=cfg.settings)
        grad = sample.gradient
        slope = float(grad @ u)
        # ∂_a(s û) with ∂_a s from d(s û) = r
        tangents = [(-s * float(grad @ t) / slope) * u + s * t for t in (ut, up)]
        g_inv = np.linalg.inv(metric.at(s * u)[0])
        points.append(s * u)
        normals.append(g_inv @ grad)
        tan_t.append(tangents[0])
        tan_phi.append(tangents[1])
    points = np.array(points)
    g = metric.at(points)
    density = np.asarray(induced_area_density(jnp.asarray(g), jnp.asarray(np.array(tan_t)),
                                              jnp.asarray(np.array(tan_phi))))
    return points, quad.unit_weights * density, np.array(normals)


def _surface_terms(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig, r: float):
    """(∫|ω|²dσ, ∫g(∇_Nω, ω)dσ) on S_r."""
    evaluate = _evaluators(omega, metric)
    if cfg.level_set == "coordinate":
        quad = cfg.quadrature(r)

        def mass(points):
            w, _, g_inv = (np.asarray(v) for v in evaluate(jnp.asarray(points)))
            return _square_norm(w, g_inv)

        def flux(points):
            w, nabla_w, g_inv = (np.asarray(v) for v in evaluate(jnp.asarray(points)))
            return _normal_pairing(w, nabla_w, g_inv, _coordinate_normal(points, g_inv))

        return float(np.real(sphere_integral(mass, metric, quad))), float(np.real(sphere_integral(flux, metric, quad)))

    points, weights, normals = _geodesic_level_set(metric, cfg, r)
    w, nabla_w, g_inv = (np.asarray(v) for v in evaluate(jnp.asarray(points)))
    return float(np.sum(weights * _square_norm(w, g_inv))), float(np.sum(weights * _normal_pairing(w, nabla_w, g_inv, normals)))


# -------------------------------------------------------------------
# Main API: radial quantities
# -------------------------------------------------------------------

def compute_X(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig, r: float) -> float:
    mass, _ = _surface_terms(omega, metric, cfg, r)
    return mass / (r + cfg.R0) ** 2


def compute_E_surface(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig, r: float) -> float:
    _, flux = _surface_terms(omega, metric, cfg, r)
    return -flux / (r + cfg.R0) ** 2


def compute_F(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig, r: float) -> float:
    mass, flux = _surface_terms(omega, metric, cfg, r)
    if mass == 0.0:
        raise FrequencyUndefinedError(f"X({r:g}) = 0 for field '{omega.name}': the frequency is undefined")
    rho = r + cfg.R0
    return rho * math.exp(2.0 * cfg.weight_k / rho ** cfg.delta) * (-flux) / mass


def compute_E_volume(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig, r: float, r_max: float,
                     a: float, radial_nodes_per_unit: int = 4) -> float:
    """
    ρ^{-2}[∫_{r<|x|<r_max} (|∇ω|² − a²|ω|² + Ric(ω♯, ω♯)) dv − ∫_{|x|=r_max} g(∇_Nω, ω) dσ].

    Equal to ``compute_E_surface`` when Δ_H ω = a²ω (coordinate shells).
    """
    if r_max <= r:
        raise ValueError(f"Need r_max > r, got [{r}, {r_max}]")
    evaluate = _curvature_evaluator(omega, metric)
    quad = cfg.quadrature(1.0)
    s_nodes, s_weights = composite_gauss_legendre(r, r_max, radial_nodes_per_unit)
    total = 0.0
    for s, ws in zip(s_nodes, s_weights):
        points = s * quad.unit_nodes
        w, nabla_w, g_inv, ricci, vol = (np.asarray(v) for v in evaluate(jnp.asarray(points)))
        grad_sq = np.real(np.einsum("nik,njl,nij,nkl->n", g_inv, g_inv, nabla_w, np.conj(nabla_w)))
        w_up = np.einsum("nij,nj->ni", g_inv, w)
        ric = np.real(np.einsum("nij,ni,nj->n", ricci, w_up, np.conj(w_up)))
        density = grad_sq - a ** 2 * _square_norm(w, g_inv) + ric
        total += ws * s ** 2 * np.sum(quad.unit_weights * density * vol)
    outer = FrequencyConfig((r_max,), cfg.R0, cfg.delta, cfg.k, cfg.C2, cfg.n_theta, cfg.n_phi,
                            "coordinate", cfg.threads, cfg.settings)
    _, flux = _surface_terms(omega, metric, outer, r_max)
    return (total - flux) / (r + cfg.R0) ** 2


def scan_profile(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig) -> RadialProfile:
    """X and E over the schedule, one radius per worker thread."""
    started = time.perf_counter()
    _evaluators(omega, metric)
    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        terms = list(pool.map(lambda r: _surface_terms(omega, metric, cfg, r), cfg.schedule))
    done = time.perf_counter()

    r = np.asarray(cfg.schedule)
    rho = r + cfg.R0
    mass = np.array([t[0] for t in terms])
    flux = np.array([t[1] for t in terms])
    profile = RadialProfile(r, mass / rho ** 2, -flux / rho ** 2, cfg.R0, cfg.delta, cfg.weight_k,
                            label=omega.name)
    logger.info("[frequency-scan] timing breakdown:")
    logger.info("  %d radii (%s level sets, %d threads): %.3fs", len(r), cfg.level_set, cfg.threads, done - started)
    return profile


def synth_profile(X_fn: Callable, E_fn: Optional[Callable], schedule, R0: float = 0.0, delta: float = 1.0,
                  k: float = 2.0, dX_fn: Optional[Callable] = None, label: str = "synthetic") -> RadialProfile:
    """
    Profile from closed forms, bypassing quadrature. Without ``E_fn``,
    E = −X′/2 (zero identity error).
    """
    r = np.asarray(schedule, dtype=float)
    X = np.asarray(X_fn(r), dtype=float) * np.ones_like(r)
    dX = np.asarray(dX_fn(r), dtype=float) if dX_fn is not None else None
    if E_fn is None:
        E = -0.5 * (dX if dX is not None else schedule_derivative(r, X))
    else:
        E = np.asarray(E_fn(r), dtype=float) * np.ones_like(r)
    return RadialProfile(r, X, E, R0, delta, k, dX_dr=dX, label=label)


# -------------------------------------------------------------------
# Main API: profile diagnostics
# -------------------------------------------------------------------

@dataclass
class IdentityReport:
    r: np.ndarray
    ratio: np.ndarray
    C2: float

    def to_record(self) -> Dict[str, object]:
        return {"C2": self.C2, "r": self.r.tolist(), "ratio": self.ratio.tolist()}


def identity_from_profile(profile: RadialProfile) -> IdentityReport:
    if np.any(profile.X == 0.0):
        raise FrequencyUndefinedError("X(r) = 0 on part of the schedule; the identity ratio is undefined")
    ratio = profile.identity_ratio
    return IdentityReport(profile.r, ratio, float(np.max(ratio)))


def check_derivative_identity(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig) -> IdentityReport:
    """|X′ + 2E|·ρ^{1+δ}/X per radius; its sup is the empirical C₂."""
    report = identity_from_profile(scan_profile(omega, metric, cfg))
    logger.info("derivative identity for %s: empirical C2 = %.6g", omega.name, report.C2)
    return report


@dataclass
class DecayFit:
    p: float
    slope: float
    intercept: float
    residual: float
    stderr: float
    r2: float
    window: Tuple[float, float]

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__, window=list(self.window))


def fit_decay_exponent(profile: RadialProfile, window: Optional[Sequence[float]] = None) -> DecayFit:
    """Least-squares slope of log X against log ρ; p = −slope/2."""
    lo, hi = (profile.r[0], profile.r[-1]) if window is None else (float(window[0]), float(window[1]))
    tol = 1e-9 * max(1.0, abs(hi))
    if lo < profile.r[0] - tol or hi > profile.r[-1] + tol or hi <= lo:
        raise ValueError(f"Window [{lo}, {hi}] is outside the schedule [{profile.r[0]}, {profile.r[-1]}]")
    mask = (profile.r >= lo - tol) & (profile.r <= hi + tol)
    if mask.sum() < 2:
        raise ValueError(f"Window [{lo}, {hi}] holds fewer than two radii")
    X = profile.X[mask]
    if np.any(X <= 0.0):
        raise FrequencyUndefinedError(f"X vanishes inside the window [{lo}, {hi}]")
    lx, ly = np.log(profile.rho[mask]), np.log(X)
    fit = linregress(lx, ly)
    residual = float(np.sqrt(np.mean((ly - (fit.intercept + fit.slope * lx)) ** 2)))
    return DecayFit(-fit.slope / 2.0, float(fit.slope), float(fit.intercept), residual, float(fit.stderr),
                    float(fit.rvalue ** 2), (lo, hi))


@dataclass
class L2Classification:
    verdict: str
    p: float
    saturation_ratio: float
    critical_ratio: float
    linear_r2: float
    partial_sums: List[float]
    frequency_threshold_met: bool
    note: str = ""

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__)


def _trapezoid_sums(r: np.ndarray, f: np.ndarray) -> np.ndarray:
    steps = 0.5 * (f[1:] + f[:-1]) * np.diff(r)
    return np.concatenate([[0.0], np.cumsum(steps)])


def partial_sums(profile: RadialProfile) -> np.ndarray:
    """Running trapezoid sums of ∫ρ²X dr over the schedule."""
    return _trapezoid_sums(profile.r, profile.rho ** 2 * profile.X)


def growth_ratio(r: np.ndarray, sums: np.ndarray) -> float:
    """
    Increment of the sums over the upper half of the window, divided by the
    increment linear growth would give there. 1 for a constant integrand,
    tending to 0 as the integral converges faster.
    """
    r_end = float(r[-1])
    r_mid = r_end / 2.0 if r_end / 2.0 > r[0] else math.sqrt(r[0] * r_end)
    total = float(sums[-1])
    if total <= 0.0:
        return 0.0
    increment = (total - float(np.interp(r_mid, r, sums))) / total
    return increment / ((r_end - r_mid) / (r_end - r[0]))


def classify_L2(profile: RadialProfile, cfg: Optional[FrequencyConfig] = None,
                window: Optional[Sequence[float]] = None, margin: float = 0.1) -> L2Classification:
    """
    Integral test on the sampled profile.

    The partial sums S(r) = ∫ρ²X grow without bound exactly when ρ²X decays
    no faster than 1/ρ. Their half-window growth ratio is compared with the
    ratio of the borderline integrand 1/ρ on the same radii: above it they
    grow, below it they saturate. ``not_in_L2`` needs growth and
    p < 3/2 − margin; ``in_L2_consistent`` needs saturation and
    p > 3/2 + margin; everything else is ``inconclusive``.
    """
    fit = fit_decay_exponent(profile, window)
    sums = partial_sums(profile)
    saturation = growth_ratio(profile.r, sums)
    critical = growth_ratio(profile.r, _trapezoid_sums(profile.r, 1.0 / profile.rho))
    slope_fit = linregress(profile.r, sums) if len(sums) > 2 else None
    r2 = float(slope_fit.rvalue ** 2) if slope_fit is not None else float("nan")

    grows = saturation > critical
    if grows and fit.p < L2_THRESHOLD - margin:
        verdict = "not_in_L2"
        note = "nonzero L² solutions would force F(∞) >= 3/2; the fitted exponent sits below that threshold"
    elif not grows and fit.p > L2_THRESHOLD + margin:
        verdict = "in_L2_consistent"
        note = "partial sums saturate and the decay exponent exceeds 3/2"
    else:
        verdict = "inconclusive"
        note = "the exponent is within the margin of 3/2 or the partial sums disagree with it"
        logger.warning("L2 classification inconclusive for %s: p=%.4g, growth=%.3g, critical=%.3g",
                       profile.label, fit.p, saturation, critical)
    return L2Classification(verdict, fit.p, float(saturation), float(critical), r2, sums.tolist(),
                            fit.p >= L2_THRESHOLD, note)


@dataclass
class MonotonicityReport:
    r: List[float]
    F: List[float]
    dF: List[float]
    violations: List[int]
    tolerance: float

    @property
    def non_increasing(self) -> bool:
        return not self.violations

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__, non_increasing=self.non_increasing)


def scan_monotonicity(profile: RadialProfile, tolerance: float = 1e-10) -> MonotonicityReport:
    """Indices i where F(r_{i+1}) − F(r_i) exceeds ``tolerance``·max|F|."""
    if np.any(profile.X == 0.0):
        raise FrequencyUndefinedError("X(r) = 0 on part of the schedule; F is undefined there")
    F = profile.F
    dF = np.diff(F)
    scale = tolerance * max(1.0, float(np.max(np.abs(F))))
    violations = [int(i) for i in np.flatnonzero(dF > scale)]
    if violations:
        logger.warning("F increases at %d of %d steps for %s (recorded, not failed)",
                       len(violations), len(dF), profile.label)
    return MonotonicityReport(profile.r.tolist(), F.tolist(), dF.tolist(), violations, tolerance)


def monotonicity_scan(omega: OneFormField, metric: MetricField, cfg: FrequencyConfig) -> MonotonicityReport:
    if cfg.C2 is not None and cfg.weight_k <= cfg.C2:
        raise ValueError(f"k = {cfg.weight_k} must exceed the empirical C2 = {cfg.C2}")
    return scan_monotonicity(scan_profile(omega, metric, cfg))


@dataclass
class DecayEnvelope:
    F_inf: float
    phi: List[float]
    non_increasing: bool

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__)


def decay_envelope(profile: RadialProfile, C2: float, tolerance: float = 1e-10) -> DecayEnvelope:
    """Φ(r) = ρ^{2F∞} exp((C₂ + 4kF∞)/(δρ^δ)) X(r), F∞ the last finite F."""
    finite = profile.F[np.isfinite(profile.F)]
    if finite.size == 0:
        raise FrequencyUndefinedError("No radius with X > 0; F(∞) is undefined")
    f_inf = float(finite[-1])
    rho = profile.rho
    phi = rho ** (2.0 * f_inf) * np.exp((C2 + 4.0 * profile.k * f_inf) / (profile.delta * rho ** profile.delta)) * profile.X
    steps = np.diff(phi)
    ok = bool(np.all(steps <= tolerance * np.max(np.abs(phi))))
    return DecayEnvelope(f_inf, phi.tolist(), ok)
