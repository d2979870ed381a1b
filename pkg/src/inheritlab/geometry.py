"""
Charts, metrics and curvature, the asymptotic-flatness audit, and the two
geometric lemmas (weighted Poincaré inequality, Hessian bands of d_R).

Index conventions, used everywhere in the package:

- Derivative index first: ``dg[c, a, b] = ∂_c g_ab`` and
  ``dgamma[c, m, i, j] = ∂_c Γ^m_ij``.
- ``christoffel[m, i, j] = Γ^m_ij``.
- ``riemann[i, j, k, l] = R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_kp Γ^p_lj − Γ^i_lp Γ^p_kj``.
- ``ricci[j, l] = R^i_jil``, ``scalar = g^{jl} R_jl``.

Derivatives come from forward-mode automatic differentiation (jax.jacfwd),
so they are exact up to round-off.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .config import DEFAULT_SETTINGS, Settings
from .errors import BoundaryPointError, ChartDomainError, SingularMetricError

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------

def derivative_first(fn: Callable, complex_valued: bool = False) -> Callable:
    """
    Forward-mode Jacobian of a pointwise function with the derivative index
    moved to the front: ``out[c, ...] = ∂_c fn(x)[...]``.

    Complex outputs are differentiated through their real and imaginary
    parts separately (inputs are always real chart coordinates).
    """
    if complex_valued:
        jac_re = jax.jacfwd(lambda x: jnp.real(fn(x)))
        jac_im = jax.jacfwd(lambda x: jnp.imag(fn(x)))

        def jac(x):
            return jnp.moveaxis(jac_re(x) + 1j * jac_im(x), -1, 0)

        return jac

    jac_real = jax.jacfwd(fn)
    return lambda x: jnp.moveaxis(jac_real(x), -1, 0)


def christoffel_from(g_fn: Callable) -> Callable:
    dg_fn = derivative_first(g_fn)

    def christoffel(x):
        inv_g = jnp.linalg.inv(g_fn(x))
        dg = dg_fn(x)
        # Γ^m_ij = ½ g^{mk} (∂_i g_kj + ∂_j g_ki − ∂_k g_ij)
        lowered = jnp.einsum("jki->kij", dg) + jnp.einsum("ikj->kij", dg) - dg
        return 0.5 * jnp.einsum("mk,kij->mij", inv_g, lowered)

    return christoffel


def curvature_from(g_fn: Callable) -> Callable:
    gamma_fn = christoffel_from(g_fn)
    dgamma_fn = derivative_first(gamma_fn)
    dg_fn = derivative_first(g_fn)
    d2g_fn = derivative_first(dg_fn)

    def curvature(x):
        g = g_fn(x)
        inv_g = jnp.linalg.inv(g)
        G = gamma_fn(x)
        dG = dgamma_fn(x)
        riemann = (
            jnp.einsum("kilj->ijkl", dG)
            - jnp.einsum("likj->ijkl", dG)
            + jnp.einsum("ikp,plj->ijkl", G, G)
            - jnp.einsum("ilp,pkj->ijkl", G, G)
        )
        ricci = jnp.einsum("ijil->jl", riemann)
        scalar = jnp.einsum("ij,ij->", inv_g, ricci)
        return {
            "g": g,
            "g_inv": inv_g,
            "sqrt_abs_det": jnp.sqrt(jnp.abs(jnp.linalg.det(g))),
            "dg": dg_fn(x),
            "d2g": d2g_fn(x),
            "christoffel": G,
            "riemann": riemann,
            "ricci": ricci,
            "scalar": scalar,
        }

    return curvature


def _as_points(points, dim: int) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ChartDomainError(f"Expected points of shape (N, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ChartDomainError("Chart coordinates must be finite reals")
    return arr


# -------------------------------------------------------------------
# Types
# -------------------------------------------------------------------

@dataclass(frozen=True)
class ChartPoint:
    """Coordinates in a fixed chart; ``dim`` is 3 or 4."""
    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) not in (3, 4):
            raise ChartDomainError(f"ChartPoint needs 3 or 4 coordinates, got {len(coords)}")
        if not all(math.isfinite(c) for c in coords):
            raise ChartDomainError(f"ChartPoint coordinates must be finite, got {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.array(self.coords)

    def radius(self) -> float:
        r = float(np.linalg.norm(self.coords[-3:] if self.dim == 3 else self.coords[1:]))
        if r <= 0.0:
            raise ChartDomainError("Radial quantity requested at |x| = 0")
        return r


@dataclass(frozen=True, eq=False)
class MetricField:
    """
    A metric given as a closed-form chart map ``components(x) -> g_ij``.

    ``components`` must be written with jax.numpy so that exact derivatives
    are available. ``c_star``/``delta`` are the declared asymptotic-flatness
    parameters (3D Riemannian metrics only).
    """
    name: str
    dim: int
    components: Callable
    signature: str = "riemannian"
    c_star: Optional[float] = None
    delta: Optional[float] = None
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (3, 4):
            raise ValueError(f"MetricField dimension must be 3 or 4, got {self.dim}")
        if self.signature not in ("riemannian", "lorentzian"):
            raise ValueError(f"Unknown signature tag '{self.signature}'")
        if self.delta is not None and not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.c_star is not None and self.c_star <= 0.0:
            raise ValueError(f"C* must be positive, got {self.c_star}")

    @property
    def asymptotically_flat(self) -> bool:
        return self.c_star is not None and self.delta is not None

    # pointwise jax functions -----------------------------------------

    @cached_property
    def dg(self) -> Callable:
        return derivative_first(self.components)

    @cached_property
    def d2g(self) -> Callable:
        return derivative_first(self.dg)

    @cached_property
    def inverse(self) -> Callable:
        return lambda x: jnp.linalg.inv(self.components(x))

    @cached_property
    def sqrt_abs_det(self) -> Callable:
        return lambda x: jnp.sqrt(jnp.abs(jnp.linalg.det(self.components(x))))

    @cached_property
    def christoffel(self) -> Callable:
        return christoffel_from(self.components)

    @cached_property
    def curvature(self) -> Callable:
        return curvature_from(self.components)

    # batched numpy evaluation -----------------------------------------

    @cached_property
    def _batched_components(self):
        return jax.jit(jax.vmap(self.components))

    @cached_property
    def _batched_jets(self):
        def jets(x):
            return self.components(x), self.dg(x), self.d2g(x)
        return jax.jit(jax.vmap(jets))

    @cached_property
    def _batched_curvature(self):
        return jax.jit(jax.vmap(self.curvature))

    def check_domain(self, points: np.ndarray) -> None:
        if self.domain is None:
            return
        inside = np.asarray(self.domain(points), dtype=bool)
        if not np.all(inside):
            bad = points[np.argmin(inside)]
            raise ChartDomainError(f"Point {bad.tolist()} is outside the chart domain of metric '{self.name}'")

    def at(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        self.check_domain(pts)
        return np.asarray(self._batched_components(jnp.asarray(pts)))

    def jets(self, points):
        pts = _as_points(points, self.dim)
        self.check_domain(pts)
        g, dg, d2g = self._batched_jets(jnp.asarray(pts))
        return np.asarray(g), np.asarray(dg), np.asarray(d2g)


@dataclass(frozen=True)
class MetricEvaluation:
    """Metric data at one point (or stacked over N points)."""
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_abs_det: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


# -------------------------------------------------------------------
# Main API: evaluation
# -------------------------------------------------------------------

def _validate_metric_values(metric: MetricField, pts: np.ndarray, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise SingularMetricError(f"Metric '{metric.name}' is not finite at some evaluated point")
    dets = np.linalg.det(g)
    scale = np.max(np.abs(g), axis=(-2, -1)) ** metric.dim
    singular = np.abs(dets) <= 1e-14 * scale
    if np.any(singular):
        bad = pts[np.argmax(singular)]
        raise SingularMetricError(f"Metric '{metric.name}' is singular at {bad.tolist()}")
    if metric.signature == "riemannian":
        for point, gp in zip(pts, g):
            try:
                np.linalg.cholesky(gp)
            except np.linalg.LinAlgError:
                raise SingularMetricError(
                    f"Metric '{metric.name}' is not positive definite at {point.tolist()}"
                )
    elif np.any(dets >= 0.0):
        bad = pts[np.argmax(dets >= 0.0)]
        raise SingularMetricError(f"Metric '{metric.name}' is not Lorentzian at {bad.tolist()}")


def evaluate_metric_batch(metric: MetricField, points) -> MetricEvaluation:
    pts = _as_points(points, metric.dim)
    metric.check_domain(pts)
    g = np.asarray(metric._batched_components(jnp.asarray(pts)))
    _validate_metric_values(metric, pts, g)
    out = metric._batched_curvature(jnp.asarray(pts))
    return MetricEvaluation(**{k: np.asarray(v) for k, v in out.items()})


def evaluate_metric(metric: MetricField, p) -> MetricEvaluation:
    """
    Metric components, Christoffel symbols and curvature at a single point.

    :param metric: the metric field
    :param p: a ChartPoint or a coordinate sequence
    :raises ChartDomainError: point outside the chart domain
    :raises SingularMetricError: non-invertible (or indefinite Riemannian) metric
    """
    coords = p.array() if isinstance(p, ChartPoint) else np.asarray(p, dtype=float)
    batch = evaluate_metric_batch(metric, coords[None, :])
    return MetricEvaluation(**{k: getattr(batch, k)[0] for k in batch.__dataclass_fields__})


# -------------------------------------------------------------------
# Registry
# -------------------------------------------------------------------

def _radius(x):
    return jnp.sqrt(jnp.sum(x[-3:] ** 2))


def _positive_radius(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points, axis=-1) > 0.0


def flat_metric(dim: int = 3) -> MetricField:
    if dim == 3:
        return MetricField("flat3", 3, lambda x: jnp.eye(3) + 0.0 * x[0], c_star=1.0, delta=1.0)
    return MetricField(f"flat{dim}", dim, lambda x: jnp.eye(dim) + 0.0 * x[0])


def conformal_metric(m: float = 1.0, c_star: float = 30.0, delta: float = 1.0) -> MetricField:
    """(1 + m/(2r))⁴ δ_ij: the spatial Schwarzschild slice in isotropic coordinates."""
    def components(x):
        psi = 1.0 + m / (2.0 * _radius(x))
        return psi ** 4 * jnp.eye(3)

    return MetricField("conformal", 3, components, c_star=c_star, delta=delta,
                       domain=_positive_radius, params={"m": m})


def power_metric(c_star: float = 5.0, delta: float = 0.5) -> MetricField:
    """(1 + r^{-1/2}) δ_ij; its audit constant is √3(3/2 + √(17/16)) at every radius."""
    def components(x):
        return (1.0 + _radius(x) ** -0.5) * jnp.eye(3)

    return MetricField("power", 3, components, c_star=c_star, delta=delta, domain=_positive_radius)


def log_metric(c_star: float = 5.0, delta: float = 0.5) -> MetricField:
    """(1 + log r / r^{0.1}) δ_ij, which decays too slowly for the declared δ."""
    def components(x):
        r = _radius(x)
        return (1.0 + jnp.log(r) * r ** -0.1) * jnp.eye(3)

    return MetricField("log", 3, components, c_star=c_star, delta=delta,
                       domain=lambda p: np.linalg.norm(p, axis=-1) >= 1.0)


def scattering_metric() -> MetricField:
    """x^{-4}dx² + x^{-2}(dθ² + sin²θ dφ²) in (x, θ, φ), i.e. flat space with x = 1/r."""
    def components(q):
        x, theta = q[0], q[1]
        return jnp.diag(jnp.array([x ** -4, x ** -2, x ** -2 * jnp.sin(theta) ** 2]))

    def domain(p):
        return (p[:, 0] > 0.0) & (p[:, 1] > 0.0) & (p[:, 1] < np.pi)

    return MetricField("scattering", 3, components, domain=domain)


def minkowski_metric() -> MetricField:
    return MetricField("minkowski", 4, lambda x: jnp.diag(jnp.array([-1.0, 1.0, 1.0, 1.0])) + 0.0 * x[0],
                       signature="lorentzian")


def near_flat_metric(seed: int = 0, eps: float = 0.05, modes: int = 3) -> MetricField:
    """Random smooth symmetric perturbation of δ_ij with sup-norm below 3·eps·modes."""
    rng = np.random.default_rng(seed)
    wave = jnp.asarray(rng.normal(size=(modes, 3)) * 0.5)
    phase = jnp.asarray(rng.uniform(0, 2 * np.pi, size=modes))
    amp = rng.normal(size=(modes, 3, 3))
    amp = jnp.asarray(0.5 * (amp + np.swapaxes(amp, 1, 2)) / 3.0)

    def components(x):
        s = jnp.sin(wave @ x + phase)
        return jnp.eye(3) + eps * jnp.einsum("k,kab->ab", s, amp)

    return MetricField(f"near_flat[{seed}]", 3, components, params={"seed": seed, "eps": eps})


METRIC_REGISTRY: Dict[str, Callable[..., MetricField]] = {
    "flat3": flat_metric,
    "conformal": conformal_metric,
    "power": power_metric,
    "log": log_metric,
    "scattering": scattering_metric,
    "minkowski": minkowski_metric,
    "near_flat": near_flat_metric,
}


def get_metric(name: str, **params) -> MetricField:
    try:
        factory = METRIC_REGISTRY[name]
    except KeyError:
        raise ValueError(f"Unknown metric '{name}'. Known: {sorted(METRIC_REGISTRY)}")
    return factory(**params)


# -------------------------------------------------------------------
# Main API: asymptotic flatness audit
# -------------------------------------------------------------------

def sphere_directions(count: int) -> np.ndarray:
    """Deterministic, nearly uniform unit vectors (Fibonacci lattice)."""
    if count < 1:
        raise ValueError("directions_per_radius must be at least 1")
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    phi = np.pi * (1.0 + 5.0 ** 0.5) * k
    s = np.sqrt(1.0 - z ** 2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


@dataclass
class FlatnessAudit:
    metric: str
    delta: float
    c_star: float
    max_weighted_deviation: float
    passed: bool
    worst_point: List[float]
    radii: List[float]

    def to_record(self) -> Dict[str, object]:
        return {
            "metric": self.metric,
            "R": min(self.radii),
            "delta": self.delta,
            "Cstar": self.c_star,
            "max_weighted_deviation": self.max_weighted_deviation,
            "pass": self.passed,
        }


def audit_asymptotic_flatness(metric: MetricField, sample_radii: Sequence[float],
                              directions_per_radius: int = 32) -> FlatnessAudit:
    """
    Sup over samples of |x|^δ (|g − δ| + |x||∂g| + |x|²|∂²g|), Frobenius norms,
    Euclidean |x|. Pass iff the sup is at most the declared C*.
    """
    radii = [float(r) for r in sample_radii]
    if not radii:
        raise ValueError("audit_asymptotic_flatness needs a non-empty radius schedule")
    if metric.dim != 3 or metric.signature != "riemannian":
        raise ValueError(f"Metric '{metric.name}' is not a 3D Riemannian metric")
    if not metric.asymptotically_flat:
        raise ValueError(f"Metric '{metric.name}' declares no (C*, δ)")

    dirs = sphere_directions(directions_per_radius)
    points = np.concatenate([r * dirs for r in radii])
    g, dg, d2g = metric.jets(points)
    _validate_metric_values(metric, points, g)

    r = np.linalg.norm(points, axis=1)
    dev = (np.linalg.norm(g - np.eye(3), axis=(1, 2))
           + r * np.linalg.norm(dg.reshape(len(r), -1), axis=1)
           + r ** 2 * np.linalg.norm(d2g.reshape(len(r), -1), axis=1))
    weighted = r ** metric.delta * dev
    worst = int(np.argmax(weighted))
    sup = float(weighted[worst])
    passed = sup <= metric.c_star
    logger.info("flatness audit %s: sup=%.6g vs C*=%.6g -> %s",
                metric.name, sup, metric.c_star, "pass" if passed else "fail")
    return FlatnessAudit(metric.name, metric.delta, metric.c_star, sup, passed,
                         points[worst].tolist(), radii)


# -------------------------------------------------------------------
# Main API: weighted Poincaré inequality
# -------------------------------------------------------------------

def composite_gauss_legendre(a: float, b: float, nodes_per_unit: int):
    """Composite Gauss-Legendre rule on [a, b] with panels of length at most one."""
    if b <= a:
        raise ValueError(f"Empty interval [{a}, {b}]")
    panels = max(1, int(math.ceil(b - a)))
    x, w = np.polynomial.legendre.leggauss(nodes_per_unit)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass
class PoincareReport:
    lhs: float
    rhs: float
    boundary_term: float
    provable_bound: float
    stated_holds: bool
    passed: bool

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__)


def weighted_poincare_check(R: float, delta: float, ell: float, phi: Callable,
                            nodes_per_unit: Optional[int] = None, tol: float = 1e-10) -> PoincareReport:
    """
    Compare ∫₀^ℓ φ²/(R+t)^{2+δ} dt with the bounds obtained from φ′.

    ``rhs`` is 4/((1+δ)² R^{2δ}) ∫(φ′)². Integrating by parts gives
    lhs = c + 2/(1+δ) ∫ φφ′ (R+t)^{-1-δ} with c = φ(0)²/((1+δ)R^{1+δ}),
    and Cauchy-Schwarz then gives lhs ≤ ((b + √(b² + 4c))/2)² with
    b = 2‖φ′‖/((1+δ)R^{δ/2}). ``passed`` tests that provable bound;
    ``stated_holds`` tests ``rhs``.

    :param phi: jax-differentiable scalar function of t with φ(ℓ) = 0
    """
    if R <= 0 or delta <= 0 or ell <= 0:
        raise ValueError(f"Need R, δ, ℓ > 0, got R={R}, δ={delta}, ℓ={ell}")
    nodes_per_unit = nodes_per_unit or DEFAULT_SETTINGS.poincare_nodes_per_unit

    t, w = composite_gauss_legendre(0.0, ell, nodes_per_unit)
    phi_v = jax.vmap(phi)
    dphi_v = jax.vmap(jax.grad(phi))
    values = np.asarray(phi_v(jnp.asarray(t)))
    slopes = np.asarray(dphi_v(jnp.asarray(t)))
    end_value = float(phi(jnp.asarray(float(ell))))
    scale = max(1.0, float(np.max(np.abs(values))))
    if abs(end_value) > 1e-12 * scale:
        raise ValueError(f"weighted_poincare_check requires φ(ℓ) = 0, got φ({ell}) = {end_value:.3e}")

    lhs = float(np.sum(w * values ** 2 / (R + t) ** (2.0 + delta)))
    grad_sq = float(np.sum(w * slopes ** 2))
    rhs = 4.0 / ((1.0 + delta) ** 2 * R ** (2.0 * delta)) * grad_sq
    start_value = float(phi(jnp.asarray(0.0)))
    c = start_value ** 2 / ((1.0 + delta) * R ** (1.0 + delta))
    b = 2.0 * math.sqrt(grad_sq) / ((1.0 + delta) * R ** (delta / 2.0))
    bound = ((b + math.sqrt(b * b + 4.0 * c)) / 2.0) ** 2

    quad_tol = tol * max(1.0, lhs)
    report = PoincareReport(lhs, rhs, c, bound, lhs <= rhs + quad_tol, lhs <= bound + quad_tol)
    if not report.stated_holds:
        logger.warning("R^{2δ}-weighted bound exceeded: lhs=%.6g rhs=%.6g (R=%g, δ=%g, ℓ=%g, φ(0)=%.3g)",
                       lhs, rhs, R, delta, ell, start_value)
    return report


# -------------------------------------------------------------------
# Main API: Hessian bands of d_R
# -------------------------------------------------------------------

@dataclass
class HessianBandEntry:
    point: List[float]
    distance: float
    eigenvalues: List[float]
    center: float
    weighted_deviation: float
    inside: bool


@dataclass
class HessianBandReport:
    R: float
    delta: float
    c1: float
    entries: List[HessianBandEntry]

    @property
    def all_inside(self) -> bool:
        return all(e.inside for e in self.entries)


def check_hessian_bands(metric: MetricField, R: float, sample_points, delta: Optional[float] = None,
                        c1: Optional[float] = None, settings: Settings = DEFAULT_SETTINGS) -> HessianBandReport:
    """
    Tangential eigenvalues of ∇²d_R against the band 1/(R+d) ± C₁/(R+d)^{1+δ}.

    Eigenvalues are taken relative to g (generalized symmetric problem) and
    the one belonging to the normal direction is dropped. Without ``c1`` the
    smallest admissible C₁ is the sup of |λ − 1/(R+d)|(R+d)^{1+δ}.
    """
    from scipy.linalg import eigh

    from .distance import distance_to_sphere

    delta = metric.delta if delta is None else delta
    if delta is None or not (0.0 < delta < 1.0):
        raise ValueError(f"Hessian bands need δ in (0, 1), got {delta}")

    pts = _as_points(sample_points, 3)
    rows = []
    for x in pts:
        if abs(np.linalg.norm(x) - R) <= 1e-12 * R:
            raise BoundaryPointError(f"Point {x.tolist()} lies on the sphere |x| = {R}; d_R = 0 there")
        sample = distance_to_sphere(metric, R, x, settings=settings)
        g = metric.at(x)[0]
        normal = np.linalg.solve(g, sample.gradient)
        vals, vecs = eigh(sample.hessian, g)
        align = np.abs(vecs.T @ g @ normal) / np.sqrt(normal @ g @ normal)
        tangential = np.delete(vals, int(np.argmax(align)))
        rho = R + sample.d
        center = 1.0 / rho
        dev = float(np.max(np.abs(tangential - center)) * rho ** (1.0 + delta))
        rows.append((x, sample.d, tangential, center, dev))

    found = max(r[4] for r in rows)
    c1_used = found if c1 is None else c1
    entries = [HessianBandEntry(x.tolist(), float(d), sorted(t.tolist()), center, dev, dev <= c1_used * (1 + 1e-12))
               for x, d, t, center, dev in rows]
    logger.info("hessian bands on %s: C1=%.6g over %d points (δ=%g)", metric.name, found, len(rows), delta)
    return HessianBandReport(R, delta, c1_used, entries)
