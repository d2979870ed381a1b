"""
Einstein-Maxwell checks for explicit non-inheriting solutions, and the
static/stationary reduction bookkeeping.

Registered solutions (4D, signature −+++, ε_0123 = +√|det g|):

- ``mc``: chart (t, r, z, φ),
  g = −(dt − b r² dφ)² + e^{b²r²}(dz² + dr²) + r² dφ², A = cos(2bz)(dt − b r² dφ).
  The Killing vector ∂_z is not inherited: L_K F = −aF* with a = −2b.
- ``ppwave``: chart (v, u, x, y),
  g = −2 du dv − b²(x² + y²) du² + dx² + dy²,
  F = √2 b (cos f du∧dx − sin f du∧dy), with a = f′(u) along ∂_u.
- ``minkowski``: F = 0.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from .errors import AnsatzInconsistencyError, NonPositiveLapseError
from .forms import (
    OneFormField,
    ScalarField,
    TwoFormField,
    VectorField,
    exterior_derivative,
    hodge_star_4d,
    levi_civita,
    lie_derivative_4d,
    lie_derivative_metric,
)
from .geometry import MetricField, _as_points, minkowski_metric

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    name: str
    metric: MetricField
    F: TwoFormField
    K: VectorField
    a: Callable
    killing: str = ""
    params: Dict[str, object] = field(default_factory=dict)
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    def __post_init__(self):
        if self.metric.dim != 4 or self.metric.signature != "lorentzian":
            raise ValueError(f"Solution '{self.name}' needs a 4D Lorentzian metric")

    def sample_points(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.sampler is None:
            return rng.uniform(-5.0, 5.0, size=(count, 4))
        return self.sampler(rng, count)


def _coordinate_vector(index: int, name: str) -> VectorField:
    e = jnp.zeros(4).at[index].set(1.0)
    return VectorField(lambda x: e + 0.0 * x[0], name=name, dim=4)


# -------------------------------------------------------------------
# Registry
# -------------------------------------------------------------------

def mc_solution(b: float = 0.3, killing: str = "z") -> ExactSolution:
    """Killing vectors ∂_t (a = 0), ∂_φ (a = 0) and ∂_z (a = −2b)."""
    def components(x):
        r = x[1]
        frame = jnp.array([1.0, 0.0, 0.0, -b * r ** 2])
        spatial = jnp.diag(jnp.array([0.0, jnp.exp(b ** 2 * r ** 2), jnp.exp(b ** 2 * r ** 2), r ** 2]))
        return -jnp.outer(frame, frame) + spatial

    def potential(x):
        return jnp.cos(2.0 * b * x[2]) * jnp.array([1.0, 0.0, 0.0, -b * x[1] ** 2])

    metric = MetricField(f"mc[b={b}]", 4, components, signature="lorentzian",
                         domain=lambda p: p[:, 1] > 0.0, params={"b": b})
    F = exterior_derivative(OneFormField(potential, name="A", dim=4))
    vectors = {"t": (0, 0.0), "z": (2, -2.0 * b), "phi": (3, 0.0)}
    if killing not in vectors:
        raise ValueError(f"Unknown Killing vector '{killing}' for mc; choose from {sorted(vectors)}")
    index, a = vectors[killing]

    def sampler(rng, count):
        return np.column_stack([rng.uniform(-5, 5, count), rng.uniform(0.1, 3.0, count),
                                rng.uniform(-5, 5, count), rng.uniform(0, 2 * np.pi, count)])

    return ExactSolution("mc", metric, F, _coordinate_vector(index, f"∂_{killing}"), lambda x: a + 0.0 * x[0],
                         killing, {"b": b}, sampler)


def _bump(u):
    inside = jnp.abs(u) < 1.0
    safe = jnp.where(inside, u, 0.0)
    return jnp.where(inside, (1.0 - safe ** 2) ** 3, 0.0)


PROFILES: Dict[str, Callable] = {
    "sin": jnp.sin,
    "square": lambda u: u ** 2,
    "bump": _bump,
}


def ppwave_solution(b: float = 1.0, f: str = "sin") -> ExactSolution:
    """Plane wave with Maxwell profile f(u) ∈ {sin, square, bump}; a = f′(u) along ∂_u."""
    try:
        profile = PROFILES[f]
    except KeyError:
        raise ValueError(f"Unknown pp-wave profile '{f}'. Known: {sorted(PROFILES)}")
    slope = jax.grad(profile)

    def components(x):
        rho2 = x[2] ** 2 + x[3] ** 2
        return jnp.array([
            [0.0, -1.0, 0.0, 0.0],
            [-1.0, -b ** 2 * rho2, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])

    def maxwell(x):
        phase = profile(x[1])
        c, s = jnp.sqrt(2.0) * b * jnp.cos(phase), -jnp.sqrt(2.0) * b * jnp.sin(phase)
        F = jnp.zeros((4, 4))
        F = F.at[1, 2].set(c).at[2, 1].set(-c)
        return F.at[1, 3].set(s).at[3, 1].set(-s)

    metric = MetricField(f"ppwave[b={b}]", 4, components, signature="lorentzian", params={"b": b})

    def sampler(rng, count):
        return rng.uniform(-2.0, 2.0, size=(count, 4))

    return ExactSolution("ppwave", metric, TwoFormField(maxwell, name=f"F[{f}]", dim=4),
                         _coordinate_vector(1, "∂_u"), lambda x: slope(x[1]), "u", {"b": b, "f": f}, sampler)


def minkowski_solution() -> ExactSolution:
    return ExactSolution("minkowski", minkowski_metric(), TwoFormField(lambda x: 0.0 * jnp.outer(x, x), dim=4, name="0"),
                         _coordinate_vector(0, "∂_t"), lambda x: 0.0 * x[0], "t")


SOLUTION_REGISTRY: Dict[str, Callable[..., ExactSolution]] = {
    "mc": mc_solution,
    "ppwave": ppwave_solution,
    "minkowski": minkowski_solution,
}


def get_solution(name: str, **params) -> ExactSolution:
    try:
        factory = SOLUTION_REGISTRY[name]
    except KeyError:
        raise ValueError(f"Unknown solution '{name}'. Known: {sorted(SOLUTION_REGISTRY)}")
    return factory(**params)


# -------------------------------------------------------------------
# Audits
# -------------------------------------------------------------------

def _batched(fn: Callable, points: np.ndarray) -> np.ndarray:
    return np.asarray(jax.jit(jax.vmap(fn))(jnp.asarray(points)))


def _frobenius(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(values.reshape(len(values), -1)) ** 2, axis=1))


@dataclass
class MaxwellReport:
    dF: np.ndarray
    d_star_F: np.ndarray

    def to_record(self) -> Dict[str, float]:
        return {"dF_max": float(np.max(self.dF)), "d_star_F_max": float(np.max(self.d_star_F))}


def maxwell_residual(sol: ExactSolution, points) -> MaxwellReport:
    """Component (Frobenius) norms of dF and d(F*) per point."""
    pts = _as_points(points, 4)
    sol.metric.at(pts)
    dF = exterior_derivative(sol.F)
    d_dual = exterior_derivative(hodge_star_4d(sol.F, sol.metric))
    return MaxwellReport(_frobenius(dF.evaluate(pts)), _frobenius(d_dual.evaluate(pts)))


def maxwell_stress(F: np.ndarray, g: np.ndarray) -> np.ndarray:
    """T_ij = F_ik F_j^k − ¼ g_ij F_kl F^kl, batched over points."""
    g_inv = np.linalg.inv(g)
    F_mixed = np.einsum("nik,nkl->nil", F, g_inv)  # F_i^l
    first = np.einsum("nil,njl->nij", F_mixed, F)
    invariant = np.einsum("nka,nlb,nab,nkl->n", g_inv, g_inv, F, F)
    return first - 0.25 * g * invariant[:, None, None]


@dataclass
class StressAudit:
    points: np.ndarray
    G: np.ndarray
    T: np.ndarray
    kappa: float
    residual: float
    trace_max: float
    symmetry_defect: float
    vacuum: bool
    passed: bool

    def to_record(self) -> Dict[str, object]:
        return {"kappa": self.kappa, "residual": self.residual, "trace_max": self.trace_max,
                "symmetry_defect": self.symmetry_defect, "vacuum": self.vacuum, "pass": self.passed,
                "points": int(len(self.points))}


def einstein_proportionality(sol: ExactSolution, points, tol: float = 1e-8, floor: float = 1e-12) -> StressAudit:
    """
    Fit G = κT with one κ over all components and points, then require
    |G − κT| ≤ tol·(|G| + |κT| + max|G|) componentwise; the last term keeps
    round-off in vanishing components from counting as a failure.
    """
    pts = _as_points(points, 4)
    if len(pts) < 10:
        raise ValueError(f"einstein_proportionality needs at least 10 points, got {len(pts)}")
    curv = sol.metric._batched_curvature(jnp.asarray(pts))
    g, ricci, scalar = (np.asarray(curv[k]) for k in ("g", "ricci", "scalar"))
    G = ricci - 0.5 * scalar[:, None, None] * g
    T = maxwell_stress(sol.F.evaluate(pts), g)
    trace = np.abs(np.einsum("nij,nij->n", np.linalg.inv(g), T))
    symmetry = float(np.max(np.abs(T - np.swapaxes(T, 1, 2))))

    scale_T = float(np.max(np.abs(T)))
    scale_G = float(np.max(np.abs(G)))
    if scale_T <= floor:
        if scale_G > floor:
            raise ValueError(f"Solution '{sol.name}' has T ≡ 0 but G ≠ 0 (max |G| = {scale_G:.3g}); not Einstein-Maxwell")
        return StressAudit(pts, G, T, float("nan"), 0.0, float(np.max(trace)), symmetry, True, True)

    kappa = float(np.sum(G * T) / np.sum(T * T))
    diff = np.abs(G - kappa * T)
    scale = np.abs(G) + np.abs(kappa * T) + scale_G
    bound = tol * scale
    worst = float(np.max(diff / scale))
    passed = bool(np.all(diff <= bound))
    if not passed:
        logger.warning("Einstein proportionality for %s fails: relative residual %.3g > %.3g", sol.name, worst, tol)
    return StressAudit(pts, G, T, kappa, worst, float(np.max(trace)), symmetry, False, passed)


@dataclass
class InheritanceReport:
    a_values: np.ndarray
    lie_F: np.ndarray
    lie_dual: np.ndarray

    def to_record(self) -> Dict[str, float]:
        return {"LKF_plus_aFstar_max": float(np.max(self.lie_F)),
                "LKFstar_minus_aF_max": float(np.max(self.lie_dual))}


def inheritance_defect(sol: ExactSolution, points) -> InheritanceReport:
    """Per point |L_K F + aF*| and |L_K F* − aF| (component norms)."""
    pts = _as_points(points, 4)
    dual = hodge_star_4d(sol.F, sol.metric)
    lie_F = lie_derivative_4d(sol.F, sol.K)
    lie_dual = lie_derivative_4d(dual, sol.K)

    def defects(x):
        a = sol.a(x)
        return lie_F(x) + a * dual(x), lie_dual(x) - a * sol.F(x), a

    first, second, a_values = jax.jit(jax.vmap(defects))(jnp.asarray(pts))
    return InheritanceReport(np.asarray(a_values), _frobenius(np.asarray(first)), _frobenius(np.asarray(second)))


def killing_audit(sol: ExactSolution, points) -> np.ndarray:
    """Per point |L_K g| (component norm)."""
    pts = _as_points(points, 4)
    return _frobenius(_batched(lie_derivative_metric(sol.metric, sol.K), pts))


def duality_invariance(sol: ExactSolution, points, angle: float, relative: bool = False) -> float:
    """
    max |T(cos φ F + sin φ F*) − T(F)| over points and components; with
    ``relative`` divided by max(1, max |T(F)|).
    """
    pts = _as_points(points, 4)
    g = sol.metric.at(pts)
    F = sol.F.evaluate(pts)
    dual = hodge_star_4d(sol.F, sol.metric).evaluate(pts)
    rotated = np.cos(angle) * F + np.sin(angle) * dual
    stress = maxwell_stress(F, g)
    defect = float(np.max(np.abs(maxwell_stress(rotated, g) - stress)))
    return defect / max(1.0, float(np.max(np.abs(stress)))) if relative else defect


# -------------------------------------------------------------------
# Reductions
# -------------------------------------------------------------------

def stationary_metric(V: ScalarField, theta: OneFormField, g3: MetricField) -> MetricField:
    """−V²(dt + θ_i dx^i)² + g_ij dx^i dx^j in (t, x, y, z)."""
    def components(X):
        x = X[1:]
        v2 = V(x) ** 2
        frame = jnp.concatenate([jnp.ones(1), jnp.real(theta(x))])
        out = -v2 * jnp.outer(frame, frame)
        return out.at[1:, 1:].add(g3.components(x))

    return MetricField(f"stationary[{g3.name}]", 4, components, signature="lorentzian")


def _maxwell_from_electric(metric4: MetricField, electric: Callable, magnetic_dual: Callable) -> Callable:
    """
    F with F_ti = electric(X) and F*_ti = magnetic_dual(X): the spatial
    block enters F* linearly, so it is recovered by one 3x3 solve.
    """
    def assemble(e, f):
        F = jnp.zeros((4, 4), dtype=jnp.result_type(e, f))
        F = F.at[0, 1:].set(e).at[1:, 0].set(-e)
        F = F.at[2, 3].set(f[0]).at[3, 2].set(-f[0])
        F = F.at[3, 1].set(f[1]).at[1, 3].set(-f[1])
        return F.at[1, 2].set(f[2]).at[2, 1].set(-f[2])

    def components(X):
        eps = levi_civita(metric4, X)
        g_inv = metric4.inverse(X)

        def dual_t(e, f):
            F = assemble(e, f)
            return 0.5 * jnp.einsum("icd,cd->i", eps[0, 1:], g_inv @ F @ g_inv.T)

        e = electric(X)
        zero = jnp.zeros(3)
        M = jax.jacfwd(dual_t, argnums=1)(jnp.zeros(3), zero)
        f = jnp.linalg.solve(M, magnetic_dual(X) - dual_t(e, zero))
        return assemble(e, f)

    return components


def stationary_maxwell_field(V: ScalarField, theta: OneFormField, zeta: OneFormField, g3: MetricField,
                             a: float) -> Tuple[MetricField, TwoFormField]:
    """(g, F) with K = ∂_t and E + iB = V^{-1} ζ e^{iat}, E_i = V^{-1}F_ti, B_i = V^{-1}F*_ti."""
    metric4 = stationary_metric(V, theta, g3)

    def phase(X):
        return zeta(X[1:]) * jnp.exp(1j * a * X[0])

    components = _maxwell_from_electric(metric4, lambda X: jnp.real(phase(X)), lambda X: jnp.imag(phase(X)))
    return metric4, TwoFormField(components, name="F[ζ]", metric=metric4, dim=4)


def static_maxwell_field(V: ScalarField, W: OneFormField, g3: MetricField, a: float) -> Tuple[MetricField, TwoFormField]:
    """Static ansatz E = W sin(at), B = −W cos(at), i.e. ζ = −iVW with θ = 0."""
    theta = OneFormField(lambda x: 0.0 * x, name="0")
    zeta = OneFormField(lambda x: -1j * V(x) * W(x), "complex", g3, "-iVW")
    return stationary_maxwell_field(V, theta, zeta, g3, a)


def _electric_magnetic(metric4: MetricField, F: TwoFormField):
    dual = hodge_star_4d(F, metric4)

    def em(X):
        v = jnp.sqrt(-metric4.components(X)[0, 0])
        return F(X)[0, 1:] / v, dual(X)[0, 1:] / v

    return em


@dataclass
class StaticReduction:
    V: ScalarField
    W: OneFormField
    g3: MetricField
    mismatch: float


@dataclass
class StationaryReduction:
    V: ScalarField
    theta: OneFormField
    zeta: OneFormField
    g3: MetricField
    mismatch: float


def _slice(t: float) -> Callable:
    return lambda x: jnp.concatenate([jnp.full(1, t), x])


def _check_slice(metric4: MetricField, points: np.ndarray, t_values: Sequence[float]) -> np.ndarray:
    g = [metric4.at(np.column_stack([np.full(len(points), t), points])) for t in t_values]
    lapse2 = -g[0][:, 0, 0]
    if np.any(lapse2 <= 0.0):
        bad = points[int(np.argmin(lapse2))]
        raise NonPositiveLapseError(f"−g_tt = {lapse2.min():.3g} <= 0 at {bad.tolist()}")
    drift = float(np.max(np.abs(g[1] - g[0])))
    if drift > 1e-12 * max(1.0, float(np.max(np.abs(g[0])))):
        raise AnsatzInconsistencyError(f"Metric depends on t (drift {drift:.3g}); not stationary", None, drift)
    return g[0]


def static_reduction_extract(metric4: MetricField, F: TwoFormField, a: float, points,
                             t_values: Sequence[float] = (0.3, 1.1), tol: float = 1e-10) -> StaticReduction:
    """
    (V, W, g₃) from a static pair. W is read off at t₀ as E sin(at₀) − B cos(at₀)
    and the ansatz E = W sin(at), B = −W cos(at) is re-checked at t₁.
    """
    pts = _as_points(points, 3)
    g = _check_slice(metric4, pts, t_values)
    shift = float(np.max(np.abs(g[:, 0, 1:])))
    if shift > tol:
        raise AnsatzInconsistencyError(f"g_ti = {shift:.3g} != 0: the metric is not in static form", None, shift)

    em = _electric_magnetic(metric4, F)
    t0, t1 = t_values[0], t_values[1]

    def V(x):
        return jnp.sqrt(-metric4.components(_slice(t0)(x))[0, 0])

    def W(x):
        E, B = em(_slice(t0)(x))
        return E * jnp.sin(a * t0) - B * jnp.cos(a * t0)

    def ansatz_defect(x):
        E, B = em(_slice(t1)(x))
        w = W(x)
        return jnp.max(jnp.abs(E - w * jnp.sin(a * t1))) + jnp.max(jnp.abs(B + w * jnp.cos(a * t1)))

    defects = _batched(ansatz_defect, pts)
    worst = int(np.argmax(defects))
    scale = max(1.0, float(np.max(np.abs(_batched(W, pts)))))
    if defects[worst] > tol * scale:
        raise AnsatzInconsistencyError(
            f"Static ansatz fails at {pts[worst].tolist()}: mismatch {defects[worst]:.3g}", pts[worst].tolist(),
            float(defects[worst]))
    g3 = MetricField(f"slice[{metric4.name}]", 3, lambda x: metric4.components(_slice(t0)(x))[1:, 1:])
    return StaticReduction(ScalarField(V, name="V"), OneFormField(W, name="W"), g3, float(np.max(defects)))


def stationary_reduction_extract(metric4: MetricField, F: TwoFormField, a: float, points,
                                 t_values: Sequence[float] = (0.3, 1.1), tol: float = 1e-10) -> StationaryReduction:
    """(V, θ, ζ, g₃) with ζ = V(E + iB)e^{-iat}; the phase is re-checked at t₁."""
    pts = _as_points(points, 3)
    _check_slice(metric4, pts, t_values)
    em = _electric_magnetic(metric4, F)
    t0, t1 = t_values[0], t_values[1]

    def V(x):
        return jnp.sqrt(-metric4.components(_slice(t0)(x))[0, 0])

    def theta(x):
        g = metric4.components(_slice(t0)(x))
        return g[0, 1:] / g[0, 0]

    def g3_components(x):
        g = metric4.components(_slice(t0)(x))
        th = g[0, 1:] / g[0, 0]
        return g[1:, 1:] - g[0, 0] * jnp.outer(th, th)

    def zeta_at(t):
        def zeta(x):
            E, B = em(_slice(t)(x))
            return V(x) * (E + 1j * B) * jnp.exp(-1j * a * t)
        return zeta

    zeta0, zeta1 = zeta_at(t0), zeta_at(t1)
    defects = _batched(lambda x: jnp.max(jnp.abs(zeta1(x) - zeta0(x))), pts)
    worst = int(np.argmax(defects))
    scale = max(1.0, float(np.max(np.abs(_batched(zeta0, pts)))))
    if defects[worst] > tol * scale:
        raise AnsatzInconsistencyError(
            f"Phase e^(iat) with a = {a} is inconsistent at {pts[worst].tolist()}: mismatch {defects[worst]:.3g}",
            pts[worst].tolist(), float(defects[worst]))
    g3 = MetricField(f"quotient[{metric4.name}]", 3, g3_components)
    return StationaryReduction(ScalarField(V, name="V"), OneFormField(theta, name="θ"),
                               OneFormField(zeta0, "complex", g3, "ζ"), g3, float(np.max(defects)))


def non_nullness_audit(metric4: MetricField, F: TwoFormField, points4) -> Dict[str, float]:
    """
    For K = ∂_t on a static metric: T_ti = 0 for spatial i and the energy
    density ρ = T_tt/V² is non-negative, so T_ij K^j = −ρ K_i.
    """
    pts = _as_points(points4, 4)
    g = metric4.at(pts)
    T = maxwell_stress(F.evaluate(pts), g)
    rho = T[:, 0, 0] / (-g[:, 0, 0])
    return {"T_ti_max": float(np.max(np.abs(T[:, 0, 1:]))), "rho_min": float(np.min(rho)),
            "pass": bool(np.min(rho) >= -1e-12 * max(1.0, float(np.max(np.abs(rho)))))}


# -------------------------------------------------------------------
# Verification bundle
# -------------------------------------------------------------------

@dataclass
class VerificationReport:
    solution: str
    params: Dict[str, object]
    maxwell: Dict[str, float]
    stress: Dict[str, object]
    inheritance: Dict[str, float]
    killing_max: float
    duality_max: float
    passed: bool
    seconds: Dict[str, float] = field(default_factory=dict)

    def to_record(self) -> Dict[str, object]:
        return dict(self.__dict__)


def verify_solution(sol: ExactSolution, n_points: int = 200, seed: int = 0, maxwell_tol: float = 1e-9,
                    einstein_tol: float = 1e-8, inheritance_tol: float = 1e-9,
                    duality_tol: float = 1e-10) -> VerificationReport:
    points = sol.sample_points(n_points, seed)
    timings: List[Tuple[str, float]] = []

    t0 = time.perf_counter()
    maxwell = maxwell_residual(sol, points).to_record()
    timings.append(("maxwell", time.perf_counter() - t0))
    t0 = time.perf_counter()
    stress = einstein_proportionality(sol, points, tol=einstein_tol)
    timings.append(("einstein", time.perf_counter() - t0))
    t0 = time.perf_counter()
    inheritance = inheritance_defect(sol, points).to_record()
    killing = float(np.max(killing_audit(sol, points)))
    duality = duality_invariance(sol, points, 0.7, relative=True)
    timings.append(("inheritance", time.perf_counter() - t0))

    passed = (max(maxwell.values()) <= maxwell_tol and stress.passed
              and max(inheritance.values()) <= inheritance_tol and killing <= 1e-10
              and duality <= duality_tol)
    logger.info("[verify-solution] timing breakdown:")
    for name, seconds in timings:
        logger.info("  %-12s %.3fs", name + ":", seconds)
    if not passed:
        logger.warning("solution %s fails at least one tolerance", sol.name)
    return VerificationReport(sol.name, dict(sol.params), maxwell, stress.to_record(), inheritance, killing,
                              duality, passed, dict(timings))
