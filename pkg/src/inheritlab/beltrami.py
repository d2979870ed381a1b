"""
Curl eigenfields and the residuals of the static and stationary reductions.

Exemplars:

- ABC flow: *dω = ω on flat space, periodic, for validating operators.
- Chandrasekhar-Kendall fields: built from ψ = j_l(a r) Y_lm, regular at the
  origin and decaying like 1/r, so they are not in L².
- ``mirror_field`` turns a solution of *dω = aω into one of *dω̃ = −aω̃.
- ``gauge_twist`` multiplies by e^{iaχ} and returns θ = dχ.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .errors import NonPositiveLapseError
from .forms import (
    OneFormField,
    ScalarField,
    TwoFormField,
    codifferential,
    covariant_derivative,
    exterior_derivative,
    hodge_laplacian,
    hodge_star_3d,
    norm_g,
)
from .geometry import MetricField, _as_points

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------
# Exemplars
# -------------------------------------------------------------------

def abc_field(A: float = 1.0, B: float = 1.0, C: float = 1.0) -> OneFormField:
    """(A sin z + C cos y)dx + (B sin x + A cos z)dy + (C sin y + B cos x)dz, with *dω = ω."""
    def components(x):
        return jnp.array([
            A * jnp.sin(x[2]) + C * jnp.cos(x[1]),
            B * jnp.sin(x[0]) + A * jnp.cos(x[2]),
            C * jnp.sin(x[1]) + B * jnp.cos(x[0]),
        ])

    return OneFormField(components, name=f"abc[{A},{B},{C}]")


def constant_field(c=(1.0, 0.0, 0.0), name: str = "dx") -> OneFormField:
    c = jnp.asarray(c, dtype=float)
    return OneFormField(lambda x: c + 0.0 * x[0], name=name)


def zero_field() -> OneFormField:
    return OneFormField(lambda x: 0.0 * x, name="zero")


def _series_terms(l: int, count: int = 30) -> np.ndarray:
    # j_l(z)/z^l = ∑_k (−z²/2)^k / (k! (2l+2k+1)!!)
    out = []
    for k in range(count):
        double_fact = math.prod(range(2 * l + 2 * k + 1, 0, -2))
        out.append((-0.5) ** k / (math.factorial(k) * double_fact))
    return np.array(out)


def _bessel_ratio(z2, l: int):
    """j_l(z)/z^l as a smooth function of z² (power series near 0, recurrence beyond)."""
    cut = l + 1.0
    coeffs = _series_terms(l)
    zs = jnp.minimum(z2, cut ** 2)
    series = jnp.polyval(jnp.asarray(coeffs[::-1]), zs)

    z = jnp.sqrt(jnp.where(z2 > cut ** 2, z2, (cut + 1.0) ** 2))
    j_prev, j_cur = jnp.sin(z) / z, jnp.sin(z) / z ** 2 - jnp.cos(z) / z
    if l == 0:
        j_cur = j_prev
    for n in range(1, l):
        j_prev, j_cur = j_cur, (2 * n + 1) / z * j_cur - j_prev
    trig = j_cur / z ** l
    return jnp.where(z2 > cut ** 2, trig, series)


def _legendre_derivative_terms(l: int, m: int):
    """(power of z, power of r², coefficient) for r^l d^m P_l/dt^m (t = z/r), divided by ρ^m."""
    terms = []
    for k in range(l // 2 + 1):
        if l - 2 * k < m:
            break
        c = (-1) ** k * math.factorial(2 * l - 2 * k) / (2 ** l * math.factorial(k) * math.factorial(l - k)
                                                      * math.factorial(l - 2 * k))
        c *= math.factorial(l - 2 * k) / math.factorial(l - 2 * k - m)
        terms.append((l - 2 * k - m, k, c))
    return terms


def solid_harmonic(l: int, m: int) -> Callable:
    """Real solid harmonic r^l P_l^|m|(cos θ)·(cos mφ | sin |m|φ), unnormalized, as a polynomial in x."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"Invalid spherical harmonic indices (l={l}, m={m}); need |m| <= l")
    mm = abs(m)
    terms = _legendre_derivative_terms(l, mm)

    def solid(x):
        re, im = 1.0 + 0.0 * x[0], 0.0 * x[0]
        for _ in range(mm):
            re, im = x[0] * re - x[1] * im, x[0] * im + x[1] * re
        angular = im if m < 0 else re
        r2 = x @ x
        poly = sum(c * x[2] ** pz * r2 ** pr for pz, pr, c in terms)
        return angular * poly

    return solid


def make_ck_field(a: float, l: int = 1, m: int = 0) -> OneFormField:
    """
    Chandrasekhar-Kendall field B = T + S/a with T = ∇ψ × x, S = ∇ × T,
    ψ(x) = j_l(a|x|) Y_lm. Satisfies curl B = aB and B_a(x) = B_1(ax).
    """
    if a == 0.0:
        raise ValueError("Curl eigenvalue a must be nonzero")
    if l < 1 or abs(m) > l:
        raise ValueError(f"Invalid (l, m) = ({l}, {m}); need l >= 1 and |m| <= l")
    solid = solid_harmonic(l, m)

    def psi(x):
        return _bessel_ratio(a * a * (x @ x), l) * solid(a * x)

    grad_psi = jax.grad(psi)

    def toroidal(x):
        return jnp.cross(grad_psi(x), x)

    d_toroidal = jax.jacfwd(toroidal)

    def components(x):
        J = d_toroidal(x)  # [i, c] = ∂_c T_i
        curl = jnp.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
        return toroidal(x) + curl / a

    return OneFormField(components, name=f"ck[a={a},l={l},m={m}]")


def mirror_field(omega: OneFormField) -> OneFormField:
    """ω̃(x) = −ω(−x); flips the sign of the curl eigenvalue."""
    return omega.derived(OneFormField, lambda x: -omega(-x), f"mirror({omega.name})")


def gauge_twist(omega: OneFormField, chi: ScalarField, a: float):
    """(e^{iaχ} ω, dχ): solves the twisted equation with V ≡ 1 whenever *dω = −aω."""
    def zeta(x):
        return jnp.exp(1j * a * chi(x)) * omega(x)

    twisted = OneFormField(zeta, "complex", omega.metric, f"e^(ia{chi.name}){omega.name}")
    return twisted, exterior_derivative(chi)


def _ck_from_params(params: Dict[str, str]) -> OneFormField:
    return make_ck_field(float(params.get("a", 1.0)), int(params.get("l", 1)), int(params.get("m", 0)))


FIELD_REGISTRY: Dict[str, Callable[[Dict[str, str]], OneFormField]] = {
    "zero": lambda p: zero_field(),
    "dx": lambda p: constant_field(),
    "abc": lambda p: abc_field(float(p.get("A", 1.0)), float(p.get("B", 1.0)), float(p.get("C", 1.0))),
    "ck": _ck_from_params,
    "ck-mirror": lambda p: mirror_field(_ck_from_params(p)),
}


def parse_field_spec(spec: str) -> OneFormField:
    """``name`` or ``name:key=value,...``, e.g. ``ck:l=1,a=1.0``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"Field parameter '{item}' in '{spec}' is not key=value")
        params[key.strip()] = value.strip()
    try:
        factory = FIELD_REGISTRY[name.strip()]
    except KeyError:
        raise ValueError(f"Unknown field '{name}'. Known: {sorted(FIELD_REGISTRY)}")
    return factory(params)


def field_eigenvalue(spec: str) -> Optional[float]:
    """Curl eigenvalue carried by a registered field spec, if it has one."""
    name, _, rest = spec.partition(":")
    params = dict(item.split("=", 1) for item in filter(None, rest.split(",")))
    if name == "abc":
        return 1.0
    if name == "ck":
        return float(params.get("a", 1.0))
    if name == "ck-mirror":
        return -float(params.get("a", 1.0))
    return None


def parse_point_set(spec: str, seed: int = 0) -> np.ndarray:
    """
    Seeded evaluation points from ``shell:r=LO..HI:n=N`` (radii uniform in
    [LO, HI], isotropic directions) or ``box:L=HALF:n=N`` (uniform in the cube).
    """
    kind, *parts = spec.split(":")
    params = {}
    for part in parts:
        key, eq, value = part.partition("=")
        if not eq:
            raise ValueError(f"Point-set option '{part}' in '{spec}' is not key=value")
        params[key.strip()] = value.strip()
    count = int(params.get("n", 200))
    if count < 1:
        raise ValueError(f"Point set '{spec}' needs n >= 1")
    rng = np.random.default_rng(seed)
    if kind == "shell":
        lo, sep, hi = params.get("r", "2..50").partition("..")
        lo, hi = float(lo), float(hi) if sep else float(lo)
        if not (0.0 < lo <= hi):
            raise ValueError(f"Shell radii must satisfy 0 < LO <= HI, got '{params.get('r')}'")
        directions = rng.normal(size=(count, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return rng.uniform(lo, hi, size=(count, 1)) * directions
    if kind == "box":
        half = float(params.get("L", 5.0))
        return rng.uniform(-half, half, size=(count, 3))
    raise ValueError(f"Unknown point set '{kind}'; use shell:r=LO..HI:n=N or box:L=HALF:n=N")


# -------------------------------------------------------------------
# Problems and reports
# -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BeltramiProblem:
    metric: MetricField
    a: float
    omega: OneFormField

    def __post_init__(self):
        if self.a == 0.0:
            raise ValueError("Beltrami eigenvalue a must be nonzero")


@dataclass(frozen=True, eq=False)
class TwistedProblem:
    metric: MetricField
    V: ScalarField
    theta: OneFormField
    a: float
    zeta: OneFormField

    def __post_init__(self):
        if self.a == 0.0:
            raise ValueError("Twisted eigenvalue a must be nonzero")
        if self.metric.dim != 3:
            raise ValueError("TwistedProblem needs a 3D metric")


@dataclass
class ResidualReport:
    name: str
    values: np.ndarray
    trivial: bool = False
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if len(self.values) else 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else 0.0

    def to_record(self) -> Dict[str, object]:
        record = {"name": self.name, "max": self.max, "mean": self.mean, "points": int(len(self.values)),
                  "trivial": self.trivial}
        record.update(self.extras)
        return record


def _g_inv(metric: MetricField, pts: np.ndarray) -> np.ndarray:
    return np.linalg.inv(metric.at(pts))


def _check_lapse(V: ScalarField, pts: np.ndarray) -> np.ndarray:
    values = np.real(V.evaluate(pts))
    if np.any(values <= 0.0):
        bad = pts[np.argmin(values)]
        raise NonPositiveLapseError(f"Lapse V = {values.min():.3g} <= 0 at {bad.tolist()}")
    return values


def _one_form_norms(form: OneFormField, metric: MetricField, pts: np.ndarray) -> np.ndarray:
    return norm_g(form.evaluate(pts), _g_inv(metric, pts))


# -------------------------------------------------------------------
# Main API: Beltrami residuals
# -------------------------------------------------------------------

def beltrami_residual(prob: BeltramiProblem, points) -> ResidualReport:
    """Per-point |*dω − aω|_g; ω ≡ 0 at every point is flagged trivial."""
    pts = _as_points(points, 3)
    star_d = hodge_star_3d(exterior_derivative(prob.omega), prob.metric)
    residual = prob.omega.derived(OneFormField, lambda x: star_d(x) - prob.a * prob.omega(x), "*dω - aω")
    values = _one_form_norms(residual, prob.metric, pts)
    trivial = bool(np.all(prob.omega.evaluate(pts) == 0.0))
    return ResidualReport("beltrami", values, trivial)


def beltrami_chain(prob: BeltramiProblem, points) -> Dict[str, ResidualReport]:
    """*dω = aω together with its consequences δω = 0 and Δ_H ω = a²ω."""
    pts = _as_points(points, 3)
    delta = codifferential(prob.omega, prob.metric)
    lap = hodge_laplacian(prob.omega, prob.metric)
    shifted = prob.omega.derived(OneFormField, lambda x: lap(x) - prob.a ** 2 * prob.omega(x), "Δ_H ω - a²ω")
    return {
        "beltrami": beltrami_residual(prob, pts),
        "codifferential": ResidualReport("codifferential", np.abs(delta.evaluate(pts))),
        "hodge_laplacian": ResidualReport("hodge_laplacian", _one_form_norms(shifted, prob.metric, pts)),
    }


# -------------------------------------------------------------------
# Main API: static system
# -------------------------------------------------------------------

def _static_fields(V: ScalarField, W: OneFormField, metric: MetricField, a: float):
    dV = exterior_derivative(V)
    hess_V = covariant_derivative(dV, metric)
    VW = W.derived(OneFormField, lambda x: V(x) * W(x), "VW")
    curl_VW = hodge_star_3d(exterior_derivative(VW), metric)
    lap_V = codifferential(dV, metric)  # δdV = −∇²V
    curvature = metric.curvature

    def streams(x):
        g_inv = metric.inverse(x)
        curv = curvature(x)
        v, w = V(x), W(x)
        w2 = w @ g_inv @ w
        nabla2_V = -lap_V(x)
        v1 = nabla2_V - 0.5 * w2 * v
        w4 = curl_VW(x) + a * w
        r1 = curv["ricci"] - 0.5 * curv["scalar"] * metric.components(x) - hess_V(x) / v + jnp.outer(w, w)
        trace = curv["scalar"] - w2
        return v1, w4, r1, trace, g_inv

    return streams


def static_system_residual(V: ScalarField, W: OneFormField, metric: MetricField, a: float, points) -> Dict[str, object]:
    """
    Residual streams of the static Einstein-Maxwell reduction:

    - ``v1``: ∇²V − ½|W|²V
    - ``w4``: |*d(VW) + aW|_g
    - ``r1``: |R_ij − ½R g_ij − V^{-1}∇_i∇_j V + W_iW_j|_g
    - ``trace``: R − |W|², zero on solutions

    ``trace_identity`` is |tr r1 + ½ trace + V^{-1} v1|, zero for any inputs.
    """
    pts = _as_points(points, 3)
    lapse = _check_lapse(V, pts)
    streams = jax.jit(jax.vmap(_static_fields(V, W, metric, a)))
    v1, w4, r1, trace, g_inv = (np.asarray(s) for s in streams(jnp.asarray(pts)))

    w4_norm = norm_g(w4, g_inv)
    r1_norm = np.sqrt(np.abs(np.einsum("nik,njl,nij,nkl->n", g_inv, g_inv, r1, r1)))
    tr_r1 = np.einsum("nij,nij->n", g_inv, r1)
    identity = np.abs(tr_r1 + 0.5 * trace + v1 / lapse)
    return {
        "v1": ResidualReport("v1", np.abs(v1)),
        "w4": ResidualReport("w4", w4_norm),
        "r1": ResidualReport("r1", r1_norm),
        "trace": ResidualReport("trace", np.abs(trace)),
        "trace_identity": ResidualReport("trace_identity", identity),
        "signed": {"v1": v1, "trace": trace, "tr_r1": tr_r1},
    }


def rescaled_metric(metric: MetricField, V: ScalarField) -> MetricField:
    """ĝ = V^{-2} g."""
    return MetricField(f"{metric.name}/V^2", 3, lambda x: metric.components(x) / V(x) ** 2,
                       domain=metric.domain)


def rescaling_identity_check(V: ScalarField, W: OneFormField, metric: MetricField, a: float, points) -> Dict[str, object]:
    """
    With ω = VW and ĝ = V^{-2}g, compares (*̂dω + aω) in ĝ against V·(*d(VW) + aW) in g.
    The two agree identically because ε̂_i^{jk} = V ε_i^{jk}.
    """
    pts = _as_points(points, 3)
    _check_lapse(V, pts)
    g_hat = rescaled_metric(metric, V)
    omega = W.derived(OneFormField, lambda x: V(x) * W(x), "ω=VW")
    lhs_w4_star = hodge_star_3d(exterior_derivative(omega), metric)
    lhs_hat_star = hodge_star_3d(exterior_derivative(omega), g_hat)

    lhs_w4 = W.derived(OneFormField, lambda x: lhs_w4_star(x) + a * W(x), "w4")
    lhs_hat = W.derived(OneFormField, lambda x: lhs_hat_star(x) + a * omega(x), "hat")
    w4_vals = lhs_w4.evaluate(pts)
    hat_vals = lhs_hat.evaluate(pts)
    lapse = np.real(V.evaluate(pts))
    g_inv = _g_inv(metric, pts)
    return {
        "lhs_w4": ResidualReport("lhs_w4", norm_g(w4_vals, g_inv)),
        "lhs_hat": ResidualReport("lhs_hat", norm_g(hat_vals, g_inv)),
        "equivalence": ResidualReport("equivalence", norm_g(hat_vals - lapse[:, None] * w4_vals, g_inv)),
    }


# -------------------------------------------------------------------
# Main API: stationary system
# -------------------------------------------------------------------

def _wedge(alpha: OneFormField, beta: OneFormField) -> TwoFormField:
    def wedge(x):
        p, q = alpha(x), beta(x)
        return jnp.outer(p, q) - jnp.outer(q, p)

    scalar = "complex" if alpha.is_complex or beta.is_complex else "real"
    return TwoFormField(wedge, scalar, beta.metric, f"{alpha.name}∧{beta.name}", 3)


def _twisted_form(prob: TwistedProblem) -> OneFormField:
    """*(dζ − iaθ∧ζ) + aV^{-1}ζ as a field."""
    zeta, a = prob.zeta, prob.a
    theta_zeta = _wedge(prob.theta, zeta)
    d_zeta = exterior_derivative(zeta)
    inner = TwoFormField(lambda x: d_zeta(x) - 1j * a * theta_zeta(x), "complex", prob.metric, "dζ - iaθ∧ζ", 3)
    star = hodge_star_3d(inner, prob.metric)
    return OneFormField(lambda x: star(x) + a * zeta(x) / prob.V(x), "complex", prob.metric, "twisted", 3)


def twisted_residual(prob: TwistedProblem, points) -> ResidualReport:
    """Per-point |*(dζ − iaθ∧ζ) + aV^{-1}ζ|_g."""
    pts = _as_points(points, 3)
    _check_lapse(prob.V, pts)
    return ResidualReport("twisted", _one_form_norms(_twisted_form(prob), prob.metric, pts))


def _stationary_fields(prob: TwistedProblem):
    metric, zeta, theta, V, a = prob.metric, prob.zeta, prob.theta, prob.V, prob.a
    complex_tag = "complex"

    curl_theta = hodge_star_3d(exterior_derivative(theta), metric)
    dV = exterior_derivative(V)

    def coefficient(x):
        # (ln V)_i + iV(curl θ)_i + iaθ_i
        return dV(x) / V(x) + 1j * V(x) * curl_theta(x) + 1j * a * theta(x)

    def divergence_rhs(x):
        return coefficient(x) @ (metric.inverse(x) @ zeta(x))

    div_rhs = ScalarField(divergence_rhs, complex_tag, metric, "D", 3)
    delta_zeta = codifferential(zeta, metric)

    theta_zeta = _wedge(theta, zeta)
    star_theta_zeta = hodge_star_3d(theta_zeta, metric)
    delta_theta_zeta = codifferential(theta_zeta, metric)
    dV_zeta = _wedge(dV, zeta)
    star_dV_zeta = hodge_star_3d(dV_zeta, metric)
    d_div_rhs = exterior_derivative(div_rhs)
    lap_zeta = hodge_laplacian(zeta, metric)

    def divergence(x):
        return -delta_zeta(x) - div_rhs(x)

    def second_order(x):
        v = V(x)
        rhs = (a ** 2 / v ** 2 * zeta(x)
               + a / v ** 2 * star_dV_zeta(x)
               - 1j * a ** 2 / v * star_theta_zeta(x)
               + 1j * a * delta_theta_zeta(x)
               - d_div_rhs(x))
        return lap_zeta(x) - rhs

    return (ScalarField(divergence, complex_tag, metric, "div", 3),
            OneFormField(second_order, complex_tag, metric, "second-order", 3))


def stationary_second_order_residual(prob: TwistedProblem, points) -> Dict[str, ResidualReport]:
    """
    Consequences of the twisted first-order system:

    - divergence: ∇·ζ − ((ln V)_i + iV(curl θ)_i + iaθ_i)ζ^i
    - second order: Δ_H ζ − [a²V^{-2}ζ + aV^{-2}*(dV∧ζ) − ia²V^{-1}*(θ∧ζ)
      + iaδ(θ∧ζ) − d((ln V)_i ζ^i + iV(curl θ)_i ζ^i + iaθ_i ζ^i)]

    Both vanish for exact solutions. ``implication`` records the ratio of the
    second-order residual to the first-order residual plus its gradient.
    """
    pts = _as_points(points, 3)
    _check_lapse(prob.V, pts)
    divergence, second = _stationary_fields(prob)
    first = _twisted_form(prob)
    g_inv = _g_inv(prob.metric, pts)

    div_vals = np.abs(divergence.evaluate(pts))
    second_vals = norm_g(second.evaluate(pts), g_inv)
    first_vals = norm_g(first.evaluate(pts), g_inv)
    grad_first = np.asarray(jax.vmap(first.jacobian)(jnp.asarray(pts)))
    first_scale = first_vals + np.sqrt(np.sum(np.abs(grad_first) ** 2, axis=(1, 2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(first_scale > 0.0, second_vals / first_scale, 0.0)
    return {
        "divergence": ResidualReport("divergence", div_vals),
        "second_order": ResidualReport("second_order", second_vals,
                                       extras={"implication_constant": float(np.max(ratio))}),
        "first_order": ResidualReport("first_order", first_vals),
    }


def linearity_slope(prob: BeltramiProblem, eta: OneFormField, eps_values: List[float], points) -> float:
    """Slope of log(max residual) against log ε for ω + εη (1 when ω solves exactly)."""
    eps_values = np.asarray(eps_values, dtype=float)
    maxima = []
    for eps in eps_values:
        perturbed = prob.omega.derived(OneFormField, lambda x, e=eps: prob.omega(x) + e * eta(x), "ω+εη")
        maxima.append(beltrami_residual(BeltramiProblem(prob.metric, prob.a, perturbed), points).max)
    slope, _ = np.polyfit(np.log(eps_values), np.log(maxima), 1)
    return float(slope)
