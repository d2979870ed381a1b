"""
Differential forms on 3-manifolds (plus the 4D pieces needed by the
Einstein-Maxwell checks).

Fields are pointwise jax functions of chart coordinates. Derived fields are
new field objects whose components call the parent's exact derivatives, so
chains like δd + dδ stay exact up to round-off.

Conventions:

- Orientation ε_123 = +√det g (3D) and ε_0123 = +√|det g| (4D).
- (*α)_ij = ε_ijk α^k and (*F)_i = ½ ε_i^{jk} F_jk, so ** = 1 in 3D.
- (F*)_ab = ½ ε_abcd F^cd in 4D.
- δω = −(1/√g) ∂_i(√g g^{ij} ω_j) and (δF)_j = −g_jk (1/√g) ∂_i(√g F^{ik}).
  With these, Δ_H = δd + dδ = −∇² on flat space.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import jax
import jax.numpy as jnp
import numpy as np

from .geometry import MetricField, _as_points, derivative_first
from .quadrature import SphereQuadrature, area_factors

logger = logging.getLogger(__name__)


def _permutation_symbol(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
        eps[perm] = -1.0 if inversions % 2 else 1.0
    return eps


_EPS = {3: jnp.asarray(_permutation_symbol(3)), 4: jnp.asarray(_permutation_symbol(4))}


# -------------------------------------------------------------------
# Field types
# -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TensorField:
    """
    A covariant tensor field given by a pointwise jax function.

    ``scalar`` is ``"real"`` or ``"complex"``; complex components are
    differentiated through their real and imaginary parts.
    """
    components: Callable
    scalar: str = "real"
    metric: Optional[MetricField] = None
    name: str = ""
    dim: int = 3

    rank = None

    def __post_init__(self):
        if self.scalar not in ("real", "complex"):
            raise ValueError(f"Unknown scalar tag '{self.scalar}'")

    @property
    def is_complex(self) -> bool:
        return self.scalar == "complex"

    def __call__(self, x):
        return self.components(x)

    @cached_property
    def jacobian(self) -> Callable:
        """Pointwise ``[c, ...] = ∂_c component[...]``."""
        return derivative_first(self.components, complex_valued=self.is_complex)

    @cached_property
    def _batched(self):
        return jax.jit(jax.vmap(self.components))

    def evaluate(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        out = np.asarray(self._batched(jnp.asarray(pts)))
        if not np.all(np.isfinite(out)):
            raise ValueError(f"Field '{self.name}' is not finite at some evaluated point")
        return out

    def derived(self, cls, components: Callable, name: str, scalar: Optional[str] = None,
                metric: Optional[MetricField] = None):
        return cls(components, scalar or self.scalar, metric or self.metric, name, self.dim)


class ScalarField(TensorField):
    rank = 0


class OneFormField(TensorField):
    rank = 1

    def check_real(self, points) -> float:
        """Largest |imaginary part| over ``points``; real-tagged fields must give 0."""
        values = self.evaluate(points)
        return float(np.max(np.abs(np.imag(values)))) if np.iscomplexobj(values) else 0.0


class TwoFormField(TensorField):
    rank = 2

    def antisymmetry_defect(self, points) -> float:
        values = self.evaluate(points)
        return float(np.max(np.abs(values + np.swapaxes(values, -1, -2))))


class ThreeFormField(TensorField):
    rank = 3


class VectorField(TensorField):
    """Contravariant vector field K^a (used for Killing vectors)."""
    rank = 1


def scalar_field(fn: Callable, name: str = "", dim: int = 3, scalar: str = "real") -> ScalarField:
    return ScalarField(fn, scalar, None, name, dim)


def one_form(fn: Callable, name: str = "", metric: Optional[MetricField] = None,
             scalar: str = "real", dim: int = 3) -> OneFormField:
    return OneFormField(fn, scalar, metric, name, dim)


# -------------------------------------------------------------------
# Pointwise helpers
# -------------------------------------------------------------------

def levi_civita(metric: MetricField, x):
    """ε with all indices down: √|det g| times the permutation symbol."""
    return metric.sqrt_abs_det(x) * _EPS[metric.dim]


def raise_index(metric: MetricField, x, alpha):
    return metric.inverse(x) @ alpha


def norm_g(values: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """Batched |α|_g for 1-forms (N, d) or 2-forms (N, d, d), real or complex."""
    if values.ndim == 2:
        sq = np.einsum("nij,ni,nj->n", g_inv, values, np.conj(values))
    elif values.ndim == 3:
        sq = 0.5 * np.einsum("nik,njl,nij,nkl->n", g_inv, g_inv, values, np.conj(values))
    else:
        raise ValueError(f"norm_g expects 1-form or 2-form arrays, got shape {values.shape}")
    return np.sqrt(np.maximum(np.real(sq), 0.0))


# -------------------------------------------------------------------
# Main API
# -------------------------------------------------------------------

def exterior_derivative(field: TensorField) -> TensorField:
    """d on 0-, 1- and 2-forms; (dω)_ij = ∂_i ω_j − ∂_j ω_i."""
    jac = field.jacobian
    if isinstance(field, ScalarField):
        return field.derived(OneFormField, jac, f"d({field.name})")
    if isinstance(field, OneFormField):
        def two_form(x):
            J = jac(x)
            return J - J.T
        return field.derived(TwoFormField, two_form, f"d({field.name})")
    if isinstance(field, TwoFormField):
        def three_form(x):
            J = jac(x)
            return J + jnp.einsum("jki->ijk", J) + jnp.einsum("kij->ijk", J)
        return field.derived(ThreeFormField, three_form, f"d({field.name})")
    raise TypeError(f"exterior_derivative is not defined for {type(field).__name__}")


def hodge_star_3d(field: Union[OneFormField, TwoFormField], metric: MetricField) -> TensorField:
    if metric.dim != 3 or metric.signature != "riemannian":
        raise ValueError(f"hodge_star_3d needs a 3D Riemannian metric, got '{metric.name}'")
    if isinstance(field, OneFormField):
        def star_one(x):
            up = raise_index(metric, x, field(x))
            return jnp.einsum("ijk,k->ij", levi_civita(metric, x), up)
        return field.derived(TwoFormField, star_one, f"*{field.name}", metric=metric)
    if isinstance(field, TwoFormField):
        def star_two(x):
            g_inv = metric.inverse(x)
            F_up = g_inv @ field(x) @ g_inv.T
            return 0.5 * jnp.einsum("ijk,jk->i", levi_civita(metric, x), F_up)
        return field.derived(OneFormField, star_two, f"*{field.name}", metric=metric)
    raise TypeError(f"hodge_star_3d is not defined for {type(field).__name__}")


def hodge_star_4d(F: TwoFormField, metric: MetricField) -> TwoFormField:
    if metric.dim != 4:
        raise ValueError(f"hodge_star_4d needs a 4D metric, got '{metric.name}'")

    def dual(x):
        g_inv = metric.inverse(x)
        F_up = g_inv @ F(x) @ g_inv.T
        return 0.5 * jnp.einsum("abcd,cd->ab", levi_civita(metric, x), F_up)

    return F.derived(TwoFormField, dual, f"{F.name}*", metric=metric)


def codifferential(field: Union[OneFormField, TwoFormField], metric: MetricField) -> TensorField:
    """δ on 1-forms (a scalar) and on 2-forms (a 1-form)."""
    if isinstance(field, OneFormField):
        def density(x):
            return metric.sqrt_abs_det(x) * (metric.inverse(x) @ field(x))
        d_density = derivative_first(density, field.is_complex)

        def delta_one(x):
            return -jnp.trace(d_density(x)) / metric.sqrt_abs_det(x)
        return field.derived(ScalarField, delta_one, f"δ{field.name}", metric=metric)

    if isinstance(field, TwoFormField):
        def density2(x):
            g_inv = metric.inverse(x)
            return metric.sqrt_abs_det(x) * (g_inv @ field(x) @ g_inv.T)
        d_density2 = derivative_first(density2, field.is_complex)

        def delta_two(x):
            div = jnp.einsum("iik->k", d_density2(x)) / metric.sqrt_abs_det(x)
            return -metric.components(x) @ div
        return field.derived(OneFormField, delta_two, f"δ{field.name}", metric=metric)
    raise TypeError(f"codifferential is not defined for {type(field).__name__}")


def hodge_laplacian(omega: OneFormField, metric: MetricField) -> OneFormField:
    """Δ_H ω = δdω + dδω."""
    ddw = codifferential(exterior_derivative(omega), metric)
    dcw = exterior_derivative(codifferential(omega, metric))
    return omega.derived(OneFormField, lambda x: ddw(x) + dcw(x), f"Δ_H {omega.name}", metric=metric)


def covariant_derivative(omega: OneFormField, metric: MetricField) -> TensorField:
    """``[i, j] = ∇_i ω_j = ∂_i ω_j − Γ^k_ij ω_k``."""
    jac = omega.jacobian

    def nabla(x):
        return jac(x) - jnp.einsum("kij,k->ij", metric.christoffel(x), omega(x))

    return omega.derived(TensorField, nabla, f"∇{omega.name}", metric=metric)


def rough_laplacian_weitzenbock(omega: OneFormField, metric: MetricField) -> OneFormField:
    """g^{ik} ∇_i ∇_k ω_j computed directly from covariant derivatives."""
    nabla = covariant_derivative(omega, metric)
    d_nabla = nabla.jacobian

    def rough(x):
        G = metric.christoffel(x)
        N = nabla(x)
        second = d_nabla(x) - jnp.einsum("mik,mj->ikj", G, N) - jnp.einsum("mij,km->ikj", G, N)
        return jnp.einsum("ik,ikj->j", metric.inverse(x), second)

    return omega.derived(OneFormField, rough, f"∇²{omega.name}", metric=metric)


def weitzenbock_residual(omega: OneFormField, metric: MetricField) -> OneFormField:
    """∇^i∇_i ω_j + (Δ_H ω)_j − R_ij ω^i, which vanishes identically."""
    rough = rough_laplacian_weitzenbock(omega, metric)
    hodge = hodge_laplacian(omega, metric)
    curvature = metric.curvature

    def residual(x):
        ricci = curvature(x)["ricci"]
        return rough(x) + hodge(x) - ricci @ raise_index(metric, x, omega(x))

    return omega.derived(OneFormField, residual, f"W({omega.name})", metric=metric)


def lie_derivative_4d(F: TwoFormField, K: VectorField) -> TwoFormField:
    """(L_K F)_ij = K^k ∂_k F_ij + F_kj ∂_i K^k + F_ik ∂_j K^k."""
    dF = F.jacobian
    dK = K.jacobian

    def lie(x):
        Fx, DK = F(x), dK(x)
        return (jnp.einsum("k,kij->ij", K(x), dF(x))
                + jnp.einsum("kj,ik->ij", Fx, DK)
                + jnp.einsum("ik,jk->ij", Fx, DK))

    return F.derived(TwoFormField, lie, f"L_K {F.name}")


def lie_derivative_metric(metric: MetricField, K: VectorField) -> Callable:
    """Pointwise (L_K g)_ab; zero iff K is a Killing vector."""
    dK = K.jacobian

    def lie(x):
        g, DK = metric.components(x), dK(x)
        return (jnp.einsum("c,cab->ab", K(x), metric.dg(x))
                + jnp.einsum("cb,ac->ab", g, DK)
                + jnp.einsum("ac,bc->ab", g, DK))

    return lie


def sphere_integral(integrand: Callable, metric: MetricField, quad: SphereQuadrature):
    """
    ∑ w_k · integrand(p_k) · (g-area / flat-area at p_k) on the coordinate sphere.

    :param integrand: batched callable mapping (N, 3) points to (N,) values
    """
    if quad is None or quad.n_theta * quad.n_phi == 0:
        raise ValueError("sphere_integral needs a non-empty quadrature")
    points = quad.points
    values = np.asarray(integrand(points))
    factors = area_factors(metric.at(points), quad)
    return np.sum(quad.weights * values * factors)
