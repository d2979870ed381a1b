"""
Distance to a coordinate sphere by geodesic shooting.

The geodesic from x is parametrized on [0, 1] with constant speed s and
initial direction v0 = normalize_g(e3 + α e1 + β e2), e3 = −x/|x|. Newton's
method on z = (α, β, s) enforces

- the endpoint lies on the sphere: |y(1)| = R,
- the geodesic meets the sphere orthogonally: the covector g·y′(1) has no
  component along the (Euclidean) tangent directions there.

Then d_R(x) = s, ∇d_R = −(g v0)♭, and the Hessian follows from implicit
differentiation of the converged shooting problem.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

from .config import DEFAULT_SETTINGS, Settings
from .errors import ChartDomainError, GeodesicSolverError
from .geometry import MetricField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistanceSample:
    d: float
    gradient: np.ndarray
    hessian: np.ndarray
    eikonal_residual: float
    iterations: int = 0
    method: str = "geodesic-shooting"


# -------------------------------------------------------------------
# Helpers
# -------------------------------------------------------------------

def _frame(x, axis):
    e3 = -x / jnp.linalg.norm(x)
    e1 = axis - jnp.dot(axis, e3) * e3
    e1 = e1 / jnp.linalg.norm(e1)
    e2 = jnp.cross(e3, e1)
    return e1, e2, e3


@lru_cache(maxsize=None)
def _shooting_kernels(metric: MetricField, steps: int):
    g_fn = metric.components
    gamma_fn = metric.christoffel
    h = 1.0 / steps

    def velocity(z, x, axis):
        e1, e2, e3 = _frame(x, axis)
        u = e3 + z[0] * e1 + z[1] * e2
        return u / jnp.sqrt(u @ g_fn(x) @ u)

    def flow(x, v0, s):
        def rhs(y, v):
            return s * v, -s * jnp.einsum("kij,i,j->k", gamma_fn(y), v, v)

        def step(carry, _):
            y, v = carry
            k1y, k1v = rhs(y, v)
            k2y, k2v = rhs(y + 0.5 * h * k1y, v + 0.5 * h * k1v)
            k3y, k3v = rhs(y + 0.5 * h * k2y, v + 0.5 * h * k2v)
            k4y, k4v = rhs(y + h * k3y, v + h * k3v)
            y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
            v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            return (y, v), None

        (y, v), _ = lax.scan(step, (x, v0), None, length=steps)
        return y, v

    def residual(z, x, axis, R):
        v0 = velocity(z, x, axis)
        y, v = flow(x, v0, z[2])
        ry = jnp.linalg.norm(y)
        n = y / ry
        p = g_fn(y) @ v
        e1, e2, _ = _frame(x, axis)
        t1 = e1 - jnp.dot(e1, n) * n
        t2 = e2 - jnp.dot(e2, n) * n
        return jnp.array([ry - R, p @ t1, p @ t2])

    def covector(z, x, axis):
        return -g_fn(x) @ velocity(z, x, axis)

    return {
        "residual": jax.jit(residual),
        "jac_z": jax.jit(jax.jacfwd(residual, argnums=0)),
        "jac_x": jax.jit(jax.jacfwd(residual, argnums=1)),
        "covector": jax.jit(covector),
        "cov_z": jax.jit(jax.jacfwd(covector, argnums=0)),
        "cov_x": jax.jit(jax.jacfwd(covector, argnums=1)),
    }


def _reference_axis(x: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(x)))] = 1.0
    return axis


def _boundary_sample(metric: MetricField, x: np.ndarray) -> DistanceSample:
    """d = 0, gradient the unit conormal, Hessian the second fundamental form."""
    def conormal(y):
        n = y / jnp.linalg.norm(y)
        return n / jnp.sqrt(n @ jnp.linalg.inv(metric.components(y)) @ n)

    nu = np.asarray(conormal(jnp.asarray(x)))
    dnu = np.asarray(jax.jacfwd(conormal)(jnp.asarray(x))).T  # [i, j] = ∂_i ν_j
    gamma = np.asarray(metric.christoffel(jnp.asarray(x)))
    cov = dnu - np.einsum("kij,k->ij", gamma, nu)
    g_inv = np.linalg.inv(metric.at(x)[0])
    normal = g_inv @ nu
    proj = np.eye(3) - np.outer(normal, nu)  # P^i_j
    hess = proj.T @ cov @ proj
    hess = 0.5 * (hess + hess.T)
    eik = abs(float(np.sqrt(nu @ g_inv @ nu)) - 1.0)
    return DistanceSample(0.0, nu, hess, eik, 0)


# -------------------------------------------------------------------
# Main API
# -------------------------------------------------------------------

def distance_to_sphere(metric: MetricField, R: float, x, settings: Settings = DEFAULT_SETTINGS) -> DistanceSample:
    """
    d_R(x), its gradient (covector) and covariant Hessian.

    :param metric: asymptotically flat 3D Riemannian metric
    :param R: radius of the coordinate sphere, at least ``settings.r0_threshold``
    :param x: exterior point, |x| ≥ R
    :raises GeodesicSolverError: Newton iteration did not converge
    """
    if metric.dim != 3 or metric.signature != "riemannian":
        raise ValueError(f"distance_to_sphere needs a 3D Riemannian metric, got '{metric.name}'")
    if R < settings.r0_threshold:
        raise ValueError(f"R = {R} is below the configured threshold R0 = {settings.r0_threshold}")
    x = np.asarray(x, dtype=float)
    rx = float(np.linalg.norm(x))
    if not np.all(np.isfinite(x)):
        raise ChartDomainError("Chart coordinates must be finite reals")
    if rx < R * (1.0 - 1e-12):
        raise ChartDomainError(f"Point {x.tolist()} is inside the sphere |x| = {R}")
    if rx <= R * (1.0 + 1e-12):
        return _boundary_sample(metric, x)

    kernels = _shooting_kernels(metric, settings.geodesic_steps)
    axis = jnp.asarray(_reference_axis(x))
    xj = jnp.asarray(x)

    e3 = -x / rx
    mid = x * (R + rx) / (2.0 * rx)
    s0 = (rx - R) * float(np.sqrt(e3 @ metric.at(mid)[0] @ e3))
    z = np.array([0.0, 0.0, s0])
    tol = settings.newton_tol * max(1.0, R)

    started = time.perf_counter()
    converged = False
    for it in range(1, settings.newton_max_iter + 1):
        G = np.asarray(kernels["residual"](jnp.asarray(z), xj, axis, R))
        if not np.all(np.isfinite(G)):
            break
        if np.max(np.abs(G)) <= tol:
            converged = True
            break
        J = np.asarray(kernels["jac_z"](jnp.asarray(z), xj, axis, R))
        try:
            dz = np.linalg.solve(J, G)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        while z[2] - step * dz[2] <= 0.0 and step > 1e-6:
            step *= 0.5
        z = z - step * dz
        if np.max(np.abs(step * dz)) <= 1e-15 * (1.0 + np.max(np.abs(z))) and np.max(np.abs(G)) <= 1e3 * tol:
            converged = True
            break
    if not converged:
        logger.warning("geodesic shooting did not converge at x=%s (R=%g, metric=%s)", x.tolist(), R, metric.name)
        raise GeodesicSolverError(
            f"Geodesic shooting from {x.tolist()} to |x| = {R} did not converge on metric '{metric.name}'; "
            f"R may be too small or the metric too far from flat"
        )

    zj = jnp.asarray(z)
    p = np.asarray(kernels["covector"](zj, xj, axis))
    J_z = np.asarray(kernels["jac_z"](zj, xj, axis, R))
    J_x = np.asarray(kernels["jac_x"](zj, xj, axis, R))
    dz_dx = -np.linalg.solve(J_z, J_x)
    hess = np.asarray(kernels["cov_x"](zj, xj, axis)) + np.asarray(kernels["cov_z"](zj, xj, axis)) @ dz_dx
    hess = 0.5 * (hess + hess.T)
    gamma = np.asarray(metric.christoffel(xj))
    hess = hess - np.einsum("kij,k->ij", gamma, p)

    g_inv = np.linalg.inv(metric.at(x)[0])
    eik = abs(float(np.sqrt(p @ g_inv @ p)) - 1.0)
    logger.debug("shooting converged in %d iterations (%.3fs)", it, time.perf_counter() - started)
    return DistanceSample(float(z[2]), p, hess, eik, it)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """d_R as a callable; ``method`` is ``geodesic-shooting`` or ``fast-marching``."""
    metric: MetricField
    R: float
    method: str = "geodesic-shooting"
    settings: Settings = DEFAULT_SETTINGS
    grid: Optional[object] = field(default=None)

    def __post_init__(self):
        if self.method not in ("geodesic-shooting", "fast-marching"):
            raise ValueError(f"Unknown distance method '{self.method}'")
        if self.method == "fast-marching" and self.grid is None:
            raise ValueError("fast-marching DistanceField needs a precomputed grid (see eikonal.fast_marching_distance)")

    def __call__(self, x) -> DistanceSample:
        if self.method == "geodesic-shooting":
            return distance_to_sphere(self.metric, self.R, x, settings=self.settings)
        return self.grid.sample(self.metric, x)

    def value(self, x) -> float:
        return self(x).d
