"""
Product quadrature on coordinate spheres: Gauss-Legendre in t = cos θ times
the uniform (trapezoid) rule in φ. Weights are flat-measure weights and
include r²; the metric area factor is applied at integration time.
"""

from dataclasses import dataclass
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from .config import QUAD_N_PHI, QUAD_N_THETA


@lru_cache(maxsize=32)
def _unit_rule(n_theta: int, n_phi: int):
    t, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(t, phi, indexing="ij")
    s = np.sqrt(1.0 - T ** 2)
    nodes = np.stack([s * np.cos(P), s * np.sin(P), T], axis=-1).reshape(-1, 3)
    weights = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    # ∂û/∂t and ∂û/∂φ; |∂_t û × ∂_φ û| = 1
    d_t = np.stack([-T / s * np.cos(P), -T / s * np.sin(P), np.ones_like(T)], axis=-1).reshape(-1, 3)
    d_phi = np.stack([-s * np.sin(P), s * np.cos(P), np.zeros_like(T)], axis=-1).reshape(-1, 3)
    return nodes, weights, d_t, d_phi


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    radius: float
    n_theta: int = QUAD_N_THETA
    n_phi: int = QUAD_N_PHI

    def __post_init__(self):
        if self.n_theta < 1 or self.n_phi < 1:
            raise ValueError(f"Empty sphere quadrature ({self.n_theta}x{self.n_phi})")
        if self.radius <= 0.0:
            raise ValueError(f"Sphere radius must be positive, got {self.radius}")

    @property
    def exactness(self) -> int:
        """Total polynomial degree integrated exactly."""
        return min(2 * self.n_theta - 1, self.n_phi - 1)

    @property
    def unit_nodes(self) -> np.ndarray:
        return _unit_rule(self.n_theta, self.n_phi)[0]

    @property
    def points(self) -> np.ndarray:
        return self.radius * self.unit_nodes

    @property
    def unit_weights(self) -> np.ndarray:
        return _unit_rule(self.n_theta, self.n_phi)[1]

    @property
    def weights(self) -> np.ndarray:
        return self.radius ** 2 * self.unit_weights

    @property
    def tangents(self):
        """(∂_t û, ∂_φ û) at every node."""
        _, _, d_t, d_phi = _unit_rule(self.n_theta, self.n_phi)
        return d_t, d_phi

    def with_radius(self, radius: float) -> "SphereQuadrature":
        return SphereQuadrature(radius, self.n_theta, self.n_phi)


def sphere_quadrature(r: float, n_theta: int = QUAD_N_THETA, n_phi: int = QUAD_N_PHI) -> SphereQuadrature:
    return SphereQuadrature(float(r), n_theta, n_phi)


def induced_area_density(g, tangent_a, tangent_b):
    """√det of the metric restricted to span(tangent_a, tangent_b), batched over rows."""
    h_aa = jnp.einsum("ni,nij,nj->n", tangent_a, g, tangent_a)
    h_ab = jnp.einsum("ni,nij,nj->n", tangent_a, g, tangent_b)
    h_bb = jnp.einsum("ni,nij,nj->n", tangent_b, g, tangent_b)
    return jnp.sqrt(h_aa * h_bb - h_ab ** 2)


def area_factors(g: np.ndarray, quad: SphereQuadrature) -> np.ndarray:
    """Ratio of the g-area element to the flat one at each node (g of shape (N, 3, 3))."""
    d_t, d_phi = quad.tangents
    return np.asarray(induced_area_density(jnp.asarray(g), jnp.asarray(d_t), jnp.asarray(d_phi)))
