import numpy as np
import pytest

from inheritlab.quadrature import SphereQuadrature, area_factors, sphere_quadrature


def test_flat_area(flat):
    quad = sphere_quadrature(3.0, 16, 32)
    factors = area_factors(flat.at(quad.points), quad)
    np.testing.assert_allclose(factors, 1.0, atol=1e-14)
    assert np.sum(quad.weights) == pytest.approx(4 * np.pi * 9.0, rel=1e-14)


def test_polynomial_exactness():
    quad = SphereQuadrature(1.0, 8, 16)
    assert quad.exactness == 15
    x, y, z = quad.unit_nodes.T
    assert np.sum(quad.unit_weights * z ** 4) == pytest.approx(4 * np.pi / 5, rel=1e-13)
    assert np.sum(quad.unit_weights * x ** 2 * y ** 2) == pytest.approx(4 * np.pi / 15, rel=1e-13)
    assert abs(np.sum(quad.unit_weights * x * y ** 3)) < 1e-14


def test_conformal_area_factor(conformal):
    r = 4.0
    quad = SphereQuadrature(r, 8, 16)
    psi = 1.0 + 1.0 / (2.0 * r)
    np.testing.assert_allclose(area_factors(conformal.at(quad.points), quad), psi ** 4, rtol=1e-13)


def test_tangents_are_orthogonal_to_nodes():
    quad = SphereQuadrature(2.0, 6, 12)
    d_t, d_phi = quad.tangents
    nodes = quad.unit_nodes
    assert np.max(np.abs(np.sum(d_t * nodes, axis=1))) < 1e-14
    assert np.max(np.abs(np.sum(d_phi * nodes, axis=1))) < 1e-14


def test_with_radius_and_validation():
    quad = SphereQuadrature(1.0, 4, 8).with_radius(5.0)
    assert quad.radius == 5.0 and quad.n_theta == 4
    np.testing.assert_allclose(np.linalg.norm(quad.points, axis=1), 5.0)
    with pytest.raises(ValueError):
        SphereQuadrature(1.0, 0, 8)
    with pytest.raises(ValueError):
        SphereQuadrature(-1.0, 4, 8)
