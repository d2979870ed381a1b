import jax.numpy as jnp
import numpy as np
import pytest

from inheritlab.forms import (
    OneFormField,
    ThreeFormField,
    TwoFormField,
    VectorField,
    codifferential,
    covariant_derivative,
    exterior_derivative,
    hodge_laplacian,
    hodge_star_3d,
    hodge_star_4d,
    levi_civita,
    lie_derivative_metric,
    norm_g,
    one_form,
    scalar_field,
    sphere_integral,
    weitzenbock_residual,
)
from inheritlab.geometry import minkowski_metric
from inheritlab.quadrature import SphereQuadrature

sympy = pytest.importorskip("sympy")

POINT = np.array([[1.3, -0.4, 2.1]])


def _omega(metric=None):
    return one_form(lambda x: jnp.array([x[1], x[2] ** 2, x[0] * x[1]]), "ω", metric)


def test_d_squared_vanishes(conformal):
    f = scalar_field(lambda x: jnp.sin(x[0]) * x[1] ** 2 + x[2] ** 3, "f")
    ddf = exterior_derivative(exterior_derivative(f))
    assert np.max(np.abs(ddf.evaluate(POINT))) < 1e-13
    dd_omega = exterior_derivative(exterior_derivative(_omega()))
    assert isinstance(dd_omega, ThreeFormField)
    assert np.max(np.abs(dd_omega.evaluate(POINT))) < 1e-13


def test_star_squared_is_identity_in_3d(conformal):
    omega = _omega(conformal)
    twice = hodge_star_3d(hodge_star_3d(omega, conformal), conformal)
    np.testing.assert_allclose(twice.evaluate(POINT), omega.evaluate(POINT), rtol=1e-13)


def test_hodge_laplacian_is_minus_laplacian_on_flat(flat):
    omega = one_form(lambda x: jnp.array([x[0] ** 2 * x[1], jnp.sin(x[2]), 0.0 * x[0]]), "ω", flat)
    lap = hodge_laplacian(omega, flat).evaluate(POINT)[0]
    x, y, z = POINT[0]
    np.testing.assert_allclose(lap, [-2.0 * y, np.sin(z), 0.0], atol=1e-12)


def test_codifferential_matches_symbolic(conformal):
    x, y, z = sympy.symbols("x y z", real=True)
    psi = 1 + 1 / (2 * sympy.sqrt(x ** 2 + y ** 2 + z ** 2))
    omega = [y, z ** 2, x * y]
    expected = -sum(sympy.diff(psi ** 2 * w, v) for w, v in zip(omega, (x, y, z))) / psi ** 6
    value = float(expected.subs(dict(zip((x, y, z), POINT[0]))))
    got = codifferential(_omega(conformal), conformal).evaluate(POINT)[0]
    assert got == pytest.approx(value, rel=1e-12)


def test_weitzenbock_identity(conformal):
    residual = weitzenbock_residual(_omega(conformal), conformal)
    assert np.max(np.abs(residual.evaluate(POINT))) < 1e-10


def test_covariant_derivative_of_exact_form_is_symmetric(conformal):
    f = scalar_field(lambda x: x[0] * x[1] ** 2 + jnp.cos(x[2]), "f")
    hess = covariant_derivative(exterior_derivative(f), conformal).evaluate(POINT)[0]
    np.testing.assert_allclose(hess, hess.T, atol=1e-12)


def test_four_dimensional_duality():
    eta = minkowski_metric()
    eps = levi_civita(eta, jnp.zeros(4))
    assert float(eps[0, 1, 2, 3]) == 1.0
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    F = TwoFormField(lambda x: jnp.asarray(A - A.T) + 0.0 * x[0], name="F", dim=4)
    twice = hodge_star_4d(hodge_star_4d(F, eta), eta)
    pts = rng.normal(size=(3, 4))
    np.testing.assert_allclose(twice.evaluate(pts), -F.evaluate(pts), atol=1e-13)


def test_rotation_is_killing_for_minkowski():
    eta = minkowski_metric()
    rotation = VectorField(lambda x: jnp.array([0.0, -x[2], x[1], 0.0]), name="rotation", dim=4)
    boost = VectorField(lambda x: jnp.array([x[1], x[0], 0.0, 0.0]), name="boost", dim=4)
    dilation = VectorField(lambda x: x, name="dilation", dim=4)
    x = jnp.array([0.3, 1.0, -2.0, 0.5])
    assert np.max(np.abs(lie_derivative_metric(eta, rotation)(x))) == 0.0
    assert np.max(np.abs(lie_derivative_metric(eta, boost)(x))) == 0.0
    np.testing.assert_allclose(lie_derivative_metric(eta, dilation)(x), 2.0 * np.diag([-1.0, 1.0, 1.0, 1.0]))


def test_norm_g_real_and_complex():
    g_inv = np.broadcast_to(np.diag([1.0, 4.0, 1.0]), (2, 3, 3))
    values = np.array([[1.0, 1.0, 0.0], [0.0, 1j, 2.0]])
    np.testing.assert_allclose(norm_g(values, g_inv), [np.sqrt(5.0), np.sqrt(8.0)])
    F = np.zeros((1, 3, 3))
    F[0, 0, 1], F[0, 1, 0] = 1.0, -1.0
    np.testing.assert_allclose(norm_g(F, np.eye(3)[None]), [1.0])
    with pytest.raises(ValueError):
        norm_g(np.zeros(3), np.eye(3))


def test_sphere_integral_area(flat):
    quad = SphereQuadrature(2.5, 8, 16)
    area = sphere_integral(lambda p: np.ones(len(p)), flat, quad)
    assert area == pytest.approx(4 * np.pi * 2.5 ** 2, rel=1e-14)


def test_type_and_metric_errors(flat):
    with pytest.raises(TypeError):
        exterior_derivative(ThreeFormField(lambda x: jnp.zeros((3, 3, 3))))
    with pytest.raises(ValueError):
        hodge_star_3d(_omega(), minkowski_metric())
    with pytest.raises(ValueError):
        hodge_star_4d(TwoFormField(lambda x: jnp.zeros((3, 3))), flat)
    with pytest.raises(ValueError):
        OneFormField(lambda x: x, scalar="quaternion")
