import numpy as np
import pytest

from inheritlab.config import DEFAULT_SETTINGS
from inheritlab.distance import DistanceField, distance_to_sphere
from inheritlab.errors import ChartDomainError
from inheritlab.geometry import get_metric, minkowski_metric


def test_flat_distance_is_euclidean(flat):
    x = np.array([0.0, 0.0, 25.0])
    sample = distance_to_sphere(flat, 10.0, x)
    assert sample.d == pytest.approx(15.0, abs=1e-10)
    np.testing.assert_allclose(sample.gradient, [0.0, 0.0, 1.0], atol=1e-10)
    tangential = np.linalg.eigvalsh(sample.hessian)
    np.testing.assert_allclose(sorted(tangential), [0.0, 1.0 / 25.0, 1.0 / 25.0], atol=1e-9)
    assert sample.eikonal_residual < 1e-10


def test_flat_distance_off_axis(flat, rng):
    for _ in range(3):
        x = rng.normal(size=3)
        x *= rng.uniform(12.0, 40.0) / np.linalg.norm(x)
        sample = distance_to_sphere(flat, 10.0, x)
        assert sample.d == pytest.approx(np.linalg.norm(x) - 10.0, abs=1e-10)


def test_boundary_sample_is_second_fundamental_form(flat):
    sample = distance_to_sphere(flat, 10.0, [10.0, 0.0, 0.0])
    assert sample.d == 0.0
    np.testing.assert_allclose(sample.gradient, [1.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(sample.hessian, np.diag([0.0, 0.1, 0.1]), atol=1e-12)


def test_conformal_distance_satisfies_eikonal(conformal):
    sample = distance_to_sphere(conformal, 10.0, [3.0, 14.0, 20.0])
    assert sample.eikonal_residual < 1e-8
    # radial metric length bounds the distance from above
    r = np.linalg.norm([3.0, 14.0, 20.0])
    upper = (1.0 + 1.0 / (2.0 * 10.0)) ** 2 * (r - 10.0)
    assert 0.0 < sample.d <= upper


def test_distance_argument_errors(flat):
    with pytest.raises(ChartDomainError):
        distance_to_sphere(flat, 10.0, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="threshold"):
        distance_to_sphere(flat, 2.0, [5.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        distance_to_sphere(minkowski_metric(), 10.0, [20.0, 0.0, 0.0])
    small = DEFAULT_SETTINGS.replace(r0_threshold=1.0)
    assert distance_to_sphere(flat, 2.0, [5.0, 0.0, 0.0], settings=small).d == pytest.approx(3.0, abs=1e-10)


def test_distance_field(flat):
    field = DistanceField(flat, 10.0)
    assert field.value([0.0, 30.0, 0.0]) == pytest.approx(20.0, abs=1e-10)
    with pytest.raises(ValueError):
        DistanceField(flat, 10.0, method="fast-marching")
    with pytest.raises(ValueError):
        DistanceField(get_metric("power"), 10.0, method="dijkstra")
