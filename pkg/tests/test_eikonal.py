import numpy as np
import pytest

from inheritlab.distance import DistanceField, distance_to_sphere

pytest.importorskip("fimpy")

from inheritlab.eikonal import fast_marching_distance  # noqa: E402


@pytest.mark.slow
def test_fast_marching_matches_flat_distance(flat):
    grid = fast_marching_distance(flat, 10.0, half_width=20.0, spacing=0.5)
    points = np.array([[0.0, 0.0, 18.0], [12.0, 0.0, 9.0], [10.0, 10.0, 10.0]])
    np.testing.assert_allclose(grid(points), np.linalg.norm(points, axis=1) - 10.0, atol=0.3)


@pytest.mark.slow
def test_fast_marching_cross_checks_shooting(conformal):
    grid = fast_marching_distance(conformal, 10.0, half_width=20.0, spacing=0.5)
    field = DistanceField(conformal, 10.0, method="fast-marching", grid=grid)
    x = np.array([3.0, 4.0, 15.0])
    shooting = distance_to_sphere(conformal, 10.0, x).d
    assert field.value(x) == pytest.approx(shooting, rel=0.05)


def test_fast_marching_box_must_contain_sphere(flat):
    with pytest.raises(ValueError):
        fast_marching_distance(flat, 10.0, half_width=10.2, spacing=0.5)
