import numpy as np
import pytest

from inheritlab.carleman import (
    ProbeReport,
    RadialGrid,
    RefinementStudy,
    WeightFamily,
    beta_monotone_defect,
    bound_state_control,
    build_H,
    commutator_audit,
    conjugate,
    cutoff,
    mourre_decomposition_check,
    no_embedded_eigenvalue_probe,
    outgoing_ratio,
    poly_weight_check,
    radial_derivative_matrix,
    refinement_study,
    semiclassical_commutator_check,
    smoothstep,
    squared_norm_identity,
    stiffness_matrix,
    structure_check,
    tune_bound_state,
    wave_packets,
)
from inheritlab.errors import ResolutionError


def _structure(grid, alpha=1.0):
    H = build_H(grid)
    return structure_check(conjugate(H, grid, WeightFamily.for_grid(grid, alpha=alpha), 1.0), H, grid)


def test_grid_geometry(small_grid):
    assert small_grid.r1 == 2.0
    assert len(small_grid.nodes) == small_grid.n + 2
    assert small_grid.r_end == pytest.approx(34.0)
    np.testing.assert_allclose(small_grid.measure, 0.25)
    assert small_grid.refined().spacing == pytest.approx(small_grid.spacing / 2)
    doubled = small_grid.doubled()
    assert doubled.spacing == pytest.approx(small_grid.spacing)
    assert doubled.r_end == pytest.approx(66.0)


def test_uniform_x_grid():
    grid = RadialGrid(0.5, 63, scheme="uniform_x")
    assert grid.nodes[0] == pytest.approx(2.0)
    np.testing.assert_allclose(np.diff(1.0 / grid.nodes), -0.5 / 65)
    with pytest.raises(ValueError, match="uniform_r"):
        grid.doubled()


@pytest.mark.parametrize("kwargs", [{"x1": 0.8}, {"n": 2}, {"length": 0.0}, {"scheme": "chebyshev"}])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        RadialGrid(**kwargs)


def test_dirichlet_H_has_discrete_sine_modes(small_grid):
    H = build_H(small_grid)
    assert H.selfadjoint
    assert H.selfadjoint_defect() <= 1e-14
    h, L = small_grid.spacing, small_grid.length
    for k in (1, 3, 7):
        mode = np.sin(np.pi * k * (small_grid.r - small_grid.r1) / L)
        eigenvalue = 4.0 / h ** 2 * np.sin(np.pi * k * h / (2 * L)) ** 2
        np.testing.assert_allclose(H.apply(mode), eigenvalue * mode, atol=1e-10)


def test_stiffness_rows_and_derivative_symmetry(small_grid):
    K = stiffness_matrix(small_grid)
    assert abs(K - K.T).max() == 0.0
    np.testing.assert_allclose(np.asarray(K.sum(axis=1)).ravel()[1:-1], 0.0, atol=1e-12)
    D = radial_derivative_matrix(small_grid)
    m = np.diag(small_grid.measure)
    dense = D.toarray()
    np.testing.assert_allclose(m @ dense, (m @ dense).conj().T, atol=1e-14)


def test_outgoing_ratio():
    z = outgoing_ratio(1.0, 0.25)
    assert abs(z) == pytest.approx(1.0)
    assert z.imag > 0.0
    assert z + 1.0 / z == pytest.approx(2.0 - 0.0625)
    decaying = outgoing_ratio(-1.0, 0.25)
    assert abs(decaying.imag) == 0.0 and 0.0 < decaying.real < 1.0
    with pytest.raises(ResolutionError):
        outgoing_ratio(100.0, 0.25)


def test_build_H_errors(small_grid):
    with pytest.raises(ValueError, match="outgoing closure"):
        build_H(small_grid, closure="outgoing")
    with pytest.raises(ValueError, match="Unknown closure"):
        build_H(small_grid, closure="neumann")
    with pytest.raises(ValueError, match="radial model"):
        build_H(small_grid, model="coulomb")
    with pytest.raises(ResolutionError):
        build_H(RadialGrid(0.5, 3, 32.0), model="perturbed", amplitude=1.0)


def test_outgoing_closure_is_not_selfadjoint(small_grid):
    H = build_H(small_grid, closure="outgoing", lam=1.0)
    assert not H.selfadjoint
    assert H.selfadjoint_defect() > 0.0


def test_smoothstep_and_cutoff():
    p = smoothstep(7)
    assert p(0.0) == pytest.approx(0.0) and p(1.0) == pytest.approx(1.0) and p(0.5) == pytest.approx(0.5)
    for order in (1, 2, 3):
        assert p.deriv(order)(0.0) == pytest.approx(0.0, abs=1e-12)
        assert p.deriv(order)(1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        smoothstep(6)
    chi, dchi = cutoff(np.array([1.0, 4.0, 6.0, 8.0, 9.0]), (4.0, 8.0))
    np.testing.assert_allclose(chi, [0.0, 0.0, 0.5, 1.0, 1.0], atol=1e-14)
    assert dchi[0] == 0.0 and dchi[2] > 0.0


def test_weight_family(small_grid):
    weight = WeightFamily.for_grid(small_grid, alpha=2.0, beta=1.5, gamma=0.5)
    assert weight.band == (4.0, 8.0)
    assert weight.h == pytest.approx(0.5)
    assert weight.closed_form_defect(small_grid.r) <= 1e-12
    assert weight.derivative_bound_defect(small_grid.r) == 0.0
    assert beta_monotone_defect(weight, small_grid.r, [1.0, 1.5, 3.0, 10.0]) == 0.0
    assert WeightFamily().h is None
    np.testing.assert_allclose(WeightFamily().values(small_grid.r), 0.0)


@pytest.mark.parametrize("kwargs", [{"alpha": -1.0}, {"beta": 0.5}, {"gamma": 1.5}, {"band": (3.0, 2.0)}])
def test_weight_validation(kwargs):
    with pytest.raises(ValueError):
        WeightFamily(**kwargs)


def test_wave_packets_must_fit(small_grid):
    assert len(wave_packets(small_grid)) == 6
    with pytest.raises(ValueError, match="does not fit"):
        wave_packets(small_grid, centers=[2.5])


def test_zero_weight_conjugation_is_shift(small_grid):
    H = build_H(small_grid)
    conj = conjugate(H, small_grid, WeightFamily(), 1.5)
    np.testing.assert_allclose(conj.P.dense(), H.dense() - 1.5 * np.eye(small_grid.n))
    assert abs(conj.im.matrix).max() <= 1e-14


@pytest.mark.parametrize("alpha,gamma", [(0.0, 0.5), (1.0, 0.0), (2.0, 1.0)])
def test_squared_norm_identity(small_grid, rng, alpha, gamma):
    H = build_H(small_grid)
    conj = conjugate(H, small_grid, WeightFamily.for_grid(small_grid, alpha, 1.0, gamma), 1.0)
    packets = wave_packets(small_grid)
    psi = sum((rng.normal() + 1j * rng.normal()) * u for u in packets)
    identity = squared_norm_identity(conj.P, psi)
    assert identity.defect <= 1e-12
    assert identity.to_record()["p_sq"] > 0.0


def test_structure_defects_under_refinement(small_grid):
    re_values = []

    def measure(grid):
        report = _structure(grid)
        re_values.append(report.re_defect.interior)
        assert report.derivative_bound == 0.0
        return report.im_defect.interior

    study = refinement_study("structure", small_grid, measure, refinements=2)
    assert study.stable
    assert study.values[-1] > 0.0
    assert re_values[-1] < re_values[0]


def test_commutator_remainder_is_refinement_stable(small_grid):
    def measure(grid):
        H = build_H(grid)
        conj = conjugate(H, grid, WeightFamily.for_grid(grid, alpha=1.0), 1.0)
        return commutator_audit(conj, H, grid).remainder.interior

    study = refinement_study("commutator", small_grid, measure, refinements=2)
    assert study.stable
    assert study.to_record()["sizes"] == [127, 255, 511]


def test_mourre_remainders_are_refinement_stable(small_grid):
    tilde = []

    def measure(grid):
        report = mourre_decomposition_check(grid, 1.0)
        tilde.append(report.K_tilde.interior)
        return report.K.interior

    study = refinement_study("mourre", small_grid, measure, refinements=2)
    assert study.stable
    assert RefinementStudy("mourre K~", list(study.sizes), tilde).stable
    with pytest.raises(ValueError):
        mourre_decomposition_check(small_grid, -1.0)


def test_refinement_study_bookkeeping(small_grid):
    study = refinement_study("constant", small_grid, lambda g: 3.0, refinements=1)
    assert study.changes == [0.0] and study.stable
    drifting = RefinementStudy("drift", [1, 2, 3], [1.0, 2.0, 2.1])
    assert not drifting.stable
    with pytest.raises(ValueError):
        refinement_study("none", small_grid, lambda g: 1.0, refinements=0)


def test_poly_weight_factors(small_grid):
    entries = poly_weight_check(small_grid, 3.0, 1.0, [0.0, 0.5, 1.0])
    assert all(e.positive for e in entries)
    assert entries[0].factor_min == pytest.approx(3.0)
    for entry in entries[1:]:
        assert 2.0 <= entry.factor_min < entry.factor_max <= 3.0
        assert np.isfinite(entry.remainder.interior)
    with pytest.raises(ValueError, match="s - k >= 1"):
        poly_weight_check(small_grid, 1.5, 1.0, [0.5])
    with pytest.raises(ValueError, match="t values"):
        poly_weight_check(small_grid, 3.0, 1.0, [1.5])


def test_probe_sparse_matches_dense(small_grid):
    report = no_embedded_eigenvalue_probe(small_grid, 1.0, refinements=3)
    assert report.sizes == [127, 255, 511]
    assert len(report.oracle_gap) == 2
    assert max(report.oracle_gap) <= 1e-6
    assert all(s > 0.0 for s in report.sigma_min)
    with pytest.raises(ValueError, match="at least 3 grids"):
        no_embedded_eigenvalue_probe(small_grid, 1.0, refinements=2)


def test_probe_verdicts():
    assert ProbeReport(0.0, 0.0, sigma_min=[1.0, 0.5, 0.2]).verdict == "threshold_inconclusive"
    assert ProbeReport(-1.0, 0.0, sigma_min=[1.0, 0.5, 0.2]).verdict == "below_threshold"
    assert ProbeReport(1.0, 0.0, sigma_min=[1.0, 0.95, 1.2]).verdict == "no_embedded_eigenvalue"
    decaying = ProbeReport(1.0, 0.0, sigma_min=[1.0, 0.5, 0.25])
    assert decaying.ratios == [0.5, 0.5]
    assert decaying.to_record()["verdict"] == "decaying"


def test_bound_state_tuning_errors(small_grid):
    with pytest.raises(ValueError, match="λ < 0"):
        tune_bound_state(small_grid, lam=0.5)
    with pytest.raises(ValueError, match="uniform_r"):
        tune_bound_state(RadialGrid(0.5, 63, scheme="uniform_x"))


@pytest.mark.slow
def test_bound_state_control_is_detected(small_grid):
    control = bound_state_control(small_grid, lam=-1.0)
    assert control.depth > 0.0
    assert control.detected
    assert control.reference.verdict != "decaying"


@pytest.mark.slow
def test_semiclassical_constant_is_bounded_below():
    entries = semiclassical_commutator_check()
    assert [e.alpha for e in entries] == [4.0, 8.0, 16.0, 32.0]
    assert min(e.c for e in entries) >= 2.0
