import math

import numpy as np
import pytest

from inheritlab.beltrami import constant_field, make_ck_field, zero_field
from inheritlab.errors import FrequencyUndefinedError
from inheritlab.frequency import (
    FrequencyConfig,
    RadialProfile,
    classify_L2,
    compute_E_surface,
    compute_E_volume,
    compute_F,
    compute_X,
    decay_envelope,
    fit_decay_exponent,
    geometric_schedule,
    identity_from_profile,
    partial_sums,
    scan_monotonicity,
    scan_profile,
    schedule_derivative,
    synth_profile,
)


def _power_profile(p, r_lo=50.0, r_hi=200.0, k=2.0):
    schedule = geometric_schedule(r_lo, r_hi, 1.05)
    return synth_profile(lambda r: r ** (-2.0 * p), None, schedule, k=k,
                         dX_fn=lambda r: -2.0 * p * r ** (-2.0 * p - 1.0), label=f"p={p}")


def test_geometric_schedule():
    s = geometric_schedule(1.0, 2.0, 1.1)
    np.testing.assert_allclose(s[1:] / s[:-1], 1.1)
    assert s[0] == 1.0 and s[-1] >= 2.0 and s[-2] < 2.0
    with pytest.raises(ValueError):
        geometric_schedule(2.0, 1.0)
    with pytest.raises(ValueError):
        geometric_schedule(1.0, 2.0, ratio=1.0)


def test_schedule_derivative_is_high_order():
    r = geometric_schedule(10.0, 100.0, 1.05)
    d = schedule_derivative(r, r ** -2)
    np.testing.assert_allclose(d[2:-2], -2.0 * r[2:-2] ** -3, rtol=1e-6)
    with pytest.raises(ValueError):
        schedule_derivative(r[:2], r[:2])


def test_config_validation():
    with pytest.raises(ValueError):
        FrequencyConfig(())
    with pytest.raises(ValueError):
        FrequencyConfig((2.0, 1.0))
    with pytest.raises(ValueError):
        FrequencyConfig((1.0, 2.0), delta=1.5)
    with pytest.raises(ValueError, match="Geodesic level sets"):
        FrequencyConfig((1.0, 2.0), R0=2.0, level_set="geodesic")
    with pytest.raises(ValueError):
        FrequencyConfig((1.0, 2.0), k=0.0)
    assert FrequencyConfig((1.0,), C2=3.0).weight_k == 6.0
    assert FrequencyConfig((1.0,), C2=0.2).weight_k == 2.0


def test_power_law_fit_and_frequency_limit():
    profile = _power_profile(1.0)
    fit = fit_decay_exponent(profile)
    assert fit.p == pytest.approx(1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    # E = −X′/2 exactly, so F = p·e^{2k/ρ}
    assert profile.F_at(profile.r[-1]) == pytest.approx(math.exp(4.0 / profile.r[-1]), rel=1e-12)
    assert identity_from_profile(profile).C2 == pytest.approx(0.0, abs=1e-12)


def test_classification_verdicts():
    slow = classify_L2(_power_profile(1.0))
    assert slow.verdict == "not_in_L2"
    assert not slow.frequency_threshold_met
    assert slow.linear_r2 >= 0.99

    fast = classify_L2(_power_profile(2.0))
    assert fast.verdict == "in_L2_consistent"
    assert fast.frequency_threshold_met
    assert fast.saturation_ratio < fast.critical_ratio < slow.saturation_ratio

    borderline = classify_L2(_power_profile(1.5))
    assert borderline.verdict == "inconclusive"


@pytest.mark.parametrize("p, verdict", [
    (0.5, "not_in_L2"),
    (1.3, "not_in_L2"),
    (1.7, "in_L2_consistent"),
    (2.5, "in_L2_consistent"),
    (4.0, "in_L2_consistent"),
])
def test_integral_test_on_default_window(p, verdict):
    assert classify_L2(_power_profile(p)).verdict == verdict


def test_fast_decay_from_small_radius():
    assert classify_L2(_power_profile(2.0, r_lo=1.0)).verdict == "in_L2_consistent"


def test_partial_sums_of_linear_growth():
    profile = _power_profile(1.0)
    sums = partial_sums(profile)
    np.testing.assert_allclose(sums, profile.r - profile.r[0], rtol=1e-12, atol=1e-12)


def test_window_errors():
    profile = _power_profile(1.0)
    with pytest.raises(ValueError):
        fit_decay_exponent(profile, (10.0, 100.0))
    with pytest.raises(ValueError):
        fit_decay_exponent(profile, (100.0, 100.0))
    fit = fit_decay_exponent(profile, (80.0, 150.0))
    assert fit.window == (80.0, 150.0)


def test_zero_profile_is_undefined():
    schedule = geometric_schedule(1.0, 2.0)
    profile = synth_profile(lambda r: 0.0 * r, lambda r: 0.0 * r, schedule)
    with pytest.raises(FrequencyUndefinedError):
        fit_decay_exponent(profile)
    with pytest.raises(FrequencyUndefinedError):
        profile.F_at(1.5)
    with pytest.raises(FrequencyUndefinedError):
        scan_monotonicity(profile)
    with pytest.raises(ValueError):
        RadialProfile([1.0, 2.0, 3.0], [1.0, -1.0, 1.0], [0.0, 0.0, 0.0])


def test_monotonicity_scan_records_violations():
    assert scan_monotonicity(_power_profile(1.0)).non_increasing
    schedule = geometric_schedule(10.0, 20.0)
    rising = synth_profile(lambda r: r ** -2.0, lambda r: r ** -2.0 * np.log(r), schedule)
    report = scan_monotonicity(rising)
    assert not report.non_increasing
    assert report.to_record()["non_increasing"] is False


def test_decay_envelope():
    envelope = decay_envelope(_power_profile(1.0), C2=1.0)
    assert envelope.F_inf == pytest.approx(math.exp(4.0 / 200.0), rel=0.01)
    assert envelope.non_increasing


def test_constant_field_surface_terms(flat):
    cfg = FrequencyConfig((5.0,), n_theta=8, n_phi=16)
    omega = constant_field()
    assert compute_X(omega, flat, cfg, 5.0) == pytest.approx(4.0 * math.pi, rel=1e-12)
    assert compute_E_surface(omega, flat, cfg, 5.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(FrequencyUndefinedError):
        compute_F(zero_field(), flat, cfg, 5.0)


def test_volume_and_surface_forms_of_E_agree(flat):
    cfg = FrequencyConfig((5.0,), n_theta=16, n_phi=32)
    omega = make_ck_field(1.0, l=1)
    surface = compute_E_surface(omega, flat, cfg, 5.0)
    volume = compute_E_volume(omega, flat, cfg, 5.0, 8.0, a=1.0, radial_nodes_per_unit=8)
    assert volume == pytest.approx(surface, rel=1e-6, abs=1e-10)


def test_ck_scan_identity_is_bounded(flat):
    cfg = FrequencyConfig(tuple(geometric_schedule(10.0, 20.0, 1.1)), n_theta=16, n_phi=32, threads=2)
    profile = scan_profile(make_ck_field(1.0, l=1), flat, cfg)
    assert np.all(profile.X > 0.0)
    report = identity_from_profile(profile)
    assert np.isfinite(report.C2)
    rows = profile.to_rows()
    assert set(rows[0]) == {"r", "X", "E", "F", "dX_dr", "identity_ratio"}


@pytest.mark.slow
def test_ck_decay_exponent_and_verdict(flat):
    cfg = FrequencyConfig(tuple(geometric_schedule(50.0, 200.0, 1.05)), threads=4)
    profile = scan_profile(make_ck_field(1.0, l=1), flat, cfg)
    fit = fit_decay_exponent(profile, (50.0, 200.0))
    assert fit.p == pytest.approx(1.0, abs=0.05)
    result = classify_L2(profile, cfg)
    assert result.verdict == "not_in_L2"
    assert result.linear_r2 >= 0.99

