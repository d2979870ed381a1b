import pytest

from inheritlab.config import (
    DEFAULT_SETTINGS,
    THREADS_ENV_VAR,
    Settings,
    load_config_file,
    parse_config_text,
    resolve_settings,
    settings_from_env,
)
from inheritlab.errors import (
    AnsatzInconsistencyError,
    GeodesicSolverError,
    InheritLabError,
    ResolutionError,
    SingularMetricError,
)


def test_defaults():
    assert DEFAULT_SETTINGS.r0_threshold == 10.0
    assert DEFAULT_SETTINGS.quad_n_theta == 64
    assert DEFAULT_SETTINGS.quad_n_phi == 128
    assert DEFAULT_SETTINGS.schedule_ratio == 1.05
    assert DEFAULT_SETTINGS.smoothstep_order == 7
    assert DEFAULT_SETTINGS.threads == 1


def test_parse_config_text_coerces_and_keeps_command_keys():
    values = parse_config_text(
        """
        # frequency scan
        schedule-ratio = 1.025
        quad_n_theta = 32   # coarse
        metric = conformal

        field = ck:l=1,a=2.0
        """
    )
    assert values["schedule_ratio"] == 1.025
    assert isinstance(values["quad_n_theta"], int) and values["quad_n_theta"] == 32
    assert values["metric"] == "conformal"
    assert values["field"] == "ck:l=1,a=2.0"


def test_parse_config_text_errors():
    with pytest.raises(ValueError, match="not 'key = value'"):
        parse_config_text("schedule_ratio 1.05")
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("threads = 2\nquad_n_phi = many")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("maxwell_tol = 1e-10\nthreads = 3\n", encoding="utf-8")
    values = load_config_file(path)
    assert values == {"maxwell_tol": 1e-10, "threads": 3}


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(THREADS_ENV_VAR, "4")
    assert settings_from_env().threads == 4
    monkeypatch.setenv(THREADS_ENV_VAR, "zero")
    with pytest.raises(ValueError):
        settings_from_env()
    monkeypatch.setenv(THREADS_ENV_VAR, "0")
    with pytest.raises(ValueError):
        settings_from_env()


def test_precedence(monkeypatch):
    monkeypatch.setenv(THREADS_ENV_VAR, "4")
    assert resolve_settings().threads == 4
    assert resolve_settings({"threads": 6}).threads == 6
    assert resolve_settings({"threads": 6}, threads=8).threads == 8
    assert resolve_settings({"threads": 6}, threads=None).threads == 6
    assert resolve_settings({"metric": "flat3"}) == Settings(threads=4)


def test_error_hierarchy():
    for exc in (SingularMetricError, ResolutionError, AnsatzInconsistencyError):
        assert issubclass(exc, InheritLabError)
        assert issubclass(exc, ValueError)
    assert issubclass(GeodesicSolverError, RuntimeError)
    err = AnsatzInconsistencyError("t-dependent", location=[1.0, 2.0, 3.0], mismatch=0.5)
    assert err.location == [1.0, 2.0, 3.0] and err.mismatch == 0.5
