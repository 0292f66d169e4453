from levilab.config import Settings, settings
from levilab.services.levi import Verdict, verdict_from_matrix


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("LEVILAB_DEFAULT_TOL", "1e-6")
    monkeypatch.setenv("LEVILAB_THREADS", "3")
    custom = Settings()
    assert custom.DEFAULT_TOL == 1e-6
    assert custom.THREADS == 3


def test_settings_expose_only_toolkit_fields():
    assert set(Settings.model_fields) == {
        "APP_VERSION", "LOG_LEVEL", "DEFAULT_TOL", "GUARD_FACTOR", "SYMMETRY_WARN", "FD_STEP", "FD_TOL",
        "BOUNDARY_TOL", "CONTACT_TOL", "ON_GRAPH_TOL", "DEFAULT_SEED", "THREADS", "OUTPUT_DIR",
    }


def test_guard_factor_setting_widens_band(monkeypatch):
    H = [[-1e-7, 0], [0, 1]]
    assert verdict_from_matrix(H, 0, tol=1e-8).verdict is Verdict.INCONCLUSIVE
    monkeypatch.setattr(settings, "GUARD_FACTOR", 5.0)
    assert verdict_from_matrix(H, 0, tol=1e-8).verdict is Verdict.CERTIFIED_NO
