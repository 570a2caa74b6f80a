import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import moseley_energy
from pepsim.config import (ELECTRON_CHARGE, build_config, dump_config, load_config,
                           n_new_electrons, parse_text, screened_k_alpha)
from pepsim.errors import ConfigError


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_file_gets_vip2_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "target.current = 100\n"), environ={})
    assert cfg.target.current == 100
    assert cfg.target.length == 3.0
    assert cfg.detector.total_active_area == 6.0
    assert cfg.detector.n_sdd == 6
    assert cfg.detector.energy_resolution_fwhm_at_8keV == 170.0
    assert cfg.veto.solid_angle_coverage == 0.90
    assert cfg.veto.per_counter_efficiency == 0.97
    assert cfg.veto.n_counters == 32
    assert cfg.veto.counter_dimensions == (40.0, 32.0, 250.0)
    assert cfg.provenance["target.current"] == "user"
    assert cfg.provenance["target.length"] == "default"
    assert cfg.provenance["target.anomalous_line_energy"] == "derived-default"


def test_negative_current_is_invariant_violation(tmp_path):
    with pytest.raises(ConfigError, match=r"target\.current.*>= 0.*-5"):
        load_config(write(tmp_path, "target.current = -5\n"), environ={})


def test_acceptance_override(tmp_path):
    cfg = load_config(write(tmp_path, "detector.geometric_acceptance = 0.12\n"), environ={})
    assert cfg.detector.geometric_acceptance == 0.12


def test_parse_error_reports_line(tmp_path):
    path = write(tmp_path, "# header\ntarget.current = 100\nthis is not valid\n")
    with pytest.raises(ConfigError, match=r":3:"):
        load_config(path, environ={})


def test_bad_value_names_field(tmp_path):
    with pytest.raises(ConfigError, match="target.current"):
        load_config(write(tmp_path, "target.current = lots\n"), environ={})


def test_unknown_key_fails_closed(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(write(tmp_path, "target.colour = red\n"), environ={})


def test_electron_charge_not_settable():
    with pytest.raises(ConfigError):
        build_config({"target.electron_charge": "1.6e-19"}, environ={})


def test_comments_and_blank_lines():
    entries = parse_text("# c\n\n  run.duration = 10   # ten seconds\n")
    assert entries == {"run.duration": "10"}


def test_env_override_beats_file(tmp_path):
    path = write(tmp_path, "target.current = 40\n")
    cfg = load_config(path, environ={"PEPSIM_TARGET_CURRENT": "100",
                                     "PEPSIM_DETECTOR_ENERGY_RESOLUTION_FWHM_AT_8KEV": "320"})
    assert cfg.target.current == 100
    assert cfg.detector.energy_resolution_fwhm_at_8keV == 320
    assert cfg.provenance["target.current"] == "env"


def test_unknown_env_override_rejected():
    with pytest.raises(ConfigError):
        load_config(environ={"PEPSIM_TARGET_COLOUR": "red"})


def test_round_trip(tmp_path):
    cfg = load_config(write(tmp_path, "target.current = 40\nrun.rng_seed = 18446744073709551615\n"
                                      "target.normal_lines = 8047.8:0.75, 8905.3:0.25\n"),
                      environ={})
    again = load_config(write(tmp_path, dump_config(cfg), "dumped.cfg"), environ={})
    assert again == cfg
    assert dump_config(again, with_provenance=False) == dump_config(cfg, with_provenance=False)


def test_intensities_must_sum_to_one():
    with pytest.raises(ConfigError, match="normal_lines"):
        build_config({"target.normal_lines": "8047.8:0.5, 8905.3:0.4"}, environ={})


def test_anomalous_line_below_k_alpha():
    with pytest.raises(ConfigError, match="anomalous_line_energy"):
        build_config({"target.anomalous_line_energy": "8100"}, environ={})


def test_drift_fwhm_unreachable_under_collection_time():
    with pytest.raises(ConfigError, match="drift_time_fwhm"):
        build_config({"detector.drift_time_fwhm": "600"}, environ={})
    with pytest.raises(ConfigError, match="charge_collection_max"):
        build_config({"detector.charge_collection_max": "1500"}, environ={})


def test_screened_line_default_matches_moseley_oracle(config):
    energy, sigma = screened_k_alpha()
    # the fitted screening reproduces the normal line
    assert moseley_energy(29, sigma) == pytest.approx(8047.78, rel=1e-12)
    assert energy == pytest.approx(moseley_energy(29, sigma + 1), rel=1e-12)
    assert config.target.anomalous_line_energy == energy
    assert 7400 < energy < min(config.target.line_energies)


def test_n_new_electrons_examples(config):
    t = config.target
    assert n_new_electrons(config.replace(**{"target.current": 0.0}).target, 1e6) == 0.0
    one = n_new_electrons(config.replace(**{"target.current": 1.0}).target, 1.0)
    assert one == pytest.approx(1 / ELECTRON_CHARGE, rel=1e-15)
    assert one == pytest.approx(6.241509e18, rel=1e-7)
    day = n_new_electrons(config.replace(**{"target.current": 100.0}).target, 86400.0)
    assert day == pytest.approx(5.3927e25, rel=1e-4)
    with pytest.raises(ValueError):
        n_new_electrons(t, 0.0)


@given(st.floats(0, 1e3), st.floats(1e-3, 1e8), st.floats(0.1, 10))
def test_n_new_electrons_linear(current, duration, k):
    cfg = load_config(environ={}).replace(**{"target.current": current})
    base = n_new_electrons(cfg.target, duration)
    assert n_new_electrons(cfg.target, k * duration) == pytest.approx(k * base, rel=1e-12)
    scaled = cfg.replace(**{"target.current": k * current}).target
    assert n_new_electrons(scaled, duration) == pytest.approx(k * base, rel=1e-12)
