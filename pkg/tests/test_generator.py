import math

import numpy as np
import pytest

from pepsim.errors import CapacityError
from pepsim.generator import (NO_COSMIC, TRUTH_HEADER, Origin, expected_counts,
                              expected_signal_count, generate_run, write_truth_csv)
from pepsim.quon import QuonParameter

ZERO = QuonParameter(0.0)


def quiet(config, **kw):
    base = {"run.cosmic_rate": 0.0, "run.environmental_k_rate": 0.0,
            "run.flat_background_rate": 0.0}
    base.update(kw)
    return config.replace(**base)


def test_signal_count_zero_violation(config):
    assert expected_signal_count(ZERO, config, 1e6) == 0.0


def test_signal_count_direct_product(config):
    # N_new = 1e20 needs I T = 1e20 e
    e = config.target.electron_charge
    cfg = config.replace(**{"target.current": 1e20 * e, "target.capture_probability_per_electron": 0.1,
                            "detector.geometric_acceptance": 0.12,
                            "detector.detection_efficiency_at_8keV": 0.5})
    got = expected_signal_count(QuonParameter(1.0), cfg, 1.0)
    assert got == pytest.approx(1.0 * 1e20 * 0.1 * 0.12 * 0.5, rel=1e-12)
    assert got == pytest.approx(6e17, rel=1e-12)


def test_signal_count_linear_in_current(config):
    p = QuonParameter(1e-25)
    full = expected_signal_count(p, config, 1e5)
    half = expected_signal_count(p, config.replace(**{"target.current": 50.0}), 1e5)
    assert half == pytest.approx(full / 2, rel=1e-14)


def test_empty_run(config):
    assert len(generate_run(ZERO, quiet(config))) == 0


def test_cosmic_count_poisson_bounds(config):
    cfg = quiet(config, **{"run.cosmic_rate": 1.0, "run.duration": 1e4})
    n = generate_run(ZERO, cfg).count(Origin.CosmicCharged)
    assert abs(n - 1e4) < 5 * math.sqrt(1e4)


def test_same_seed_bit_identical(config):
    p = QuonParameter(1e-24)
    a = generate_run(p, config)
    b = generate_run(p, config)
    for name in ("origin", "true_energy", "true_time", "cosmic_id"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = generate_run(p, config.replace(**{"run.rng_seed": 43}))
    assert len(c) != len(a) or not np.array_equal(c.true_time, a.true_time)


def test_sorted_and_in_run(config):
    ev = generate_run(QuonParameter(1e-24), config)
    assert np.all(np.diff(ev.true_time) >= 0)
    assert ev.true_time.min() >= 0
    assert ev.true_time.max() <= config.run.duration * 1e9


def test_no_signal_with_current_off(config):
    cfg = config.replace(**{"run.current_on": False})
    assert generate_run(QuonParameter(1e-22), cfg).count(Origin.PepViolation) == 0


def test_energies_per_origin(config):
    ev = generate_run(QuonParameter(1e-24), config)
    lines = set(config.target.line_energies)
    for o in (Origin.CosmicInducedK, Origin.EnvironmentalK):
        assert set(np.unique(ev.true_energy[ev.origin == o])) <= lines
    sig = ev.true_energy[ev.origin == Origin.PepViolation]
    assert np.all(sig == config.target.anomalous_line_energy)
    cont = ev.true_energy[ev.origin == Origin.Continuum]
    assert cont.min() >= config.analysis.band_low and cont.max() <= config.analysis.band_high
    assert np.all(np.isnan(ev.true_energy[ev.origin == Origin.CosmicCharged]))


def test_induced_k_has_one_parent(config):
    cfg = config.replace(**{"run.cosmic_rate": 1.0, "run.duration": 2e4})
    ev = generate_run(ZERO, cfg)
    parents = {int(c): t for c, t in zip(ev.cosmic_id[ev.origin == Origin.CosmicCharged],
                                         ev.true_time[ev.origin == Origin.CosmicCharged])}
    assert len(parents) == ev.count(Origin.CosmicCharged)  # ids unique
    kids = ev.origin == Origin.CosmicInducedK
    for cid, t in zip(ev.cosmic_id[kids], ev.true_time[kids]):
        assert abs(parents[int(cid)] - t) <= 1.0
    others = ~np.isin(ev.origin, [Origin.CosmicInducedK, Origin.CosmicCharged])
    assert np.all(ev.cosmic_id[others] == NO_COSMIC)

    # conversion fraction vs configured probability, binomial tolerance
    n, k = ev.count(Origin.CosmicCharged), int(kids.sum())
    p = cfg.run.cosmic_k_probability
    assert abs(k / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_origin_means_over_replicas(config):
    cfg = config.replace(**{"run.duration": 3600.0, "run.cosmic_rate": 1.0,
                            "run.environmental_k_rate": 0.5, "run.flat_background_rate": 0.1})
    p = QuonParameter(2e-20)
    expect = expected_counts(p, cfg)
    counts = {o: [] for o in Origin}
    for seed in range(200):
        ev = generate_run(p, cfg.replace(**{"run.rng_seed": seed}))
        for o in Origin:
            counts[o].append(ev.count(o))
    for o in Origin:
        c = np.array(counts[o])
        sem = c.std(ddof=1) / math.sqrt(len(c))
        assert abs(c.mean() - expect[o]) < 3 * sem, o


def test_capacity_guard(config):
    with pytest.raises(CapacityError):
        generate_run(QuonParameter(1.0), config)


def test_truth_csv(config, tmp_path):
    cfg = config.replace(**{"run.duration": 600.0, "run.cosmic_rate": 0.5})
    ev = generate_run(ZERO, cfg)
    path = tmp_path / "truth.csv"
    write_truth_csv(ev, path)
    lines = path.read_text().splitlines()
    assert lines[0] == TRUTH_HEADER
    assert len(lines) == len(ev) + 1
    charged = [ln for ln in lines[1:] if ln.startswith("CosmicCharged")]
    assert charged and all(ln.split(",")[1] == "" for ln in charged)
