"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line; the lines are
also collected into the terminal summary."""

import math
import time

import numpy as np

from oracles import brute_upper_limit, fwhm_edge_fit, gaussian_fwhm
from pepsim.budget import (background_factor, default_budget, linear_factor,
                           overall_improvement, project_limit)
from pepsim.cli import main
from pepsim.closure import closure_test
from pepsim.config import DetectorConfig, VetoConfig
from pepsim.generator import Origin, TruthEvents
from pepsim.pipeline import simulate_run
from pepsim.quon import QuonParameter, build_ik_operators, check_quon_relation
from pepsim.response import Layer, qdc_to_tot, scint_response, smear_energy, smear_sdd_time
from pepsim.spectrum import EnergySpectrum, write_spectrum_csv


class Criterion:
    def __init__(self, log, number, title, budget_s):
        self.log, self.number, self.title, self.budget_s = log, number, title, budget_s
        self.checks = []

    def check(self, name, ok):
        self.checks.append((name, bool(ok)))

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        self.check(f"runtime {elapsed:.2f} s < {self.budget_s} s", elapsed < self.budget_s)
        failed = [n for n, ok in self.checks if not ok]
        ok = exc_type is None and not failed
        detail = "; ".join(n for n, _ in self.checks) if ok else "failed: " + "; ".join(
            failed or [repr(exc)])
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'} {self.title}: {detail}"
        print(line)
        self.log.append(line)
        if exc_type is None:
            assert not failed, line
        return False


def test_criterion_1_quon_algebra(acceptance_log):
    with Criterion(acceptance_log, 1, "quon algebra", 1.0) as c:
        rng = np.random.default_rng(1)
        qs = rng.uniform(-1.0, 1.0, 1000)
        worst = max(check_quon_relation(q, build_ik_operators(QuonParameter.from_q(q).beta))
                    for q in qs)
        c.check(f"max residual {worst:.1e} < 1e-12", worst < 1e-12)
        exact = all(QuonParameter.from_q(q).violation_probability == (1 + q) / 2
                    for q in (-1.0, 0.0, 1.0))
        c.check("beta^2/2 == (1+q)/2 at q in {-1,0,1}", exact)


def test_criterion_2_budget_regression(acceptance_log):
    with Criterion(acceptance_log, 2, "sensitivity budget", 1.0) as c:
        budget = default_budget()
        lin = linear_factor(budget)
        bkg = background_factor(budget)
        lo, hi = overall_improvement(lin, bkg)
        best, worst = project_limit(4.7e-29, (lo, hi))
        c.check(f"linear {lin:.15g} == 8", math.isclose(lin, 8.0, rel_tol=1e-15))
        c.check(f"background {bkg} == (200, 400)",
                math.isclose(bkg[0], 200, rel_tol=1e-15) and math.isclose(bkg[1], 400, rel_tol=1e-15))
        c.check(f"overall [{lo:.2f}, {hi:.2f}] ~ [113.1, 160.0]",
                abs(lo - 113.1) <= 0.1 and abs(hi - 160.0) <= 0.1)
        c.check("120 inside overall interval", lo <= 120 <= hi)
        c.check(f"projection [{best:.3g}, {worst:.3g}] in 1e-31 decade",
                1e-31 <= best <= worst < 1e-30)


def test_criterion_3_detector_response(acceptance_log):
    with Criterion(acceptance_log, 3, "detector response", 10.0) as c:
        rng = np.random.default_rng(3)
        n = 100_000
        e_fwhm = gaussian_fwhm(smear_energy(np.full(n, 8000.0), DetectorConfig(), rng))
        c.check(f"energy FWHM {e_fwhm:.1f} eV within 3% of 170", abs(e_fwhm / 170 - 1) <= 0.03)
        t_fwhm = fwhm_edge_fit(smear_sdd_time(np.zeros(n), DetectorConfig(), rng))
        c.check(f"SDD timing FWHM {t_fwhm:.1f} ns within 5% of 400", abs(t_fwhm / 400 - 1) <= 0.05)
        times = 1e4 * np.arange(n, dtype=float)
        cosmics = TruthEvents(np.full(n, Origin.CosmicCharged, np.int8), np.full(n, np.nan),
                              times, np.arange(n, dtype=np.int64))
        hits = scint_response(cosmics, VetoConfig(solid_angle_coverage=1.0), rng)
        s_fwhm = gaussian_fwhm(hits.hit_time - times[hits.cosmic_id])
        c.check(f"SiPM FWHM {s_fwhm:.2f} ns within 10% of 3", abs(s_fwhm / 3 - 1) <= 0.10)


def test_criterion_4_veto_algebra(acceptance_log, config):
    with Criterion(acceptance_log, 4, "veto algebra", 10.0) as c:
        n = 100_000
        cfg = config.replace(**{"run.cosmic_rate": 1.0, "run.duration": float(n)})
        run = simulate_run(QuonParameter(0.0), cfg)
        n_cosmic = run.truth.count(Origin.CosmicCharged)
        frac = len(run.tags) / n_cosmic
        c.check(f"tag fraction {frac:.4f} vs 0.847 over {n_cosmic} cosmics",
                abs(frac - 0.9 * 0.97**2) <= 0.01)

        scint, sdd = run.detected.scint, run.detected.sdd
        live = scint.tot > 0
        tagged = (set(scint.cosmic_id[live & (scint.layer == Layer.Top)].tolist())
                  & set(scint.cosmic_id[live & (scint.layer == Layer.Bottom)].tolist()))
        ck = sdd.origin == Origin.CosmicInducedK
        with_parent = ck & np.isin(sdd.cosmic_id, list(tagged))
        c.check(f"{int(with_parent.sum())} induced K with tagged parent all vetoed",
                with_parent.any() and sdd.vetoed[with_parent].all())

        factor = simulate_run(QuonParameter(0.0), config).report.background_reduction_factor
        c.check(f"default reduction factor {factor:.2f} in [5, 10]", 5.0 <= factor <= 10.0)


def test_criterion_5_tot_contract(acceptance_log, config):
    with Criterion(acceptance_log, 5, "ToT contract", 1.0) as c:
        tot = qdc_to_tot(np.arange(4096))
        c.check("monotone over 4096 inputs", np.all(np.diff(tot) >= 0))
        c.check("pedestal -> 0", qdc_to_tot(100) == 0)
        c.check("2000-channel span -> 1000", qdc_to_tot(2100) - qdc_to_tot(100) == 1000)
        cfg = config.replace(**{"run.duration": 3600.0, "run.cosmic_rate": 5.0})
        hits = simulate_run(QuonParameter(0.0), cfg, keep_truth=False).detected.scint
        same = set(np.flatnonzero(hits.tot > 0)) == set(np.flatnonzero(hits.physical))
        c.check(f"ToT>0 == physical over {len(hits)} hits", same and len(hits) > 1000)


def test_criterion_6_poisson_oracle(acceptance_log):
    with Criterion(acceptance_log, 6, "Poisson oracle equivalence", 5.0) as c:
        from pepsim.limits import poisson_upper_limit

        worst = 0.0
        for n in range(51):
            for b in (0.0, 1.0, 5.0, 20.0):
                for cl in (0.68, 0.9, 0.95, 0.997):
                    worst = max(worst, abs(poisson_upper_limit(n, b, cl) - brute_upper_limit(n, b, cl)))
        c.check(f"max deviation {worst:.1e} < 1e-6", worst < 1e-6)
        s = poisson_upper_limit(0, 0.0, 0.9)
        c.check(f"n=0 b=0 cl=0.9 -> {s:.7f}", abs(s - 2.302585) <= 1e-6)


def test_criterion_7_statistical_closure(acceptance_log, config):
    with Criterion(acceptance_log, 7, "statistical closure", 300.0) as c:
        report = closure_test(config, 200)
        c.check(f"false exclusion {report.false_exclusion_rate:.3f} <= "
                f"{report.false_exclusion_bound:.3f}", report.null_ok)
        c.check(f"detection {report.detection_rate:.3f} >= 0.95 at beta^2/2 = "
                f"{report.injected:.3g}", report.detection_ok)


def _limit(tmp_path, tag, exposure, cfg_text):
    d = tmp_path / tag
    d.mkdir()
    edges = np.arange(4000.0, 12050.0, 50.0)
    for name, on in (("on.csv", True), ("off.csv", False)):
        write_spectrum_csv(EnergySpectrum(edges, np.zeros(160, int), exposure, on), d / name)
    (d / "exp.cfg").write_text(cfg_text)
    code = main(["limit", str(d / "on.csv"), str(d / "off.csv"), "--config", str(d / "exp.cfg"),
                 "--out", str(d)])
    assert code == 0
    return float((d / "limit_report.txt").read_text().rsplit("=", 1)[1])


def test_criterion_8_end_to_end_scaling(acceptance_log, tmp_path, capsys):
    with Criterion(acceptance_log, 8, "end-to-end scaling", 30.0) as c:
        base = _limit(tmp_path, "base", 1e6, "")
        double = _limit(tmp_path, "double", 2e6, "")
        c.check(f"doubling exposure: ratio {double / base:.15g}",
                math.isclose(double, base / 2, rel_tol=1e-12))
        for key, value in (("detector.geometric_acceptance", 0.06),
                           ("detector.detection_efficiency_at_8keV", 0.45),
                           ("target.capture_probability_per_electron", 0.05),
                           ("target.current", 50.0)):
            halved = _limit(tmp_path, key, 1e6, f"{key} = {value}\n")
            c.check(f"{key} halved: ratio {halved / base:.15g}",
                    math.isclose(halved, 2 * base, rel_tol=1e-12))
    capsys.readouterr()


def test_criterion_9_determinism(acceptance_log, tmp_path, capsys):
    with Criterion(acceptance_log, 9, "determinism", 30.0) as c:
        outputs = []
        for name, jobs in (("a", "1"), ("b", "1"), ("c", "8")):
            out = tmp_path / name
            assert main(["simulate", "--seed", "12345", "--beta2", "1e-24",
                         "--out", str(out), "--jobs", jobs]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        c.check(f"{len(outputs[0])} files byte-identical", outputs[0] == outputs[1])
        c.check("byte-identical under --jobs 8", outputs[0] == outputs[2])
    capsys.readouterr()
