"""Run-level orchestration: batched generation + response, then veto.

Batches are time slices with their own derived seeds, so the result does not
depend on how many worker processes are used.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from pepsim.config import ExperimentConfig, RunPlan
from pepsim.generator import TruthEvents, check_capacity, generate_batch
from pepsim.quon import QuonParameter
from pepsim.response import DetectedRun, ScintHits, SddHits, respond
from pepsim.seeding import stage_rng
from pepsim.veto import CoincidenceWindow, RejectionReport, apply_veto, rejection_report, tag_cosmics


@dataclass
class SimulatedRun:
    truth: TruthEvents
    detected: DetectedRun
    tags: np.ndarray
    report: RejectionReport


def _batch(args):
    param, config, plan, index = args
    truth = generate_batch(param, config, plan, index)
    sdd, scint = respond(truth, config, stage_rng(plan.rng_seed, "response", index))
    return truth, sdd, scint


def simulate_run(param: QuonParameter, config: ExperimentConfig, plan: RunPlan | None = None,
                 jobs: int = 1, keep_truth: bool = True) -> SimulatedRun:
    plan = config.run if plan is None else plan
    check_capacity(param, config, plan)
    tasks = [(param, config, plan, i) for i in range(plan.n_batches)]
    if jobs > 1 and plan.n_batches > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, plan.n_batches)) as pool:
            results = list(pool.map(_batch, tasks))
    else:
        results = [_batch(t) for t in tasks]

    truth = TruthEvents.concatenate(r[0] for r in results).sorted() if keep_truth else None
    sdd = SddHits.concatenate(r[1] for r in results).sorted()
    scint = ScintHits.concatenate(r[2] for r in results).sorted()
    detected = DetectedRun(sdd, scint, plan.duration, plan.current_on)

    window = CoincidenceWindow.from_config(config)
    tags = tag_cosmics(scint, window, tot_cut=config.analysis.tot_cut)
    apply_veto(sdd, tags, window)
    return SimulatedRun(truth, detected, tags, rejection_report(sdd))
