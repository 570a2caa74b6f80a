"""Cosmic-K rejection and accidental signal loss as a function of the SDD veto
window, at an elevated cosmic rate so accidentals are visible."""

import argparse

from pepsim import QuonParameter, load_config
from pepsim.pipeline import simulate_run
from pepsim.veto import CoincidenceWindow, apply_veto, rejection_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--cosmic-rate", type=float, default=200.0)
    ap.add_argument("--duration", type=float, default=200.0)
    ap.add_argument("--windows", default="100,200,400,600,800,1000,2000,5000")
    args = ap.parse_args()

    config = load_config(args.config).replace(**{
        "run.cosmic_rate": args.cosmic_rate, "run.duration": args.duration,
        "run.environmental_k_rate": 50.0, "run.cosmic_k_probability": 0.2,
    })
    run = simulate_run(QuonParameter(0.0), config)
    sdd = run.detected.sdd
    print(f"{'window_ns':>10} {'ck_rejection':>13} {'reduction':>10} {'env_vetoed':>11}")
    for w in map(float, args.windows.split(",")):
        apply_veto(sdd, run.tags, CoincidenceWindow(config.veto.scint_pair_window, w))
        rep = rejection_report(sdd)
        print(f"{w:10.0f} {rep.cosmic_k_rejection:13.4f} {rep.background_reduction_factor:10.2f} "
              f"{rep.environmental_veto_fraction:11.5f}")


if __name__ == "__main__":
    main()
