"""Simulate a current-on and a current-off run and draw both spectra as text.

    python3 scripts/spectra.py --beta2 2e-23 --days 30
"""

import argparse

import numpy as np

from pepsim import QuonParameter, load_config
from pepsim.pipeline import simulate_run
from pepsim.spectrum import default_roi, histogram, roi_counts


def bars(spec, lo, hi, group, width=60):
    sel = (spec.bin_edges[:-1] >= lo) & (spec.bin_edges[1:] <= hi)
    edges = spec.bin_edges[:-1][sel]
    counts = spec.counts[sel]
    n = len(counts) // group * group
    edges, counts = edges[:n:group], counts[:n].reshape(-1, group).sum(axis=1)
    top = max(int(counts.max()), 1)
    return [f"{e:8.0f} {c:6d} " + "#" * round(width * c / top) for e, c in zip(edges, counts)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--beta2", type=float, default=0.0)
    ap.add_argument("--days", type=float, default=30.0)
    ap.add_argument("--low", type=float, default=6500.0)
    ap.add_argument("--high", type=float, default=9500.0)
    ap.add_argument("--group", type=int, default=2, help="bins merged per row")
    args = ap.parse_args()

    config = load_config(args.config).replace(**{"run.duration": args.days * 86400.0})
    roi = default_roi(config)
    for current_on in (True, False):
        cfg = config.replace(**{"run.current_on": current_on})
        run = simulate_run(QuonParameter(args.beta2), cfg, jobs=4)
        spec = histogram(run.detected, True, cfg)
        print(f"\ncurrent {'on' if current_on else 'off'}: {int(spec.counts.sum())} unvetoed "
              f"events, ROI [{roi.low:.0f}, {roi.high:.0f}] eV holds {roi_counts(spec, roi)}")
        print("\n".join(bars(spec, args.low, args.high, args.group)))
    raw = histogram(run.detected, False, cfg)
    print(f"\nveto removed {int(raw.counts.sum() - spec.counts.sum())} events "
          f"(current off); residual scale {np.mean(spec.counts):.2f} counts/bin")


if __name__ == "__main__":
    main()
