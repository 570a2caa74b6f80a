"""Detection rate of the on/off analysis versus injected signal strength, in
units of the projected median sensitivity."""

import argparse

from pepsim import load_config
from pepsim.closure import closure_test, projected_sensitivity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--replicas", type=int, default=100)
    ap.add_argument("--factors", default="1,2,3,5,10")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    config = load_config(args.config)
    sens = projected_sensitivity(config)
    print(f"expected ROI background {sens.b_expected:.2f} counts, median n {sens.n_median}, "
          f"s_up {sens.s_up:.2f}, sensitivity beta^2/2 = {sens.beta2_over_2:.3g}")
    print(f"{'factor':>7} {'beta2/2':>10} {'detection':>10} {'false_excl':>11}")
    for f in map(float, args.factors.split(",")):
        rep = closure_test(config, args.replicas, injection_factor=f, jobs=args.jobs)
        print(f"{f:7.1f} {rep.injected:10.3g} {rep.detection_rate:10.3f} "
              f"{rep.false_exclusion_rate:11.3f}")


if __name__ == "__main__":
    main()
