"""Upper and lower values of a two-atom law over a ladder of time steps."""

import argparse

from isg import DiscreteMeasure, GridConfig, game_value, get_scenario, solve_value

BOXES = {
    "pursuit-1d": ((161, 9), (-4.0, 0.0), (4.0, 1.6)),
    "separated": ((49, 49, 9), (-3.0, -3.0, 0.0), (3.0, 3.0, 1.6)),
}
ATOMS = {
    "pursuit-1d": [[-0.5, 0.0], [0.5, 0.0]],
    "separated": [[0.2, -0.3, 0.5], [-0.4, 0.5, 0.6]],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", choices=sorted(BOXES), default="pursuit-1d")
    ap.add_argument("--h", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = ap.parse_args()

    spec = get_scenario(args.scenario)
    res, lo, hi = BOXES[args.scenario]
    V = solve_value(spec, GridConfig(res, lo, hi), min(args.h), tol=1e-9)
    mu = DiscreteMeasure.uniform(ATOMS[args.scenario])
    print("h,upper,lower,gap")
    for h in args.h:
        r = game_value(spec, mu, V, h)
        print(f"{h},{r.upper:.10f},{r.lower:.10f},{r.upper - r.lower:.3e}")


if __name__ == "__main__":
    main()
