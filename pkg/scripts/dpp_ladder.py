"""DPP residual ladder and HJI residual for the identity map of a two-atom law."""

import argparse

from isg import AtomMap, DiscreteMeasure, GridConfig, diagnostic_report, get_scenario, solve_value

SETUPS = {
    "pursuit-1d": ((241, 9), (-3.0, 0.0), (3.0, 1.6), [[-0.5, 0.05], [0.5, 0.05]]),
    "separated": ((49, 49, 9), (-3.0, -3.0, 0.0), (3.0, 3.0, 1.6), [[0.05, 0.9, 0.3], [0.35, 0.7, 0.3]]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", choices=sorted(SETUPS), default="pursuit-1d")
    ap.add_argument("--h", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--grid-h", type=float, default=0.025)
    args = ap.parse_args()

    spec = get_scenario(args.scenario)
    res, lo, hi, atoms = SETUPS[args.scenario]
    V = solve_value(spec, GridConfig(res, lo, hi), args.grid_h, tol=1e-9)
    mu = DiscreteMeasure.uniform(atoms)
    rep = diagnostic_report(spec, AtomMap.identity(mu), mu, V, args.h)
    for h, r in zip(rep["h"], rep["residual_dpp"]):
        print(f"h={h}: dpp residual {r:.3e}")
    print(f"hji residual {rep['residual_hjb']:.3e}, hamiltonian gap {rep['isaacs_gap']:.3e}")


if __name__ == "__main__":
    main()
