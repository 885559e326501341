"""Acceptance criteria. Each test appends one PASS/FAIL line before asserting."""

import json
import math

import numpy as np
import pytest

import conftest
from conftest import WIDE_PURSUIT
from isg import (
    AtomMap,
    ControlSequence,
    DiscreteMeasure,
    GridConfig,
    discounted_cost,
    dpp_residual,
    extended_value,
    game_value,
    get_scenario,
    hitting_time,
    hjb_residual,
    isaacs_gap,
    lower_value,
    oracle_tree_value,
    solve_value,
    upper_value,
    value_of_dirac,
    w2_distance,
    w2_stability_probe,
)
from isg.cli import main
from isg.game_model import constant_scenario


def record(number, text, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    conftest.ACCEPTANCE_LINES.append(f"[{status}] {number}: {text}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {number}: {text} {detail}"


def const(i, h, n):
    return ControlSequence.constant(i, h, n)


def test_1_constant_cost_fixed_point():
    c, worst = 1.5, 0.0
    mu = DiscreteMeasure([[-0.3, 0.0], [0.4, 0.5]], [0.4, 0.6])
    for lam in (0.5, 1.0, 2.0):
        spec = constant_scenario(c=c, lam=lam)
        target = c / lam
        n = math.ceil(math.log(c / (lam * 1e-7)) / lam / 0.1) + 1
        J = discounted_cost(spec, [0.0, 0.0], const(0, 0.1, n), const(0, 0.1, n), eps=1e-7).value
        V = solve_value(spec, GridConfig((11, 9)), 0.1, tol=1e-10)
        vals = [J, *V.values.ravel(), upper_value(spec, mu, V, 0.1), lower_value(spec, mu, V, 0.1),
                *extended_value(spec, AtomMap(mu.atoms + [0.1, 0.1]), mu, V, 0.1)]
        worst = max(worst, float(np.max(np.abs(np.array(vals) - target))))
    record(1, "constant cost gives c/lam everywhere within 1e-4", worst <= 1e-4, f"max error {worst:.2e}")


def test_2_hitting_time_exactness():
    spec = constant_scenario(M0=1.0)
    rng = np.random.default_rng(2)
    worst = 0.0
    for y0 in rng.uniform(0, 1, 100):
        res = hitting_time(spec, [0.0, y0], const(0, 0.1, 12), const(0, 0.1, 12))
        worst = max(worst, abs(res.T - (1.0 - y0)))
    quad = get_scenario("quadratic-speed")
    T = hitting_time(quad, [0.0, 0.0], const(0, 0.01, 120), const(0, 0.01, 120)).T
    err = abs(T - math.pi / 4)
    record(2, "hitting time exact for g=1 (1e-8) and g=1+y^2 (1e-6)", worst <= 1e-8 and err <= 1e-6,
           f"g=1 max error {worst:.1e}, pi/4 error {err:.1e}")


def test_3_oracle_equivalence(pursuit, pursuit_V):
    rng = np.random.default_rng(3)
    worst, count = 0.0, 0
    for k in range(24):
        n_atoms = 1 + k % 2
        atoms = np.column_stack([rng.uniform(-1, 1, n_atoms), rng.uniform(0, 0.9, n_atoms)])
        mu = DiscreteMeasure(atoms, rng.dirichlet(np.ones(n_atoms)))
        K = int(rng.integers(1, 5))
        h = float(rng.choice([0.1, 0.2, 0.3]))
        up, lo = oracle_tree_value(pursuit, mu, pursuit_V, h, K)
        worst = max(worst, abs(upper_value(pursuit, mu, pursuit_V, h, max_depth=K) - up),
                    abs(lower_value(pursuit, mu, pursuit_V, h, max_depth=K) - lo))
        count += 1
    record(3, f"memoized recursion equals exhaustive tree on {count} instances (1e-12)", worst <= 1e-12,
           f"max difference {worst:.1e}")


def test_4_dirac_reduction(pursuit, pursuit_V):
    rng = np.random.default_rng(4)
    z = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(0, 1.5, 50)])
    errs = [abs(value_of_dirac(pursuit, zi, pursuit_V, 0.05) - float(pursuit_V(zi))) for zi in z]
    record(4, "Dirac value matches 161-node grid at 50 points (5e-2)", max(errs) <= 5e-2,
           f"max error {max(errs):.2e}")


def test_5_order_and_value_existence(pursuit, pursuit_V, separated, separated_V):
    rng = np.random.default_rng(5)
    order_ok = True
    for _ in range(10):
        atoms = np.column_stack([rng.uniform(-1, 1, 2), rng.uniform(0, 1.0, 2)])
        res = game_value(pursuit, DiscreteMeasure(atoms, rng.dirichlet(np.ones(2))), pursuit_V, 0.2)
        order_ok &= res.upper >= res.lower - 1e-12
    sep_mu = DiscreteMeasure([[0.2, -0.3, 0.5], [-0.4, 0.5, 0.6]], [0.3, 0.7])
    pur_mu = DiscreteMeasure([[-0.5, 0.0], [0.5, 0.0]], [0.5, 0.5])
    sep_gaps, pur_gaps = [], []
    for h in (0.2, 0.1, 0.05):
        s = game_value(separated, sep_mu, separated_V, h)
        p = game_value(pursuit, pur_mu, pursuit_V, h)
        order_ok &= s.upper >= s.lower - 1e-12 and p.upper >= p.lower - 1e-12
        sep_gaps.append(s.upper - s.lower)
        pur_gaps.append(p.upper - p.lower)
    ok = order_ok and max(map(abs, sep_gaps)) <= 1e-9 and pur_gaps[0] >= pur_gaps[1] >= pur_gaps[2]
    record(5, "upper >= lower; separated gap <= 1e-9; pursuit gap nonincreasing in h", ok,
           f"separated {max(map(abs, sep_gaps)):.1e}, pursuit {', '.join(f'{g:.2e}' for g in pur_gaps)}")


def test_6_w2_continuity(pursuit, pursuit_V):
    mu = DiscreteMeasure([[-0.4, 0.2], [0.5, 0.1]], [0.5, 0.5])
    probe = w2_stability_probe(pursuit, mu, pursuit_V, 0.1, sigma=0.05, trials=20, seed=6)
    ok = probe["ok"] and len(probe["ratios"]) == 20
    record(6, "|dV+|/(W2 + W2^gamma) below 1.5 L_ell/(lam - L) over 20 trials", ok,
           f"max ratio {probe['max_ratio']:.3f}, bound {probe['bound']:.3f}")


def test_7_isaacs_diagnostics():
    sep = get_scenario("separated")
    rng = np.random.default_rng(7)
    z = rng.uniform(sep.Z_lo, sep.Z_hi, (1000, sep.dim))
    gap_sep = isaacs_gap(sep, z, rng.normal(size=z.shape))
    bil = get_scenario("bilinear")
    zb = rng.uniform(bil.Z_lo, bil.Z_hi, (50, bil.dim))
    gap_bil = isaacs_gap(bil, zb, np.broadcast_to([1.0, 0.0], zb.shape))
    ok = abs(gap_sep) <= 1e-12 and gap_bil == 2.0
    record(7, "Isaacs gap 0 on separated (1000 samples) and 2 on bilinear at p=(1,0)", ok,
           f"separated {gap_sep:.1e}, bilinear {gap_bil}")


def test_8_dpp_ladder(pursuit, pursuit_V_fine, separated, separated_V):
    hs = (0.2, 0.1, 0.05)
    cases = {
        "pursuit-1d": (pursuit, pursuit_V_fine, DiscreteMeasure([[-0.5, 0.0], [0.5, 0.0]], [0.5, 0.5])),
        "separated": (separated, separated_V,
                      DiscreteMeasure([[0.05, 0.9, 0.3], [0.35, 0.7, 0.3]], [0.5, 0.5])),
    }
    ok, details = True, []
    for name, (spec, V, mu) in cases.items():
        margin = spec.M0 - mu.atoms[:, -1].max()
        assert margin > 2 * max(hs) * spec.F_bound
        res = [dpp_residual(spec, AtomMap.identity(mu), mu, V, h) for h in hs]
        ok &= res[0] > res[1] > res[2] and res[2] <= 0.1
        details.append(f"{name} " + ", ".join(f"{r:.2e}" for r in res))
    record(8, "DPP residual decreases over h in {0.2, 0.1, 0.05} and is <= 0.1 at 0.05", ok, "; ".join(details))


def test_9_hjb_residual(pursuit):
    flat = constant_scenario(c=2.0, lam=1.0)
    Vc = solve_value(flat, GridConfig((11, 9)), 0.1, tol=1e-12)
    mu = DiscreteMeasure.dirac([0.0, 0.3])
    r_const = hjb_residual(flat, AtomMap.identity(mu), mu, Vc, 0.1, fd_eps=1e-3)
    Vp = solve_value(pursuit, GridConfig((401, 9), **WIDE_PURSUIT), 0.02, tol=1e-9)
    single = DiscreteMeasure.dirac([0.0, 0.2])
    r_pur = hjb_residual(pursuit, AtomMap.identity(single), single, Vp, 0.02, fd_eps=1e-3)
    record(9, "HJI residual <= 1e-3 for constant cost and <= 0.1 for pursuit at h=0.02",
           r_const <= 1e-3 and r_pur <= 0.1, f"constant {r_const:.1e}, pursuit {r_pur:.2e}")


def _random_measure(rng, d):
    n = int(rng.integers(1, 9))
    return DiscreteMeasure(rng.normal(size=(n, d)), rng.dirichlet(np.ones(n)))


def test_10_transport_metric():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        a, b, c = (_random_measure(rng, d) for _ in range(3))
        ab, ba = w2_distance(a, b), w2_distance(b, a)
        worst = max(worst, w2_distance(a, a), abs(ab - ba), ab - w2_distance(a, c) - w2_distance(c, b), -ab)
    dirac = w2_distance(DiscreteMeasure.dirac([0.0, 0.0]), DiscreteMeasure.dirac([3.0, 4.0]))
    record(10, "W2 axioms on 100 random triples (1e-9); W2 of Diracs is the distance", worst <= 1e-9 and dirac == 5.0,
           f"worst violation {worst:.1e}, W2(3-4-5) = {dirac}")


def _cli_commands(tmp):
    m1 = tmp / "m1.json"
    m2 = tmp / "m2.json"
    m1.write_text(json.dumps({"atoms": [[-0.5, 0.0], [0.5, 0.0]], "weights": [0.5, 0.5]}))
    m2.write_text(json.dumps({"atoms": [[0.0, 0.1], [0.2, 0.3], [0.1, 0.05]], "weights": [0.2, 0.3, 0.5]}))
    box = ["--grid-lo=-4,0", "--grid-hi=4,1.6"]
    return [
        ["validate", "--scenario", "constant"],
        ["simulate", "--scenario", "pursuit-1d", "--z0", "0,0", "--h", "0.05", "--u", "0,2", "--v", "1"],
        ["hitting", "--scenario", "quadratic-speed", "--z0", "0,0", "--h", "0.01"],
        ["value-grid", "--scenario", "pursuit-1d", "--grid", "81,9", *box, "--h", "0.1", "--seed", "3"],
        ["value-measure", "--scenario", "pursuit-1d", "--measure", str(m1), "--h", "0.2,0.1",
         "--grid", "81,9", *box],
        ["isaacs-check", "--scenario", "bilinear", "--seed", "5"],
        ["dpp-check", "--scenario", "pursuit-1d", "--measure", str(m2), "--h", "0.2,0.1",
         "--grid", "81,9", *box],
        ["w2", "--measure", str(m1), "--measure2", str(m2)],
    ]


def test_11_cli_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        codes = [main([*cmd, "--out", str(out / cmd[0])]) for cmd in _cli_commands(tmp_path)]
        assert codes == [0] * len(codes), codes
        outputs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    same = outputs[0] == outputs[1]
    record(11, "every CLI command gives byte-identical output on re-run", same,
           f"{len(outputs[0])} files from {len(_cli_commands(tmp_path))} commands")
