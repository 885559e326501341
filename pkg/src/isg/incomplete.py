"""Upper and lower values of the signal game for finitely supported initial laws.

Both players see only the common history, so until an atom is revealed it is
driven by the same controls as every other unrevealed atom. Once the
``y``-coordinate of an atom reaches ``M0`` its future is worth the
complete-information value at the revealed state, so the atom leaves the
recursion with the frozen contribution ``q_i e^{-lam T_i} V(Z_{T_i})``. What
remains is a stage game over the vector of unrevealed atoms::

    W(b) = min_u max_v { stage(b, u, v) + e^{-lam h} W(b') }     (upper)
    W(b) = max_v min_u { stage(b, u, v) + e^{-lam h} W(b') }     (lower)

``oracle_tree_value`` evaluates the same recursion by exhaustive enumeration of
control sequences and serves as the independent check of the memoized solver.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .complete_info import ValueGrid
from .dynamics import HorizonExhausted, flow_step, hitting_bound, refine_crossing
from .game_model import GameSpec, require_assumption2
from .measures import DiscreteMeasure, w2_distance
from .payoff import step_cost, truncation_horizon

KEY_QUANTUM = 1e-9
ENUMERATION_BUDGET = 10**7


@dataclass
class BeliefState:
    """Per-atom positions and revelation flags, with the contributions already banked."""

    states: np.ndarray
    active: np.ndarray
    frozen: np.ndarray
    weights: np.ndarray
    t: float = 0.0

    def banked(self) -> float:
        return float(np.dot(self.weights, self.frozen))


@dataclass
class GameValueResult:
    upper: float
    lower: float
    h: float
    depth: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"upper": self.upper, "lower": self.lower, "h": self.h, "depth": self.depth,
                "diagnostics": self.diagnostics}


def _terminal(V: ValueGrid, z) -> np.ndarray:
    if not np.all(V.contains(z, tol=1e-9)):
        raise ValueError("revealed state falls outside the value grid; solve V on a larger box")
    return V(z)


def initial_belief(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid) -> BeliefState:
    states = np.array(mu.atoms, dtype=float)
    active = states[:, -1] < spec.M0
    frozen = np.zeros(len(mu))
    if np.any(~active):
        frozen[~active] = _terminal(V, states[~active])
    return BeliefState(states, active, frozen, np.array(mu.weights), 0.0)


def advance_atoms(spec: GameSpec, states, active, u, v, h: float, weights, V: ValueGrid):
    """Move every unrevealed atom one step under common controls.

    ``states`` is ``(B, I, d)``, ``active`` ``(B, I)``, ``u``/``v`` ``(B, du)``/``(B, dv)``.
    Returns ``(next_states, next_active, stage)`` where ``stage[b]`` is the
    weighted cost of the step discounted to its start: running cost of the
    unrevealed atoms (up to the crossing for atoms revealed in the step) plus
    ``e^{-lam s} V(z_s)`` for those atoms.
    """
    U = u[:, None, :]
    Vc = v[:, None, :]
    nxt = flow_step(spec, states, U, Vc, h)
    hits = active & (nxt[..., -1] >= spec.M0)
    moving = active & ~hits
    contrib = np.where(moving, step_cost(spec, states, nxt, U, Vc, h), 0.0)
    if np.any(hits):
        b, i = np.nonzero(hits)
        z0 = states[b, i]
        s, zs = refine_crossing(spec, z0, u[b], v[b], h)
        contrib[b, i] = step_cost(spec, z0, zs, u[b], v[b], s) + np.exp(-spec.lam * s) * _terminal(V, zs)
    next_states = np.where(moving[..., None], nxt, states)
    return next_states, moving, contrib @ weights


def advance_belief(spec: GameSpec, belief: BeliefState, u_idx: int, v_idx: int, h: float,
                   V: ValueGrid) -> tuple[BeliefState, float]:
    """Single-branch form of :func:`advance_atoms`; also banks the revealed atoms' contributions."""
    u = spec.u_points[[u_idx]]
    v = spec.v_points[[v_idx]]
    nxt, act, stage = advance_atoms(spec, belief.states[None], belief.active[None], u, v, h,
                                    belief.weights, V)
    frozen = belief.frozen.copy()
    newly = belief.active & ~act[0]
    for i in np.nonzero(newly)[0]:
        s, zs = refine_crossing(spec, belief.states[i], u[0], v[0], h)
        frozen[i] = math.exp(-spec.lam * (belief.t + float(s))) * float(_terminal(V, zs))
    disc = math.exp(-spec.lam * belief.t)
    return BeliefState(nxt[0], act[0], frozen, belief.weights, belief.t + h), disc * float(stage[0])


def _reduce(Q: np.ndarray, order: str):
    """Stage value and the chosen (u, v) indices of a ``(nu, nv)`` table."""
    if order == "upper":
        best_v = Q.argmax(axis=1)
        u = int(np.argmin(Q[np.arange(Q.shape[0]), best_v]))
        return float(Q[u, best_v[u]]), u, int(best_v[u])
    best_u = Q.argmin(axis=0)
    v = int(np.argmax(Q[best_u, np.arange(Q.shape[1])]))
    return float(Q[best_u[v], v]), int(best_u[v]), v


class BeliefGame:
    """Memoized stage recursion over unrevealed-atom vectors for fixed weights and grid.

    One instance can be queried at many atom configurations (same weights);
    memo entries are shared between queries.
    """

    def __init__(self, spec: GameSpec, weights, V: ValueGrid, h: float, order: str = "upper",
                 eps: float = 1e-6, max_depth: int | None = None):
        if order not in ("upper", "lower"):
            raise ValueError(f"order must be 'upper' or 'lower', not {order!r}")
        if not h > 0:
            raise ValueError("h must be positive")
        self.spec, self.V, self.h, self.order = spec, V, h, order
        self.weights = np.asarray(weights, dtype=float)
        self.rho = math.exp(-spec.lam * h)
        nu, nv = len(spec.controls_u), len(spec.controls_v)
        ui, vi = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
        self._U = spec.u_points[ui.ravel()]
        self._V = spec.v_points[vi.ravel()]
        self._shape = (nu, nv)
        # all atoms of Z start at y >= 0, so this many steps reveal everything
        k_nat = math.ceil(hitting_bound(spec) / h - 1e-9)
        k_eps = math.ceil(truncation_horizon(spec, eps / 2) / h - 1e-9)
        if max_depth is not None:
            self.depth, self.capped = int(max_depth), True
        elif k_eps < k_nat:
            self.depth, self.capped = k_eps, True
        else:
            self.depth, self.capped = k_nat, False
        self.memo: dict = {}
        # value() and table() each add a frame per stage
        if sys.getrecursionlimit() < 3 * self.depth + 200:
            sys.setrecursionlimit(3 * self.depth + 200)

    def _key(self, states, active, left):
        q = np.round(states[active] / KEY_QUANTUM).astype(np.int64)
        return (left if self.capped else None, active.tobytes(), q.tobytes())

    def value(self, states, active, left: int | None = None) -> float:
        """Value of the recursion from unrevealed ``states[active]`` with ``left`` steps to go."""
        left = self.depth if left is None else left
        states = np.asarray(states, dtype=float)
        active = np.asarray(active, dtype=bool)
        if not active.any():
            return 0.0
        if left == 0:
            if not self.capped:
                raise HorizonExhausted(f"atoms still unrevealed after {self.depth} steps")
            return float(_terminal(self.V, states[active]) @ self.weights[active])
        key = self._key(states, active, left)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        Q = self.table(states, active, left)
        result = _reduce(Q, self.order)
        self.memo[key] = result
        return result[0]

    def table(self, states, active, left: int) -> np.ndarray:
        B = len(self._U)
        nxt, act, stage = advance_atoms(self.spec, np.broadcast_to(states, (B,) + states.shape),
                                        np.broadcast_to(active, (B,) + active.shape),
                                        self._U, self._V, self.h, self.weights, self.V)
        cont = np.array([self.value(nxt[b], act[b], left - 1) for b in range(B)])
        return (stage + self.rho * cont).reshape(self._shape)

    def solve(self, belief: BeliefState) -> tuple[float, tuple[int, int] | None]:
        """Total value (banked contributions included) and the first-stage control choice."""
        banked = belief.banked()
        if not belief.active.any():
            return banked, None
        Q = self.table(belief.states, belief.active, self.depth)
        val, u, v = _reduce(Q, self.order)
        return banked + val, (u, v)


def _check_inputs(spec: GameSpec, mu: DiscreteMeasure) -> None:
    require_assumption2(spec)
    if mu.dim != spec.dim:
        raise ValueError(f"measure atoms have dimension {mu.dim}, game state has {spec.dim}")
    if not np.all(spec.in_Z(mu.atoms)):
        raise ValueError("all atoms must lie in Z")


def game_value(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid, h: float, eps: float = 1e-6,
               max_depth: int | None = None) -> GameValueResult:
    _check_inputs(spec, mu)
    belief = initial_belief(spec, mu, V)
    out, diag = {}, {}
    for order in ("upper", "lower"):
        game = BeliefGame(spec, mu.weights, V, h, order, eps, max_depth)
        out[order], first = game.solve(belief)
        diag[order] = {"first_stage": list(first) if first else None, "memo_size": len(game.memo)}
        depth = game.depth
    return GameValueResult(out["upper"], out["lower"], h, depth, diag)


def upper_value(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid, h: float, eps: float = 1e-6,
                max_depth: int | None = None) -> float:
    _check_inputs(spec, mu)
    return BeliefGame(spec, mu.weights, V, h, "upper", eps, max_depth).solve(initial_belief(spec, mu, V))[0]


def lower_value(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid, h: float, eps: float = 1e-6,
                max_depth: int | None = None) -> float:
    _check_inputs(spec, mu)
    return BeliefGame(spec, mu.weights, V, h, "lower", eps, max_depth).solve(initial_belief(spec, mu, V))[0]


def oracle_tree_value(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid, h: float,
                      K_max: int) -> tuple[float, float]:
    """Stagewise min-max and max-min over every control sequence of length ``K_max``.

    No memoization and no state quantization: all ``(nu nv)^K_max`` paths are
    rolled forward, their discounted payoffs summed, and the tree is folded
    back level by level. Atoms still unrevealed after ``K_max`` steps are
    valued at ``V`` of their current state.
    """
    nu, nv = len(spec.controls_u), len(spec.controls_v)
    if (nu * nv) ** K_max > ENUMERATION_BUDGET:
        raise ValueError(f"({nu}*{nv})^{K_max} paths exceed the enumeration budget {ENUMERATION_BUDGET}")
    belief = initial_belief(spec, mu, V)
    w = belief.weights
    states = belief.states[None]
    active = belief.active[None]
    payoff = np.zeros(1)
    ui, vi = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    U, Vc = spec.u_points[ui.ravel()], spec.v_points[vi.ravel()]
    B = nu * nv
    for k in range(K_max):
        P = len(payoff)
        st = np.repeat(states, B, axis=0)
        ac = np.repeat(active, B, axis=0)
        uu, vv = np.tile(U, (P, 1)), np.tile(Vc, (P, 1))
        states, active, stage = advance_atoms(spec, st, ac, uu, vv, h, w, V)
        payoff = np.repeat(payoff, B) + math.exp(-spec.lam * k * h) * stage
    if np.any(active):
        term = np.where(active, _terminal(V, states.reshape(-1, spec.dim)).reshape(active.shape), 0.0)
        payoff = payoff + math.exp(-spec.lam * K_max * h) * (term @ w)
    up, lo = payoff, payoff
    for _ in range(K_max):
        up = up.reshape(-1, nu, nv).max(axis=2).min(axis=1)
        lo = lo.reshape(-1, nu, nv).min(axis=1).max(axis=1)
    banked = belief.banked()
    return banked + float(up[0]), banked + float(lo[0])


def value_of_dirac(spec: GameSpec, z, V: ValueGrid, h: float, eps: float = 1e-6,
                   tol: float | None = None, V_lower: ValueGrid | None = None) -> float:
    """Upper value of the game started from a known point.

    With ``tol`` set, checks that it agrees with the complete-information
    grid(s) at ``z`` to within ``tol``.
    """
    z = np.asarray(z, dtype=float)
    result = upper_value(spec, DiscreteMeasure.dirac(z), V, h, eps)
    if tol is not None:
        for grid in (V, V_lower):
            if grid is not None and abs(result - float(grid(z))) > tol:
                raise AssertionError(f"point value {result} differs from grid value {float(grid(z))} by more than {tol}")
    return result


def w2_stability_probe(spec: GameSpec, mu: DiscreteMeasure, V: ValueGrid, h: float, sigma: float,
                       trials: int, seed: int = 0, eps: float = 1e-6) -> dict:
    """Empirical ``|V+(mu) - V+(mu')| / (W2 + W2^gamma)`` under random atom perturbations."""
    _check_inputs(spec, mu)
    rng = np.random.default_rng(seed)
    base_game = BeliefGame(spec, mu.weights, V, h, "upper", eps)
    base = base_game.solve(initial_belief(spec, mu, V))[0]
    gamma = spec.gamma
    ratios, skipped = [], 0
    for _ in range(trials):
        moved = np.clip(mu.atoms + sigma * rng.normal(size=mu.atoms.shape), spec.Z_lo, spec.Z_hi)
        nu = DiscreteMeasure(moved, mu.weights)
        dist = w2_distance(mu, nu)
        if dist == 0.0:
            skipped += 1
            continue
        # same weights and atom order: reuse the memo of the base game
        val = base_game.solve(initial_belief(spec, nu, V))[0]
        ratios.append(abs(val - base) / (dist + dist**gamma))
    bound = 1.5 * spec.continuity_constant
    worst = max(ratios) if ratios else 0.0
    return {"value": base, "gamma": gamma, "sigma": sigma, "trials": trials, "skipped": skipped,
            "ratios": ratios, "max_ratio": worst, "bound": bound, "ok": worst <= bound}
