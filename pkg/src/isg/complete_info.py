"""Complete-information value on a grid, Hamiltonians and Isaacs diagnostics.

The value is the fixed point of the semi-Lagrangian backup

    V(z) <- min_u max_v { int_0^h e^{-lam t} ell dt + e^{-lam h} V(z_h) }

over the nodes of a box grid, with ``z_h`` one RK4 step from ``z`` and ``V``
read back by clamped multilinear interpolation. ``order="lower"`` swaps the
min and the max.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import flow_step
from .game_model import GameSpec
from .payoff import step_cost


@dataclass
class ValueGrid:
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    h: float = 0.0
    lam: float = 1.0
    order: str = "upper"
    iterations: int = 0
    last_change: float = math.nan

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values shape does not match axes")
        if any(len(a) < 2 for a in self.axes):
            raise ValueError("every axis needs at least two nodes")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def lo(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, z, tol: float = 1e-12) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.all((z >= self.lo - tol) & (z <= self.hi + tol), axis=-1)

    def weights(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Flat node indices and weights ``(..., 2**d)``; queries outside the box are clamped."""
        z = np.asarray(z, dtype=float)
        lower, frac = [], []
        for j, a in enumerate(self.axes):
            t = (np.clip(z[..., j], a[0], a[-1]) - a[0]) / (a[1] - a[0])
            i0 = np.clip(np.floor(t).astype(int), 0, len(a) - 2)
            lower.append(i0)
            frac.append(np.clip(t - i0, 0.0, 1.0))
        strides = np.array([int(np.prod(self.shape[j + 1:])) for j in range(self.dim)])
        idx, wts = [], []
        for corner in itertools.product((0, 1), repeat=self.dim):
            flat = sum((lower[j] + c) * strides[j] for j, c in enumerate(corner))
            w = np.ones_like(frac[0])
            for j, c in enumerate(corner):
                w = w * (frac[j] if c else 1.0 - frac[j])
            idx.append(flat)
            wts.append(w)
        return np.stack(idx, axis=-1), np.stack(wts, axis=-1)

    def __call__(self, z) -> np.ndarray:
        idx, w = self.weights(z)
        return np.sum(self.values.ravel()[idx] * w, axis=-1)

    def at(self, z, strict: bool = False) -> np.ndarray:
        if strict and not np.all(self.contains(z)):
            raise ValueError(f"state {np.asarray(z).tolist()} lies outside the value grid")
        return self(z)

    # --- export / import -------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        n = self.dim - 1
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*(f"x_{i + 1}" for i in range(n)), "y", "value"])
            for z, val in zip(self.nodes(), self.values.ravel()):
                writer.writerow([*(repr(float(c)) for c in z), repr(float(val))])

    @classmethod
    def from_csv(cls, path: str | Path, **meta) -> "ValueGrid":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        axes = tuple(np.unique(data[:, j]) for j in range(data.shape[1] - 1))
        values = data[:, -1].reshape(tuple(len(a) for a in axes))
        return cls(axes, values, **meta)

    def _meta(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "shape": list(self.shape),
                "h": self.h, "lam": self.lam, "order": self.order,
                "iterations": self.iterations, "last_change": self.last_change}

    def save(self, path: str | Path) -> None:
        """Binary values in ``<path>.npy`` with box and resolution in ``<path>.json``."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.values)
        path.with_suffix(".json").write_text(json.dumps(self._meta(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ValueGrid":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        axes = tuple(np.linspace(lo, hi, n) for lo, hi, n in zip(meta["lo"], meta["hi"], meta["shape"]))
        return cls(axes, np.load(path.with_suffix(".npy")), h=meta["h"], lam=meta["lam"],
                   order=meta["order"], iterations=meta["iterations"], last_change=meta["last_change"])


# ---------------------------------------------------------------------------
# Hamiltonians


def hamiltonian_table(spec: GameSpec, z, p) -> np.ndarray:
    """``F(z, u, v) . p + ell(z, u, v)`` for every control pair, shape ``(..., nu, nv)``."""
    z = np.asarray(z, dtype=float)[..., None, None, :]
    p = np.asarray(p, dtype=float)[..., None, None, :]
    U = spec.u_points[:, None, :]
    V = spec.v_points[None, :, :]
    return np.sum(spec.F(z, U, V) * p, axis=-1) + spec.cost(z, U, V)


def hamiltonian_upper(spec: GameSpec, z, p) -> np.ndarray:
    return hamiltonian_table(spec, z, p).max(axis=-1).min(axis=-1)


def hamiltonian_lower(spec: GameSpec, z, p) -> np.ndarray:
    return hamiltonian_table(spec, z, p).min(axis=-2).max(axis=-1)


def isaacs_gap(spec: GameSpec, z_samples, p_samples) -> float:
    """Largest ``H+ - H-`` over paired samples ``(z_i, p_i)``."""
    z = np.atleast_2d(np.asarray(z_samples, dtype=float))
    p = np.atleast_2d(np.asarray(p_samples, dtype=float))
    if len(z) == 0 or len(p) == 0:
        raise ValueError("need at least one sample")
    table = hamiltonian_table(spec, z, p)
    gap = table.max(axis=-1).min(axis=-1) - table.min(axis=-2).max(axis=-1)
    return float(np.max(gap))


# ---------------------------------------------------------------------------
# Value iteration


@dataclass
class GridConfig:
    resolution: tuple[int, ...]
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None

    def box(self, spec: GameSpec, h: float) -> tuple[np.ndarray, np.ndarray]:
        pad = h * spec.F_bound
        lo = spec.Z_lo - pad if self.lo is None else np.asarray(self.lo, dtype=float)
        hi = spec.Z_hi + pad if self.hi is None else np.asarray(self.hi, dtype=float)
        return lo, hi

    def axes(self, spec: GameSpec, h: float) -> tuple[np.ndarray, ...]:
        if len(self.resolution) != spec.dim:
            raise ValueError(f"grid resolution needs {spec.dim} entries")
        lo, hi = self.box(spec, h)
        return tuple(np.linspace(a, b, r) for a, b, r in zip(lo, hi, self.resolution))


def _reduce(Q: np.ndarray, order: str) -> np.ndarray:
    # Q: (nu, nv, ...). argmin/argmax tie-break on the lowest index.
    if order == "upper":
        return Q.max(axis=1).min(axis=0)
    if order == "lower":
        return Q.min(axis=0).max(axis=0)
    raise ValueError(f"order must be 'upper' or 'lower', not {order!r}")


def _one_step(spec: GameSpec, z: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Successors and stage costs for all control pairs, shapes ``(nu, nv, ..., d)`` / ``(nu, nv, ...)``."""
    extra = (None,) * (z.ndim - 1)
    U = spec.u_points[(slice(None), None) + extra]
    V = spec.v_points[(None, slice(None)) + extra]
    z = np.broadcast_to(z, (len(spec.controls_u), len(spec.controls_v)) + z.shape)
    nxt = flow_step(spec, z, U, V, h)
    return nxt, step_cost(spec, z, nxt, U, V, h)


def backup(spec: GameSpec, V: ValueGrid, h: float, z=None, order: str = "upper") -> np.ndarray:
    """One application of the backup operator, evaluated at ``z`` (default: the nodes)."""
    z = V.nodes() if z is None else np.asarray(z, dtype=float)
    nxt, stage = _one_step(spec, z, h)
    return _reduce(stage + math.exp(-spec.lam * h) * V(nxt), order)


def iteration_bound(spec: GameSpec, h: float, tol: float) -> int:
    rho = math.exp(-spec.lam * h)
    if spec.ell_bound == 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - rho) / (2 * spec.ell_bound / spec.lam)) / math.log(rho)))


def solve_value(spec: GameSpec, grid: GridConfig, h: float, tol: float = 1e-8,
                order: str = "upper", init: float | np.ndarray = 0.0,
                max_iter: int | None = None) -> ValueGrid:
    """Jacobi value iteration until the sup-norm change is at most ``tol``."""
    if not h > 0 or not tol > 0:
        raise ValueError("h and tol must be positive")
    axes = grid.axes(spec, h)
    V = ValueGrid(axes, np.broadcast_to(np.asarray(init, dtype=float), tuple(len(a) for a in axes)).copy(),
                  h=h, lam=spec.lam, order=order)
    nodes = V.nodes()
    nxt, stage = _one_step(spec, nodes, h)
    inside = spec.in_Z(nodes)
    if not np.all(V.contains(nxt[:, :, inside], tol=1e-9)):
        raise ValueError("a flow step from Z leaves the grid box; enlarge the box or reduce h")
    idx, w = V.weights(nxt)
    rho = math.exp(-spec.lam * h)
    limit = max_iter if max_iter is not None else 10 * iteration_bound(spec, h, tol) + 10
    values = V.values.ravel()
    change = math.inf
    it = 0
    while change > tol:
        if it >= limit:
            raise RuntimeError(f"value iteration did not reach tol={tol} in {limit} sweeps")
        new = _reduce(stage + rho * np.sum(values[idx] * w, axis=-1), order)
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("value iteration produced non-finite values")
        change = float(np.max(np.abs(new - values)))
        values = new
        it += 1
    V.values = values.reshape(V.shape)
    V.iterations = it
    V.last_change = change
    return V


def value_residual(spec: GameSpec, V: ValueGrid, h: float | None = None, samples=1000,
                   seed: int = 0) -> float:
    """``max |V(z) - backup(V)(z)|`` over sample states (an int draws uniform points in Z)."""
    h = V.h if h is None else h
    if isinstance(samples, (int, np.integer)):
        rng = np.random.default_rng(seed)
        z = spec.Z_lo + rng.random((int(samples), spec.dim)) * (spec.Z_hi - spec.Z_lo)
    else:
        z = np.atleast_2d(np.asarray(samples, dtype=float))
    return float(np.max(np.abs(V(z) - backup(spec, V, h, z, V.order))))
