"""Controlled flow, trajectories and the revelation (hitting) time.

States are plain float arrays ``z = (x_1, ..., x_n, y)``; batches carry extra
leading axes. Controls are piecewise constant on a fixed step and referenced by
index into the game's control grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .game_model import AssumptionError, GameSpec


class HorizonExhausted(RuntimeError):
    """No revelation happened within the supplied controls."""


def hit_tolerance(spec: GameSpec) -> float:
    return 1e-10 * (1 + abs(spec.M0))


def make_state(x, y) -> np.ndarray:
    z = np.array([*np.atleast_1d(np.asarray(x, dtype=float)), float(y)])
    if not np.all(np.isfinite(z)):
        raise ValueError("state coordinates must be finite")
    return z


@dataclass(frozen=True)
class ControlSequence:
    step: float
    values: tuple[int, ...]

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("control step must be positive")
        object.__setattr__(self, "values", tuple(int(i) for i in self.values))

    @classmethod
    def constant(cls, index: int, step: float, n_steps: int) -> "ControlSequence":
        return cls(step, (index,) * n_steps)

    @property
    def duration(self) -> float:
        return self.step * len(self.values)

    def __len__(self):
        return len(self.values)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    u_idx: np.ndarray
    v_idx: np.ndarray

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path: str | Path) -> None:
        n = self.states.shape[1] - 1
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", *(f"x_{i + 1}" for i in range(n)), "y", "u_idx", "v_idx"])
            for k, (t, z) in enumerate(zip(self.times, self.states)):
                # controls of the step starting at t; the last row repeats the final ones
                j = min(k, len(self.u_idx) - 1)
                u = int(self.u_idx[j]) if j >= 0 else -1
                v = int(self.v_idx[j]) if j >= 0 else -1
                writer.writerow([repr(float(t)), *(repr(float(c)) for c in z), u, v])


@dataclass
class HittingResult:
    hit: bool
    T: float
    z_at_T: np.ndarray

    def to_dict(self) -> dict:
        return {"hit": self.hit, "T": self.T, "z_at_T": [float(c) for c in self.z_at_T]}


def flow_step(spec: GameSpec, z, u, v, h) -> np.ndarray:
    """One classical RK4 step of ``z' = F(z, u, v)`` with frozen controls.

    ``h`` may be a scalar or an array broadcasting against ``z[..., 0]``.
    """
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)[..., None]
    if np.any(h < 0):
        raise ValueError("step must be nonnegative")
    k1 = spec.F(z, u, v)
    k2 = spec.F(z + 0.5 * h * k1, u, v)
    k3 = spec.F(z + 0.5 * h * k2, u, v)
    k4 = spec.F(z + h * k3, u, v)
    out = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("integrator produced non-finite state")
    return out


def refine_crossing(spec: GameSpec, z, u, v, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Locate ``y = M0`` inside one step by bisection on the RK4 sub-step length.

    ``z`` has ``y < M0`` and a full step of length ``h`` ends with ``y >= M0``.
    Returns the crossing time within the step (upper end of the final
    bracket, so the returned state satisfies ``y >= M0`` up to rounding) and
    the state there.
    """
    z = np.asarray(z, dtype=float)
    lo = np.zeros(z.shape[:-1])
    hi = np.full(z.shape[:-1], float(h))
    n_iter = max(1, math.ceil(math.log2(h / hit_tolerance(spec))) + 1)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        above = flow_step(spec, z, u, v, mid)[..., -1] >= spec.M0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return hi, flow_step(spec, z, u, v, hi)


def _check_pair(spec: GameSpec, useq: ControlSequence, vseq: ControlSequence) -> None:
    if useq.step != vseq.step:
        raise ValueError(f"control steps differ: {useq.step} vs {vseq.step}")
    if useq.values and (min(useq.values) < 0 or max(useq.values) >= len(spec.controls_u)):
        raise IndexError("u-control index out of range")
    if vseq.values and (min(vseq.values) < 0 or max(vseq.values) >= len(spec.controls_v)):
        raise IndexError("v-control index out of range")


def simulate(spec: GameSpec, z0, useq: ControlSequence, vseq: ControlSequence,
             T_end: float) -> Trajectory:
    """States at ``0, h, 2h, ...`` up to ``T_end``; the last step is shortened to end there."""
    _check_pair(spec, useq, vseq)
    h = useq.step
    if T_end < 0:
        raise ValueError("T_end must be nonnegative")
    n_steps = math.ceil(T_end / h - 1e-12) if T_end > 0 else 0
    if n_steps > min(len(useq), len(vseq)):
        raise ValueError(f"T_end={T_end} exceeds control coverage {min(useq.duration, vseq.duration)}")
    z = np.asarray(z0, dtype=float)
    states = [z]
    times = [0.0]
    for k in range(n_steps):
        dt = min(h, T_end - k * h)
        z = flow_step(spec, z, spec.u_points[useq.values[k]], spec.v_points[vseq.values[k]], dt)
        states.append(z)
        times.append(T_end if k == n_steps - 1 else (k + 1) * h)
    return Trajectory(np.array(times), np.array(states),
                      np.array(useq.values[:n_steps], dtype=int), np.array(vseq.values[:n_steps], dtype=int))


def hitting_bound(spec: GameSpec, region=None, samples: int = 1025) -> float:
    """Upper bound on the revelation time from ``region`` (a ``(lo, hi)`` box; default Z).

    ``(M0 - y_min) / (0.9 * g_min)`` with ``g_min`` sampled over
    ``[y_min, M0]`` and both control grids.
    """
    lo = spec.Z_lo if region is None else np.asarray(region[0], dtype=float)
    y_min = float(lo[-1])
    if y_min >= spec.M0:
        return 0.0
    ys = np.linspace(y_min, spec.M0, samples)
    nu, nv = len(spec.controls_u), len(spec.controls_v)
    U = spec.u_points[:, None, None, :]
    V = spec.v_points[None, :, None, :]
    g = spec.g(np.broadcast_to(ys, (nu, nv, samples)), U, V)
    g_min = float(np.min(g))
    if not g_min > 0:
        raise AssumptionError(f"g is not positive below M0 (min sampled value {g_min})")
    return (spec.M0 - y_min) / (0.9 * g_min)


def hitting_time(spec: GameSpec, z0, useq: ControlSequence, vseq: ControlSequence) -> HittingResult:
    """First time ``y`` reaches ``M0`` under the given controls."""
    _check_pair(spec, useq, vseq)
    z = np.asarray(z0, dtype=float)
    if z[-1] >= spec.M0:
        return HittingResult(True, 0.0, z.copy())
    bound = hitting_bound(spec, (z, z))
    coverage = min(useq.duration, vseq.duration)
    if coverage < bound:
        raise ValueError(f"controls cover {coverage:.6g} < hitting bound {bound:.6g}")
    h = useq.step
    for k in range(min(len(useq), len(vseq))):
        u = spec.u_points[useq.values[k]]
        v = spec.v_points[vseq.values[k]]
        nxt = flow_step(spec, z, u, v, h)
        if nxt[-1] >= spec.M0:
            s, z_hit = refine_crossing(spec, z, u, v, h)
            return HittingResult(True, k * h + float(s), z_hit)
        z = nxt
    raise HorizonExhausted("no crossing of M0 within the provided controls")
