"""Discounted payoff along trajectories and the stopped (auxiliary) payoff."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlSequence, HorizonExhausted, _check_pair, flow_step, refine_crossing
from .game_model import GameSpec

# coefficients of 1 - e^{-x}(1 + x) = sum_{k>=2} (-1)^k (k-1)/k! x^k
_SERIES = [(-1) ** k * (k - 1) / math.factorial(k) for k in range(2, 16)]


def exp_weights(lam: float, dt) -> tuple[np.ndarray, np.ndarray]:
    """Weights ``(w0, w1)`` with ``int_0^dt e^{-lam t} l(t) dt ~= w0 l(0) + w1 l(dt)``.

    Exact when ``l`` is affine in ``t``; both weights are nonnegative and sum to
    ``(1 - e^{-lam dt}) / lam``, so constant costs integrate without error.
    """
    dt = np.asarray(dt, dtype=float)
    x = lam * dt
    total = -np.expm1(-x) / lam
    small = x < 0.1
    xs = np.where(small, x, 0.0)
    series = sum(c * xs ** (k + 2) for k, c in enumerate(_SERIES))
    direct = 1.0 - np.exp(-x) * (1.0 + x)
    num = np.where(small, series, direct)
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = np.where(dt > 0, num / (lam * lam * np.where(dt > 0, dt, 1.0)), 0.0)
    return total - w1, w1


def step_cost(spec: GameSpec, z0, z1, u, v, dt) -> np.ndarray:
    """Discounted running cost over one step of length ``dt`` from ``z0`` to ``z1``."""
    w0, w1 = exp_weights(spec.lam, dt)
    return w0 * spec.cost(z0, u, v) + w1 * spec.cost(z1, u, v)


@dataclass
class PayoffResult:
    value: float
    truncation_error_bound: float
    horizon_used: float


def truncation_horizon(spec: GameSpec, eps: float) -> float:
    """Smallest ``T`` with ``|ell|_inf e^{-lam T} / lam <= eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if spec.ell_bound == 0:
        return 0.0
    return max(0.0, math.log(spec.ell_bound / (spec.lam * eps)) / spec.lam)


def discounted_cost(spec: GameSpec, z0, useq: ControlSequence, vseq: ControlSequence,
                    eps: float) -> PayoffResult:
    _check_pair(spec, useq, vseq)
    T = truncation_horizon(spec, eps)
    h = useq.step
    n_steps = math.ceil(T / h - 1e-12) if T > 0 else 0
    if n_steps > min(len(useq), len(vseq)):
        raise ValueError(f"controls cover {min(useq.duration, vseq.duration):.6g} < horizon {T:.6g}")
    z = np.asarray(z0, dtype=float)
    value = 0.0
    for k in range(n_steps):
        dt = min(h, T - k * h)
        u = spec.u_points[useq.values[k]]
        v = spec.v_points[vseq.values[k]]
        nxt = flow_step(spec, z, u, v, dt)
        value += math.exp(-spec.lam * k * h) * float(step_cost(spec, z, nxt, u, v, dt))
        z = nxt
    bound = spec.ell_bound * math.exp(-spec.lam * T) / spec.lam
    return PayoffResult(value, bound, T)


def auxiliary_cost(spec: GameSpec, z0, useq: ControlSequence, vseq: ControlSequence, V) -> float:
    """Running cost up to the revelation time plus the discounted value at the revealed state."""
    _check_pair(spec, useq, vseq)
    z = np.asarray(z0, dtype=float)
    if z[-1] >= spec.M0:
        return float(V.at(z, strict=True))
    h = useq.step
    value = 0.0
    for k in range(min(len(useq), len(vseq))):
        u = spec.u_points[useq.values[k]]
        v = spec.v_points[vseq.values[k]]
        nxt = flow_step(spec, z, u, v, h)
        disc = math.exp(-spec.lam * k * h)
        if nxt[-1] >= spec.M0:
            s, z_hit = refine_crossing(spec, z, u, v, h)
            s = float(s)
            value += disc * float(step_cost(spec, z, z_hit, u, v, s))
            return value + disc * math.exp(-spec.lam * s) * float(V.at(z_hit, strict=True))
        value += disc * float(step_cost(spec, z, nxt, u, v, h))
        z = nxt
    raise HorizonExhausted("no crossing of M0 within the provided controls")
