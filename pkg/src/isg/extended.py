"""Extended values over atom maps, the measure Hamiltonian, DPP and HJI residuals.

A map ``Phi`` and a covector field ``p`` only enter through their values on the
atoms of the initial law, so both are stored as one row per atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complete_info import ValueGrid, hamiltonian_table
from .dynamics import flow_step
from .game_model import GameSpec, require_assumption2
from .incomplete import BeliefGame, BeliefState, game_value
from .measures import DiscreteMeasure, pushforward
from .payoff import step_cost


class DPPPreconditionError(ValueError):
    """The map is too close to the revelation threshold for the requested step."""


@dataclass(frozen=True, eq=False)
class AtomMap:
    images: np.ndarray

    def __post_init__(self):
        images = np.atleast_2d(np.asarray(self.images, dtype=float))
        if not np.all(np.isfinite(images)):
            raise ValueError("atom images must be finite")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, mu: DiscreteMeasure) -> "AtomMap":
        return cls(np.array(mu.atoms))

    def __len__(self):
        return len(self.images)


@dataclass(frozen=True, eq=False)
class CovectorField:
    covectors: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.covectors, dtype=float))
        if not np.all(np.isfinite(p)):
            raise ValueError("covectors must be finite")
        object.__setattr__(self, "covectors", p)

    def __len__(self):
        return len(self.covectors)


def _matched(phi: AtomMap, mu: DiscreteMeasure) -> None:
    if phi.images.shape != mu.atoms.shape:
        raise ValueError(f"map has {phi.images.shape} images for {mu.atoms.shape} atoms")


def in_O(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure) -> tuple[bool, float]:
    """Whether every image lies strictly below the threshold, and by how much."""
    _matched(phi, mu)
    margin = spec.M0 - float(np.max(phi.images[:, -1]))
    return margin > 0, margin


def extended_value(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure, V: ValueGrid, h: float,
                   eps: float = 1e-6) -> tuple[float, float]:
    """Upper and lower values of the game started from the image law ``Phi # mu``."""
    _matched(phi, mu)
    image = pushforward(mu, phi.images, (spec.Z_lo, spec.Z_hi))
    result = game_value(spec, image, V, h, eps)
    return result.upper, result.lower


def script_hamiltonian(spec: GameSpec, mu: DiscreteMeasure, phi: AtomMap,
                       p: CovectorField) -> tuple[float, float]:
    """min-max and max-min over controls of ``sum_i q_i [F(Phi_i) . p_i + ell(Phi_i)]``."""
    _matched(phi, mu)
    if p.covectors.shape != phi.images.shape:
        raise ValueError("need one covector per atom")
    table = np.einsum("i,iuv->uv", mu.weights, hamiltonian_table(spec, phi.images, p.covectors))
    return float(table.max(axis=1).min()), float(table.min(axis=0).max())


def _belief(spec: GameSpec, images: np.ndarray, mu: DiscreteMeasure) -> BeliefState:
    n = len(images)
    return BeliefState(images, images[:, -1] < spec.M0, np.zeros(n), np.array(mu.weights))


def dpp_residual(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure, V: ValueGrid, h: float,
                 eps: float = 1e-6, solver_h: float | None = None) -> float:
    """Gap between the upper extended value and its one-step backup with frozen controls.

    The backup holds ``(u, v)`` fixed over ``[0, h]``, moves the images by one
    RK4 step of length ``h`` and integrates the running cost with the
    two-point exponential rule. Values on both sides come from the recursion
    with step ``solver_h`` (default: the grid's own backup step).
    """
    require_assumption2(spec)
    member, margin = in_O(spec, phi, mu)
    if not margin > h * spec.F_bound:
        raise DPPPreconditionError(f"margin {margin:.4g} must exceed h*|F|={h * spec.F_bound:.4g}")
    solver_h = V.h if solver_h is None else solver_h
    game = BeliefGame(spec, mu.weights, V, solver_h, "upper", eps)
    lhs = game.solve(_belief(spec, phi.images, mu))[0]

    nu, nv = len(spec.controls_u), len(spec.controls_v)
    Q = np.empty((nu, nv))
    for a in range(nu):
        for b in range(nv):
            u, v = spec.u_points[a], spec.v_points[b]
            nxt = flow_step(spec, phi.images, u, v, h)
            running = step_cost(spec, phi.images, nxt, u, v, h) @ mu.weights
            Q[a, b] = running + math.exp(-spec.lam * h) * game.solve(_belief(spec, nxt, mu))[0]
    rhs = float(Q.max(axis=1).min())
    return abs(lhs - rhs)


def measure_gradient(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure, V: ValueGrid, h: float,
                     fd_eps: float = 1e-3, eps: float = 1e-6) -> tuple[float, CovectorField]:
    """``V+(Phi)`` and its central-difference covector field.

    The difference quotient in atom ``i`` is divided by ``q_i`` to turn the
    derivative along the measure into a pointwise covector.
    """
    require_assumption2(spec)
    _, margin = in_O(spec, phi, mu)
    if not margin > fd_eps * (1 + spec.F_bound):
        raise DPPPreconditionError(f"margin {margin:.4g} too small for fd_eps={fd_eps}")
    game = BeliefGame(spec, mu.weights, V, h, "upper", eps)

    def value(images):
        if not np.all(spec.in_Z(images)):
            raise ValueError("perturbed atom images leave Z")
        return game.solve(_belief(spec, images, mu))[0]

    base = value(phi.images)
    p = np.zeros_like(phi.images)
    for i in range(len(mu)):
        for j in range(spec.dim):
            step = np.zeros_like(phi.images)
            step[i, j] = fd_eps
            p[i, j] = (value(phi.images + step) - value(phi.images - step)) / (2 * fd_eps * mu.weights[i])
    return base, CovectorField(p)


def hjb_residual(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure, V: ValueGrid, h: float,
                 fd_eps: float = 1e-3, eps: float = 1e-6) -> float:
    """``|-lam V+(Phi) + H(mu, Phi, p)|`` with ``p`` from :func:`measure_gradient`."""
    base, p = measure_gradient(spec, phi, mu, V, h, fd_eps, eps)
    upper, _ = script_hamiltonian(spec, mu, phi, p)
    return abs(-spec.lam * base + upper)


def diagnostic_report(spec: GameSpec, phi: AtomMap, mu: DiscreteMeasure, V: ValueGrid, hs,
                      fd_eps: float = 1e-3, eps: float = 1e-6, hjb_h: float | None = None,
                      dpp=None) -> dict:
    """DPP ladder over ``hs``, HJI residual and the Hamiltonian gap at the fitted covectors.

    ``dpp`` optionally supplies precomputed ladder residuals (same order as ``hs``).
    """
    hjb_h = V.h if hjb_h is None else hjb_h
    residual_dpp = list(dpp) if dpp is not None else [dpp_residual(spec, phi, mu, V, h, eps) for h in hs]
    base, p = measure_gradient(spec, phi, mu, V, hjb_h, fd_eps, eps)
    upper, lower = script_hamiltonian(spec, mu, phi, p)
    return {
        "phi_images": phi.images.tolist(),
        "h": [float(h) for h in hs],
        "residual_dpp": [float(r) for r in residual_dpp],
        "residual_hjb": abs(-spec.lam * base + upper),
        "hjb_h": hjb_h,
        "fd_eps": fd_eps,
        "covectors": p.covectors.tolist(),
        "isaacs_gap": upper - lower,
        "margins": (spec.M0 - phi.images[:, -1]).tolist(),
    }
