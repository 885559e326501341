"""Finitely supported probability measures and the quadratic Wasserstein distance."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """``sum_i q_i delta_{z_i}``; atoms are rows of ``atoms``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(atoms) != len(weights) or len(atoms) == 0:
            raise ValueError("need one positive weight per atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"degenerate weights (sum {weights.sum()!r}, min {weights.min()!r})")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def dirac(cls, z) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(z, dtype=float)), [1.0])

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    def merged(self, tol: float = MERGE_TOL) -> "DiscreteMeasure":
        """Collapse atoms that agree after rounding to ``tol``; first occurrence keeps its place."""
        keys = np.round(self.atoms / tol).astype(np.int64)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        if len(first) == len(self):
            return self
        mass = np.bincount(inverse.ravel(), weights=self.weights, minlength=len(first))
        order = np.argsort(first)
        return DiscreteMeasure(self.atoms[first[order]], mass[order] / mass.sum())

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        w = np.asarray(data["weights"], dtype=float)
        # files written by hand rarely sum to 1 within 1e-12
        if abs(w.sum() - 1.0) < 1e-6:
            w = w / w.sum()
        return cls(np.asarray(data["atoms"], dtype=float), w)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _is_uniform(mu: DiscreteMeasure) -> bool:
    return bool(np.all(mu.weights == mu.weights[0]))


def transport_plan(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """An optimal coupling for the squared Euclidean cost."""
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    m, n = len(mu), len(nu)
    if m + n > 10_000:
        raise ValueError("combined support above 10^4 atoms")
    if m == 1 or n == 1:
        return np.outer(mu.weights, nu.weights)
    cost = np.sum((mu.atoms[:, None, :] - nu.atoms[None, :, :]) ** 2, axis=-1)
    if m == n and _is_uniform(mu) and _is_uniform(nu):
        # uniform marginals of equal size: some optimal plan is a permutation
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros((m, n))
        plan[rows, cols] = 1.0 / m
        return plan
    row_sum = sparse.kron(sparse.eye(m), np.ones((1, n)))
    col_sum = sparse.kron(np.ones((1, m)), sparse.eye(n))
    res = linprog(cost.ravel(), A_eq=sparse.vstack([row_sum, col_sum]).tocsr(),
                  b_eq=np.concatenate([mu.weights, nu.weights]), bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return np.maximum(res.x.reshape(m, n), 0.0)


def w2_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    if len(mu) == 1 and len(nu) == 1:
        return float(np.linalg.norm(mu.atoms[0] - nu.atoms[0]))
    plan = transport_plan(mu, nu)
    cost = np.sum((mu.atoms[:, None, :] - nu.atoms[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(max(0.0, float(np.sum(plan * cost)))))


def pushforward(mu: DiscreteMeasure, phi, domain: tuple | None = None) -> DiscreteMeasure:
    """Image measure. ``phi`` is an array of images (one row per atom) or a callable on atoms.

    ``domain`` is an optional ``(lo, hi)`` box the images must stay in.
    """
    images = phi(mu.atoms) if callable(phi) else np.asarray(phi, dtype=float)
    images = np.atleast_2d(np.asarray(images, dtype=float))
    if images.shape != mu.atoms.shape:
        raise ValueError(f"map gives {images.shape} images for {mu.atoms.shape} atoms")
    if domain is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in domain)
        if not np.all((images >= lo - 1e-12) & (images <= hi + 1e-12)):
            raise ValueError("pushforward image leaves the domain")
    return DiscreteMeasure(images, mu.weights).merged()


def quantize(sampler: Callable[[np.random.Generator, int], np.ndarray], N: int,
             seed: int = 0) -> DiscreteMeasure:
    """Empirical measure of ``N`` i.i.d. draws, ``sampler(rng, N) -> (N, d)``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    pts = np.atleast_2d(np.asarray(sampler(np.random.default_rng(seed), N), dtype=float))
    if len(pts) != N:
        raise ValueError(f"sampler returned {len(pts)} points, expected {N}")
    return DiscreteMeasure.uniform(pts).merged()
