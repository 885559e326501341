"""Game instances: dynamics, running cost, discount, revelation threshold.

A game is described by a drift ``F(z, u, v) = (f(x, u, v), g(y, u, v))`` on
``z = (x, y)``, a running cost ``ell(z, u, v)``, a discount rate ``lam`` and a
threshold ``M0``: the state is publicly revealed the first time ``y`` reaches
``M0``. The working domain is ``Z = X x [0, M0 + eta]``.

Callables follow one broadcasting convention so every solver can evaluate
whole batches at once::

    f(x: (..., n), u: (..., du), v: (..., dv)) -> (..., n)
    g(y: (...),    u: (..., du), v: (..., dv)) -> (...)
    ell(z: (..., n+1), u: (..., du), v: (..., dv)) -> (...)
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import expr


class AssumptionError(ValueError):
    """A solver precondition on the game (positivity, lam > L, ...) is violated."""


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Finite, ordered discretization of a compact control set."""

    points: np.ndarray
    label: str = "U"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("a control grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError(f"{self.label}-grid has repeated points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def tolist(self) -> list[list[float]]:
        return self.points.tolist()


@dataclass(frozen=True, eq=False)
class GameSpec:
    name: str
    n: int
    f: Callable
    g: Callable
    ell: Callable
    lam: float
    M0: float
    eta: float
    X_lo: tuple[float, ...]
    X_hi: tuple[float, ...]
    controls_u: ControlGrid
    controls_v: ControlGrid
    L_F: float
    L_ell: float
    F_bound: float
    ell_bound: float
    assumption2: bool = False
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("discount rate lam must be positive")
        if not self.eta > 0:
            raise ValueError("domain margin eta must be positive")
        if len(self.X_lo) != self.n or len(self.X_hi) != self.n:
            raise ValueError("X box must have n lower and n upper bounds")
        if any(lo > hi for lo, hi in zip(self.X_lo, self.X_hi)):
            raise ValueError("X box has lo > hi")
        if self.F_bound < 0 or self.ell_bound < 0:
            raise ValueError("declared sup-norms must be nonnegative")

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def Z_lo(self) -> np.ndarray:
        return np.array([*self.X_lo, 0.0])

    @property
    def Z_hi(self) -> np.ndarray:
        return np.array([*self.X_hi, self.M0 + self.eta])

    @property
    def L(self) -> float:
        return max(self.L_F, self.L_ell)

    @property
    def gamma(self) -> float:
        """Hoelder exponent of the value functions in the state."""
        if self.L < self.lam:
            return 1.0
        if self.L == self.lam:
            return 0.999
        return self.lam / self.L

    @property
    def continuity_constant(self) -> float:
        """``L_ell / (lam - L)``, the sampled-continuity constant used by the probes."""
        if not self.lam > self.L:
            return math.inf
        return self.L_ell / (self.lam - self.L)

    @property
    def u_points(self) -> np.ndarray:
        return self.controls_u.points

    @property
    def v_points(self) -> np.ndarray:
        return self.controls_v.points

    def F(self, z, u, v) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        fx = np.asarray(self.f(z[..., :-1], u, v))
        gy = np.asarray(self.g(z[..., -1], u, v))
        out = np.empty(np.broadcast_shapes(fx.shape[:-1], gy.shape) + (self.n + 1,))
        out[..., :-1] = fx
        out[..., -1] = gy
        return out

    def cost(self, z, u, v) -> np.ndarray:
        return self.ell(np.asarray(z, dtype=float), np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def in_Z(self, z, tol: float = 1e-12) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.all((z >= self.Z_lo - tol) & (z <= self.Z_hi + tol), axis=-1)

    def with_params(self, **changes) -> "GameSpec":
        """Copy with some scalar fields replaced; the overrides enter the scenario hash."""
        source = dict(self.source)
        overrides = dict(source.get("overrides", {}))
        for key, value in changes.items():
            overrides[key] = list(value) if isinstance(value, tuple) else value
        source["overrides"] = overrides
        return dataclasses.replace(self, source=source, **changes)


def require_assumption2(spec: GameSpec) -> None:
    if not spec.assumption2:
        raise AssumptionError(f"scenario {spec.name!r} is not flagged for Assumption-2 mode")
    if not spec.lam > spec.L:
        raise AssumptionError(f"lam={spec.lam} must exceed max(L_F, L_ell)={spec.L}")


def scenario_hash(spec: GameSpec) -> str:
    canonical = json.dumps(spec.source, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Built-in scenarios: small test games with known closed-form features.


def _shape(*arrays) -> tuple:
    return np.broadcast_shapes(*(np.shape(a)[:-1] for a in arrays))


def _yshape(y, u, v) -> tuple:
    return np.broadcast_shapes(np.shape(y), np.shape(u)[:-1], np.shape(v)[:-1])


def _constant_parts(n: int, c: float):
    def f(x, u, v):
        return np.zeros(_shape(x, u, v) + (n,))

    def g(y, u, v):
        return np.ones(_yshape(y, u, v))

    def ell(z, u, v):
        return np.full(_shape(z, u, v), float(c))

    return f, g, ell


def constant_scenario(c: float = 1.0, lam: float = 1.0, M0: float = 1.0, eta: float = 0.5,
                      L: float | None = None) -> GameSpec:
    """``f = 0``, ``g = 1``, ``ell = c``: every value equals ``c / lam``."""
    f, g, ell = _constant_parts(1, c)
    L = 0.5 * lam if L is None else L
    grid = [[-1.0], [0.0], [1.0]]
    return GameSpec(
        name="constant", n=1, f=f, g=g, ell=ell, lam=lam, M0=M0, eta=eta,
        X_lo=(-1.0,), X_hi=(1.0,),
        controls_u=ControlGrid(grid, "U"), controls_v=ControlGrid(grid, "V"),
        L_F=L, L_ell=L, F_bound=1.0, ell_bound=abs(c), assumption2=True,
        source={"builtin": "constant", "c": c, "lam": lam, "M0": M0, "eta": eta, "L": L},
    )


def _separated_parts():
    # x1 is steered by u alone, x2 by v alone, y by neither; costs add up the same way,
    # so every stage table is a sum A(u) + B(v) and min-max equals max-min.
    def f(x, u, v):
        out = np.empty(_shape(x, u, v) + (2,))
        out[..., 0] = u[..., 0]
        out[..., 1] = v[..., 0]
        return out

    def g(y, u, v):
        out = np.empty(_yshape(y, u, v))
        out[...] = 0.75 + 0.25 * np.cos(y)
        return out

    def ell(z, u, v):
        x1, x2 = z[..., 0], z[..., 1]
        return (x1**2 / (1 + x1**2) - 0.5 * x2**2 / (1 + x2**2)
                + 0.1 * u[..., 0] ** 2 - 0.1 * v[..., 0] ** 2)

    return f, g, ell


def separated_scenario() -> GameSpec:
    f, g, ell = _separated_parts()
    grid = [[-1.0], [0.0], [1.0]]
    return GameSpec(
        name="separated", n=2, f=f, g=g, ell=ell, lam=1.0, M0=1.0, eta=0.5,
        X_lo=(-1.5, -1.5), X_hi=(1.5, 1.5),
        controls_u=ControlGrid(grid, "U"), controls_v=ControlGrid(grid, "V"),
        L_F=0.25, L_ell=0.75, F_bound=math.sqrt(3.0), ell_bound=1.1, assumption2=True,
        source={"builtin": "separated"},
    )


def _pursuit_parts():
    def f(x, u, v):
        return (u[..., 0] - v[..., 0])[..., None] + np.zeros(_shape(x, u, v) + (1,))

    def g(y, u, v):
        return np.ones(_yshape(y, u, v))

    def ell(z, u, v):
        x = z[..., 0]
        return np.broadcast_to(x**2 / (1 + x**2), _shape(z, u, v)).astype(float)

    return f, g, ell


def pursuit_scenario() -> GameSpec:
    f, g, ell = _pursuit_parts()
    grid = [[-1.0], [0.0], [1.0]]
    return GameSpec(
        name="pursuit-1d", n=1, f=f, g=g, ell=ell, lam=1.0, M0=1.0, eta=0.5,
        X_lo=(-2.0,), X_hi=(2.0,),
        controls_u=ControlGrid(grid, "U"), controls_v=ControlGrid(grid, "V"),
        # f does not depend on x; 0.1 is a declared positive upper bound.
        L_F=0.1, L_ell=0.65, F_bound=math.sqrt(5.0), ell_bound=1.0, assumption2=True,
        source={"builtin": "pursuit-1d"},
    )


def _bilinear_parts():
    def f(x, u, v):
        return (u[..., 0] * v[..., 0])[..., None] + np.zeros(_shape(x, u, v) + (1,))

    def g(y, u, v):
        return np.ones(_yshape(y, u, v))

    def ell(z, u, v):
        return np.zeros(_shape(z, u, v))

    return f, g, ell


def bilinear_scenario() -> GameSpec:
    """``f = u v`` on ``{-1, 1}^2``: the textbook failure of the Isaacs condition."""
    f, g, ell = _bilinear_parts()
    grid = [[-1.0], [1.0]]
    return GameSpec(
        name="bilinear", n=1, f=f, g=g, ell=ell, lam=1.0, M0=1.0, eta=0.5,
        X_lo=(-1.0,), X_hi=(1.0,),
        controls_u=ControlGrid(grid, "U"), controls_v=ControlGrid(grid, "V"),
        L_F=0.1, L_ell=0.1, F_bound=math.sqrt(2.0), ell_bound=0.0, assumption2=True,
        source={"builtin": "bilinear"},
    )


def _quadratic_speed_parts():
    def f(x, u, v):
        return np.zeros(_shape(x, u, v) + (1,))

    def g(y, u, v):
        return np.broadcast_to(1.0 + np.asarray(y) ** 2, _yshape(y, u, v)).astype(float)

    def ell(z, u, v):
        return np.ones(_shape(z, u, v))

    return f, g, ell


def quadratic_speed_scenario() -> GameSpec:
    """``g = 1 + y^2`` from ``y = 0`` hits ``M0 = 1`` at ``arctan(1)``."""
    f, g, ell = _quadratic_speed_parts()
    grid = [[0.0]]
    return GameSpec(
        name="quadratic-speed", n=1, f=f, g=g, ell=ell, lam=1.0, M0=1.0, eta=0.5,
        X_lo=(-1.0,), X_hi=(1.0,),
        controls_u=ControlGrid(grid, "U"), controls_v=ControlGrid(grid, "V"),
        L_F=3.0, L_ell=0.0, F_bound=3.25, ell_bound=1.0, assumption2=False,
        source={"builtin": "quadratic-speed"},
    )


_BUILTINS = {
    "constant": constant_scenario,
    "separated": separated_scenario,
    "pursuit-1d": pursuit_scenario,
    "bilinear": bilinear_scenario,
    "quadratic-speed": quadratic_speed_scenario,
}

_BUILTIN_DYNAMICS = {
    "constant": lambda: _constant_parts(1, 1.0)[:2],
    "separated": lambda: _separated_parts()[:2],
    "pursuit-1d": lambda: _pursuit_parts()[:2],
    "bilinear": lambda: _bilinear_parts()[:2],
    "quadratic-speed": lambda: _quadratic_speed_parts()[:2],
}

_BUILTIN_COSTS = {
    "separated": lambda: _separated_parts()[2],
    "pursuit-1d": lambda: _pursuit_parts()[2],
    "bilinear": lambda: _bilinear_parts()[2],
}


def builtin_scenarios() -> dict[str, GameSpec]:
    return {name: make() for name, make in _BUILTINS.items()}


def get_scenario(name: str) -> GameSpec:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; builtins are {sorted(_BUILTINS)}") from None


def scenario_from_dict(data: dict) -> GameSpec:
    """Build a GameSpec from the JSON scenario-file schema."""
    try:
        n = int(data["n"])
        lam = float(data["lambda"])
        M0 = float(data["M0"])
        eta = float(data["eta"])
        X = data["X"]
        X_lo, X_hi = tuple(map(float, X["lo"])), tuple(map(float, X["hi"]))
        dynamics, cost = data["dynamics"], data["cost"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"scenario file is missing or mistypes field {exc}") from None

    if isinstance(dynamics, str):
        if dynamics not in _BUILTIN_DYNAMICS:
            raise ValueError(f"unknown builtin dynamics {dynamics!r}")
        f, g = _BUILTIN_DYNAMICS[dynamics]()
    else:
        components = dynamics["f"]
        if isinstance(components, str):
            components = [components]
        if len(components) != n:
            raise ValueError(f"dynamics.f needs {n} components, got {len(components)}")
        f, g = expr.make_f(components), expr.make_g(str(dynamics["g"]))

    if isinstance(cost, str) and cost in _BUILTIN_COSTS:
        ell = _BUILTIN_COSTS[cost]()
    else:
        ell = expr.make_ell(str(cost))

    controls_u = ControlGrid(data.get("controls_u", [[0.0]]), "U")
    controls_v = ControlGrid(data.get("controls_v", [[0.0]]), "V")
    spec = GameSpec(
        name=str(data.get("name", "unnamed")), n=n, f=f, g=g, ell=ell, lam=lam, M0=M0, eta=eta,
        X_lo=X_lo, X_hi=X_hi, controls_u=controls_u, controls_v=controls_v,
        L_F=float(data.get("L_F", 0.0)), L_ell=float(data.get("L_ell", 0.0)),
        F_bound=0.0, ell_bound=0.0, assumption2=bool(data.get("assumption2", False)),
        source=data,
    )
    # Missing sup-norms are estimated by sampling and inflated by 5 %.
    F_bound = data.get("F_bound")
    ell_bound = data.get("ell_bound")
    if F_bound is None or ell_bound is None:
        F_max, ell_max = _sampled_sup_norms(spec, 512, seed=0)
        F_bound = 1.05 * F_max if F_bound is None else F_bound
        ell_bound = 1.05 * ell_max if ell_bound is None else ell_bound
    return dataclasses.replace(spec, F_bound=float(F_bound), ell_bound=float(ell_bound))


def load_scenario(ref: str | Path) -> GameSpec:
    """Resolve a builtin name or a path to a scenario JSON file."""
    if isinstance(ref, str) and ref in _BUILTINS:
        return get_scenario(ref)
    path = Path(ref)
    if not path.exists():
        raise KeyError(f"{ref!r} is neither a builtin scenario nor an existing file")
    return scenario_from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    witness: list | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    scenario: str
    samples: int
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "samples": self.samples, "ok": self.ok,
                "checks": [dataclasses.asdict(c) for c in self.checks]}


def _control_pairs(spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    nu, nv = len(spec.controls_u), len(spec.controls_v)
    ui, vi = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    return spec.u_points[ui.ravel()], spec.v_points[vi.ravel()]


def _halton(d: int, samples: int, seed: int) -> np.ndarray:
    return qmc.Halton(d=d, scramble=True, seed=seed).random(samples)


def _finite(name: str, values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} returned non-finite values on sampled inputs")
    return values


def _sampled_sup_norms(spec: GameSpec, samples: int, seed: int) -> tuple[float, float]:
    z = spec.Z_lo + _halton(spec.dim, samples, seed) * (spec.Z_hi - spec.Z_lo)
    U, V = _control_pairs(spec)
    F = _finite("F", spec.F(z[:, None, :], U[None], V[None]))
    ell = _finite("ell", spec.cost(z[:, None, :], U[None], V[None]))
    return float(np.max(np.linalg.norm(F, axis=-1))), float(np.max(np.abs(ell)))


def validate_spec(spec: GameSpec, samples: int = 256, seed: int = 0) -> ValidationReport:
    """Spot-check the standing assumptions on quasi-random samples.

    Raises ``ValueError`` if any sampled evaluation is non-finite.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    from .dynamics import flow_step  # circular at import time

    U, V = _control_pairs(spec)
    checks = []

    # g > 0 on (-inf, M0]; sampled on the part of Z below the threshold.
    ys = spec.M0 * _halton(1, samples, seed)[:, 0]
    ys[0] = 0.0
    g = _finite("g", spec.g(ys[:, None], U[None], V[None]))
    k = np.unravel_index(np.argmin(g), g.shape)
    checks.append(Check("g_positive", bool(g[k] > 0), float(g[k]),
                        [float(ys[k[0]]), U[k[1]].tolist(), V[k[1]].tolist()],
                        "min of g over y in [0, M0] and control grids"))

    z = spec.Z_lo + _halton(spec.dim, samples, seed + 1) * (spec.Z_hi - spec.Z_lo)
    F = _finite("F", spec.F(z[:, None, :], U[None], V[None]))
    Fn = np.linalg.norm(F, axis=-1)
    k = np.unravel_index(np.argmax(Fn), Fn.shape)
    checks.append(Check("F_bound", bool(Fn[k] <= spec.F_bound * (1 + 1e-12)), float(Fn[k]),
                        z[k[0]].tolist(), f"declared {spec.F_bound}"))
    ell = _finite("ell", spec.cost(z[:, None, :], U[None], V[None]))
    k = np.unravel_index(np.argmax(np.abs(ell)), ell.shape)
    checks.append(Check("ell_bound", bool(abs(ell[k]) <= spec.ell_bound * (1 + 1e-12)),
                        float(abs(ell[k])), z[k[0]].tolist(), f"declared {spec.ell_bound}"))

    # Declared Lipschitz constants against nearby sample pairs.
    rng = np.random.default_rng(seed)
    dz = rng.normal(size=z.shape)
    dz *= 1e-3 * np.linalg.norm(spec.Z_hi - spec.Z_lo) / np.linalg.norm(dz, axis=-1, keepdims=True)
    z2 = z + dz
    dist = np.linalg.norm(dz, axis=-1)[:, None]
    F2 = _finite("F", spec.F(z2[:, None, :], U[None], V[None]))
    ratio_F = np.linalg.norm(F2 - F, axis=-1) / dist
    ell2 = _finite("ell", spec.cost(z2[:, None, :], U[None], V[None]))
    ratio_ell = np.abs(ell2 - ell) / dist
    for name, ratio, declared in (("lipschitz_F", ratio_F, spec.L_F), ("lipschitz_ell", ratio_ell, spec.L_ell)):
        k = np.unravel_index(np.argmax(ratio), ratio.shape)
        checks.append(Check(name, bool(ratio[k] <= declared * (1 + 1e-6) + 1e-9), float(ratio[k]),
                            z[k[0]].tolist(), f"declared {declared}"))

    if spec.assumption2:
        checks.append(Check("lambda_gt_L", bool(spec.lam > spec.L), spec.lam - spec.L, None,
                            f"lam={spec.lam}, L=max(L_F, L_ell)={spec.L}"))

    # Invariance of Z: one step from boundary points below the threshold. The step is
    # eta / |F| so that y cannot overshoot M0 + eta; states above M0 are already revealed.
    h = spec.eta / max(spec.F_bound, 1e-12)
    pts = spec.Z_lo + _halton(spec.dim, samples, seed + 2) * (spec.Z_hi - spec.Z_lo)
    pts[:, -1] = np.minimum(pts[:, -1], spec.M0)
    faces = rng.integers(0, 2 * spec.n + 1, size=samples)
    for j, face in enumerate(faces):
        if face == 2 * spec.n:
            pts[j, -1] = 0.0
        else:
            axis, side = divmod(face, 2)
            pts[j, axis] = spec.X_hi[axis] if side else spec.X_lo[axis]
    nxt = _finite("flow", flow_step(spec, pts[:, None, :], U[None], V[None], h))
    excess = np.maximum(spec.Z_lo - nxt, nxt - spec.Z_hi).max(axis=-1)
    k = np.unravel_index(np.argmax(excess), excess.shape)
    checks.append(Check("Z_invariance", bool(excess[k] <= 1e-9), float(excess[k]),
                        pts[k[0]].tolist(), f"one step of length {h:.4g} from boundary points"))
    return ValidationReport(spec.name, samples, checks)
