"""Ellipsoid method: deep-cut updates, feasibility search and constrained minimization.

An ellipsoid is ``{z : (z - c)^T P^{-1} (z - c) <= 1}`` with centre ``c`` and
shape ``P``.  A cut ``(g, level)`` keeps the half-space
``g^T (z - c) + level <= 0``; ``level = 0`` is a central cut and ``level > 0``
a deep cut.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError


@dataclass
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0
    logvol: float = None  # tracked incrementally by :func:`cut`

    def __post_init__(self):
        if self.logvol is None:
            sign, logdet = np.linalg.slogdet(self.shape)
            self.logvol = 0.5 * logdet if sign > 0 else -math.inf

    @classmethod
    def ball(cls, center, radius):
        center = np.asarray(center, dtype=float)
        radius = np.broadcast_to(np.asarray(radius, dtype=float), center.shape)
        return cls(center.copy(), np.diag(radius**2))

    @classmethod
    def covering_box(cls, lo, hi, center=None):
        """Axis-aligned ellipsoid centred at ``center`` that contains the box."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        center = (lo + hi) / 2 if center is None else np.asarray(center, dtype=float)
        reach = np.maximum(center - lo, hi - center)
        return cls.ball(center, math.sqrt(len(center)) * reach)

    @property
    def dim(self):
        return self.center.shape[0]

    def log_volume(self):
        """Log-volume up to the dimension-dependent unit-ball constant."""
        return self.logvol

    def support(self, g):
        """``max_{z in E} g^T (z - c) = sqrt(g^T P g)``."""
        return math.sqrt(max(float(g @ self.shape @ g), 0.0))

    def contains(self, z):
        d = np.asarray(z, dtype=float) - self.center
        return float(d @ np.linalg.solve(self.shape, d)) <= 1.0 + 1e-12


def cut(state, g, level=0.0):
    """Minimum-volume ellipsoid containing ``E ∩ {z : g^T(z - c) + level <= 0}``.

    Returns ``None`` when the intersection is empty (``level >= sqrt(g^T P g)``).
    """
    g = np.asarray(g, dtype=float)
    n = state.dim
    pg = state.shape @ g
    gpg = float(g @ pg)
    if not gpg > 0.0 or not math.isfinite(gpg):
        raise SolverError("degenerate cut: g^T P g is not positive", {"iteration": state.iteration})
    root = math.sqrt(gpg)
    alpha = level / root
    if alpha >= 1.0:
        return None
    if n == 1:
        r = math.sqrt(state.shape[0, 0])
        c = state.center[0]
        lo, hi = c - r, c + r
        bound = c - level / g[0]
        if g[0] > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
        if lo > hi:
            return None
        return EllipsoidState(
            np.array([(lo + hi) / 2]), np.array([[((hi - lo) / 2) ** 2]]), state.iteration + 1
        )
    if alpha <= -1.0 / n:
        return EllipsoidState(state.center, state.shape, state.iteration + 1, state.logvol)
    step = pg / root
    center = state.center - (1.0 + n * alpha) / (n + 1) * step
    coef = 2.0 * (1.0 + n * alpha) / ((n + 1) * (1.0 + alpha))
    shape = (n * n * (1.0 - alpha * alpha) / (n * n - 1.0)) * (
        state.shape - coef * np.outer(step, step)
    )
    shape = 0.5 * (shape + shape.T)
    # det ratio: (n^2 (1 - alpha^2) / (n^2 - 1))^n * (1 - coef)
    logvol = state.logvol + 0.5 * (
        n * math.log(n * n * (1.0 - alpha * alpha) / (n * n - 1.0)) + math.log1p(-coef)
    )
    return EllipsoidState(center, shape, state.iteration + 1, logvol)


@dataclass
class FeasibilityResult:
    """Outcome of :func:`find_feasible`.

    ``status`` is ``"feasible"`` (``x`` satisfies every constraint),
    ``"infeasible"`` (a deep cut emptied the ellipsoid: certified) or
    ``"exhausted"`` (budget or volume floor reached: infeasible with low
    confidence).
    """

    status: str
    x: np.ndarray = None
    iterations: int = 0
    state: EllipsoidState = None

    @property
    def feasible(self):
        return self.status == "feasible"


def find_feasible(oracle, state, max_iter=20000, min_log_volume=-np.inf):
    """Deepest-cut ellipsoid search for a point with ``f_i(x) <= 0`` for all i.

    ``oracle(x)`` returns ``(f, G)``: constraint values (length m) and their
    subgradients (``m x n``).  Among violated constraints the one whose cut
    removes the largest fraction of the ellipsoid is used.
    """
    start = state.iteration
    for _ in range(max_iter):
        f, grads = oracle(state.center)
        f = np.asarray(f, dtype=float)
        violated = np.flatnonzero(f > 0.0)
        if violated.size == 0:
            return FeasibilityResult("feasible", state.center.copy(), state.iteration - start, state)
        gv = np.asarray(grads, dtype=float)[violated]
        width = np.sqrt(np.maximum(np.einsum("mi,ij,mj->m", gv, state.shape, gv), 1e-300))
        depth = f[violated] / width
        j = int(np.argmax(depth))
        new = cut(state, gv[j], f[violated[j]])
        if new is None:
            return FeasibilityResult("infeasible", None, state.iteration - start, state)
        state = new
        if state.log_volume() < min_log_volume:
            break
    return FeasibilityResult("exhausted", None, state.iteration - start, state)


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    lower_bound: float
    state: EllipsoidState
    iterations: int
    log_volumes: list = field(default_factory=list)

    @property
    def gap(self):
        return self.value - self.lower_bound


def minimize(oracle, state, max_iter=10000, abs_tol=1e-8, stop=None, record_volume=False):
    """Minimize a convex function over a convex set with the ellipsoid method.

    ``oracle(x)`` returns ``("constraint", f, g)`` when ``x`` violates a
    constraint ``f(x) > 0`` with subgradient ``g``, and ``("objective", f, g)``
    when ``x`` is feasible.  Objective cuts are deep cuts at the best value
    seen so far.  The certified lower bound ``f(x) - sqrt(g^T P g)`` is
    tracked; iteration stops when the gap drops below ``abs_tol``, when
    ``stop(result)`` returns true, or when the budget runs out.
    """
    best_x, best_f, lower = None, math.inf, -math.inf
    volumes = [state.log_volume()] if record_volume else []
    start = state.iteration
    result = MinimizeResult(None, best_f, lower, state, 0, volumes)
    for _ in range(max_iter):
        kind, f, g = oracle(state.center)
        g = np.asarray(g, dtype=float)
        if kind == "objective":
            if f < best_f:
                best_x, best_f = state.center.copy(), float(f)
            support = state.support(g)
            if support == 0.0:
                # zero subgradient: the centre is a minimizer
                lower = best_f
                result = MinimizeResult(best_x, best_f, lower, state, state.iteration - start, volumes)
                break
            lower = max(lower, f - support)
            level = f - best_f
        else:
            level = f
        try:
            new = cut(state, g, level)
        except SolverError:
            break  # shape collapsed below round-off; keep the bounds found so far
        if new is None:
            if kind == "objective":
                lower = best_f
            else:
                break
        else:
            state = new
        if record_volume:
            volumes.append(state.log_volume())
        result = MinimizeResult(best_x, best_f, lower, state, state.iteration - start, volumes)
        if best_x is not None and best_f - lower <= abs_tol:
            break
        if new is None:
            break
        if stop is not None and stop(result):
            break
    return result
