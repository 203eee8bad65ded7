"""Joint information beam and dedicated sensing covariance via SCA.

The transmit covariance is ``S_x = S_s + w w^H``: one multicast beam ``w`` and
a sensing covariance ``S_s >= 0`` that the users see as interference.  The
SINR constraint is non-convex in ``w``; each SCA step replaces ``|h^H w|^2``
by its tangent at the current beam, which is a global lower bound, and solves
the resulting quasi-convex problem by bisection on the SINR target with an
ellipsoid feasibility search over ``(w, S_x)``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import solve_p1
from . import _p23kernel
from .ellipsoid import EllipsoidState, FeasibilityResult, find_feasible
from .encoding import FeasibilityVars, hermitian_gradient
from .errors import InfeasibleError, SolverError
from .linalg import hermitize
from .model import beamforming_sinrs, crb_trace, isotropic_covariance, quad_forms


_STATUS = {_p23kernel.FEASIBLE: "feasible", _p23kernel.INFEASIBLE: "infeasible", _p23kernel.EXHAUSTED: "exhausted"}


def taylor_lower_bound(w, w_local, h):
    """Tangent of ``|h^H w|^2`` at ``w_local``, evaluated at ``w``.

    ``2 Re(w^H h h^H w_local) - |h^H w_local|^2``; never above ``|h^H w|^2``.
    """
    h = np.asarray(h, dtype=complex)
    a = np.vdot(h, w_local)
    b = np.vdot(h, w)
    return float(2.0 * np.real(np.conj(b) * a) - abs(a) ** 2)


@dataclass
class ScaOptions:
    t_tol: float = 1e-4  # bisection width, relative to 1 + bracket top
    sca_tol: float = 1e-4  # stop when the true SINR gains less than this
    max_sca_iter: int = 30
    rho: float = 0.9  # share of the principal eigenvalue given to the initial beam
    max_ellipsoid_iter: int = None
    volume_floor: float = 1e-7  # per-dimension shrink factor declaring infeasibility
    trace: object = None  # path or text file for per-iteration CSV rows
    compiled: bool = True  # jitted search; False runs the pure-numpy reference


@dataclass
class P23Verdict:
    """Result of one feasibility search.

    ``status`` is ``"feasible"``, ``"infeasible"`` (certified by an emptying
    deep cut) or ``"exhausted"`` (volume floor or budget hit; treated as
    infeasible with low confidence).
    """

    status: str
    w: np.ndarray = None
    s_x: np.ndarray = None
    iterations: int = 0

    @property
    def feasible(self):
        return self.status == "feasible"

    @property
    def low_confidence(self):
        return self.status == "exhausted"


class _P23Oracle:
    """Constraint values and subgradients for the linearized problem at target ``t``."""

    def __init__(self, ch, cfg, gamma, w_local):
        n = cfg.n_tx
        self.n = n
        self.enc = FeasibilityVars(n)
        self.gamma = gamma
        self.power = cfg.power
        self.sigma2 = cfg.noise_comm
        self.eps_pd = 1e-8 * cfg.power / n
        h = ch.channels
        self.a = h.conj() @ np.asarray(w_local, dtype=complex)  # h_k^H w_local
        c = h * self.a[:, None]  # h_k h_k^H w_local
        zeros_s = np.zeros((ch.users, n * n))
        # w -> psi_k(w) = 2 Re(w^H c_k) - |a_k|^2 is affine
        self.psi_grad = np.hstack([2.0 * self.enc.beam_gradient(c), zeros_s])
        self.q_grad = np.hstack([np.zeros((ch.users, 2 * n)), hermitian_gradient(ch.gram())])
        self.psi_const = np.abs(self.a) ** 2
        self.power_grad = np.concatenate([np.zeros(2 * n), hermitian_gradient(np.eye(n))])

    def psi(self, x):
        return self.psi_grad @ x - self.psi_const

    def linear_sinr(self, x):
        """``min_k psi_k / (q_k - psi_k + sigma^2)``: the linearized SINR of ``x``."""
        psi = self.psi(x)
        den = self.q_grad @ x - psi + self.sigma2
        return float(np.min(psi / den))

    def sinr_gradients(self, t):
        return t * self.q_grad - (1.0 + t) * self.psi_grad

    def _s_block(self, g):
        return np.concatenate([np.zeros(2 * self.n), hermitian_gradient(g)])

    def __call__(self, x, t):
        w, s = self.enc.decode(x)
        # (1 + t) psi_k >= t (q_k + sigma^2)
        f_sinr = t * (self.q_grad @ x + self.sigma2) - (1.0 + t) * self.psi(x)
        g_sinr = self.sinr_gradients(t)

        ev, u = np.linalg.eigh(s)
        if ev[0] <= self.eps_pd:
            v = u[:, 0]
            f_crb = self.eps_pd - ev[0]
            g_crb = -self._s_block(np.outer(v, v.conj()))
        else:
            f_crb = float(np.sum(1.0 / ev)) - self.gamma
            g_crb = self._s_block(-(u / ev**2) @ u.conj().T)

        f_pow = float(np.real(np.trace(s))) - self.power

        ev2, u2 = np.linalg.eigh(s - np.outer(w, w.conj()))
        v = u2[:, 0]
        vv = np.outer(v, v.conj())
        g_psd = np.concatenate([2.0 * self.enc.beam_gradient(vv @ w), hermitian_gradient(-vv)])

        f = np.concatenate([f_sinr, [f_crb, f_pow, -ev2[0]]])
        grads = np.vstack([g_sinr, g_crb, self.power_grad, g_psd])
        return f, grads


def _initial_state(oracle, w_local, s_local, power):
    center = oracle.enc.encode(w_local, s_local)
    # every feasible point has ||w||^2 <= P and ||S_x||_F <= P
    radius = 2.0 * math.sqrt(power + power * power) + float(np.linalg.norm(center))
    return EllipsoidState.ball(center, radius)


def feasibility_p23(ch, cfg, gamma_bar, t, w_local, opts=None, s_local=None, _oracle=None):
    """Find ``(w, S_x)`` meeting the linearized SINR target ``t`` and the other constraints.

    The search starts from an ellipsoid centred at ``(w_local, s_local)``
    (isotropic covariance when ``s_local`` is omitted).
    """
    if t < 0:
        raise ValueError("SINR target must be non-negative")
    opts = opts or ScaOptions()
    oracle = _oracle or _P23Oracle(ch, cfg, cfg.gamma_from_crb(gamma_bar), w_local)
    if s_local is None:
        s_local = isotropic_covariance(cfg)
    state = _initial_state(oracle, w_local, s_local, cfg.power)
    dim = state.dim
    max_iter = opts.max_ellipsoid_iter or 400 * dim * dim
    floor = state.log_volume() + dim * math.log(opts.volume_floor)
    if opts.compiled:
        code, x, iters = _p23kernel.search(
            state.center, state.shape, float(t), oracle.sinr_gradients(t), oracle.q_grad,
            oracle.psi_grad, oracle.psi_const, oracle.power_grad, oracle.sigma2,
            oracle.gamma, oracle.power, oracle.eps_pd, oracle.n, max_iter, floor,
        )
        res = FeasibilityResult(_STATUS[code], x if code == _p23kernel.FEASIBLE else None, iters)
    else:
        res = find_feasible(lambda x: oracle(x, t), state, max_iter=max_iter, min_log_volume=floor)
    if not res.feasible:
        return P23Verdict(res.status, iterations=res.iterations)
    w, s = oracle.enc.decode(res.x)
    return P23Verdict("feasible", w, hermitize(s), res.iterations)


@dataclass
class P22Result:
    t_linear: float  # best linearized SINR certified feasible
    t_upper: float  # smallest target found infeasible
    w: np.ndarray
    s_x: np.ndarray
    steps: int
    low_confidence: int  # infeasible verdicts from exhaustion
    ellipsoid_iterations: int


def solve_p22(ch, cfg, gamma_bar, w_local, opts=None, s_local=None, t_lo=0.0, t_hi=None):
    """Bisection on the linearized SINR target.

    The bracket defaults to ``[0, P max_k ||h_k||^2 / sigma^2]``; callers may
    tighten it.  ``(w_local, s_local)`` must be feasible (the default pair
    ``w_local = 0`` with the isotropic covariance is, at ``t = 0``).  A
    feasible point lifts the lower end to its own linearized SINR.
    """
    opts = opts or ScaOptions()
    if s_local is None:
        s_local = isotropic_covariance(cfg)
    if t_hi is None:
        t_hi = cfg.power * float(np.max(ch.gains())) / cfg.noise_comm
    oracle = _P23Oracle(ch, cfg, cfg.gamma_from_crb(gamma_bar), w_local)
    best_w = np.asarray(w_local, dtype=complex)
    best_s = s_local
    lo, hi = t_lo, t_hi
    tol = opts.t_tol * (1.0 + t_hi)
    steps = weak = total = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = feasibility_p23(ch, cfg, gamma_bar, mid, w_local, opts, s_local, _oracle=oracle)
        total += v.iterations
        steps += 1
        if v.feasible:
            x = oracle.enc.encode(v.w, v.s_x)
            lo = min(max(mid, oracle.linear_sinr(x)), hi)
            best_w, best_s = v.w, v.s_x
        else:
            weak += v.low_confidence
            hi = mid
    return P22Result(lo, hi, best_w, best_s, steps, weak, total)


@dataclass
class BeamformingSolution:
    w: np.ndarray
    s_x: np.ndarray
    s_s: np.ndarray
    t: float
    rate: float
    iterations: int
    history: list = field(default_factory=list)  # true min SINR after each accepted iterate
    diagnostics: dict = field(default_factory=dict)


def true_sinr(w, s_x, ch, cfg):
    return float(np.min(beamforming_sinrs(w, hermitize(s_x - np.outer(w, w.conj())), ch, cfg)))


def initial_beam(s, rho):
    """Beam along the principal eigenvector carrying ``rho`` of its eigenvalue."""
    ev, u = np.linalg.eigh(hermitize(s))
    return math.sqrt(rho * max(ev[-1], 0.0)) * u[:, -1]


def _residuals(w, s_x, cfg, gamma_bar):
    s_s = hermitize(s_x - np.outer(w, w.conj()))
    return {
        "crb_excess": crb_trace(hermitize(s_x), cfg) - gamma_bar,
        "power_excess": float(np.real(np.trace(s_x))) - cfg.power,
        "sensing_min_eig": float(np.linalg.eigvalsh(s_s)[0]),
    }


def solve_p2_sca(ch, cfg, gamma_bar, w_init=None, opts=None, s_init=None, p1=None):
    """SCA for the single-beam design under CRB and power budgets.

    Without ``w_init`` the loop starts from the CRB-constrained optimal
    covariance (solved here unless ``p1`` is passed): ``S_x`` is that
    covariance and ``w`` its principal eigenvector carrying a share ``rho``
    of the principal eigenvalue.  Each accepted iterate strictly raises the
    true minimum SINR, so ``history`` is non-decreasing.
    """
    opts = opts or ScaOptions()
    ch.check(cfg)
    if gamma_bar < cfg.crb_min * (1 - 1e-9):
        raise InfeasibleError(f"CRB threshold {gamma_bar} is below CRB_min = {cfg.crb_min}")
    if p1 is None:
        p1 = solve_p1(ch, cfg, gamma_bar)
    t_upper = p1.diagnostics.get("t_upper", p1.t_star) / cfg.noise_comm
    if s_init is None:
        s_init = p1.covariance
    init = "given" if w_init is not None else "p1"
    if w_init is None:
        w_init = initial_beam(s_init, opts.rho)
    w = np.asarray(w_init, dtype=complex)
    s = hermitize(s_init)
    t_hi = min(cfg.power * float(np.max(ch.gains())) / cfg.noise_comm, t_upper * (1 + 1e-9))

    t = true_sinr(w, s, ch, cfg)
    history = [t]
    sink = _ScaTrace(opts.trace)
    sink.write(0, t, _residuals(w, s, cfg, gamma_bar))
    stats = {"bisection_steps": 0, "low_confidence": 0, "ellipsoid_iterations": 0}
    it = 0
    try:
        for it in range(1, opts.max_sca_iter + 1):
            # tangency: the current pair meets its own linearization at t
            res = solve_p22(ch, cfg, gamma_bar, w, opts, s_local=s, t_lo=max(t, 0.0), t_hi=t_hi)
            stats["bisection_steps"] += res.steps
            stats["low_confidence"] += res.low_confidence
            stats["ellipsoid_iterations"] += res.ellipsoid_iterations
            t_new = true_sinr(res.w, res.s_x, ch, cfg)
            if not t_new > t:
                break
            w, s, gain = res.w, res.s_x, t_new - t
            t = t_new
            history.append(t)
            sink.write(it, t, _residuals(w, s, cfg, gamma_bar))
            if gain < opts.sca_tol:
                break
    finally:
        sink.close()

    s_s = hermitize(s - np.outer(w, w.conj()))
    diag = _residuals(w, s, cfg, gamma_bar)
    diag.update(stats, t_upper=t_upper, init=init)
    if diag["sensing_min_eig"] < -1e-8 * cfg.power:
        raise SolverError("sensing covariance lost positive semidefiniteness", diag)
    return BeamformingSolution(w, s, s_s, t, float(np.log2(1.0 + t)), it, history, diag)


class _ScaTrace:
    def __init__(self, target):
        self._own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        self._fh = open(target, "w", newline="") if self._own else target
        self._writer = None
        if self._fh is not None:
            self._writer = csv.writer(self._fh)
            self._writer.writerow(["iteration", "t", "crb_excess", "power_excess", "sensing_min_eig"])

    def write(self, iteration, t, res):
        if self._writer is not None:
            self._writer.writerow(
                [iteration, repr(t), repr(res["crb_excess"]), repr(res["power_excess"]), repr(res["sensing_min_eig"])]
            )

    def close(self):
        if self._own and self._fh is not None:
            self._fh.close()
