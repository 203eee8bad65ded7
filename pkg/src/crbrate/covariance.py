"""CRB-constrained multicast rate maximization by Lagrange duality.

With ``Gamma = CRB_bar * L / (N_r sigma_r^2)`` the problem is

    max t  s.t.  h_k^H S h_k >= t,  tr(S^{-1}) <= Gamma,  tr(S) <= P,  S >= 0.

The dual variables are the user weights ``mu`` (on the simplex; ``mu_K`` is
eliminated), ``lambda1`` for the CRB budget and ``lambda2`` for power.  For
``lambda1 > 0`` the Lagrangian is minimized in closed form by
``S* = sqrt(lambda1) A^{-1/2}`` with ``A = lambda2 I - sum_k mu_k h_k h_k^H``,
which gives the dual function ``2 sqrt(lambda1) tr(A^{1/2}) - lambda1 Gamma -
lambda2 P``.  The dual is maximized with the ellipsoid method and the primal
covariance is read off the dual solution.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .ellipsoid import EllipsoidState, cut
from .endpoints import minimax_dual, rate_max_point
from .errors import InfeasibleError, NotApplicableError, SolverError
from .linalg import evd, hermitize
from .model import CrPoint, crb_trace, isotropic_covariance, quad_forms


class InfeasibleDualError(InfeasibleError):
    """``A(lambda2, mu)`` has a negative eigenvalue: the dual function is -inf."""


@dataclass(frozen=True)
class DualPoint:
    mu: np.ndarray
    lambda1: float
    lambda2: float

    @classmethod
    def from_vector(cls, z):
        z = np.asarray(z, dtype=float)
        return cls(z[:-2].copy(), float(z[-2]), float(z[-1]))

    def to_vector(self):
        return np.concatenate([self.mu, [self.lambda1, self.lambda2]])

    def full_mu(self):
        """All K weights, with ``mu_K = 1 - sum(mu_1..mu_{K-1})``."""
        return np.append(self.mu, 1.0 - np.sum(self.mu))

    def in_domain(self, tol=0.0):
        return bool(
            np.all(self.full_mu() >= -tol) and self.lambda1 >= -tol and self.lambda2 >= -tol
        )


def weighted_gram(mu_full, ch):
    """``sum_k mu_k h_k h_k^H``."""
    h = ch.channels
    return hermitize((h.T * mu_full) @ h.conj())


def build_a_matrix(dual, ch):
    """``A = lambda2 I - sum_k mu_k h_k h_k^H`` with the implied ``mu_K``."""
    return dual.lambda2 * np.eye(ch.n_tx) - weighted_gram(dual.full_mu(), ch)


def _a_tolerance(dual, ch):
    return 1e-12 * max(dual.lambda2, float(np.max(ch.gains())), 1e-300)


def eval_dual(dual, ch, cfg, gamma):
    """Dual function value and the Lagrangian minimizer ``S*``.

    ``gamma`` is the trace-inverse budget (already rescaled from the CRB).
    Returns ``(g, S_star)``; ``S_star`` is ``None`` when ``lambda1 == 0`` (the
    value is then ``-lambda2 P`` with ``S* = 0``) or when ``A`` is singular
    (the minimizer diverges along the null space, although ``g`` stays finite).
    """
    a = build_a_matrix(dual, ch)
    dec = evd(a)
    alpha = dec.eigenvalues
    if alpha[-1] < -_a_tolerance(dual, ch):
        raise InfeasibleDualError(f"A has negative eigenvalue {alpha[-1]:.3e}")
    alpha = np.clip(alpha, 0.0, None)
    if dual.lambda1 <= 0.0:
        return -dual.lambda2 * cfg.power, None
    root = math.sqrt(dual.lambda1)
    value = 2.0 * root * np.sum(np.sqrt(alpha)) - dual.lambda1 * gamma - dual.lambda2 * cfg.power
    if alpha[-1] <= _a_tolerance(dual, ch):
        return float(value), None
    u = dec.eigenvectors
    s_star = hermitize((u * (root / np.sqrt(alpha))) @ u.conj().T)
    return float(value), s_star


@dataclass(frozen=True)
class DualCut:
    """One ellipsoid cut for the (negated) dual problem.

    ``kind`` is ``"objective"`` (``value`` is ``-g``) or ``"constraint"``
    (``value`` is the amount of violation); ``tag`` names the constraint.
    """

    kind: str
    tag: str
    value: float
    vector: np.ndarray


def dual_subgradients(dual, s_star, ch, cfg, gamma):
    """Return the single cut used at ``dual``.

    If any of ``mu_k >= 0`` (k < K), ``mu_K >= 0``, ``lambda1 >= 0``,
    ``lambda2 >= 0`` or ``A >= 0`` is violated, that constraint's subgradient
    is returned; otherwise the subgradient of ``-g``:
    ``[tr((H_k - H_K) S*)]_k, Gamma - tr(S*^{-1}), P - tr(S*)``.
    ``s_star`` may be ``None``, in which case it is recomputed.
    """
    k1 = len(dual.mu)
    n = k1 + 2
    mu = dual.mu
    neg = int(np.argmin(mu)) if k1 else 0
    if k1 and mu[neg] < 0.0:
        return DualCut("constraint", f"mu{neg + 1}", -mu[neg], -np.eye(n)[neg])
    mu_last = 1.0 - np.sum(mu)
    if mu_last < 0.0:
        vec = np.zeros(n)
        vec[:k1] = 1.0
        return DualCut("constraint", f"mu{k1 + 1}", -mu_last, vec)
    if dual.lambda1 <= 0.0:
        return DualCut("constraint", "lambda1", -dual.lambda1, -np.eye(n)[k1])
    if dual.lambda2 < 0.0:
        return DualCut("constraint", "lambda2", -dual.lambda2, -np.eye(n)[k1 + 1])

    a = build_a_matrix(dual, ch)
    dec = evd(a)
    alpha_min = dec.eigenvalues[-1]
    floor = _a_tolerance(dual, ch)
    if alpha_min <= floor:
        v = dec.eigenvectors[:, -1]
        proj = np.abs(ch.channels.conj() @ v) ** 2
        vec = np.concatenate([proj[:-1] - proj[-1], [0.0, -1.0]])
        return DualCut("constraint", "psd", floor - alpha_min, vec)

    if s_star is None:
        value, s_star = eval_dual(dual, ch, cfg, gamma)
    else:
        value = eval_dual(dual, ch, cfg, gamma)[0]
    q = quad_forms(s_star, ch)
    trace_inv = float(np.sum(1.0 / np.linalg.eigvalsh(s_star)))
    vec = np.concatenate(
        [q[:-1] - q[-1], [gamma - trace_inv, cfg.power - float(np.real(np.trace(s_star)))]]
    )
    return DualCut("objective", "objective", -value, vec)


def recover_primal(mu_full, ch, cfg, gamma):
    """Best ``(lambda1, lambda2)`` for fixed weights, and the covariance it yields.

    Maximizing the dual function over ``lambda1`` gives
    ``sqrt(lambda1) = tr(A^{1/2}) / Gamma``; stationarity in ``lambda2`` is
    ``tr(A^{1/2}) tr(A^{-1/2}) = P Gamma``, solved by a bracketed root search.
    The resulting ``S = sqrt(lambda1) A^{-1/2}`` meets both the power and the
    CRB budgets with equality.  Returns ``(S, DualPoint, g)``.
    """
    nu, u = np.linalg.eigh(weighted_gram(mu_full, ch))
    top = nu[-1]
    gaps = np.clip(top - nu, 0.0, None)
    target = cfg.power * gamma
    scale = max(top, float(np.max(ch.gains())) * 1e-12, 1e-300)

    def excess(log_s):
        alpha = gaps + math.exp(log_s)
        root = np.sqrt(alpha)
        return math.log(np.sum(root) * np.sum(1.0 / root)) - math.log(target)

    lo = math.log(scale * 1e-14)
    hi = math.log(scale)
    if excess(lo) <= 0.0:
        log_s = lo
    else:
        while excess(hi) > 0.0:
            hi += math.log(4.0)
        log_s = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    alpha = gaps + math.exp(log_s)
    lambda2 = top + math.exp(log_s)
    root_l1 = np.sum(np.sqrt(alpha)) / gamma
    s = hermitize((u * (root_l1 / np.sqrt(alpha))) @ u.conj().T)
    value = root_l1**2 * gamma - lambda2 * cfg.power
    return s, DualPoint(np.asarray(mu_full[:-1], dtype=float), root_l1**2, lambda2), float(value)


def project_weights(mu):
    """Clip negative weights (including the implied last one) and renormalize."""
    full = np.clip(np.append(mu, 1.0 - np.sum(mu)), 0.0, None)
    total = full.sum()
    if total <= 0.0:
        return np.full(len(full), 1.0 / len(full))
    return full / total


@dataclass
class P1Options:
    gap_tol: float = 1e-4
    max_iter: int = None
    check_every: int = None
    trace: object = None  # path or writable text file for per-iteration CSV rows
    endpoint: tuple = None  # (CrPoint, S_com) of the rate-maximization point, if known


@dataclass
class P1Solution:
    covariance: np.ndarray
    t_star: float
    rate: float
    dual: DualPoint
    gap: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def point(self):
        return CrPoint(self.diagnostics["crb"], self.rate)


def _solution(s, ch, cfg, dual, gap, **diag):
    q = quad_forms(s, ch)
    t_star = float(np.min(q))
    eig = np.linalg.eigvalsh(s)
    diag.update(
        crb=crb_trace(hermitize(s), cfg),
        power=float(np.real(np.trace(s))),
        min_eigenvalue=float(eig[0]),
        argmin_users=[int(k) for k in np.flatnonzero(q <= t_star * (1 + 1e-9) + 1e-300)],
    )
    rate = float(np.log2(1.0 + t_star / cfg.noise_comm))
    return P1Solution(s, t_star, rate, dual, gap, diag)


def dual_search_box(ch, cfg, gamma):
    """Box guaranteed to contain the optimal ``(lambda1, lambda2)``.

    Any strictly feasible ``S0 = c I`` gives ``lambda1 * e1 + lambda2 * e2 <=
    t_up - t0`` at the dual optimum, where ``e1, e2`` are its CRB and power
    slacks, ``t0 = c min_k ||h_k||^2`` and ``t_up`` an upper bound on ``t*``.
    """
    n = cfg.n_tx
    gains = ch.gains()
    c = 0.5 * (n / gamma + cfg.power / n)
    slack_crb = gamma - n / c
    slack_power = cfg.power - n * c
    t_up = cfg.power * min(
        float(np.max(gains)), float(np.linalg.eigvalsh(weighted_gram(np.full(ch.users, 1.0 / ch.users), ch))[-1])
    )
    spread = max(t_up - c * float(np.min(gains)), 1e-12 * t_up)
    return spread / slack_crb, spread / slack_power, t_up


class _TraceSink:
    def __init__(self, target):
        self._own = isinstance(target, str)
        self._fh = open(target, "w", newline="") if self._own else target
        self._writer = csv.writer(self._fh) if self._fh is not None else None
        if self._writer:
            self._writer.writerow(["iteration", "dual_value", "cut", "log_volume"])

    def write(self, iteration, value, tag, log_volume):
        if self._writer:
            self._writer.writerow([iteration, repr(value), tag, repr(log_volume)])

    def close(self):
        if self._own:
            self._fh.close()


def _best_blend(a, b, ch, cfg, gamma):
    """Best ``(1 - theta) a + theta b`` under the CRB budget; ``a`` must meet it.

    ``tr(S^{-1})`` is convex along the segment, so the feasible thetas form an
    interval ``[0, theta_max]``; the worst-user power is concave in theta.
    """

    def blend(theta):
        return hermitize((1.0 - theta) * a + theta * b)

    def slack(theta):
        w = np.linalg.eigvalsh(blend(theta))
        return math.inf if w[0] <= 0.0 else float(np.sum(1.0 / w)) - gamma

    if slack(1.0) <= 0.0:
        theta_max = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if slack(mid) <= 0.0 else (lo, mid)
        theta_max = lo
    res = minimize_scalar(
        lambda th: -float(np.min(quad_forms(blend(th), ch))),
        bounds=(0.0, theta_max),
        method="bounded",
        options={"xatol": 1e-12},
    )
    ends = [0.0, theta_max, float(res.x)]
    theta = max(ends, key=lambda th: float(np.min(quad_forms(blend(th), ch))))
    return blend(theta)


def isotropic_solution(ch, cfg, gamma_bar):
    s = isotropic_covariance(cfg)
    return _solution(s, ch, cfg, None, 0.0, iterations=0, method="isotropic")


def solve_p1(ch, cfg, gamma_bar, opts=None):
    """Maximize the multicast rate subject to ``CRB(S) <= gamma_bar`` and ``tr(S) <= P``.

    Thresholds within ``1e-9`` (relative) of CRB_min return the isotropic
    covariance, the only feasible point there.  If ``opts.endpoint`` is given
    and its CRB is within the threshold, the rate-maximizing covariance is
    returned directly.
    """
    opts = opts or P1Options()
    ch.check(cfg)
    crb_min = cfg.crb_min
    if gamma_bar < crb_min * (1 - 1e-9):
        raise InfeasibleError(f"CRB threshold {gamma_bar} is below CRB_min = {crb_min}")
    if gamma_bar <= crb_min * (1 + 1e-9):
        return isotropic_solution(ch, cfg, gamma_bar)
    if opts.endpoint is not None:
        point, s_com = opts.endpoint
        if point.crb <= gamma_bar:
            return _solution(hermitize(s_com), ch, cfg, None, 0.0, iterations=0, method="rate-max endpoint")

    # Isotropic transmission may already be rate-optimal; the CRB budget is
    # then slack and the dual search below would stall at lambda1 = 0.
    iso = isotropic_covariance(cfg)
    t_iso = float(np.min(quad_forms(iso, ch)))
    _, t_upper, _ = minimax_dual(ch, cfg, rtol=0.1 * opts.gap_tol)
    iso_gap = (t_upper - t_iso) / (1.0 + t_upper)
    if iso_gap <= opts.gap_tol:
        return _solution(iso, ch, cfg, None, max(iso_gap, 0.0), iterations=0, method="isotropic", t_upper=t_upper)

    gamma = cfg.gamma_from_crb(gamma_bar)
    k = ch.users
    n = k + 1
    l1_hi, l2_hi, _ = dual_search_box(ch, cfg, gamma)
    lo = np.zeros(n)
    hi = np.concatenate([np.ones(k - 1), [l1_hi, l2_hi]])
    center = np.concatenate([np.full(k - 1, 1.0 / k), [l1_hi / 2, l2_hi / 2]])
    state = EllipsoidState.covering_box(lo, hi, center)
    max_iter = opts.max_iter or max(5000, 120 * n * n)
    check_every = opts.check_every or max(10, 2 * n)

    sink = _TraceSink(opts.trace)
    best_value = -math.inf
    best_mu = None
    best = None  # (t, S, dual)
    gap = math.inf
    volumes = []
    try:
        for it in range(1, max_iter + 1):
            dual = DualPoint.from_vector(state.center)
            c = dual_subgradients(dual, None, ch, cfg, gamma)
            if c.kind == "objective":
                g = -c.value
                if g > best_value:
                    best_value, best_mu = g, dual.full_mu()
                level = max(best_value - g, 0.0)
            else:
                level = c.value
            sink.write(it, -c.value if c.kind == "objective" else math.nan, c.tag, state.log_volume())
            try:
                new = cut(state, c.vector, level)
            except SolverError:
                new = None  # ellipsoid collapsed; settle with what we have
            if new is not None:
                state = new
            volumes.append(state.log_volume())

            if best_mu is not None and (it % check_every == 0 or new is None or it == max_iter):
                for mu in (best_mu, project_weights(state.center[:-2])):
                    s, polished, value = recover_primal(mu, ch, cfg, gamma)
                    if value > best_value:
                        best_value, best_mu = value, mu
                    t = float(np.min(quad_forms(s, ch)))
                    if best is None or t > best[0]:
                        best = (t, s, polished)
                gap = (-best_value - best[0]) / (1.0 + abs(best_value))
                if gap <= opts.gap_tol or new is None:
                    break
    finally:
        sink.close()

    bounds = {
        "t_lower": None if best is None else best[0],
        "t_upper": -best_value,
        "iterations": it,
        "gap": gap,
    }
    method = "dual ellipsoid"
    if best is not None and gap > opts.gap_tol:
        # The CRB budget may be inactive at the optimum (lambda1 = 0), where the
        # closed-form recovery cannot reach it; blends with the rate-max
        # covariance can.
        point, s_com = opts.endpoint if opts.endpoint is not None else rate_max_point(ch, cfg)[:2]
        iso = isotropic_covariance(cfg)
        for a, b in ((iso, s_com), (best[1], s_com)):
            s = _best_blend(a, b, ch, cfg, gamma)
            t = float(np.min(quad_forms(s, ch)))
            if t > best[0]:
                best = (t, s, None)
                method = "endpoint blend"
        gap = (-best_value - best[0]) / (1.0 + abs(best_value))
        bounds.update(t_lower=best[0], gap=gap)
    if best is None or gap > opts.gap_tol:
        raise SolverError(f"dual ellipsoid stopped with relative gap {gap:.3e}", bounds)
    t, s, polished = best
    return _solution(
        s,
        ch,
        cfg,
        polished,
        gap,
        iterations=it,
        method=method,
        t_upper=-best_value,
        log_volumes=volumes,
    )


@dataclass
class BeamDecomposition:
    """Split of the optimal covariance into communication and sensing parts."""

    isac_part: np.ndarray
    sensing_part: np.ndarray
    n_com: int
    deltas: np.ndarray  # negative eigenvalues of B, non-increasing
    isac_powers: np.ndarray
    sensing_powers: np.ndarray
    reconstruction_error: float


def decompose_beams(sol, ch, rank_rtol=1e-9):
    """Split ``S*`` along the eigenspaces of ``B = -sum_k mu_k h_k h_k^H``.

    Eigenvectors with non-zero ``delta_i`` span the communication subspace and
    carry ``sqrt(lambda1) (lambda2 + delta_i)^{-1/2}``; the null space of B
    gets equal power ``sqrt(lambda1 / lambda2)``.
    """
    dual = sol.dual
    if dual is None or dual.lambda1 <= 0.0:
        raise NotApplicableError("decomposition needs a dual solution with lambda1 > 0")
    b = -weighted_gram(dual.full_mu(), ch)
    w, u = np.linalg.eigh(b)  # ascending: most negative first
    cutoff = rank_rtol * max(float(np.max(np.abs(w))), 1e-300)
    com = w < -cutoff
    n_com = int(np.count_nonzero(com))
    root = math.sqrt(dual.lambda1)
    u_com, u_sen = u[:, com], u[:, ~com]
    deltas = w[com][::-1]
    u_com = u_com[:, ::-1]
    isac_powers = root / np.sqrt(dual.lambda2 + deltas)
    sensing_powers = np.full(u_sen.shape[1], root / math.sqrt(dual.lambda2))
    isac = (u_com * isac_powers) @ u_com.conj().T
    sensing = (u_sen * sensing_powers) @ u_sen.conj().T
    total = isac + sensing
    err = float(np.linalg.norm(total - sol.covariance) / np.linalg.norm(sol.covariance))
    return BeamDecomposition(isac, sensing, n_com, deltas, isac_powers, sensing_powers, err)
