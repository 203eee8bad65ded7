"""The two anchor points of the CRB-rate region.

* CRB minimization: isotropic transmission ``S = (P/N_t) I``.
* Rate maximization: ``max min_k h_k^H S h_k`` under the power budget, solved
  by bisection on the SNR target with an ellipsoid feasibility search over
  Hermitian ``S``.  A minimax dual ``min_mu P lambda_max(sum_k mu_k H_k)`` is
  tracked alongside to bracket the optimum.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .ellipsoid import EllipsoidState, find_feasible, minimize
from .encoding import FeasibilityVars, hermitian_gradient
from .errors import SolverError
from .linalg import hermitize
from .model import CrPoint, crb_trace, isotropic_covariance, multicast_rate, quad_forms


def crb_min_point(ch, cfg):
    """CRB-minimizing point: ``(CRB_min, R_sen)`` and the isotropic covariance."""
    ch.check(cfg)
    s = isotropic_covariance(cfg)
    crb = cfg.crb_min
    rate = math.log2(1.0 + cfg.power / cfg.n_tx * float(np.min(ch.gains())) / cfg.noise_comm)
    return CrPoint(crb, rate), s


@dataclass
class RateMaxInfo:
    """Certificates collected while solving the rate-maximization problem."""

    snr: float
    snr_upper: float
    dual_weights: np.ndarray
    bisection_steps: int = 0
    ellipsoid_iterations: int = 0
    verdicts: list = field(default_factory=list)


def minimax_dual(ch, cfg, max_iter=None, rtol=1e-7):
    """Minimize ``P lambda_max(sum_k mu_k H_k)`` over the probability simplex.

    Every simplex point gives an upper bound on the max-min received power
    (weak duality).  Returns ``(mu_full, best_value, certified_lower_bound)``.
    """
    k = ch.users
    h = ch.channels
    gram = ch.gram()
    n = k - 1
    p = cfg.power

    def oracle(z):
        neg = int(np.argmin(z))
        if z[neg] < 0:
            g = np.zeros(n)
            g[neg] = -1.0
            return "constraint", -z[neg], g
        if z.sum() > 1.0:
            return "constraint", z.sum() - 1.0, np.ones(n)
        mu = np.append(z, 1.0 - z.sum())
        w, u = np.linalg.eigh(np.tensordot(mu, gram, axes=1))
        v = u[:, -1]
        proj = np.abs(h.conj() @ v) ** 2
        return "objective", p * w[-1], p * (proj[:-1] - proj[-1])

    state = EllipsoidState.covering_box(np.zeros(n), np.ones(n), np.full(n, 1.0 / k))
    scale = p * float(np.max(ch.gains()))
    res = minimize(oracle, state, max_iter=max_iter or 60 * (n + 1) ** 2 + 200, abs_tol=rtol * scale)
    if res.x is None:
        raise SolverError("minimax dual found no feasible weights")
    mu = np.append(res.x, 1.0 - res.x.sum())
    return mu, res.value, res.lower_bound


def _span_projector(ch, rtol=1e-10):
    u, sv, _ = np.linalg.svd(ch.channels.T, full_matrices=False)
    basis = u[:, sv > rtol * sv[0]]
    return basis @ basis.conj().T


def polish_rate_covariance(s, ch, cfg):
    """Drop power outside ``span{h_k}`` and rescale to the full budget.

    Neither step can lower any ``h_k^H S h_k``.
    """
    proj = _span_projector(ch)
    s = hermitize(proj @ s @ proj)
    return s * (cfg.power / float(np.real(np.trace(s))))


def snr_feasibility(ch, cfg, snr, max_iter=None, floor=1e-9):
    """Search ``S >= 0`` with ``tr(S) <= P`` and ``h_k^H S h_k >= snr * sigma^2``."""
    n_tx = cfg.n_tx
    enc = FeasibilityVars(n_tx, with_beam=False)
    need = snr * cfg.noise_comm
    quad_grad = hermitian_gradient(ch.gram())
    power_grad = hermitian_gradient(np.eye(n_tx))

    def oracle(x):
        _, s = enc.decode(x)
        w, u = np.linalg.eigh(s)
        v = u[:, 0]
        f = np.concatenate([need - quad_forms(s, ch), [np.real(np.trace(s)) - cfg.power, -w[0]]])
        grads = np.vstack([-quad_grad, power_grad, -hermitian_gradient(np.outer(v, v.conj()))])
        return f, grads

    center = enc.encode(None, isotropic_covariance(cfg))
    state = EllipsoidState.ball(center, cfg.power)
    dim = enc.dim
    res = find_feasible(
        oracle,
        state,
        max_iter=max_iter or 120 * dim * dim,
        min_log_volume=state.log_volume() + dim * math.log(floor),
    )
    s = None if res.x is None else hermitize(enc.decode(res.x)[1])
    return res, s


def rate_max_point(ch, cfg, tol=1e-5, max_steps=200):
    """Rate-maximizing point ``(CRB_com, R_max)`` and the covariance achieving it.

    ``CRB_com`` is ``inf`` when the covariance is rank deficient.  The third
    return value carries the dual certificate and solver counters.
    """
    ch.check(cfg)
    mu, dual_best, dual_lower = minimax_dual(ch, cfg)
    sigma2 = cfg.noise_comm
    snr_hi = min(cfg.power * float(np.max(ch.gains())), dual_best) / sigma2

    # starting lower bound: isotropic, or full power on the dual's top eigenvector
    w, u = np.linalg.eigh(np.tensordot(mu, ch.gram(), axes=1))
    candidates = [isotropic_covariance(cfg), cfg.power * np.outer(u[:, -1], u[:, -1].conj())]
    snrs = [float(np.min(quad_forms(c, ch))) / sigma2 for c in candidates]
    best = int(np.argmax(snrs))
    snr_lo, s_best = snrs[best], candidates[best]

    info = RateMaxInfo(snr_lo, snr_hi, mu)
    steps = 0
    while snr_hi - snr_lo > tol * (1.0 + snr_hi):
        if steps >= max_steps:
            raise SolverError(
                "rate maximization bisection did not converge",
                {"snr_lower": snr_lo, "snr_upper": snr_hi, "covariance": s_best},
            )
        mid = 0.5 * (snr_lo + snr_hi)
        res, s = snr_feasibility(ch, cfg, mid)
        info.ellipsoid_iterations += res.iterations
        info.verdicts.append((mid, res.status))
        if res.feasible:
            achieved = float(np.min(quad_forms(s, ch))) / sigma2
            snr_lo, s_best = max(mid, achieved), s
        else:
            snr_hi = mid
        steps += 1
    info.bisection_steps = steps

    s_com = polish_rate_covariance(s_best, ch, cfg)
    rate = multicast_rate(s_com, ch, cfg)
    info.snr = 2.0**rate - 1.0
    info.snr_upper = snr_hi
    return CrPoint(crb_trace(s_com, cfg), rate), s_com, info
