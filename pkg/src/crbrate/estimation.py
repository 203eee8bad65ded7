"""Monte Carlo check of the sensing CRB with a least-squares target estimator.

Echo model: ``Y = G X + Z`` with ``X`` of size ``N_t x L`` (columns i.i.d.
``CN(0, S)``) and ``Z`` white with variance ``sigma_r^2``.  For fixed ``X``
the LS estimate has ``E||G_hat - G||_F^2 = sigma_r^2 N_r tr((X X^H)^{-1})``;
replacing ``X X^H`` by ``L S`` gives the CRB trace.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .linalg import check_hermitian, is_psd
from .model import crb_trace


def steering_vector(theta, n):
    """Half-wavelength uniform linear array response ``[1, e^{j pi sin(theta)}, ...]``."""
    if n < 1:
        raise ContractError("antenna count must be >= 1")
    return np.exp(1j * math.pi * math.sin(theta) * np.arange(n))


@dataclass(frozen=True)
class ScatterTarget:
    """Point scatterers: angles in radians and complex reflection coefficients."""

    angles: tuple
    gains: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        gains = tuple(complex(b) for b in self.gains)
        if not angles or len(angles) != len(gains):
            raise ContractError("need at least one scatterer, with one gain per angle")
        if any(not -math.pi / 2 < a < math.pi / 2 for a in angles):
            raise ContractError("scatterer angles must lie in (-pi/2, pi/2)")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "gains", gains)

    @classmethod
    def default(cls, count, seed):
        """``count`` scatterers at equally spaced angles with unit-modulus random phases."""
        rng = np.random.default_rng(seed)
        angles = np.linspace(-math.pi / 3, math.pi / 3, count) if count > 1 else np.zeros(1)
        phases = rng.uniform(0.0, 2.0 * math.pi, count)
        return cls(tuple(angles), tuple(np.exp(1j * phases)))


def synthesize_target(target, cfg):
    """``G = sum_m beta_m conj(a_r(theta_m)) a_t(theta_m)^H``, shape ``N_r x N_t``."""
    g = np.zeros((cfg.n_rx, cfg.n_tx), dtype=complex)
    for theta, beta in zip(target.angles, target.gains):
        a_r = steering_vector(theta, cfg.n_rx)
        a_t = steering_vector(theta, cfg.n_tx)
        g += beta * np.outer(a_r.conj(), a_t.conj())
    return g


def _cn(rng, shape, variance=1.0):
    return math.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_waveform(s, symbols, seed):
    """``N_t x L`` matrix with i.i.d. ``CN(0, S)`` columns.

    The square-root factor clips negative eigenvalues (round-off on a
    semidefinite ``S``) to zero.
    """
    s = check_hermitian(s)
    if not is_psd(s, tol=1e-12 * max(1.0, float(np.real(np.trace(s))))):
        raise ContractError("waveform covariance must be positive semidefinite")
    rng = np.random.default_rng(seed)
    w, u = np.linalg.eigh(s)
    root = u * np.sqrt(np.clip(w, 0.0, None))
    return root @ _cn(rng, (s.shape[0], symbols))


def simulate_echo(g, x, noise_radar, seed):
    """``Y = G X + Z`` with ``Z`` entries i.i.d. ``CN(0, noise_radar)``; zero noise is allowed."""
    g = np.asarray(g, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if g.shape[1] != x.shape[0]:
        raise ContractError(f"G is {g.shape} but X has {x.shape[0]} rows")
    y = g @ x
    if noise_radar > 0:
        y = y + _cn(np.random.default_rng(seed), y.shape, noise_radar)
    return y


def ls_estimate(y, x, rcond=1e-12):
    """``G_hat = Y X^H (X X^H)^{-1}``; raises when ``X X^H`` is singular."""
    x = np.asarray(x, dtype=complex)
    gram = x @ x.conj().T
    w = np.linalg.eigvalsh(gram)
    if w[0] <= rcond * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise ContractError("X X^H is singular: too few degrees of freedom to estimate G")
    return np.linalg.solve(gram.T, (np.asarray(y, dtype=complex) @ x.conj().T).T).T


def exact_mse(x, n_rx, noise_radar):
    """``sigma_r^2 N_r tr((X X^H)^{-1})``: the LS error for this particular ``X``."""
    gram = x @ x.conj().T
    return noise_radar * n_rx * float(np.sum(1.0 / np.linalg.eigvalsh(gram)))


def fixed_x_mse(g, x, noise_radar, draws, seed):
    """Empirical LS error over ``draws`` noise realizations at fixed ``X``.

    Returns ``(empirical, exact)``.
    """
    if draws < 1:
        raise ContractError("need at least one noise draw")
    seeds = np.random.SeedSequence(seed).spawn(draws)
    err = 0.0
    for ss in seeds:
        g_hat = ls_estimate(simulate_echo(g, x, noise_radar, ss), x)
        err += float(np.sum(np.abs(g_hat - g) ** 2))
    return err / draws, exact_mse(x, g.shape[0], noise_radar)


def mc_crb_check(s, target, cfg, trials, seed):
    """Average LS error over fresh waveforms and noise, against the CRB trace.

    Each trial draws its own ``X`` and ``Z`` from a substream of ``seed``.
    ``fixed_x_exact`` averages the per-trial exact value ``sigma_r^2 N_r
    tr((X X^H)^{-1})``.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    g = synthesize_target(target, cfg)
    crb = crb_trace(s, cfg)
    mse = exact = 0.0
    for ss in np.random.SeedSequence(seed).spawn(trials):
        wave_seed, noise_seed = ss.spawn(2)
        x = sample_waveform(s, cfg.symbols, wave_seed)
        g_hat = ls_estimate(simulate_echo(g, x, cfg.noise_radar, noise_seed), x)
        mse += float(np.sum(np.abs(g_hat - g) ** 2))
        exact += exact_mse(x, cfg.n_rx, cfg.noise_radar)
    mse /= trials
    exact /= trials
    return {
        "trials": trials,
        "L": cfg.symbols,
        "crb_trace": crb,
        "empirical_mse": mse,
        "fixed_x_exact": exact,
        "ratio": mse / crb,
    }
