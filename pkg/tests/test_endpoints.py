import math

import numpy as np
import pytest

from crbrate.endpoints import crb_min_point, minimax_dual, rate_max_point
from crbrate.model import ChannelSet, SystemConfig, generate_rayleigh_channels, multicast_rate


def test_crb_min_point(cfg):
    ch = generate_rayleigh_channels(3, 4, 0)
    point, s = crb_min_point(ch, cfg)
    assert point.crb == 0.25
    assert point.rate == pytest.approx(multicast_rate(s, ch, cfg), abs=1e-12)


def test_identical_users_give_mrt(cfg, rng):
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    ch = ChannelSet(np.stack([h, h]))
    point, s, _ = rate_max_point(ch, cfg)
    assert point.rate == pytest.approx(math.log2(1 + np.vdot(h, h).real), abs=1e-5)
    assert point.crb == math.inf
    assert np.linalg.matrix_rank(s, tol=1e-8) == 1


def test_orthogonal_users_split_evenly():
    cfg = SystemConfig(n_tx=2, n_rx=2)
    ch = ChannelSet(np.eye(2))
    point, s, _ = rate_max_point(ch, cfg)
    assert point.rate == pytest.approx(math.log2(1.5), abs=1e-5)
    assert np.allclose(s, np.diag([0.5, 0.5]), atol=1e-4)


def test_matches_grid_search_nt2():
    cfg = SystemConfig(n_tx=2, n_rx=2)
    ch = generate_rayleigh_channels(3, 2, 5)
    # S = [[a, c], [c*, P - a]], PSD iff |c|^2 <= a (P - a)
    best = 0.0
    for a in np.linspace(0, 1, 81):
        r = math.sqrt(a * (1 - a))
        for mag in np.linspace(0, r, 21):
            for ph in np.linspace(0, 2 * math.pi, 48, endpoint=False):
                c = mag * np.exp(1j * ph)
                best = max(best, multicast_rate(np.array([[a, c], [np.conj(c), 1 - a]]), ch, cfg))
    point, s, _ = rate_max_point(ch, cfg)
    assert point.rate >= best - 1e-6
    assert point.rate == pytest.approx(best, abs=1e-2)


@pytest.mark.parametrize("users,seed", [(3, 1), (8, 2), (35, 3), (5, 4)])
def test_feasible_and_certified(cfg, users, seed):
    ch = generate_rayleigh_channels(users, 4, seed)
    point, s, info = rate_max_point(ch, cfg)
    sen, _ = crb_min_point(ch, cfg)
    assert np.real(np.trace(s)) <= cfg.power * (1 + 1e-6)
    assert np.linalg.eigvalsh(s)[0] >= -1e-8 * cfg.power
    assert sen.rate <= point.rate + 1e-12 and sen.crb <= point.crb
    # weak duality: any simplex weights bound the max-min SNR
    mu = info.dual_weights
    assert np.all(mu >= -1e-12) and mu.sum() == pytest.approx(1.0)
    lam = np.linalg.eigvalsh(np.tensordot(mu, ch.gram(), axes=1))[-1]
    assert point.rate <= math.log2(1 + cfg.power * lam / cfg.noise_comm) + 1e-12
    assert info.snr_upper >= info.snr


def test_minimax_dual_bounds(cfg):
    ch = generate_rayleigh_channels(6, 4, 9)
    mu, best, lower = minimax_dual(ch, cfg)
    assert lower <= best
    lam = np.linalg.eigvalsh(np.tensordot(mu, ch.gram(), axes=1))[-1]
    assert best == pytest.approx(cfg.power * lam)
