import csv
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from crbrate.beamforming import (
    ScaOptions,
    _P23Oracle,
    feasibility_p23,
    initial_beam,
    solve_p22,
    solve_p2_sca,
    taylor_lower_bound,
    true_sinr,
)
from crbrate.covariance import solve_p1
from crbrate.errors import InfeasibleError
from crbrate.model import ChannelSet, beamforming_rate, crb_trace, generate_rayleigh_channels


def _cvec(rng, n=4):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_taylor_examples(rng):
    h, wl = _cvec(rng), _cvec(rng)
    assert taylor_lower_bound(wl, wl, h) == pytest.approx(abs(np.vdot(h, wl)) ** 2, abs=1e-12)
    assert taylor_lower_bound(_cvec(rng), np.zeros(4), h) == 0.0
    for _ in range(1000):
        w, wl, h = _cvec(rng), _cvec(rng), _cvec(rng)
        assert taylor_lower_bound(w, wl, h) <= abs(np.vdot(h, w)) ** 2 + 1e-12


@pytest.mark.parametrize("compiled", [True, False])
def test_zero_target_accepts_isotropic(cfg, compiled):
    ch = generate_rayleigh_channels(3, 4, 0)
    v = feasibility_p23(ch, cfg, 0.3, 0.0, np.zeros(4), ScaOptions(compiled=compiled))
    assert v.feasible and v.iterations == 0
    assert np.allclose(v.s_x, 0.25 * np.eye(4)) and np.allclose(v.w, 0)


def test_target_above_covariance_optimum_is_infeasible(cfg):
    for seed in range(3):
        ch = generate_rayleigh_channels(3, 4, seed)
        p1 = solve_p1(ch, cfg, 0.5)
        w = initial_beam(p1.covariance, 0.9)
        t_up = p1.diagnostics["t_upper"] / cfg.noise_comm
        v = feasibility_p23(ch, cfg, 0.5, 1.05 * t_up, w, s_local=p1.covariance)
        assert not v.feasible


def test_compiled_search_agrees_with_reference(cfg):
    ch = generate_rayleigh_channels(3, 4, 1)
    p1 = solve_p1(ch, cfg, 0.5)
    w = initial_beam(p1.covariance, 0.9)
    t0 = true_sinr(w, p1.covariance, ch, cfg)
    oracle = _P23Oracle(ch, cfg, cfg.gamma_from_crb(0.5), w)
    for t in (t0, 1.3 * t0, 5.0 * t0):
        fast = feasibility_p23(ch, cfg, 0.5, t, w, ScaOptions(compiled=True), s_local=p1.covariance)
        slow = feasibility_p23(ch, cfg, 0.5, t, w, ScaOptions(compiled=False), s_local=p1.covariance)
        assert fast.status == slow.status
        if fast.feasible:
            f, _ = oracle(oracle.enc.encode(fast.w, fast.s_x), t)
            assert np.all(f <= 1e-12)


def test_oracle_gradients_match_finite_differences(cfg, rng):
    ch = generate_rayleigh_channels(3, 4, 2)
    w_local = _cvec(rng) * 0.3
    oracle = _P23Oracle(ch, cfg, cfg.gamma_from_crb(0.5), w_local)
    x = oracle.enc.encode(0.2 * _cvec(rng), 0.25 * np.eye(4) + 0.01 * np.diag(rng.uniform(size=4)))
    f, grads = oracle(x, 0.7)
    eps = 1e-6
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = eps
        fd = (oracle(x + e, 0.7)[0] - oracle(x - e, 0.7)[0]) / (2 * eps)
        assert np.allclose(grads[:, j], fd, atol=1e-5)


def test_p22_bisection_properties(cfg, rng):
    h = _cvec(rng)
    ch = ChannelSet(np.stack([h, h]))
    p1 = solve_p1(ch, cfg, 1.0)
    w = initial_beam(p1.covariance, 0.9)
    t_w = true_sinr(w, p1.covariance, ch, cfg)
    res = solve_p22(ch, cfg, 1.0, w, s_local=p1.covariance)
    assert res.t_linear >= t_w - 1e-3 * (1 + t_w)
    top = cfg.power * np.max(ch.gains()) / cfg.noise_comm
    assert res.t_linear < top

    ch3 = generate_rayleigh_channels(3, 4, 3)
    p1 = solve_p1(ch3, cfg, 0.4)
    w = initial_beam(p1.covariance, 0.9)
    loose = solve_p22(ch3, cfg, 0.8, w, s_local=p1.covariance, t_hi=4.0)
    tight = solve_p22(ch3, cfg, 0.4, w, s_local=p1.covariance, t_hi=4.0)
    assert tight.t_linear <= loose.t_linear + ScaOptions().t_tol * 5


@pytest.mark.parametrize("users,seed", [(3, 0), (3, 7), (8, 1)])
def test_sca_monotone_and_feasible(cfg, users, seed):
    ch = generate_rayleigh_channels(users, 4, seed)
    gamma_bar = 0.5
    p1 = solve_p1(ch, cfg, gamma_bar)
    sol = solve_p2_sca(ch, cfg, gamma_bar, p1=p1)
    assert all(b >= a for a, b in zip(sol.history, sol.history[1:]))
    assert crb_trace(sol.s_x, cfg) <= gamma_bar * (1 + 1e-4)
    assert np.real(np.trace(sol.s_x)) <= cfg.power * (1 + 1e-6)
    assert np.linalg.eigvalsh(sol.s_s)[0] >= -1e-8 * cfg.power
    assert np.allclose(sol.s_x - np.outer(sol.w, sol.w.conj()), sol.s_s)
    assert sol.rate == pytest.approx(math.log2(1 + sol.t))
    assert sol.rate == pytest.approx(beamforming_rate(sol.w, sol.s_s, ch, cfg))
    assert sol.rate <= p1.rate + 1e-6


def test_identical_users_reach_mrt_benchmark(cfg, rng):
    h = _cvec(rng)
    ch = ChannelSet(np.stack([h, h]))
    gamma_bar = 25 * cfg.crb_min
    gam = cfg.gamma_from_crb(gamma_bar)
    n = cfg.n_tx
    # MRT with power P - eps, eps spread evenly over the orthogonal complement
    eps = brentq(lambda e: 1 / (cfg.power - e) + (n - 1) ** 2 / e - gam, 1e-9, cfg.power / 2)
    bench = math.log2(1 + (cfg.power - eps) * np.vdot(h, h).real / cfg.noise_comm)
    sol = solve_p2_sca(ch, cfg, gamma_bar)
    assert sol.rate <= bench + 1e-6
    assert sol.rate == pytest.approx(bench, abs=0.05)


def test_sca_errors_determinism_and_trace(cfg, tmp_path):
    ch = generate_rayleigh_channels(3, 4, 4)
    with pytest.raises(InfeasibleError):
        solve_p2_sca(ch, cfg, 0.2)
    path = tmp_path / "sca.csv"
    a = solve_p2_sca(ch, cfg, 0.6, opts=ScaOptions(trace=str(path)))
    b = solve_p2_sca(ch, cfg, 0.6)
    assert np.array_equal(a.w, b.w) and a.history == b.history
    rows = list(csv.reader(path.open()))
    assert rows[0][:2] == ["iteration", "t"]
    assert len(rows) - 1 == len(a.history)
