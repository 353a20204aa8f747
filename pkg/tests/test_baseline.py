import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tulik import Kernel, ModelParams, NoRootError, TimeGrid, UnboundedError, loglik_batch
from tulik.inference import solve_mu_bisection, solve_mu_network, solve_mu_time_only

from conftest import random_batch, random_params


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_zero_kernel_closed_form(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(float(rng.uniform(0.05, 1.0)), int(rng.integers(1, 20)), 3)
    M = int(rng.integers(1, 30))
    Y = random_batch(rng, g, 1, M, rate=float(rng.uniform(0.05, 0.9)))
    n = int(Y[:, g.Nprime:].sum())
    p = ModelParams([1.0], Kernel.zeros(g))
    if n == 0 or n == M * g.N:
        return
    want = -np.log(1 - n / (M * g.N)) / g.h
    assert abs(solve_mu_time_only(p, Y) - want) < 1e-9 * max(1, want)


def test_no_events_and_all_events():
    g = TimeGrid(0.5, 4, 2)
    p = ModelParams([0.3], Kernel.zeros(g))
    with pytest.raises(NoRootError):
        solve_mu_time_only(p, np.zeros((3, g.L, 1), dtype=np.uint8))
    with pytest.raises(UnboundedError):
        solve_mu_time_only(p, np.ones((3, g.L, 1), dtype=np.uint8))


def test_root_maximises_likelihood_in_mu():
    rng = np.random.default_rng(1)
    g = TimeGrid(0.5, 10, 3)
    p = random_params(rng, g, 1, scale=0.2)
    Y = random_batch(rng, g, 1, 40)
    mu = solve_mu_time_only(p, Y)

    def ll(m):
        return loglik_batch(p.replace(mu=[m]), Y).sum()

    d = 1e-5
    assert (ll(mu + d) - ll(mu - d)) / (2 * d) == pytest.approx(0, abs=1e-5)
    assert ll(mu) > ll(mu * 1.05) and ll(mu) > ll(mu * 0.95)


def test_lower_end_keeps_event_intensities_positive():
    g = TimeGrid(1.0, 3, 1)
    vals = np.zeros((g.L, 1))
    vals[:, 0] = -0.5
    p = ModelParams([1.0], Kernel(g, vals))
    Y = np.array([[0, 1, 1, 0]], dtype=np.uint8)[:, :, None]
    mu = solve_mu_time_only(p, Y)
    assert mu - 0.5 > 0


def test_network_fixed_point_with_zero_kernel():
    """Iterating the per-node update converges to the joint likelihood maximiser."""
    rng = np.random.default_rng(2)
    g = TimeGrid(0.2, 12, 2)
    V = 3
    Y = random_batch(rng, g, V, 50, rate=0.4)
    counts = Y[:, g.Nprime:].sum(axis=(0, 1))
    n = counts.sum()
    total = -np.log(1 - n / (50 * g.N)) / g.h
    mu = np.full(V, 0.5)
    for _ in range(200):
        mu = solve_mu_network(ModelParams(mu, Kernel.zeros(g, V)), Y)[0]
    assert np.allclose(mu, counts / n * total, rtol=1e-8)


def test_network_update_is_single_node_root():
    rng = np.random.default_rng(3)
    g = TimeGrid(0.3, 8, 2)
    p = random_params(rng, g, 2, scale=0.2)
    Y = random_batch(rng, g, 2, 30)
    mu, failures = solve_mu_network(p, Y)
    assert not failures
    # stationarity of the log-likelihood in mu(u) when only that node moves and the
    # total-intensity terms are frozen at the current parameters
    from tulik.model import intensities
    from tulik.likelihood import link_phi
    lam = intensities(p, Y)
    c = lam - p.mu
    bar = lam.sum(axis=-1)
    Yo = Y[:, g.Nprime:]
    ev = Yo.sum(axis=-1) > 0
    const = -g.h * bar.size + np.sum(g.h / link_phi(g.h * bar[ev])) - np.sum(1 / bar[ev])
    for u in range(2):
        f = const + np.sum(1 / (mu[u] + c[..., u][Yo[..., u] > 0]))
        assert abs(f) < 1e-6


def test_network_reports_nodes_without_events():
    g = TimeGrid(0.5, 6, 2)
    Y = np.zeros((4, g.L, 2), dtype=np.uint8)
    Y[:, g.Nprime + 1, 0] = 1
    p = ModelParams([0.2, 0.2], Kernel.zeros(g, 2))
    mu, failures = solve_mu_network(p, Y)
    assert np.isfinite(mu[0]) and np.isnan(mu[1])
    assert isinstance(failures[1], NoRootError)
    with pytest.raises(NoRootError):
        solve_mu_bisection(p, Y)


def test_bisection_dispatch_returns_float_for_time_only():
    g = TimeGrid(0.5, 6, 2)
    Y = np.zeros((2, g.L, 1), dtype=np.uint8)
    Y[:, g.Nprime + 2] = 1
    out = solve_mu_bisection(ModelParams([0.5], Kernel.zeros(g)), Y)
    assert isinstance(out, float)
    assert out == pytest.approx(-np.log(1 - 1 / 6) / 0.5, abs=1e-9)
