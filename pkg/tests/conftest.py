import itertools

import numpy as np
import pytest

from tulik import Kernel, ModelParams, TimeGrid, Trajectory


def random_params(rng, grid, V=1, scale=0.15, mu_lo=0.3, mu_hi=0.8, time_invariant=False):
    """Random parameters whose intensities stay positive on every history.

    Negative kernel entries are bounded so that even with every past step
    carrying an event the intensity keeps a margin above zero.
    """
    shape = (grid.Nprime, V, V) if time_invariant else (grid.L, grid.Nprime, V, V)
    mu = rng.uniform(mu_lo, mu_hi, size=V)
    vals = rng.uniform(-scale, scale, size=shape)
    neg = np.minimum(vals, 0).sum(axis=-2)          # summed over source nodes
    if time_invariant:
        worst = neg.sum(axis=0)
    else:
        # the intensity at row r reads lag l from row r - l
        worst = np.zeros((grid.L, V))
        for l in range(1, grid.Nprime + 1):
            worst[l:] += neg[:grid.L - l, l - 1]
        worst = worst.min(axis=0)
    shrink = np.min(0.8 * mu / np.maximum(-worst, 1e-12))
    if shrink < 1:
        vals = vals * shrink
    return ModelParams(mu, Kernel(grid, vals, time_invariant))


def all_trajectories(grid, V=1, prefix=None):
    """Every admissible continuation of ``prefix`` (the N' pre-horizon rows) over t = 1..N."""
    if prefix is None:
        prefix = np.zeros((grid.Nprime, V), dtype=np.uint8)
    rows = [np.zeros(V, dtype=np.uint8)]
    for u in range(V):
        r = np.zeros(V, dtype=np.uint8)
        r[u] = 1
        rows.append(r)
    for combo in itertools.product(range(V + 1), repeat=grid.N):
        yield Trajectory(grid, np.vstack([prefix, np.array([rows[c] for c in combo])]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return TimeGrid(0.5, 6, 3)


def nll(params, Y):
    from tulik import loglik_batch
    return -float(loglik_batch(params, Y).sum())


def fd_kernel_gradient(params, Y, eps=1e-6):
    """Central differences of the negative log-likelihood in every stored kernel entry."""
    from tulik import Kernel
    base = params.kernel.values
    out = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        vals = base.copy()
        vals[idx] += eps
        up = nll(params.replace(kernel=Kernel(params.grid, vals, params.kernel.time_invariant)), Y)
        vals[idx] -= 2 * eps
        dn = nll(params.replace(kernel=Kernel(params.grid, vals, params.kernel.time_invariant)), Y)
        out[idx] = (up - dn) / (2 * eps)
    return out


def random_batch(rng, grid, V, M, rate=0.3):
    Y = np.zeros((M, grid.L, V), dtype=np.uint8)
    ev = rng.random((M, grid.L)) < rate
    nodes = rng.integers(0, V, size=(M, grid.L))
    m, t = np.nonzero(ev)
    Y[m, t, nodes[m, t]] = 1
    return Y


# One line per acceptance criterion, echoed again in the terminal summary so
# they show up even when pytest captures output.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
