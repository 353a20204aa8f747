"""Bernoulli-process simulation and the benchmark kernels and presets."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, GenerationError
from .likelihood import link_phi
from .model import Kernel, ModelParams, TimeGrid, Trajectory, discretize_kernel


def trajectory_uniforms(seed, index, L, attempt=0):
    """Uniform draws owned by one trajectory: stream keyed by (seed, index).

    Redraws of the same trajectory use the stream (seed, index, attempt).
    """
    key = [int(seed), int(index)] + ([int(attempt)] if attempt else [])
    return np.random.default_rng(key).random((L, 2))


def simulate_from_uniforms(params, U, flag_infeasible=False):
    """Sequentially draw events for a batch given pre-drawn uniforms U of shape (M, L, 2).

    Column 0 decides whether an event occurs, column 1 picks the node.  A
    nonpositive intensity raises GenerationError, or with ``flag_infeasible``
    marks the trajectory and the call returns ``(Y, infeasible_mask)``.
    """
    g = params.grid
    V = params.V
    psi = params.kernel.dense()
    M = U.shape[0]
    Y = np.zeros((M, g.L, V), dtype=np.uint8)
    Yf = np.zeros((M, g.L, V))
    flagged = np.zeros(M, dtype=bool)
    for r in range(g.L):
        lam = np.broadcast_to(params.mu, (M, V)).copy()
        for l in range(1, min(g.Nprime, r) + 1):
            lam += Yf[:, r - l] @ psi[r - l, l - 1]
        bad = (lam <= 0).any(axis=1)
        if flag_infeasible:
            flagged |= bad
            lam[flagged] = 1.0      # keep going; these rows are discarded
            bad[:] = False
        bar = lam.sum(axis=1)
        if bad.any():
            m = int(np.flatnonzero(bad)[0])
            t = r + g.first
            raise GenerationError(
                f"nonpositive intensity {lam[m].min():.6g} at t={t} in trajectory {m}",
                t=t, prefix=Y[m, :r].copy())
        occur = U[:, r, 0] < link_phi(g.h * bar)
        if V == 1:
            node = np.zeros(M, dtype=int)
        else:
            cdf = np.cumsum(lam, axis=1) / bar[:, None]
            node = np.minimum((U[:, r, 1:2] >= cdf).sum(axis=1), V - 1)
        idx = np.flatnonzero(occur)
        Y[idx, r, node[idx]] = 1
        Yf[idx, r, node[idx]] = 1.0
    return (Y, flagged) if flag_infeasible else Y


def simulate_time_only(params, grid, rng):
    """One time-only trajectory drawn step by step from the Bernoulli law."""
    if params.V != 1:
        raise ArgumentError("simulate_time_only needs V=1 parameters")
    if params.grid != grid:
        raise ArgumentError("params live on a different grid")
    U = rng.random((grid.L, 2))
    return Trajectory(grid, simulate_from_uniforms(params, U[None])[0])


def simulate_network(params, grid, V, rng):
    """One network trajectory: event occurrence first, then the node."""
    if params.V != V:
        raise ArgumentError(f"params have V={params.V}, asked for V={V}")
    if params.grid != grid:
        raise ArgumentError("params live on a different grid")
    U = rng.random((grid.L, 2))
    return Trajectory(grid, simulate_from_uniforms(params, U[None])[0])


def simulate_dataset(params, M, seed, offset=0, chunk=8192, redraw=0):
    """(M, L, V) uint8 event array; trajectory m uses the stream (seed, offset + m).

    Some kernels with inhibition can push the intensity of a rare history to
    zero or below.  By default that raises GenerationError; with ``redraw=k``
    such a trajectory is drawn again from its own attempt streams, up to k
    times, which conditions the data on feasibility.
    """
    g = params.grid
    out = np.zeros((M, g.L, params.V), dtype=np.uint8)
    for s in range(0, M, chunk):
        idx = np.arange(s, min(M, s + chunk))
        U = np.stack([trajectory_uniforms(seed, offset + m, g.L) for m in idx])
        if not redraw:
            out[idx] = simulate_from_uniforms(params, U)
            continue
        Y, bad = simulate_from_uniforms(params, U, flag_infeasible=True)
        out[idx] = Y
        todo = idx[bad]
        for attempt in range(1, redraw + 1):
            if todo.size == 0:
                break
            U = np.stack([trajectory_uniforms(seed, offset + m, g.L, attempt) for m in todo])
            Y, bad = simulate_from_uniforms(params, U, flag_infeasible=True)
            out[todo[~bad]] = Y[~bad]
            todo = todo[bad]
        if todo.size:
            raise GenerationError(f"trajectory {offset + todo[0]} stayed infeasible after "
                                  f"{redraw} redraws", t=None, prefix=None)
    return out


def paper_kernel_time_only(t_prime, t):
    """Non-stationary 13-term kernel with mixed excitation and inhibition."""
    t_prime = np.asarray(t_prime, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(t_prime, t).shape)
    for j in range(1, 14):
        out += (0.3 * 2.0 ** (-j)
                * (np.cos(2 + 1.3 * np.pi * (j + 1) * ((t_prime - 9) / 15)) + 0.6)
                * np.exp(-8 * ((t - t_prime) * j) ** 2 / 25))
    return out


def edge_kernel(t_prime, t, omega, shift):
    """Temporal pattern of one directed edge: periodic amplitude, Gaussian delay."""
    t_prime = np.asarray(t_prime, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.35 * (np.cos(omega * (t + 2)) + 0.75) * np.exp(-20 * (t - t_prime - shift) ** 2)


def paper_kernel_network(t_prime, t, u_prime, u, edges):
    """Network kernel; ``edges`` maps (u', u) -> (omega, shift).  Zero on non-edges."""
    if (u_prime, u) not in edges:
        return np.zeros(np.broadcast(np.asarray(t_prime), np.asarray(t)).shape)
    omega, shift = edges[(u_prime, u)]
    return edge_kernel(t_prime, t, omega, shift)


def stationary_benchmark_psi(grid):
    """Damped oscillating per-lag kernel: excitation at short lags, inhibition after."""
    tau = grid.h * np.arange(1, grid.Nprime + 1)
    return 0.5 * np.exp(-tau) * np.cos(1.2 * tau)


# Directed edges of the 5-node benchmark graph (8 edges, no self loops).
NETWORK_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (2, 4), (3, 1))


@dataclass
class Preset:
    name: str
    params: ModelParams
    n_train: int
    n_test: int
    meta: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.params.grid


def make_preset(name, seed=0):
    """Ground-truth model of a benchmark setup.

    The network preset draws its per-edge (omega, shift) and per-node mu once
    from ``seed``; the other presets are fully deterministic.
    """
    if name == "paper-timeonly-small":
        grid = TimeGrid(0.5, 32, 8)
        kern = discretize_kernel(paper_kernel_time_only, grid)
        return Preset(name, ModelParams([0.2], kern), 16000, 500)
    if name == "paper-timeonly-large":
        grid = TimeGrid(0.05, 320, 80)
        kern = discretize_kernel(paper_kernel_time_only, grid)
        return Preset(name, ModelParams([0.2], kern), 16000, 500)
    if name == "paper-stationary":
        grid = TimeGrid(0.5, 32, 16)
        kern = Kernel(grid, stationary_benchmark_psi(grid), time_invariant=True)
        return Preset(name, ModelParams([0.2], kern), 4800, 500)
    if name == "paper-network":
        grid = TimeGrid(0.1, 32, 8)
        rng = np.random.default_rng([int(seed), 7919])
        edges = {e: (float(rng.uniform(2, 6)), float(rng.uniform(0, 0.2))) for e in NETWORK_EDGES}
        mu = rng.uniform(0.25, 0.35, size=5)

        def kfun(tp, t, up, u):
            return paper_kernel_network(tp, t, up, u, edges)

        kern = discretize_kernel(kfun, grid, V=5)
        meta = {"edges": [[a, b, w, s] for (a, b), (w, s) in edges.items()]}
        return Preset(name, ModelParams(mu, kern), 40000, 500, meta)
    raise ArgumentError(f"unknown preset {name!r}")


PRESETS = ("paper-timeonly-small", "paper-timeonly-large", "paper-stationary", "paper-network")
