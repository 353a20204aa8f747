"""Grids, trajectories, kernels and conditional intensities.

Indexing convention
-------------------
Grid intervals are ``I_j = ((j-1)h, jh]`` for ``j = -N'+1, ..., N``.  Arrays
store interval ``j`` at row ``j + N' - 1`` so that row 0 is the oldest
pre-horizon interval.  Kernels are kept in the lag-major layout
``psi[row(i), l-1, u', u] = K_{i, i+l}(u', u)``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NumericError


@dataclass(frozen=True)
class TimeGrid:
    h: float
    N: int
    Nprime: int

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ArgumentError(f"interval length must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise ArgumentError(f"N must be a positive integer, got {self.N}")
        if int(self.Nprime) != self.Nprime or self.Nprime < 1:
            raise ArgumentError(f"N' must be a positive integer, got {self.Nprime}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "Nprime", int(self.Nprime))

    @property
    def L(self):
        """Length of the extended grid, N' + N."""
        return self.N + self.Nprime

    @property
    def T(self):
        return self.N * self.h

    @property
    def tau_max(self):
        return self.Nprime * self.h

    @property
    def first(self):
        return 1 - self.Nprime

    def row(self, i):
        if not self.first <= i <= self.N:
            raise ArgumentError(f"grid index {i} outside [{self.first}, {self.N}]")
        return i + self.Nprime - 1

    def interval(self, i):
        return ((i - 1) * self.h, i * self.h)

    def param_mask(self):
        """Boolean (L, N') mask of the trainable lag-major entries (1 <= i+l <= N)."""
        i = np.arange(self.first, self.N + 1)[:, None]
        t = i + np.arange(1, self.Nprime + 1)[None, :]
        return (t >= 1) & (t <= self.N)

    def middle_rows(self):
        """Rows of the lag-major array whose every lag is trainable (i = 0..N-N')."""
        return slice(self.Nprime - 1, self.N)


@dataclass(frozen=True)
class Trajectory:
    """Binary event record on the extended grid; ``y`` has shape (L, V)."""

    grid: TimeGrid
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != self.grid.L:
            raise ArgumentError(f"trajectory length {y.shape[0]} != N+N' = {self.grid.L}")
        if not np.isin(y, (0, 1)).all():
            raise ArgumentError("trajectory entries must be 0 or 1")
        y = y.astype(np.uint8)
        if y.shape[1] > 1 and (y.sum(axis=1) > 1).any():
            raise ArgumentError("at most one event per interval on a network")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def V(self):
        return self.y.shape[1]

    def at(self, t):
        return self.y[self.grid.row(t)]

    def observed(self):
        """Rows for t = 1..N."""
        return self.y[self.grid.Nprime:]


@dataclass(frozen=True)
class Kernel:
    """Influence kernel, time-varying (lag-major dense) or time-invariant (per-lag).

    ``values`` has shape (L, N', V, V) when ``time_invariant`` is False and
    (N', V, V) otherwise.
    """

    grid: TimeGrid
    values: np.ndarray
    time_invariant: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        Np = self.grid.Nprime
        if self.time_invariant:
            if v.ndim == 1:
                v = v[:, None, None]
            ok = v.ndim == 3 and v.shape[0] == Np and v.shape[1] == v.shape[2]
        else:
            if v.ndim == 2:
                v = v[:, :, None, None]
            ok = v.ndim == 4 and v.shape[:2] == (self.grid.L, Np) and v.shape[2] == v.shape[3]
        if not ok:
            raise ArgumentError(f"kernel array has incompatible shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def V(self):
        return self.values.shape[-1]

    @classmethod
    def zeros(cls, grid, V=1, time_invariant=False):
        shape = (grid.Nprime, V, V) if time_invariant else (grid.L, grid.Nprime, V, V)
        return cls(grid, np.zeros(shape), time_invariant)

    def dense(self):
        """Lag-major array (L, N', V, V); a time-invariant kernel fills every row."""
        if self.time_invariant:
            return np.broadcast_to(self.values, (self.grid.L,) + self.values.shape).copy()
        return self.values.copy()

    def params(self):
        """Trainable entries as a flat vector (row-major over the parameter mask)."""
        if self.time_invariant:
            return self.values.ravel().copy()
        return self.values[self.grid.param_mask()].ravel().copy()

    def to_K(self):
        """Square view K[row(i), row(t), u', u] = K_{i,t}(u', u); zero off the lag band."""
        g = self.grid
        d = self.dense()
        K = np.zeros((g.L, g.L, self.V, self.V))
        for l in range(1, g.Nprime + 1):
            r = np.arange(g.L - l)
            K[r, r + l] = d[r, l - 1]
        return K

    @classmethod
    def from_K(cls, grid, K):
        K = np.asarray(K, dtype=float)
        if K.ndim == 2:
            K = K[:, :, None, None]
        V = K.shape[-1]
        psi = np.zeros((grid.L, grid.Nprime, V, V))
        for l in range(1, grid.Nprime + 1):
            r = np.arange(grid.L - l)
            psi[r, l - 1] = K[r, r + l]
        return cls(grid, psi)

    def lifted(self):
        """Time-varying copy of this kernel."""
        return Kernel(self.grid, self.dense(), False)


@dataclass(frozen=True)
class ModelParams:
    mu: np.ndarray
    kernel: Kernel

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mu, dtype=float))
        if mu.shape != (self.kernel.V,):
            raise ArgumentError(f"mu has shape {mu.shape}, kernel has V={self.kernel.V}")
        if not (mu > 0).all():
            raise ArgumentError("baseline intensity must be positive on every node")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def grid(self):
        return self.kernel.grid

    @property
    def V(self):
        return self.kernel.V

    def replace(self, mu=None, kernel=None):
        return ModelParams(self.mu if mu is None else mu, self.kernel if kernel is None else kernel)


@dataclass(frozen=True)
class IntensityRecord:
    lam: np.ndarray
    bar_lam: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bar_lam", self.lam.sum(axis=-1))


def _check_compatible(params, traj):
    if params.grid != traj.grid:
        raise ArgumentError("kernel and trajectory are on different grids")
    if params.V != traj.V:
        raise ArgumentError(f"kernel has V={params.V}, trajectory has V={traj.V}")


def history_vector(traj, t, u=0):
    """Kernel coordinates (i, t, u', u) that are active in the intensity at (t, u)."""
    g = traj.grid
    if not 1 <= t <= g.N:
        raise ArgumentError(f"t={t} outside 1..{g.N}")
    if not 0 <= u < traj.V:
        raise ArgumentError(f"node {u} outside 0..{traj.V - 1}")
    out = set()
    for i in range(max(t - g.Nprime, g.first), t):
        for up in np.flatnonzero(traj.at(i)):
            out.add((i, t, int(up), u))
    return frozenset(out)


def intensity(params, traj, t):
    """Conditional intensity vector over nodes at step t (direct summation)."""
    _check_compatible(params, traj)
    g = traj.grid
    if not 1 <= t <= g.N:
        raise ArgumentError(f"t={t} outside 1..{g.N}")
    lam = params.mu.copy()
    kern = params.kernel
    for u in range(traj.V):
        for i, _, up, _ in history_vector(traj, t, u):
            l = t - i
            if kern.time_invariant:
                lam[u] += kern.values[l - 1, up, u]
            else:
                lam[u] += kern.values[g.row(i), l - 1, up, u]
    return lam


def batch_intensity(mu, psi, Y, grid):
    """Intensities for a batch.

    mu : (V,) baseline; psi : (L, N', V, V) lag-major kernel;
    Y : (M, L, V) events.  Returns (M, N, V) intensities for t = 1..N.
    """
    Y = np.asarray(Y, dtype=float)
    M, _, V = Y.shape
    N, Np = grid.N, grid.Nprime
    lam = np.empty((N, M, V))
    lam[:] = mu
    Yt = Y.transpose(1, 0, 2)  # (L, M, V)
    for l in range(1, Np + 1):
        sl = slice(Np - l, Np - l + N)
        if V == 1:
            lam += Yt[sl] * psi[sl, l - 1, :, 0][:, None, :]
        else:
            lam += np.matmul(Yt[sl], psi[sl, l - 1])
    return lam.transpose(1, 0, 2)


def batch_intensity_stationary(mu, lags, Y, grid):
    """Intensities with a per-lag kernel ``lags`` of shape (N', V, V)."""
    Y = np.asarray(Y, dtype=float)
    N, Np = grid.N, grid.Nprime
    lam = np.broadcast_to(mu, (Y.shape[0], N, Y.shape[2])).copy()
    for l in range(1, Np + 1):
        lam += Y[:, Np - l:Np - l + N] @ lags[l - 1]
    return lam


def intensities(params, Y):
    """(M, N, V) intensities of ``params`` on the batch ``Y`` of shape (M, L, V)."""
    Y = as_batch(Y)
    if params.kernel.time_invariant:
        return batch_intensity_stationary(params.mu, params.kernel.values, Y, params.grid)
    return batch_intensity(params.mu, params.kernel.values, Y, params.grid)


def intensity_record(params, traj):
    _check_compatible(params, traj)
    return IntensityRecord(intensities(params, traj.y[None])[0])


def as_batch(Y):
    """Stack trajectories (or pass through an array) into an (M, L, V) array."""
    if isinstance(Y, Trajectory):
        return Y.y[None]
    if isinstance(Y, (list, tuple)):
        if not Y:
            raise ArgumentError("empty trajectory list")
        return np.stack([tr.y for tr in Y])
    Y = np.asarray(Y)
    if Y.ndim == 2:
        Y = Y[:, :, None]
    return Y


def _gauss_nodes(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


def discretize_kernel(kfun, grid, V=1, order=4):
    """Cell averages of a continuous kernel on the lag band of the extended grid.

    ``kfun(t_prime, t)`` for V=1 or ``kfun(t_prime, t, u_prime, u)`` otherwise,
    vectorised over the time arguments.  Each cell average uses an
    ``order`` x ``order`` tensor Gauss-Legendre rule.
    """
    g = grid
    x, w = _gauss_nodes(order)
    i = np.arange(g.first, g.N + 1)
    start = (i - 1) * g.h
    W = np.outer(w, w)
    psi = np.zeros((g.L, g.Nprime, V, V))
    for l in range(1, g.Nprime + 1):
        tp = start[:, None, None] + g.h * x[None, :, None]
        t = start[:, None, None] + l * g.h + g.h * x[None, None, :]
        tp, t = np.broadcast_arrays(tp, t)
        for up in range(V):
            for u in range(V):
                vals = np.asarray(kfun(tp, t) if V == 1 else kfun(tp, t, up, u), dtype=float)
                vals = np.broadcast_to(vals, tp.shape)
                bad = ~np.isfinite(vals)
                if bad.any():
                    r = int(np.argwhere(bad.any(axis=(1, 2)))[0, 0])
                    raise NumericError(
                        f"non-finite kernel value in cell i={r + g.first}, t={r + g.first + l}, "
                        f"u'={up}, u={u}")
                psi[:, l - 1, up, u] = (vals * W).sum(axis=(1, 2))
    return Kernel(g, psi)
