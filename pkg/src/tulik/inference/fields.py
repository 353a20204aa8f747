"""Stochastic VI / GD vector fields and the kernel regularisers.

Every field is of the form ``sum_t sum_u R[t, u] * eta_{t,u}`` for a per-step
weight ``R``; the helpers ``residual_*`` build ``R`` from intensities and
``accumulate*`` contract it against the event history.
"""
import numpy as np

from ..errors import ArgumentError, InfeasibleParameterError
from ..likelihood import link_phi
from ..model import as_batch, intensities

QUADRATIC = "quadratic"
LOG = "log"
LOG_SLOPE_CAP = 1e-6


def residual_vi(lam, Yobs, h):
    """Phi(h Lambda_t) - y_t, shape (M, N, V)."""
    Yobs = np.asarray(Yobs, dtype=float)
    if lam.shape[-1] == 1:
        return link_phi(h * lam) - Yobs
    bar = lam.sum(axis=-1, keepdims=True)
    return link_phi(h * bar) * (lam / bar) - Yobs


def residual_gd(lam, Yobs, h):
    """Per-step weights of the negative log-likelihood gradient."""
    Yobs = np.asarray(Yobs, dtype=float)
    if (lam <= 0).any():
        m, t, u = (int(v) for v in np.argwhere(lam <= 0)[0])
        raise InfeasibleParameterError(
            f"GD field needs positive intensities; got {lam[m, t, u]:.6g} at t={t + 1}, node {u}",
            t=t + 1, u=u)
    if lam.shape[-1] == 1:
        p = link_phi(h * lam)
        return h * (p - Yobs) / p
    bar = lam.sum(axis=-1, keepdims=True)
    ybar = Yobs.sum(axis=-1, keepdims=True)
    p = link_phi(h * bar)
    return h * (p - ybar) / p + ybar / bar - Yobs / lam


def barrier_slope(lam, b, kind=QUADRATIC):
    """Derivative of the barrier l_b at each intensity below b, zero elsewhere."""
    if b <= 0:
        raise ArgumentError("intensity floor b must be positive")
    below = lam < b
    if kind == QUADRATIC:
        slope = (lam - b) / (0.1 * b)
    elif kind == LOG:
        slope = -b / np.maximum(lam, b * LOG_SLOPE_CAP)
    else:
        raise ArgumentError(f"unknown barrier kind {kind!r}")
    return np.where(below, slope, 0.0)


def barrier_value(lam, b, kind=QUADRATIC):
    """Summed barrier penalty per trajectory (for checks; not used by the solver)."""
    below = lam < b
    if kind == QUADRATIC:
        v = (lam - b) ** 2 / (0.2 * b)
    elif kind == LOG:
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -b * np.log(lam / b)
    else:
        raise ArgumentError(f"unknown barrier kind {kind!r}")
    return np.where(below, v, 0.0).sum(axis=(1, 2))


def accumulate(R, Y, grid):
    """sum_m sum_t sum_u R[m,t,u] eta_{t,u} as a lag-major (L, N', V, V) array."""
    N, Np = grid.N, grid.Nprime
    Y = np.asarray(Y, dtype=float)
    V = Y.shape[2]
    out = np.zeros((grid.L, Np, V, V))
    if Y.shape[0] == 0:
        return out
    Yt = Y.transpose(1, 2, 0)        # (L, V, M)
    Rt = R.transpose(1, 0, 2)        # (N, M, V)
    for l in range(1, Np + 1):
        sl = slice(Np - l, Np - l + N)
        out[sl, l - 1] = np.matmul(Yt[sl], Rt)
    return out


def accumulate_stationary(R, Y, grid):
    """sum_m sum_t sum_u R[m,t,u] xi_{t,u} as a per-lag (N', V, V) array."""
    N, Np = grid.N, grid.Nprime
    Y = np.asarray(Y, dtype=float)
    out = np.zeros((Np, Y.shape[2], Y.shape[2]))
    if Y.shape[0] == 0:
        return out
    for l in range(1, Np + 1):
        out[l - 1] = np.tensordot(Y[:, Np - l:Np - l + N], R, axes=([0, 1], [0, 1]))
    return out


def _prepare(params, traj):
    Y = as_batch(traj)
    if Y.shape[2] != params.V:
        raise ArgumentError(f"params have V={params.V}, data has V={Y.shape[2]}")
    lam = intensities(params, Y)
    return Y, lam, Y[:, params.grid.Nprime:]


def _collect(params, Y, R):
    if params.kernel.time_invariant:
        return accumulate_stationary(R, Y, params.grid)
    return accumulate(R, Y, params.grid)


def vi_field(params, traj):
    """VI field of the time-only model, summed over the given trajectories."""
    if params.V != 1:
        raise ArgumentError("vi_field is time-only; use vi_field_network")
    return vi_field_network(params, traj)


def vi_field_network(params, traj):
    Y, lam, Yobs = _prepare(params, traj)
    return _collect(params, Y, residual_vi(lam, Yobs, params.grid.h))


def gd_field(params, traj):
    """Negative log-likelihood gradient of the time-only model w.r.t. the kernel."""
    if params.V != 1:
        raise ArgumentError("gd_field is time-only; use gd_field_network")
    return gd_field_network(params, traj)


def gd_field_network(params, traj):
    Y, lam, Yobs = _prepare(params, traj)
    return _collect(params, Y, residual_gd(lam, Yobs, params.grid.h))


def stationary_fields(params, traj, method="vi"):
    """VI or GD field over the per-lag kernel (N', V, V) of a time-invariant model."""
    if not params.kernel.time_invariant:
        raise ArgumentError("stationary_fields needs a time-invariant kernel")
    Y, lam, Yobs = _prepare(params, traj)
    h = params.grid.h
    if method == "vi":
        R = residual_vi(lam, Yobs, h)
    elif method == "gd":
        R = residual_gd(lam, Yobs, h)
    else:
        raise ArgumentError(f"unknown method {method!r}")
    return accumulate_stationary(R, Y, params.grid)


def barrier_gradient(params, traj, b, kind=QUADRATIC):
    """Gradient of the intensity-floor barrier w.r.t. the kernel entries."""
    Y, lam, _ = _prepare(params, traj)
    return _collect(params, Y, barrier_slope(lam, b, kind))


def _pairs(mask):
    """Index pairs of neighbouring lag-major entries that are both present."""
    down = mask[:-1] & mask[1:]
    right = mask[:, :-1] & mask[:, 1:]
    return down, right


def smoothness_penalty(psi, h, mask=None):
    """(1/2h^2) times the summed squared differences along time and along lag.

    ``psi`` is (L, N') or (L, N', V, V); with V > 1 the penalty is summed over
    node pairs.  Only differences between two entries inside ``mask`` count.
    """
    psi = np.asarray(psi, dtype=float)
    if mask is None:
        mask = np.ones(psi.shape[:2], dtype=bool)
    down, right = _pairs(mask)
    extra = (None,) * (psi.ndim - 2)
    d1 = (psi[:-1] - psi[1:]) * down[(...,) + extra]
    d2 = (psi[:, :-1] - psi[:, 1:]) * right[(...,) + extra]
    return float((np.sum(d1 ** 2) + np.sum(d2 ** 2)) / (2 * h * h))


def smoothness_gradient(psi, h, mask=None):
    psi = np.asarray(psi, dtype=float)
    if mask is None:
        mask = np.ones(psi.shape[:2], dtype=bool)
    down, right = _pairs(mask)
    extra = (None,) * (psi.ndim - 2)
    d1 = (psi[:-1] - psi[1:]) * down[(...,) + extra]
    d2 = (psi[:, :-1] - psi[:, 1:]) * right[(...,) + extra]
    g = np.zeros_like(psi)
    g[:-1] += d1
    g[1:] -= d1
    g[:, :-1] += d2
    g[:, 1:] -= d2
    return g / (h * h)


def smoothness_operator(grid, time_invariant=False):
    """Sparse H with the smoothness gradient equal to H @ x.

    ``x`` stacks the kernel entries inside the parameter mask in row-major
    order, or the N' lag values of a time-invariant kernel.
    """
    from scipy import sparse
    mask = grid.param_mask()
    if time_invariant:
        coord = np.broadcast_to(np.arange(grid.Nprime), mask.shape)
        n = grid.Nprime
    else:
        coord = np.full(mask.shape, -1)
        coord[mask] = np.arange(mask.sum())
        n = int(mask.sum())
    down, right = _pairs(mask)
    a = np.concatenate([coord[:-1][down], coord[:, :-1][right]])
    b = np.concatenate([coord[1:][down], coord[:, 1:][right]])
    keep = a != b
    a, b = a[keep], b[keep]
    ones = np.ones(a.size)
    H = sparse.coo_matrix((np.concatenate([ones, ones, -ones, -ones]),
                           (np.concatenate([a, b, a, b]), np.concatenate([a, b, b, a]))),
                          shape=(n, n))
    return H.tocsc() / (grid.h * grid.h)


def project_box(z, lo, hi):
    """Euclidean projection onto a box; stands in for the compact feasible set in tests."""
    return np.clip(z, lo, hi)
