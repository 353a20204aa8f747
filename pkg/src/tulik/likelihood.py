"""Log-likelihoods and link functions of the discrete-time event models."""
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError, InfeasibleParameterError
from .model import TimeGrid, as_batch, intensities


def link_phi(x):
    """Event probability of one step given the scaled intensity: 1 - exp(-x)."""
    return -np.expm1(-np.asarray(x, dtype=float))


def log_phi(x):
    """log(1 - exp(-x)) for x > 0, accurate for small x."""
    return np.log(-np.expm1(-np.asarray(x, dtype=float)))


def link_Phi(x):
    """Per-node event probabilities for scaled intensities ``x`` (last axis = nodes).

    The total probability phi(sum x) is split across nodes proportionally to x.
    """
    x = np.asarray(x, dtype=float)
    if not (x > 0).all():
        raise DomainError("link_Phi needs strictly positive entries")
    s = x.sum(axis=-1, keepdims=True)
    return link_phi(s) * (x / s)


def _first_bad(mask):
    m, t, u = (int(v) for v in np.argwhere(mask)[0])
    return m, t, u


def loglik_from_intensity(lam, Yobs, h, floor=None):
    """Per-trajectory log-likelihood from intensities.

    lam : (M, N, V) intensities; Yobs : (M, N, V) observed events for t = 1..N.
    With ``floor`` set, intensities are clipped from below instead of raising;
    this is only meant for reporting.
    """
    lam = np.asarray(lam, dtype=float)
    Yobs = np.asarray(Yobs, dtype=float)
    if floor is not None:
        lam = np.maximum(lam, floor)
    bar = lam.sum(axis=-1)
    ybar = Yobs.sum(axis=-1)
    ev = ybar > 0
    bad = (Yobs > 0) & (lam <= 0)
    if bad.any():
        m, t, u = _first_bad(bad)
        raise InfeasibleParameterError(
            f"nonpositive intensity {lam[m, t, u]:.6g} at event step t={t + 1}, node {u}"
            f" (trajectory {m})", t=t + 1, u=u)
    if (ev & (bar <= 0)).any():
        m, t = (int(v) for v in np.argwhere(ev & (bar <= 0))[0])
        raise InfeasibleParameterError(f"nonpositive total intensity at t={t + 1}", t=t + 1)
    out = -h * np.where(ev, 0.0, bar)
    if ev.any():
        lam_ev = (Yobs * lam).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = log_phi(h * bar) + np.log(lam_ev) - np.log(bar)
        out = out + np.where(ev, term, 0.0)
    return out.sum(axis=1)


def loglik_batch(params, Y, floor=None):
    """Log-likelihood of each trajectory in ``Y`` (shape (M, L, V))."""
    Y = as_batch(Y)
    lam = intensities(params, Y)
    return loglik_from_intensity(lam, Y[:, params.grid.Nprime:], params.grid.h, floor)


def loglik_unit(params, traj):
    """Exact log-likelihood of a time-only trajectory."""
    if params.V != 1 or traj.V != 1:
        raise ArgumentError("loglik_unit is for the time-only model (V=1)")
    lam = intensities(params, traj.y[None])[0, :, 0]
    y = traj.observed()[:, 0].astype(float)
    bad = (y > 0) & (lam <= 0)
    if bad.any():
        t = int(np.flatnonzero(bad)[0]) + 1
        raise InfeasibleParameterError(f"nonpositive intensity at event step t={t}", t=t)
    h = params.grid.h
    with np.errstate(divide="ignore", invalid="ignore"):
        ev = np.where(y > 0, log_phi(h * lam), 0.0)
    return float(np.sum(-(1 - y) * h * lam + ev))


def loglik_network(params, traj):
    """Exact log-likelihood of a network trajectory; equals loglik_unit when V=1."""
    if params.V != traj.V:
        raise ArgumentError(f"params have V={params.V}, trajectory has V={traj.V}")
    return float(loglik_batch(params, traj.y[None])[0])


@dataclass(frozen=True)
class WindowedEvents:
    """Events whose times are only known to lie in grid intervals t_l..t_r."""

    grid: TimeGrid
    events: tuple

    def __post_init__(self):
        ev = tuple((int(a), int(b)) for a, b in self.events)
        prev = 0
        for tl, tr in ev:
            if not 1 <= tl <= tr <= self.grid.N:
                raise ArgumentError(f"window ({tl}, {tr}) outside 1..{self.grid.N}")
            if tl <= prev:
                raise ArgumentError(f"window ({tl}, {tr}) overlaps or precedes the previous one")
            prev = tr
        object.__setattr__(self, "events", ev)


def windowed_intensity(params, windows):
    """Intensities Lambda_j, j = 1..N, with each past event spread evenly over its window."""
    if params.kernel.time_invariant:
        raise ArgumentError("windowed model takes a time-varying kernel")
    if params.V != 1:
        raise ArgumentError("windowed model is time-only")
    g = params.grid
    K = params.kernel.to_K()[:, :, 0, 0]
    lam = np.full(g.N, params.mu[0])
    for tl, tr in windows.events:
        rows = [g.row(i) for i in range(tl, tr + 1)]
        spread = K[rows].mean(axis=0)
        for j in range(tr + 1, g.N + 1):
            lam[j - 1] += spread[g.row(j)]
    return lam


def loglik_windowed(params, windows):
    """Log-likelihood of events observed through non-overlapping uncertainty windows."""
    if windows.grid != params.grid:
        raise ArgumentError("windows and params are on different grids")
    h = params.grid.h
    lam = windowed_intensity(params, windows)
    out = -h * lam.sum()
    for tl, tr in windows.events:
        s = h * lam[tl - 1:tr].sum()
        if s <= 0:
            raise InfeasibleParameterError(
                f"nonpositive intensity over window ({tl}, {tr})", t=tl)
        out += np.log(np.expm1(s))
    return float(out)
