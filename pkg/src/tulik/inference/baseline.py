"""Baseline-intensity update from the first-order condition of the likelihood."""
import numpy as np
from scipy.optimize import bisect

from ..errors import InfeasibleParameterError, NoRootError, UnboundedError
from ..likelihood import link_phi
from ..model import as_batch, intensities

MU_LO = 1e-8
MU_CAP = 1e4
XTOL = 1e-10


def _bracket_root(f, lo, start):
    """Bisection for a decreasing f with f(lo+) > 0; upper end doubled from ``start``."""
    hi = max(start, 2 * lo)
    while f(hi) >= 0:
        if hi >= MU_CAP:
            raise UnboundedError(f"baseline equation still nonnegative at mu={MU_CAP:g}")
        hi = min(2 * hi, MU_CAP)
    if f(lo) <= 0:
        raise NoRootError(f"baseline equation is negative on the whole bracket [{lo:g}, {hi:g}]")
    return bisect(f, lo, hi, xtol=XTOL, maxiter=400)


def _lower_end(shift):
    """Smallest admissible baseline: keep every event-step intensity positive."""
    if shift.size == 0:
        return MU_LO
    return max(MU_LO, float(np.nextafter(-shift.min(), np.inf)))


def _kernel_part(params, Y):
    zero = params.replace(mu=np.full(params.V, 1.0))
    return intensities(zero, Y) - 1.0


def solve_mu_time_only(params, Y):
    """Root of sum_m sum_t h (y_t / (1 - exp(-h Lambda_t)) - 1) = 0 in mu."""
    Y = as_batch(Y)
    g = params.grid
    Yobs = Y[:, g.Nprime:, 0].astype(bool)
    c = _kernel_part(params, Y)[..., 0]
    ce = c[Yobs]
    if ce.size == 0:
        raise NoRootError("no events in the batch")
    n_steps = Yobs.size
    if ce.size == n_steps:
        raise UnboundedError("every step in the batch holds an event")
    h = g.h

    def f(mu):
        return h * np.sum(1.0 / link_phi(h * (mu + ce))) - h * n_steps

    lo = _lower_end(ce)
    start = ce.size / (n_steps * h)
    return _bracket_root(f, lo, start)


def solve_mu_network(params, Y):
    """Gauss-Seidel baseline update: one decoupled 1-D root per node.

    Returns (mu_tilde, failures) where failed nodes hold NaN and ``failures``
    maps node -> exception.
    """
    Y = as_batch(Y)
    g = params.grid
    h = g.h
    Yobs = Y[:, g.Nprime:].astype(float)
    lam = intensities(params, Y)
    c = lam - params.mu
    bar = lam.sum(axis=-1)
    ybar = Yobs.sum(axis=-1)
    ev = ybar > 0
    if (bar[ev] <= 0).any():
        raise InfeasibleParameterError("nonpositive total intensity at an event step")
    const = -h * ybar.size + np.sum(h / link_phi(h * bar[ev])) - np.sum(1.0 / bar[ev])
    out = np.full(params.V, np.nan)
    failures = {}
    for u in range(params.V):
        ce = c[..., u][Yobs[..., u] > 0]
        try:
            if ce.size == 0:
                raise NoRootError(f"no events on node {u}")
            if const >= 0:
                raise UnboundedError(f"baseline equation for node {u} has no finite root")

            def f(m, ce=ce):
                return const + np.sum(1.0 / (m + ce))

            out[u] = _bracket_root(f, _lower_end(ce), float(params.mu[u]))
        except (NoRootError, UnboundedError) as err:
            failures[u] = err
    return out, failures


def solve_mu_bisection(params, Y):
    """Baseline estimate(s) on a batch with the kernel held fixed.

    Time-only models return a float; network models return a vector and raise
    the first per-node failure.
    """
    if params.V == 1:
        return solve_mu_time_only(params, Y)
    out, failures = solve_mu_network(params, Y)
    if failures:
        raise next(iter(failures.values()))
    return out
