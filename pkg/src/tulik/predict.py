"""Event-probability prediction, recovery errors and classification metrics."""
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError, InfeasibleParameterError
from .likelihood import link_phi
from .model import Trajectory, as_batch, intensities


def step_probabilities(params, traj):
    """Conditional event probability per step and node given the observed history.

    Returns (N, V) for one trajectory or (M, N, V) for a batch.
    """
    single = isinstance(traj, Trajectory)
    Y = as_batch(traj)
    lam = intensities(params, Y)
    if (lam <= 0).any():
        m, t, u = (int(v) for v in np.argwhere(lam <= 0)[0])
        raise InfeasibleParameterError(
            f"nonpositive intensity at t={t + 1}, node {u} (trajectory {m})", t=t + 1, u=u)
    bar = lam.sum(axis=-1, keepdims=True)
    p = link_phi(params.grid.h * bar) * (lam / bar)
    return p[0] if single else p


def _last_event(traj, upto):
    obs = traj.y[traj.grid.Nprime:traj.grid.Nprime + upto].any(axis=1)
    idx = np.flatnonzero(obs)
    return int(idx[-1]) + 1 if idx.size else 0


def _continuation(params, traj, j_l, j_r, t_last):
    g = traj.grid
    if params.grid != g or params.V != traj.V:
        raise ArgumentError("params and trajectory do not match")
    if t_last is None:
        t_last = _last_event(traj, j_l)
    if not 0 <= t_last <= j_l < j_r <= g.N:
        raise ArgumentError(f"need 0 <= t_last={t_last} <= j_l={j_l} < j_r={j_r} <= N={g.N}")
    y = traj.y.copy()
    y[g.row(t_last) + 1 if t_last >= 1 else g.Nprime:] = 0
    lam = intensities(params, y[None])[0]
    span = lam[t_last:j_r]
    if (span <= 0).any():
        raise InfeasibleParameterError("nonpositive intensity on the no-event continuation")
    return lam, t_last


def survival_probability(params, traj, j, t_last=None):
    """Probability of no further event in (t_last, j] given the history up to t_last."""
    if t_last is None:
        t_last = _last_event(traj, j)
    if j == t_last:
        return 1.0
    lam, t_last = _continuation(params, traj, t_last, j, t_last)
    return float(np.exp(-params.grid.h * lam[t_last:j].sum()))


def predict_interval_time_only(params, traj, j_l, j_r, t_last=None):
    """Probability that the next event falls in (j_l h, j_r h].

    ``t_last`` is the grid index of the last observed event (default: the last
    event at or before ``j_l``, or 0 when there is none).
    """
    if params.V != 1:
        raise ArgumentError("time-only prediction needs V=1")
    lam, t_last = _continuation(params, traj, j_l, j_r, t_last)
    lam = lam[:, 0]
    h = params.grid.h
    before = lam[t_last:j_l].sum()
    inside = lam[j_l:j_r].sum()
    return float(np.exp(-h * before) * -np.expm1(-h * inside))


def predict_interval_network(params, traj, j_l, j_r, u=None, t_last=None):
    """Probability that the next event falls in (j_l h, j_r h] at node ``u``
    (summed over nodes when ``u`` is None)."""
    lam, t_last = _continuation(params, traj, j_l, j_r, t_last)
    if u is not None and not 0 <= u < params.V:
        raise ArgumentError(f"node {u} outside 0..{params.V - 1}")
    h = params.grid.h
    bar = lam.sum(axis=1)
    share = lam if u is None else lam[:, [u]]
    total = 0.0
    for j in range(j_l + 1, j_r + 1):
        surv = np.exp(-h * bar[t_last:j - 1].sum())
        total += share[j - 1].sum() / bar[j - 1] * link_phi(h * bar[j - 1]) * surv
    return float(total)


def relative_errors(estimate, truth, norm="l2"):
    """||estimate - truth|| / ||truth|| over all entries, norm in {l1, l2, linf}."""
    est = np.ravel(np.asarray(estimate, dtype=float))
    tru = np.ravel(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ArgumentError(f"shape mismatch {est.shape} vs {tru.shape}")
    order = {"l1": 1, "l2": 2, "linf": np.inf}.get(norm)
    if order is None:
        raise ArgumentError(f"unknown norm {norm!r}")
    denom = np.linalg.norm(tru, order)
    if denom == 0:
        raise DomainError("truth has zero norm")
    return float(np.linalg.norm(est - tru, order) / denom)


def kernel_entries(kernel):
    """Trainable entries of a kernel, with time-invariant kernels lifted."""
    return kernel.lifted().params()


NORMS = ("l1", "l2", "linf")


def recovery_report(params, truth, Y_test):
    """Relative errors of baseline, kernel and step predictions in all norms."""
    p_est = step_probabilities(params, Y_test)
    p_true = step_probabilities(truth, Y_test)
    out = {}
    for norm in NORMS:
        out[f"mu_{norm}"] = relative_errors(params.mu, truth.mu, norm)
        out[f"kernel_{norm}"] = relative_errors(kernel_entries(params.kernel),
                                                kernel_entries(truth.kernel), norm)
        out[f"prediction_{norm}"] = relative_errors(p_est, p_true, norm)
    return out


@dataclass(frozen=True)
class Classification:
    tpr: float
    tnr: float
    ba: float
    threshold: float

    def __iter__(self):
        return iter((self.tpr, self.tnr, self.ba, self.threshold))


def confusion_rates(probs, labels, threshold):
    """(TPR, TNR) when predicting an event for probabilities above ``threshold``."""
    probs = np.asarray(probs, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    pos = labels.sum()
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise DomainError("rates are undefined with a single class of labels")
    pred = probs > threshold
    return float((pred & labels).sum() / pos), float((~pred & ~labels).sum() / neg)


def candidate_thresholds(probs):
    u = np.unique(np.asarray(probs, dtype=float))
    return np.union1d(u, (u[:-1] + u[1:]) / 2)


def best_threshold(probs, labels):
    """Threshold minimising |TPR - TNR|; ties go to the larger threshold."""
    best, best_gap = None, np.inf
    for thr in candidate_thresholds(probs):
        tpr, tnr = confusion_rates(probs, labels, thr)
        gap = abs(tpr - tnr)
        if gap <= best_gap:
            best, best_gap = thr, gap
    return float(best)


def classification_metrics(probs, labels, val_probs=None, val_labels=None):
    """TPR, TNR and balanced accuracy at the |TPR - TNR|-balancing threshold.

    The threshold is searched on the validation split (defaults to the
    evaluation data itself).
    """
    if val_probs is None:
        val_probs, val_labels = probs, labels
    thr = best_threshold(val_probs, val_labels)
    tpr, tnr = confusion_rates(probs, labels, thr)
    return Classification(tpr, tnr, (tpr + tnr) / 2, thr)
