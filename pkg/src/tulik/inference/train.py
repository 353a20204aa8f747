"""Batch stochastic training of the kernel and baseline (VI or GD field)."""
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ArgumentError, InfeasibleParameterError, NoRootError, NumericError, UnboundedError
from ..likelihood import loglik_from_intensity
from ..model import Kernel, ModelParams, TimeGrid, as_batch, batch_intensity, batch_intensity_stationary
from . import baseline
from .fields import (accumulate, accumulate_stationary, barrier_slope, residual_gd, residual_vi,
                     smoothness_gradient, smoothness_operator)
from .lowrank import low_rank_truncate

log = logging.getLogger(__name__)

NLL_FLOOR = 1e-10


@dataclass
class TrainConfig:
    """Solver hyperparameters.

    ``lr_schedule`` is a sequence of ``(last_epoch, rate)`` pairs: the rate
    applies to every epoch up to and including ``last_epoch``.

    The barrier term is summed over violating trajectories while the data
    term is a batch average.  ``barrier_mean=True`` divides the barrier by
    the batch size too; time-invariant kernels need it, since every violating
    step then pushes on the same N' coordinates.
    """

    batch_size: int = 400
    max_epochs: int = 300
    lr_schedule: tuple = ((100, 0.4), (300, 0.2))
    method: str = "vi"
    intensity_floor: float = 0.01
    barrier_weight: float = 0.1
    barrier_kind: str = "quadratic"
    barrier_mean: bool = False
    smoothness_weight: float = 0.08
    smoothness_implicit: bool = False
    svd_threshold: float = None
    mu_mix: float = 0.1
    rng_seed: int = 0
    time_invariant: bool = False
    init: str = "zero"

    def __post_init__(self):
        self.lr_schedule = tuple((int(k), float(r)) for k, r in self.lr_schedule)
        self.validate()

    def validate(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ArgumentError("batch size and epoch count must be positive")
        if self.method not in ("vi", "gd"):
            raise ArgumentError(f"method must be 'vi' or 'gd', got {self.method!r}")
        if not self.intensity_floor > 0:
            raise ArgumentError("intensity floor must be positive")
        if self.barrier_weight < 0 or self.smoothness_weight < 0:
            raise ArgumentError("penalty weights must be nonnegative")
        if self.barrier_kind not in ("quadratic", "log"):
            raise ArgumentError(f"unknown barrier kind {self.barrier_kind!r}")
        if not 0 < self.mu_mix < 1:
            raise ArgumentError("mu_mix must lie in (0, 1)")
        if self.svd_threshold is not None and not self.svd_threshold > 0:
            raise ArgumentError("svd_threshold must be positive")
        if self.init not in ("zero", "sads"):
            raise ArgumentError(f"unknown init {self.init!r}")
        if not self.lr_schedule or max(k for k, _ in self.lr_schedule) < self.max_epochs:
            raise ArgumentError("learning-rate schedule does not cover every epoch")
        if any(r <= 0 for _, r in self.lr_schedule):
            raise ArgumentError("learning rates must be positive")

    def lr(self, epoch):
        for last, rate in sorted(self.lr_schedule):
            if epoch <= last:
                return rate
        raise ArgumentError(f"no learning rate for epoch {epoch}")

    def to_dict(self):
        return asdict(self)


@dataclass
class FitReport:
    nll_per_epoch: list = field(default_factory=list)
    mu_trace: list = field(default_factory=list)
    violation_counts: list = field(default_factory=list)
    mu_skips: list = field(default_factory=list)
    final_params: ModelParams = None
    truncation_rank: int = None
    untruncated_params: ModelParams = None
    metadata: dict = field(default_factory=dict)

    @property
    def epochs(self):
        return len(self.nll_per_epoch)


def _initial_kernel(grid, V, config):
    if config.time_invariant:
        return np.zeros((grid.Nprime, V, V))
    psi = np.zeros((grid.L, grid.Nprime, V, V))
    if config.init == "sads":
        # constant start, nothing flowing out of the last (outcome) node
        psi[grid.param_mask()] = 0.1
        psi[..., V - 1, :] = 0.0
    return psi


def empirical_mu(Y, grid):
    counts = Y[:, grid.Nprime:].sum(axis=(0, 1)).astype(float)
    return counts / (Y.shape[0] * grid.N * grid.h)


class _Model:
    """Mutable solver state (mu, kernel array) with the batch kernels it needs."""

    def __init__(self, grid, mu, kern, stationary):
        self.grid = grid
        self.mu = mu
        self.kern = kern
        self.stationary = stationary

    def lam(self, Y):
        if self.stationary:
            return batch_intensity_stationary(self.mu, self.kern, Y, self.grid)
        return batch_intensity(self.mu, self.kern, Y, self.grid)

    def collect(self, R, Y):
        if self.stationary:
            return accumulate_stationary(R, Y, self.grid)
        return accumulate(R, Y, self.grid)

    def params(self):
        return ModelParams(self.mu.copy(), Kernel(self.grid, self.kern.copy(), self.stationary))

    def smoothness(self, h):
        mask = self.grid.param_mask()
        if not self.stationary:
            return smoothness_gradient(self.kern, h, mask) * mask[:, :, None, None]
        lifted = np.broadcast_to(self.kern, (self.grid.L,) + self.kern.shape)
        g = smoothness_gradient(lifted, h, mask) * mask[:, :, None, None]
        return g.sum(axis=0)

    def smooth_implicit(self, c):
        """Proximal smoothness step: solve (I + c H) x_new = x."""
        from scipy.sparse import identity
        from scipy.sparse.linalg import factorized
        if getattr(self, "_prox", (None,))[0] != c:
            H = smoothness_operator(self.grid, self.stationary)
            self._prox = (c, factorized((identity(H.shape[0], format="csc") + c * H).tocsc()))
        solve = self._prox[1]
        if self.stationary:
            x = self.kern.reshape(self.kern.shape[0], -1)
            self.kern = np.column_stack([solve(col) for col in x.T]).reshape(self.kern.shape)
            return
        mask = self.grid.param_mask()
        x = self.kern[mask].reshape(int(mask.sum()), -1)
        self.kern[mask] = np.column_stack([solve(col) for col in x.T]).reshape(self.kern[mask].shape)


def batch_step(model, Yb, config, lr):
    """One batch update of the kernel followed by the baseline update.

    Returns (violations, mu_skipped).
    """
    g = model.grid
    h = g.h
    Yb = np.asarray(Yb, dtype=float)
    MB = Yb.shape[0]
    lam = model.lam(Yb)
    Yobs = Yb[:, g.Nprime:]
    viol = lam.min(axis=(1, 2)) < config.intensity_floor
    ok = ~viol
    residual = residual_vi if config.method == "vi" else residual_gd
    grad = model.collect(residual(lam[ok], Yobs[ok], h), Yb[ok]) / MB
    if viol.any():
        slope = barrier_slope(lam[viol], config.intensity_floor, config.barrier_kind)
        weight = config.barrier_weight / (MB if config.barrier_mean else 1)
        grad = grad + weight * model.collect(slope, Yb[viol])
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite field in batch update "
                           f"(max |Lambda|={np.abs(lam).max():.3g}, violations={int(viol.sum())})")
    model.kern -= lr * grad

    skipped = 0
    params = ModelParams(np.maximum(model.mu, baseline.MU_LO),
                         Kernel(g, model.kern, model.stationary))
    try:
        if model.mu.size == 1:
            mu_t = np.array([baseline.solve_mu_time_only(params, Yb)])
            ok_nodes = np.ones(1, dtype=bool)
        else:
            mu_t, failures = baseline.solve_mu_network(params, Yb)
            ok_nodes = np.isfinite(mu_t)
            skipped = len(failures)
    except (NoRootError, UnboundedError, InfeasibleParameterError) as err:
        log.debug("baseline update skipped: %s", err)
        return int(viol.sum()), model.mu.size
    w = config.mu_mix
    model.mu = np.where(ok_nodes, (1 - w) * model.mu + w * np.nan_to_num(mu_t), model.mu)
    return int(viol.sum()), skipped


def mean_nll(params_or_model, Y, floor=NLL_FLOOR, chunk=8192):
    """Average negative log-likelihood; intensities are floored so the value stays finite."""
    if isinstance(params_or_model, ModelParams):
        p = params_or_model
        model = _Model(p.grid, p.mu, p.kernel.values, p.kernel.time_invariant)
    else:
        model = params_or_model
    g = model.grid
    total = 0.0
    for s in range(0, Y.shape[0], chunk):
        Yc = np.asarray(Y[s:s + chunk], dtype=float)
        total += loglik_from_intensity(model.lam(Yc), Yc[:, g.Nprime:], g.h, floor).sum()
    return -total / Y.shape[0]


def _resolve(data, grid):
    if hasattr(data, "Y") and hasattr(data, "grid"):
        return np.asarray(data.Y), data.grid
    if isinstance(data, (list, tuple)):
        if not data:
            raise ArgumentError("empty dataset")
        grids = {tr.grid for tr in data}
        if len(grids) != 1:
            raise ArgumentError("trajectories live on different grids")
        if len({tr.V for tr in data}) != 1:
            raise ArgumentError("trajectories have different node counts")
        return as_batch(data), grids.pop()
    if grid is None:
        raise ArgumentError("pass the grid together with a raw event array")
    return as_batch(data), grid


def train(config, data, grid=None, mu0=None, callback=None):
    """Fit baseline and kernel by batch stochastic VI or GD updates.

    ``data`` is a list of Trajectory, an object with ``Y`` and ``grid``
    attributes, or an (M, L, V) array together with ``grid``.  ``callback``
    (if given) is called as ``callback(epoch, report)`` after every epoch.
    """
    config.validate()
    Y, grid = _resolve(data, grid)
    if Y.shape[0] == 0:
        raise ArgumentError("empty dataset")
    if not isinstance(grid, TimeGrid) or Y.shape[1] != grid.L:
        raise ArgumentError("data do not match the grid")
    M, _, V = Y.shape
    if mu0 is None:
        mu = np.maximum(empirical_mu(Y, grid), baseline.MU_LO)
    else:
        mu = np.broadcast_to(np.asarray(mu0, dtype=float), (V,)).copy()
    model = _Model(grid, mu, _initial_kernel(grid, V, config), config.time_invariant)
    report = FitReport(metadata={
        "method": config.method,
        "config": config.to_dict(),
        "mu_bracket": [baseline.MU_LO, baseline.MU_CAP],
        "mu_xtol": baseline.XTOL,
        "nll_floor": NLL_FLOOR,
        "num_trajectories": M,
    })
    MB = min(config.batch_size, M)
    stiff = max(r for _, r in config.lr_schedule) * config.smoothness_weight * 8 / grid.h ** 2
    if stiff > 2 and not config.smoothness_implicit:
        log.warning("explicit smoothness step is unstable on this grid (lr*weight*8/h^2 = %.3g > 2); "
                    "consider smoothness_implicit=True", stiff)
    for epoch in range(1, config.max_epochs + 1):
        lr = config.lr(epoch)
        order = np.random.default_rng([config.rng_seed, epoch]).permutation(M)
        violations = skips = 0
        for s in range(0, M, MB):
            v, k = batch_step(model, Y[order[s:s + MB]], config, lr)
            violations += v
            skips += k
        if config.smoothness_weight > 0:
            c = lr * config.smoothness_weight
            if config.smoothness_implicit:
                model.smooth_implicit(c)
            else:
                model.kern -= c * model.smoothness(grid.h)
        report.nll_per_epoch.append(float(mean_nll(model, Y)))
        report.mu_trace.append(model.mu.copy())
        report.violation_counts.append(violations)
        report.mu_skips.append(skips)
        log.info("epoch %d nll %.6f mu %s violations %d", epoch, report.nll_per_epoch[-1],
                 np.array2string(model.mu, precision=4), violations)
        if callback is not None:
            callback(epoch, report)
    params = model.params()
    report.untruncated_params = params
    if config.svd_threshold is not None:
        kern, r = low_rank_truncate(params.kernel, config.svd_threshold)
        params = params.replace(kernel=kern)
        report.truncation_rank = r
    report.final_params = params
    return report
