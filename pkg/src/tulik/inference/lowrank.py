import numpy as np

from ..errors import ArgumentError
from ..model import Kernel


def middle_chunk(psi, grid):
    """Tall matrix of the full-row block of every node-pair kernel, ((N-N'+1)V^2, N')."""
    mid = psi[grid.middle_rows()]                 # (Nm, N', V, V)
    return mid.transpose(2, 3, 0, 1).reshape(-1, grid.Nprime)


def low_rank_truncate(kernel, tau):
    """Project every row of the lag-major kernel onto the leading right singular
    vectors of its middle chunk (singular values > tau).

    Returns ``(kernel, rank)``.  Entries outside the trainable region keep
    their values.
    """
    if not tau > 0:
        raise ArgumentError("singular value threshold must be positive")
    g = kernel.grid
    if g.N < g.Nprime:
        raise ArgumentError("low-rank truncation needs N >= N' (no full rows otherwise)")
    psi = kernel.dense()
    _, s, vt = np.linalg.svd(middle_chunk(psi, g), full_matrices=False)
    r = int(np.sum(s > tau))
    P = vt[:r].T @ vt[:r]
    new = np.einsum("rlab,lk->rkab", psi, P)
    mask = g.param_mask()
    new[~mask] = psi[~mask]
    return Kernel(g, new), r
