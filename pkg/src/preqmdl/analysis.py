"""Turning description lengths into comparisons between models.

A description length is an evidence score: exponentiating the negative
lengths and normalizing gives a posterior over the compared models under a
uniform prior.  Regret curves and compute-versus-length Pareto fronts are
the other two standard readings.
"""

import numpy as np


def model_log_posterior(lengths):
    """Log posterior probabilities from description lengths in nats."""
    l = np.asarray(lengths, dtype=np.float64)
    if l.ndim != 1 or l.size == 0:
        raise ValueError("lengths must be a nonempty 1-D array")
    # Work with gaps from the best model: differences between nearby large
    # lengths are exact, while shifting by a large logsumexp is not.
    z = l.min() - l
    return z - _logsumexp(z)


def model_posterior(lengths):
    """Posterior probabilities proportional to exp(-length).

    Shift-invariant: adding a constant to every length changes nothing.
    """
    return np.exp(model_log_posterior(lengths))


def _logsumexp(z):
    m = z.max()
    return m + np.log(np.exp(z - m).sum())


def regret_curve(losses_a, losses_b):
    """Cumulative extra nats of A over B, step by step.

    Inputs are per-step losses of two runs over the same sequence; lengths
    must match.
    """
    a = np.asarray(losses_a, dtype=np.float64)
    b = np.asarray(losses_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("per-step loss arrays must be 1-D with equal length")
    return np.cumsum(a - b)


def pareto_front(flops, lengths):
    """Indices of the non-dominated (flops, length) points.

    A point dominates another if it is no worse in both coordinates and
    strictly better in at least one.  Duplicated points keep their first
    occurrence.  The returned indices are ordered by increasing flops, which
    makes the corresponding lengths strictly decreasing.
    """
    f = np.asarray(flops, dtype=np.float64)
    l = np.asarray(lengths, dtype=np.float64)
    if f.shape != l.shape or f.ndim != 1 or f.size == 0:
        raise ValueError("flops and lengths must be matching nonempty 1-D "
                         "arrays")
    order = np.lexsort((l, f))
    kept = []
    best_len = np.inf
    last_point = None
    for i in order:
        point = (f[i], l[i])
        if point == last_point:
            continue
        if l[i] < best_len:
            kept.append(i)
            best_len = l[i]
            last_point = point
    return np.asarray(kept, dtype=np.int64)
