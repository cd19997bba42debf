"""Replay-stream and replay-buffer machinery for the online protocols.

A replay stream is a pointer that sweeps forward through the history and
occasionally teleports back to the start.  The reset probability when the
learner moves from position t_prev to t_new is

    p = sum_{a = t_prev+1}^{t_new} mass(a) / sum_{a = 1}^{t_new} mass(a)

where mass is an unnormalized weight over ages (age 1 = newest example).
Resets are applied before the read.  With one-example windows this makes the
read index at learner position t distributed exactly as the normalized mass
over ages: writing M(t) for the prefix sum, the chance of never resetting
over the last k steps telescopes to M(t-k)/M(t), so P(read index i) =
mass(t - i + 1) / M(t).  Wider windows trade that exactness for batching.

Buffers are the bounded-memory alternative: fifo keeps the most recent c
items, reservoir keeps a uniform sample of everything seen.
"""

import math
from dataclasses import dataclass

import numpy as np

from preqmdl import backends

# Default Pareto tail exponent, log base 4 of 5.
PARETO_DEFAULT_SHAPE = math.log(5.0) / math.log(4.0)


@dataclass(frozen=True)
class ReplayDistribution:
    """Unnormalized age weighting: uniform, exponential or pareto."""

    kind: str
    rate: float = 1.0
    scale: float = 1.0
    shape: float = PARETO_DEFAULT_SHAPE

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential", "pareto"):
            raise ValueError(f"unknown replay distribution {self.kind!r}")
        if self.kind == "exponential" and self.rate <= 0:
            raise ValueError("exponential rate must be positive")
        if self.kind == "pareto" and (self.scale <= 0 or self.shape <= 0):
            raise ValueError("pareto scale and shape must be positive")


def uniform():
    return ReplayDistribution("uniform")


def exponential(rate):
    return ReplayDistribution("exponential", rate=rate)


def pareto(scale, shape=PARETO_DEFAULT_SHAPE):
    return ReplayDistribution("pareto", scale=scale, shape=shape)


def replay_mass(dist, age):
    """Unnormalized mass at integer age >= 1.  Accepts scalars or arrays."""
    a = np.asarray(age, dtype=np.float64)
    if np.any(a < 1):
        raise ValueError("ages must be >= 1")
    if dist.kind == "uniform":
        out = np.ones_like(a)
    elif dist.kind == "exponential":
        out = dist.rate * np.exp(-dist.rate * a)
    else:
        out = dist.shape / (a / dist.scale) ** (dist.shape + 1.0)
    return float(out) if np.isscalar(age) else out


def _mass_tail(dist, t_prev, t_new):
    """sum of mass over ages (t_prev, t_new], in closed form where cheap."""
    if dist.kind == "uniform":
        return float(t_new - t_prev)
    if dist.kind == "exponential":
        lam = dist.rate
        # lam * sum_{a=t_prev+1}^{t_new} e^(-lam a), geometric series
        return (lam * math.exp(-lam * (t_prev + 1))
                * -math.expm1(-lam * (t_new - t_prev))
                / -math.expm1(-lam))
    ages = np.arange(t_prev + 1, t_new + 1, dtype=np.float64)
    return float(replay_mass(dist, ages).sum())


def reset_probability(dist, t_prev, t_new):
    """Probability that a stream resets when the learner advances from
    position t_prev to t_new.

    Defined as mass over ages (t_prev, t_new] divided by mass over [1, t_new];
    at t_prev = 0 this is exactly 1, so freshly created streams always start
    at the head.  Uniform mass gives exactly (t_new - t_prev) / t_new.
    """
    t_prev = int(t_prev)
    t_new = int(t_new)
    if t_prev < 0 or t_new <= t_prev:
        raise ValueError("need 0 <= t_prev < t_new")
    if dist.kind == "uniform":
        return (t_new - t_prev) / t_new
    tail = _mass_tail(dist, t_prev, t_new)
    total = _mass_tail(dist, 0, t_prev) + tail
    return min(tail / total, 1.0)


class ReplayStreamSet:
    """A bank of replay streams advanced in lockstep with the learner.

    Positions are 1-based indices into the sequence seen so far.  Each call
    to step() first resets every stream independently with the probability
    above, then restarts any stream whose window would overrun position
    t_new, then emits each stream's window start and advances it by the
    window length.
    """

    def __init__(self, num_streams, distribution):
        if num_streams < 1:
            raise ValueError("num_streams must be positive")
        self.distribution = distribution
        self.num_streams = int(num_streams)
        self.positions = np.ones(self.num_streams, dtype=np.int64)
        self.t = 0
        self._prefix = 0.0

    def step(self, t_new, rng, window=1):
        """Advance to learner position t_new; return per-stream window starts.

        Every emitted window [start, start + window) lies inside [1, t_new].
        """
        t_new = int(t_new)
        window = int(window)
        if t_new <= self.t:
            raise ValueError("t_new must exceed the current position")
        if not 1 <= window <= t_new:
            raise ValueError("window must lie in [1, t_new]")
        tail = _mass_tail(self.distribution, self.t, t_new)
        total = self._prefix + tail
        p_reset = min(tail / total, 1.0)
        draws = rng.random(self.num_streams)
        starts = np.empty(self.num_streams, dtype=np.int64)
        backends.stream_step(self.positions, starts, draws, p_reset,
                             window, t_new)
        self.t = t_new
        self._prefix = total
        return starts


class ReplayBuffer:
    """Bounded store of items under a fifo or reservoir retention policy.

    fifo keeps exactly the ``capacity`` most recent items.  reservoir keeps
    each of the t items seen so far with probability capacity / t: the t-th
    item is accepted with that probability and overwrites a uniformly chosen
    slot (one uniform draw, then one slot draw, per insert past capacity).
    """

    def __init__(self, capacity, policy):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if policy not in ("fifo", "reservoir"):
            raise ValueError(f"unknown buffer policy {policy!r}")
        self.capacity = int(capacity)
        self.policy = policy
        self.items_seen = 0
        self._items = []

    def __len__(self):
        return len(self._items)

    @property
    def contents(self):
        return tuple(self._items)

    def insert(self, item, rng=None):
        self.items_seen += 1
        t = self.items_seen
        if len(self._items) < self.capacity:
            self._items.append(item)
            return
        if self.policy == "fifo":
            self._items[(t - 1) % self.capacity] = item
        else:
            if rng is None:
                raise ValueError("reservoir inserts need an rng")
            accept = rng.random()
            slot = int(rng.integers(0, self.capacity))
            if accept < self.capacity / t:
                self._items[slot] = item

    def sample(self, batch_size, rng):
        """Uniform sample with replacement from the current contents."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def reservoir_inclusion_counts(capacity, n_items, n_trials, seed):
    """Monte-Carlo survey of reservoir retention.

    Runs ``n_trials`` independent reservoirs over items 1..n_items and
    returns, for each item, the number of trials whose final buffer contains
    it.  Uses the same accept-then-slot draw rule as ReplayBuffer, vectorized
    across trials through the kernel backend.
    """
    if n_items < capacity:
        raise ValueError("need n_items >= capacity")
    rng = np.random.Generator(np.random.PCG64(seed))
    slots = np.tile(np.arange(1, capacity + 1, dtype=np.int64),
                    (n_trials, 1))
    for t in range(capacity + 1, n_items + 1):
        accept = rng.random(n_trials)
        choice = rng.integers(0, capacity, size=n_trials)
        backends.reservoir_step(slots, accept, choice, capacity / t, t)
    return np.bincount(slots.reshape(-1), minlength=n_items + 1)[1:]
