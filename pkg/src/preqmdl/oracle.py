"""Exact reference coders for binary label sequences.

These are the small-scale ground truths the learned predictors are compared
against: the normalized maximum likelihood code, whose lengths form an exact
probability distribution over sequences of a given length, and the
Krichevsky-Trofimov add-half coder, which is within a known regret bound of
hindsight maximum likelihood.  All lengths are in nats.
"""

import math

import numpy as np

MAX_COMPLEXITY_T = 20


def _as_bits(sequence):
    bits = np.asarray(list(sequence), dtype=np.int64)
    if bits.size == 0:
        raise ValueError("sequence must be nonempty")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("sequence must be binary")
    return bits


def ml_code_length(sequence):
    """Hindsight maximum-likelihood code length: -ln (k/T)^k ((T-k)/T)^(T-k),
    with 0^0 = 1."""
    bits = _as_bits(sequence)
    t = bits.size
    k = int(bits.sum())
    out = 0.0
    if 0 < k:
        out -= k * math.log(k / t)
    if k < t:
        out -= (t - k) * math.log((t - k) / t)
    return out


def nml_complexity(t):
    """ln sum_{k=0}^{t} C(t, k) (k/t)^k ((t-k)/t)^(t-k) for 1 <= t <= 20.

    The binomial coefficient counts the sequences sharing a maximum
    likelihood estimate, so the sum ranges over compositions rather than all
    2^t sequences.
    """
    if not 1 <= t <= MAX_COMPLEXITY_T:
        raise ValueError(f"t must lie in [1, {MAX_COMPLEXITY_T}]")
    total = 0.0
    for k in range(t + 1):
        term = float(math.comb(t, k))
        if 0 < k:
            term *= (k / t) ** k
        if k < t:
            term *= ((t - k) / t) ** (t - k)
        total += term
    return math.log(total)


def nml_code_length(sequence):
    """Normalized maximum likelihood code length: hindsight ML cost plus the
    model-class complexity for this sequence length."""
    bits = _as_bits(sequence)
    return ml_code_length(bits) + nml_complexity(bits.size)


def kt_code_length(sequence):
    """Sequential Krichevsky-Trofimov code length.

    Predicts p(next = 1) = (ones + 1/2) / (seen + 1) and charges -ln of the
    probability assigned to each realized symbol.
    """
    bits = _as_bits(sequence)
    total = 0.0
    ones = 0
    for t, b in enumerate(bits):
        p_one = (ones + 0.5) / (t + 1)
        total -= math.log(p_one if b == 1 else 1.0 - p_one)
        ones += int(b)
    return total
