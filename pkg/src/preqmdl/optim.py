"""Optimizers and parameter trackers used by the online protocols.

All update rules are elementwise and run through the kernel backend.  Bias
vectors are exempt from weight decay in both optimizers.  Learning rates may
be zero (a frozen model is a legitimate predictor).
"""

import numpy as np

from preqmdl import backends
from preqmdl.models import Params


def _flat(arr):
    if not arr.flags.c_contiguous:
        raise ValueError("parameter arrays must be C-contiguous")
    return arr.reshape(-1)


class AdamW:
    """Adam with decoupled weight decay.

    params' = params - lr * (m_hat / (sqrt(v_hat) + eps) + wd * params),
    with bias-corrected first and second moments.  Decay applies to weight
    matrices only.
    """

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        if lr < 0 or weight_decay < 0:
            raise ValueError("lr and weight_decay must be nonnegative")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = None
        self._v = None

    def step(self, params, grads):
        if self._m is None:
            self._m = params.zeros_like()
            self._v = params.zeros_like()
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        arrays = zip(params.arrays(), grads.arrays(),
                     self._m.arrays(), self._v.arrays())
        for (p, is_bias), (g, _), (m, _), (v, _) in arrays:
            wd = 0.0 if is_bias else self.weight_decay
            backends.adamw_step(_flat(p), _flat(g), _flat(m), _flat(v),
                                self.lr, self.beta1, self.beta2, self.eps,
                                wd, bc1, bc2)


class SgdMomentum:
    """SGD with momentum; weight decay is added to the gradient (weights
    only) before the velocity update."""

    def __init__(self, lr, momentum=0.9, weight_decay=0.0):
        if lr < 0 or weight_decay < 0:
            raise ValueError("lr and weight_decay must be nonnegative")
        if not 0 <= momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._vel = None

    def step(self, params, grads):
        if self._vel is None:
            self._vel = params.zeros_like()
        for (p, is_bias), (g, _), (vel, _) in zip(
                params.arrays(), grads.arrays(), self._vel.arrays()):
            wd = 0.0 if is_bias else self.weight_decay
            backends.sgd_momentum_step(_flat(p), _flat(g), _flat(vel),
                                       self.lr, self.momentum, wd)


def make_optimizer(kind, lr, weight_decay=0.0, beta1=0.9, beta2=0.999,
                   eps=1e-8, momentum=0.9):
    if kind == "adamw":
        return AdamW(lr, beta1, beta2, eps, weight_decay)
    if kind == "sgd":
        return SgdMomentum(lr, momentum, weight_decay)
    raise ValueError(f"unknown optimizer kind {kind!r}")


class EmaTracker:
    """Exponential moving average of parameters.

    After update(params): ema = (1 - alpha) * ema + alpha * params.
    Evaluation always reads ``tracker.params``.
    """

    def __init__(self, params, alpha):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        self.alpha = alpha
        self.params = params.copy()

    def update(self, params):
        for (e, _), (p, _) in zip(self.params.arrays(), params.arrays()):
            backends.ema_step(_flat(e), _flat(p), self.alpha)


def shrink_perturb(params, shrink=0.5, noise_std=0.01, seed=0):
    """Shrink all parameters toward zero and add noise to the weights.

    Weights become shrink * w + noise_std * N(0, I); biases are shrunk but
    not perturbed.  Mutates ``params`` and returns it.  Noise is drawn from
    PCG64(seed), weight matrices in layer order.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(seed))
    for w in params.weights:
        w *= shrink
        w += noise_std * rng.standard_normal(w.shape)
    for b in params.biases:
        b *= shrink
    return params


def beta_params(beta_init):
    """Wrap the scalar calibration parameter so optimizers can drive it.

    It rides in the bias slot, which keeps it exempt from weight decay.
    """
    return Params(weights=[], biases=[np.array([float(beta_init)])])
