"""Linear and MLP classifiers with exact gradients and FLOPs accounting.

Weights are stored per layer as (fan_out, fan_in) float64 matrices, so a
layer computes x @ W.T + b.  FLOPs are counted for dense products only, as
2 * fan_in * fan_out per example per layer; a backward pass is charged at
twice the forward cost, so one training step costs three forwards.

Prediction runs the logits through a calibrated softmax
p = softmax(softplus(beta) * h).  At beta0 = log(e - 1) the scale is 1 to
within one ulp, so an uncalibrated model is the calibrated one with beta
frozen at beta0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# softplus(BETA_INIT) == 1
BETA_INIT = math.log(math.e - 1.0)
WS_EPS = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_sizes: tuple = ()
    weight_standardization: bool = False
    standardize_output: bool = False
    ws_eps: float = WS_EPS

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "linear" and self.hidden_sizes:
            raise ValueError("linear models take no hidden sizes")
        if self.kind == "mlp" and not self.hidden_sizes:
            raise ValueError("mlp models need at least one hidden size")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("input_dim must be >= 1 and num_classes >= 2")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")

    def layer_dims(self):
        sizes = (self.input_dim,) + tuple(self.hidden_sizes) \
            + (self.num_classes,)
        return list(zip(sizes[:-1], sizes[1:]))


@dataclass
class Params:
    """Per-layer weight matrices and bias vectors, all float64."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def copy(self):
        return Params([w.copy() for w in self.weights],
                      [b.copy() for b in self.biases])

    def arrays(self):
        """Yield (array, is_bias) over every parameter array."""
        for w in self.weights:
            yield w, False
        for b in self.biases:
            yield b, True

    def zeros_like(self):
        return Params([np.zeros_like(w) for w in self.weights],
                      [np.zeros_like(b) for b in self.biases])


def init_params(spec, seed, scale=1.0):
    """He-initialized parameters: W ~ N(0, 2/fan_in) * scale, biases zero.

    ``seed`` may be an int or a numpy SeedSequence.  ``scale`` of zero gives
    an all-zero model, which predicts uniformly.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params = Params()
    for fan_in, fan_out in spec.layer_dims():
        std = scale * math.sqrt(2.0 / fan_in)
        params.weights.append(std * rng.standard_normal((fan_out, fan_in)))
        params.biases.append(np.zeros(fan_out))
    return params


def forward_flops(spec, batch_size):
    """FLOPs of one forward pass on ``batch_size`` examples."""
    return 2 * sum(fi * fo for fi, fo in spec.layer_dims()) * batch_size


def weight_standardize(w, eps=WS_EPS):
    """Standardize each row of ``w`` to mean 0 and unit variance.

    Variance is the population variance over the row plus ``eps``; the row
    must have at least 2 entries for the statistics to mean anything.
    """
    if w.ndim != 2 or w.shape[1] < 2:
        raise ValueError("weight_standardize needs a 2-D matrix with >= 2 "
                         "columns")
    mu = w.mean(axis=1, keepdims=True)
    var = w.var(axis=1, keepdims=True)
    return (w - mu) / np.sqrt(var + eps)


def _standardized_layers(spec):
    n = len(spec.layer_dims())
    out = []
    for layer in range(n):
        is_output = layer == n - 1
        use = spec.weight_standardization and (
            not is_output or spec.standardize_output
        )
        out.append(use)
    return out


def _forward_cached(spec, params, x):
    """Forward pass keeping what the backward pass needs.

    Returns (logits, cache, flops); cache holds per layer the input
    activation, the effective weights, the pre-activation, and for
    standardized layers (sigma, w_hat).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError("x must be (batch, input_dim)")
    use_ws = _standardized_layers(spec)
    a = x
    cache = []
    n_layers = len(params.weights)
    for layer in range(n_layers):
        w = params.weights[layer]
        if use_ws[layer]:
            mu = w.mean(axis=1, keepdims=True)
            var = w.var(axis=1, keepdims=True)
            sigma = np.sqrt(var + spec.ws_eps)
            w_hat = (w - mu) / sigma
            w_eff = w_hat
        else:
            sigma = None
            w_hat = None
            w_eff = w
        pre = a @ w_eff.T + params.biases[layer]
        cache.append((a, w_eff, pre, sigma, w_hat))
        a = np.maximum(pre, 0.0) if layer < n_layers - 1 else pre
    return a, cache, forward_flops(spec, x.shape[0])


def forward(spec, params, x):
    """Uncalibrated logits for a batch.  Returns (logits, flops)."""
    logits, _, flops = _forward_cached(spec, params, x)
    return logits, flops


def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(z - np.logaddexp(0.0, z))


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(spec, params, beta, x):
    """Calibrated class probabilities.  Returns (probs, flops).

    Rows sum to 1 up to float64 rounding.  The calibration scale
    softplus(beta) is positive, so the argmax matches the raw logits.
    """
    logits, flops = forward(spec, params, x)
    probs = _softmax(float(softplus(beta)) * logits)
    return probs, flops


def calibrated_log_loss(logits, y, beta):
    """Per-example -log p[y] in nats under the calibrated softmax."""
    z = float(softplus(beta)) * np.asarray(logits, dtype=np.float64)
    logp = _log_softmax(z)
    return -logp[np.arange(z.shape[0]), np.asarray(y)]


def calibration_grad(logits, y, beta):
    """d/d(beta) of the mean calibrated log loss on a batch.

    With s = softplus(beta) and p = softmax(s * h), the derivative in s of
    one example's loss is sum_c p_c h_c - h_y; the chain rule contributes
    sigmoid(beta).
    """
    h = np.asarray(logits, dtype=np.float64)
    y = np.asarray(y)
    s = float(softplus(beta))
    p = _softmax(s * h)
    d_s = (p * h).sum(axis=1) - h[np.arange(h.shape[0]), y]
    return float(d_s.mean() * _sigmoid(beta))


def loss_and_grads(spec, params, x, y, label_smoothing=0.0):
    """Mean label-smoothed cross-entropy and exact parameter gradients.

    The target distribution is (1 - eps) * onehot(y) + eps / C.  Loss is in
    nats, uncalibrated (training always runs at unit temperature).  Returns
    (loss, grads, flops) where flops is three times the forward cost.
    """
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError("label_smoothing must be in [0, 1)")
    y = np.asarray(y)
    logits, cache, fwd_flops = _forward_cached(spec, params, x)
    batch, classes = logits.shape
    if y.shape != (batch,):
        raise ValueError("y must be (batch,)")

    logp = _log_softmax(logits)
    eps = label_smoothing
    picked = logp[np.arange(batch), y]
    loss = -((1.0 - eps) * picked + (eps / classes) * logp.sum(axis=1))
    loss = float(loss.mean())

    q = np.full((batch, classes), eps / classes)
    q[np.arange(batch), y] += 1.0 - eps
    g = (np.exp(logp) - q) / batch

    grads = params.zeros_like()
    use_ws = _standardized_layers(spec)
    for layer in range(len(params.weights) - 1, -1, -1):
        a_in, w_eff, pre, sigma, w_hat = cache[layer]
        d_weff = g.T @ a_in
        grads.biases[layer] = g.sum(axis=0)
        if use_ws[layer]:
            # Backward through row standardization: with w_hat = (w - mu)/sigma,
            # dL/dw = (dL/dw_hat - rowmean(dL/dw_hat)
            #          - w_hat * rowmean(dL/dw_hat * w_hat)) / sigma.
            row_mean = d_weff.mean(axis=1, keepdims=True)
            proj = (d_weff * w_hat).mean(axis=1, keepdims=True)
            grads.weights[layer] = (d_weff - row_mean - w_hat * proj) / sigma
        else:
            grads.weights[layer] = d_weff
        if layer > 0:
            g = (g @ w_eff) * (cache[layer - 1][2] > 0.0)
    return loss, grads, 3 * fwd_flops
