"""Prequential code-length estimators for the four online protocols.

Every protocol walks once over a labelled sequence, charges each example
-log p(label) in nats under a model that has only seen earlier examples,
and accounts every dense-product FLOP it spends.  Evaluation always uses
the EMA of the parameters through the calibrated softmax; training always
runs at unit temperature on the raw parameters.

Protocols:

* ``mi_rs``: memory-infinite with replay streams.  Each fresh batch is
  evaluated, the calibration scalar takes one gradient step reusing the
  evaluation forward, the model trains once on the (optionally noised)
  fresh batch, and then on one same-sized window from each of K replay
  streams, with an EMA update after every step.
* ``mi_rb``: same loop, but replay comes from a bounded buffer: fresh
  examples are inserted, then K batches are sampled uniformly from the
  buffer.
* ``ci_fs``: chunk-incremental, from scratch.  The first ``s_1`` labels are
  charged at the uniform rate ln C; for each later chunk a fresh model is
  trained for E epochs on all preceding data (with a held-out calibration
  tail) and evaluated on the chunk.
* ``ci_cf``: chunk-incremental with continual fine-tuning: parameters,
  optimizer state, EMA and calibration persist across chunks, optionally
  shrunk and perturbed between them.

Determinism: every random draw comes from PCG64 generators seeded by
spawning the run seed's SeedSequence, in a fixed documented order, so a
(config, dataset, seed) triple pins the entire trajectory bit for bit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from preqmdl import replay
from preqmdl.models import (BETA_INIT, ModelSpec, calibrated_log_loss,
                            calibration_grad, forward, forward_flops,
                            init_params, loss_and_grads)
from preqmdl.optim import EmaTracker, beta_params, make_optimizer, \
    shrink_perturb
from preqmdl.replay import ReplayBuffer, ReplayStreamSet

PROTOCOLS = ("mi_rs", "mi_rb", "ci_fs", "ci_cf")


class InvariantError(Exception):
    """An internal self-check failed; results must not be trusted."""


def uniform_code_length(t, num_classes):
    """Nats spent by the uniform predictor on t examples."""
    if t < 0 or num_classes < 2:
        raise ValueError("need t >= 0 and num_classes >= 2")
    return t * math.log(num_classes)


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run besides the data itself."""

    protocol: str
    model: ModelSpec
    seed: int = 0
    optimizer: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.9
    ema_alpha: float = 0.01
    label_smoothing: float = 0.01
    batch_size: int = 32
    augment_sigma: float = 0.0
    calibrate: bool = True
    init_scale: float = 1.0
    num_streams: int = 4
    distribution: replay.ReplayDistribution = field(
        default_factory=replay.uniform)
    buffer_capacity: int = 512
    buffer_policy: str = "fifo"
    schedule_first: int = 2
    schedule_ratio: float = 2.0
    epochs_per_chunk: int = 1
    use_shrink_perturb: bool = False
    sp_shrink: float = 0.5
    sp_noise: float = 0.01

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if not 0 < self.ema_alpha <= 1:
            raise ValueError("ema_alpha must lie in (0, 1]")
        if self.num_streams < 0:
            raise ValueError("num_streams must be nonnegative")
        if self.protocol == "mi_rb" and self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be >= batch_size")
        if self.epochs_per_chunk < 1:
            raise ValueError("epochs_per_chunk must be positive")
        if self.schedule_first < 2:
            raise ValueError("schedule_first must be at least 2")
        if self.schedule_ratio <= 1.0:
            raise ValueError("schedule_ratio must exceed 1")


@dataclass
class FlopsLedger:
    eval_flops: int = 0
    train_flops: int = 0

    @property
    def total(self):
        return self.eval_flops + self.train_flops


@dataclass
class PrequentialResult:
    """Per-step record of one run plus its totals.

    ``per_step_loss[t]`` is the nats charged for example t+1 before it was
    trained on.  Cumulative FLOPs columns are sampled after the batch that
    evaluated the row, so rows of one batch share their values.
    """

    per_step_loss: np.ndarray
    per_step_error: np.ndarray
    beta_trace: np.ndarray
    cumulative_eval_flops: np.ndarray
    cumulative_train_flops: np.ndarray
    description_length: float
    total_errors: int
    ledger: FlopsLedger

    def check(self):
        t = self.per_step_loss.shape[0]
        same = all(arr.shape == (t,) for arr in (
            self.per_step_error, self.beta_trace,
            self.cumulative_eval_flops, self.cumulative_train_flops))
        if not same:
            raise InvariantError("per-step arrays disagree on length")
        total = float(self.per_step_loss.sum())
        if not math.isclose(total, self.description_length,
                            rel_tol=1e-9, abs_tol=1e-9):
            raise InvariantError("description length != sum of step losses")
        if int(self.per_step_error.sum()) != self.total_errors:
            raise InvariantError("error count mismatch")
        for arr in (self.cumulative_eval_flops, self.cumulative_train_flops):
            if t and np.any(np.diff(arr) < 0):
                raise InvariantError("cumulative flops must be nondecreasing")
        if t:
            if int(self.cumulative_eval_flops[-1]) != self.ledger.eval_flops \
                    or int(self.cumulative_train_flops[-1]) \
                    != self.ledger.train_flops:
                raise InvariantError("ledger disagrees with cumulative flops")
        return self


def make_schedule(n, first=2, ratio=2.0):
    """Chunk boundaries first, round(first * ratio^k), ..., capped at n.

    Rounding is floor(x + 0.5); duplicates collapse; the last entry is
    always exactly n.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if first < 2:
        raise ValueError("first must be at least 2")
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    points = []
    k = 0
    while True:
        s = int(math.floor(first * ratio ** k + 0.5))
        if s >= n:
            break
        if not points or s > points[-1]:
            points.append(s)
        k += 1
    points.append(n)
    return points


def expected_ledger(config, n, schedule=None):
    """Closed-form FLOPs for a run of ``config`` over n examples.

    For the memory-infinite protocols: evaluation costs one forward per
    example; training costs (1 + K) steps per example at three forwards
    each.  For the chunk-incremental protocols the uniform-coded prefix is
    free, each chunk trains E epochs over its ceil(0.9 * s_k) train prefix,
    and each calibration step is one forward on min(B, calibration size)
    examples.
    """
    f1 = forward_flops(config.model, 1)
    if config.protocol in ("mi_rs", "mi_rb"):
        eval_flops = f1 * n
        train_flops = 3 * f1 * n * (1 + config.num_streams)
        return FlopsLedger(eval_flops, train_flops)
    points = schedule if schedule is not None else make_schedule(
        n, config.schedule_first, config.schedule_ratio)
    eval_flops = f1 * (n - points[0])
    train_flops = 0
    for k in range(len(points) - 1):
        p = points[k]
        n_tr = (9 * p + 9) // 10
        n_cal = p - n_tr
        n_batches = -(-n_tr // config.batch_size)
        per_epoch = 3 * f1 * n_tr
        if config.calibrate and n_cal > 0:
            per_epoch += n_batches * f1 * min(config.batch_size, n_cal)
        train_flops += config.epochs_per_chunk * per_epoch
    return FlopsLedger(eval_flops, train_flops)


# ---------------------------------------------------------------------------
# shared pieces


class _Recorder:
    def __init__(self, n):
        self.loss = np.zeros(n)
        self.error = np.zeros(n, dtype=bool)
        self.beta = np.zeros(n)
        self.cum_eval = np.zeros(n, dtype=np.int64)
        self.cum_train = np.zeros(n, dtype=np.int64)
        self.eval_total = 0
        self.train_total = 0

    def record(self, lo, hi, losses, errors, beta):
        self.loss[lo:hi] = losses
        self.error[lo:hi] = errors
        self.beta[lo:hi] = beta

    def stamp_flops(self, lo, hi):
        self.cum_eval[lo:hi] = self.eval_total
        self.cum_train[lo:hi] = self.train_total

    def result(self):
        return PrequentialResult(
            per_step_loss=self.loss,
            per_step_error=self.error,
            beta_trace=self.beta,
            cumulative_eval_flops=self.cum_eval,
            cumulative_train_flops=self.cum_train,
            description_length=float(self.loss.sum()),
            total_errors=int(self.error.sum()),
            ledger=FlopsLedger(self.eval_total, self.train_total),
        )


class _Learner:
    """Parameters plus every stateful companion a protocol needs."""

    def __init__(self, config, init_seed):
        self.config = config
        self.params = init_params(config.model, init_seed, config.init_scale)
        self.ema = EmaTracker(self.params, config.ema_alpha)
        self.beta = beta_params(BETA_INIT)
        self.opt = make_optimizer(
            config.optimizer, config.lr, config.weight_decay,
            config.adam_beta1, config.adam_beta2, config.adam_eps,
            config.sgd_momentum)
        self.beta_opt = make_optimizer(
            config.optimizer, config.lr * self._beta_lr_factor(),
            0.0, config.adam_beta1, config.adam_beta2, config.adam_eps,
            config.sgd_momentum)

    def _beta_lr_factor(self):
        # In the memory-infinite protocols the calibration scalar sees one
        # gradient per 1 + K model steps, so its rate is scaled up by
        # sqrt(1 + K).  The chunk protocols alternate one for one.
        if self.config.protocol in ("mi_rs", "mi_rb"):
            return math.sqrt(1.0 + self.config.num_streams)
        return 1.0

    @property
    def beta_value(self):
        return float(self.beta.biases[0][0])

    def eval_batch(self, rec, x, y, lo, hi, hook):
        logits, f_eval = forward(self.config.model, self.ema.params, x)
        losses = calibrated_log_loss(logits, y, self.beta_value)
        errors = np.argmax(logits, axis=1) != y
        rec.eval_total += f_eval
        rec.record(lo, hi, losses, errors, self.beta_value)
        if hook is not None:
            hook(lo, hi)
        return logits

    def beta_step_from_logits(self, logits, y):
        # Reuses the evaluation forward, so it costs no extra FLOPs.
        if not self.config.calibrate:
            return
        g = calibration_grad(logits, y, self.beta_value)
        self.beta_opt.step(self.beta, beta_params(g))

    def beta_step_fresh(self, rec, x, y):
        """Calibration step with its own forward (chunk protocols)."""
        if not self.config.calibrate:
            return
        logits, f = forward(self.config.model, self.ema.params, x)
        rec.train_total += f
        g = calibration_grad(logits, y, self.beta_value)
        self.beta_opt.step(self.beta, beta_params(g))

    def train_batch(self, rec, x, y, rng_aug):
        if self.config.augment_sigma > 0:
            x = x + self.config.augment_sigma * rng_aug.standard_normal(
                x.shape)
        _, grads, f = loss_and_grads(self.config.model, self.params, x, y,
                                     self.config.label_smoothing)
        self.opt.step(self.params, grads)
        self.ema.update(self.params)
        rec.train_total += f


def _check_dataset(config, dataset):
    if len(dataset) < 1:
        raise ValueError("dataset must be nonempty")
    if dataset.dim != config.model.input_dim:
        raise ValueError("model input_dim does not match the data")
    if dataset.num_classes != config.model.num_classes:
        raise ValueError("model num_classes does not match the data")


def _finish(config, dataset, rec, schedule=None):
    result = rec.result().check()
    expect = expected_ledger(config, len(dataset), schedule)
    if (result.ledger.eval_flops, result.ledger.train_flops) != \
            (expect.eval_flops, expect.train_flops):
        raise InvariantError(
            f"flops counters {result.ledger} != closed form {expect}")
    return result


# ---------------------------------------------------------------------------
# memory-infinite protocols


def _run_memory_infinite(config, dataset, after_eval_hook):
    _check_dataset(config, dataset)
    n = len(dataset)
    batch = config.batch_size
    x_all = dataset.features.astype(np.float64)
    root = np.random.SeedSequence(config.seed)
    init_ss, replay_ss, aug_ss = root.spawn(3)
    learner = _Learner(config, init_ss)
    rng_replay = np.random.Generator(np.random.PCG64(replay_ss))
    rng_aug = np.random.Generator(np.random.PCG64(aug_ss))

    k = config.num_streams
    streams = None
    buffer = None
    if config.protocol == "mi_rs":
        if k > 0:
            streams = ReplayStreamSet(k, config.distribution)
    else:
        buffer = ReplayBuffer(config.buffer_capacity, config.buffer_policy)

    rec = _Recorder(n)
    for lo in range(0, n, batch):
        hi = min(lo + batch, n)
        x = x_all[lo:hi]
        y = dataset.labels[lo:hi]
        logits = learner.eval_batch(rec, x, y, lo, hi, after_eval_hook)
        learner.beta_step_from_logits(logits, y)
        learner.train_batch(rec, x, y, rng_aug)
        if streams is not None:
            starts = streams.step(hi, rng_replay, window=hi - lo)
            for start in starts:
                sl = slice(start - 1, start - 1 + (hi - lo))
                learner.train_batch(rec, x_all[sl], dataset.labels[sl],
                                    rng_aug)
        elif buffer is not None:
            for i in range(lo, hi):
                buffer.insert(i, rng_replay)
            for _ in range(k):
                idx = np.asarray(buffer.sample(hi - lo, rng_replay))
                learner.train_batch(rec, x_all[idx], dataset.labels[idx],
                                    rng_aug)
        rec.stamp_flops(lo, hi)
    return _finish(config, dataset, rec)


# ---------------------------------------------------------------------------
# chunk-incremental protocols


def _train_chunk(config, learner, rec, x_all, labels, prefix, rng_aug):
    """E epochs over the first ``prefix`` examples with a calibration tail.

    The train part is the first ceil(0.9 * prefix) examples in sequence
    order; the remainder feeds the calibration scalar one fixed-size cyclic
    window after every model step.
    """
    n_tr = (9 * prefix + 9) // 10
    n_cal = prefix - n_tr
    cal_window = min(config.batch_size, n_cal)
    cal_pos = 0
    for _ in range(config.epochs_per_chunk):
        for lo in range(0, n_tr, config.batch_size):
            hi = min(lo + config.batch_size, n_tr)
            learner.train_batch(rec, x_all[lo:hi], labels[lo:hi], rng_aug)
            if config.calibrate and n_cal > 0:
                idx = n_tr + (cal_pos + np.arange(cal_window)) % n_cal
                learner.beta_step_fresh(rec, x_all[idx], labels[idx])
                cal_pos = (cal_pos + cal_window) % n_cal


def _eval_span(config, learner, rec, x_all, labels, lo, hi, hook):
    for blo in range(lo, hi, config.batch_size):
        bhi = min(blo + config.batch_size, hi)
        learner.eval_batch(rec, x_all[blo:bhi], labels[blo:bhi], blo, bhi,
                           hook)
        rec.stamp_flops(blo, bhi)


def _run_chunk_incremental(config, dataset, schedule, after_eval_hook):
    _check_dataset(config, dataset)
    n = len(dataset)
    points = schedule if schedule is not None else make_schedule(
        n, config.schedule_first, config.schedule_ratio)
    if points[-1] != n or any(b <= a for a, b in zip(points, points[1:])):
        raise ValueError("schedule must increase strictly and end at n")
    x_all = dataset.features.astype(np.float64)
    labels = dataset.labels
    rec = _Recorder(n)

    # Uniform-coded prefix: ln C per label, zero FLOPs, and ties in the
    # implied uniform argmax resolve to class 0.
    s1 = points[0]
    ln_c = math.log(dataset.num_classes)
    rec.record(0, s1, np.full(s1, ln_c), labels[:s1] != 0, BETA_INIT)
    rec.stamp_flops(0, s1)
    if after_eval_hook is not None:
        after_eval_hook(0, s1)

    n_chunks = len(points) - 1
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(1 + n_chunks)
    learner = None
    if config.protocol == "ci_cf":
        learner = _Learner(config, children[0])
    for k in range(n_chunks):
        reseed_ss, aug_ss = children[1 + k].spawn(2)
        rng_aug = np.random.Generator(np.random.PCG64(aug_ss))
        if config.protocol == "ci_fs":
            learner = _Learner(config, reseed_ss)
        elif k > 0 and config.use_shrink_perturb:
            shrink_perturb(learner.params, config.sp_shrink, config.sp_noise,
                           reseed_ss)
        _train_chunk(config, learner, rec, x_all, labels, points[k], rng_aug)
        _eval_span(config, learner, rec, x_all, labels, points[k],
                   points[k + 1], after_eval_hook)
    return _finish(config, dataset, rec, points)


def run(config, dataset, schedule=None, after_eval_hook=None):
    """Execute one prequential run and return its PrequentialResult.

    ``schedule`` overrides the config-derived chunk boundaries for the
    chunk-incremental protocols and is ignored otherwise.
    ``after_eval_hook(lo, hi)`` fires after the losses of rows [lo, hi) are
    recorded and before any training that could see those labels; it exists
    so tests can prove the no-lookahead discipline.
    """
    if config.protocol in ("mi_rs", "mi_rb"):
        return _run_memory_infinite(config, dataset, after_eval_hook)
    return _run_chunk_incremental(config, dataset, schedule, after_eval_hook)
