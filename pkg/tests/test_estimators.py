"""Protocol engines: baselines, a hand-rolled trajectory oracle, discipline,
determinism and FLOPs accounting."""

import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from preqmdl import dataset as ds
from preqmdl import replay
from preqmdl.estimators import (PROTOCOLS, FlopsLedger, RunConfig,
                                expected_ledger, make_schedule, run,
                                uniform_code_length)
from preqmdl.models import BETA_INIT, ModelSpec


def _data(n=64, channels=2, classes=3, dpc=2, noise=0.3, seed=5):
    return ds.generate_channel_task(n, channels, classes, dpc, noise, seed)


def _config(protocol, data, **kw):
    spec_kw = {}
    if "hidden" in kw:
        spec_kw = {"hidden_sizes": kw.pop("hidden"), "kind": "mlp"}
    spec = ModelSpec(spec_kw.pop("kind", "linear"), data.dim,
                     data.num_classes, **spec_kw)
    return RunConfig(protocol=protocol, model=spec, **kw)


class TestSchedule:
    def test_doubling_worked_example(self):
        assert make_schedule(16, 2, 2.0) == [2, 4, 8, 16]

    def test_rounded_ratio_example(self):
        assert make_schedule(10, 2, 3.0) == [2, 6, 10]

    def test_first_at_or_past_n_collapses(self):
        assert make_schedule(2, 2, 2.0) == [2]
        assert make_schedule(5, 8, 2.0) == [5]

    def test_always_ends_at_n_strictly_increasing(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 5000))
            first = int(rng.integers(2, 50))
            ratio = 1.0 + float(rng.random()) * 3
            points = make_schedule(n, first, ratio)
            assert points[-1] == n
            assert all(b > a for a, b in zip(points, points[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            make_schedule(10, 1, 2.0)
        with pytest.raises(ValueError):
            make_schedule(10, 2, 1.0)


class TestTrainSplitArithmetic:
    def test_matches_exact_rational_ceiling(self):
        """(9p + 9) // 10 must equal ceil(0.9 p) computed exactly."""
        for p in list(range(1, 2000)) + [10**5, 10**6 + 7]:
            assert (9 * p + 9) // 10 == math.ceil(Fraction(9, 10) * p)


class TestUniformBaseline:
    """A zero-capacity frozen model pays exactly T ln C everywhere."""

    @pytest.mark.parametrize("protocol", PROTOCOLS)
    def test_frozen_zero_model(self, protocol):
        data = _data(n=64, classes=3)
        cfg = _config(protocol, data, lr=0.0, init_scale=0.0,
                      batch_size=8, num_streams=2, buffer_capacity=16,
                      seed=3)
        result = run(cfg, data)
        expected = uniform_code_length(len(data), data.num_classes)
        assert abs(result.description_length - expected) < 1e-6
        np.testing.assert_allclose(result.per_step_loss, math.log(3),
                                   rtol=1e-12)


class TestHandRolledOracle:
    def test_mi_rs_without_replay_matches_manual_loop(self):
        """A from-scratch reimplementation of the K = 0 protocol (own init,
        forward, gradient, SGD and EMA code) reproduces every step loss."""
        data = _data(n=50, channels=2, classes=3, dpc=2, seed=9)
        lr, mu, wd, alpha = 0.05, 0.9, 0.1, 0.02
        cfg = _config("mi_rs", data, optimizer="sgd", lr=lr,
                      sgd_momentum=mu, weight_decay=wd, ema_alpha=alpha,
                      label_smoothing=0.0, batch_size=1, num_streams=0,
                      calibrate=False, seed=17)
        result = run(cfg, data)

        dim, classes = data.dim, data.num_classes
        init_ss = np.random.SeedSequence(17).spawn(3)[0]
        rng = np.random.Generator(np.random.PCG64(init_ss))
        w = math.sqrt(2.0 / dim) * rng.standard_normal((classes, dim))
        b = np.zeros(classes)
        ema_w, ema_b = w.copy(), b.copy()
        vel_w = np.zeros_like(w)
        vel_b = np.zeros_like(b)
        x_all = data.features.astype(np.float64)

        losses = []
        errors = []
        for t in range(50):
            x, y = x_all[t], int(data.labels[t])
            h = ema_w @ x + ema_b
            losses.append(math.log(np.exp(h - h.max()).sum())
                          + h.max() - h[y])
            errors.append(int(np.argmax(h)) != y)

            h_raw = w @ x + b
            p = np.exp(h_raw - h_raw.max())
            p /= p.sum()
            g = p.copy()
            g[y] -= 1.0
            g_w = np.outer(g, x) + wd * w
            vel_w = mu * vel_w + g_w
            w = w - lr * vel_w
            vel_b = mu * vel_b + g
            b = b - lr * vel_b
            ema_w = (1 - alpha) * ema_w + alpha * w
            ema_b = (1 - alpha) * ema_b + alpha * b

        np.testing.assert_allclose(result.per_step_loss, losses, rtol=1e-12,
                                   atol=1e-12)
        np.testing.assert_array_equal(result.per_step_error, errors)
        f1 = 2 * dim * classes
        assert result.ledger == FlopsLedger(50 * f1, 3 * 50 * f1)


class TestDeterminism:
    @pytest.mark.parametrize("protocol", PROTOCOLS)
    def test_same_seed_bitwise_identical(self, protocol):
        data = _data(n=60)
        cfg = _config(protocol, data, seed=11, num_streams=2, batch_size=8,
                      buffer_capacity=16, augment_sigma=0.05)
        a = run(cfg, data)
        b = run(cfg, data)
        np.testing.assert_array_equal(a.per_step_loss, b.per_step_loss)
        np.testing.assert_array_equal(a.beta_trace, b.beta_trace)
        np.testing.assert_array_equal(a.per_step_error, b.per_step_error)

    def test_different_seed_differs(self):
        data = _data(n=60)
        cfg = _config("mi_rs", data, seed=1, num_streams=2, batch_size=8)
        a = run(cfg, data)
        b = run(replace(cfg, seed=2), data)
        assert not np.array_equal(a.per_step_loss, b.per_step_loss)


class TestPrequentialDiscipline:
    """Rewriting a label after its evaluation cannot change what was
    recorded for it, only the future."""

    @pytest.mark.parametrize("protocol", PROTOCOLS)
    def test_label_mutation_after_eval_is_invisible_backwards(self,
                                                              protocol):
        mutate_at = 20  # inside the first evaluated chunk for ci protocols
        kw = dict(seed=13, lr=0.05, num_streams=2, batch_size=8,
                  buffer_capacity=32, schedule_first=16)
        clean = run(_config(protocol, _data(n=60), **kw), _data(n=60))

        data = _data(n=60)
        state = {}

        def hook(lo, hi):
            if "hi" not in state and hi > mutate_at:
                data.labels.flags.writeable = True
                data.labels[mutate_at] = \
                    (data.labels[mutate_at] + 1) % data.num_classes
                data.labels.flags.writeable = False
                state["hi"] = hi

        mutated = run(_config(protocol, data, **kw), data,
                      after_eval_hook=hook)
        cut = state["hi"]
        np.testing.assert_array_equal(clean.per_step_loss[:cut],
                                      mutated.per_step_loss[:cut])
        assert not np.array_equal(clean.per_step_loss[cut:],
                                  mutated.per_step_loss[cut:]), \
            "mutation never reached training, test is vacuous"


class TestFlopsAccounting:
    def test_hand_computed_memory_infinite(self):
        """linear 3 -> 2, T = 10, B = 4, K = 2: forward is 12 FLOPs per
        example, so eval = 120 and train = 3 * 12 * 10 * 3 = 1080."""
        data = _data(n=10, channels=1, classes=2, dpc=3)
        cfg = _config("mi_rs", data, batch_size=4, num_streams=2)
        result = run(cfg, data)
        assert result.ledger == FlopsLedger(120, 1080)

    def test_hand_computed_chunk_protocol(self):
        """n = 16, schedule [2, 4, 8, 16], B = 4, one epoch, calibration on.
        Chunk prefixes 2, 4, 8 give train prefixes 2, 4, 8 (ceil of 0.9 p)
        and calibration remainders 0, 0, 0, so training is purely model
        steps: 3 F (2 + 4 + 8); evaluation covers 14 examples."""
        data = _data(n=16, channels=1, classes=2, dpc=3)
        cfg = _config("ci_fs", data, batch_size=4)
        result = run(cfg, data)
        f1 = 12
        assert result.ledger == FlopsLedger(f1 * 14, 3 * f1 * 14)

    def test_chunk_protocol_with_calibration_tail(self):
        """prefix 20, B = 4: train 18, calibration 2, window min(4, 2) = 2;
        5 model batches per epoch each followed by one 2-example forward."""
        data = _data(n=25, channels=1, classes=2, dpc=3)
        cfg = _config("ci_fs", data, batch_size=4, schedule_first=20,
                      epochs_per_chunk=2)
        result = run(cfg, data, schedule=[20, 25])
        f1 = 12
        eval_f = f1 * 5
        train_f = 2 * (3 * f1 * 18 + 5 * f1 * 2)
        assert result.ledger == FlopsLedger(eval_f, train_f)

    def test_random_configs_match_closed_forms(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            protocol = PROTOCOLS[rng.integers(0, 4)]
            n = int(rng.integers(10, 60))
            data = _data(n=n, channels=2, classes=int(rng.integers(2, 4)),
                         dpc=int(rng.integers(1, 4)),
                         seed=int(rng.integers(100)))
            kw = dict(batch_size=int(rng.integers(1, 9)),
                      num_streams=int(rng.integers(0, 4)),
                      calibrate=bool(rng.integers(0, 2)),
                      epochs_per_chunk=int(rng.integers(1, 3)),
                      seed=int(rng.integers(100)))
            kw["buffer_capacity"] = kw["batch_size"] + 4
            if rng.integers(0, 2):
                kw["hidden"] = (int(rng.integers(2, 8)),)
            cfg = _config(protocol, data, **kw)
            result = run(cfg, data)
            expect = expected_ledger(cfg, n)
            assert result.ledger == expect


class TestChunkProtocols:
    def test_uniform_prefix_rows(self):
        data = _data(n=40, classes=3)
        cfg = _config("ci_fs", data, schedule_first=8)
        result = run(cfg, data)
        np.testing.assert_allclose(result.per_step_loss[:8], math.log(3),
                                   rtol=1e-15)
        np.testing.assert_array_equal(result.per_step_error[:8],
                                      data.labels[:8] != 0)
        np.testing.assert_array_equal(result.beta_trace[:8],
                                      np.full(8, BETA_INIT))
        assert result.cumulative_eval_flops[7] == 0

    def test_single_chunk_schedule_is_all_uniform_for_both(self):
        data = _data(n=30, classes=2)
        results = [run(_config(p, data, seed=2), data, schedule=[30])
                   for p in ("ci_fs", "ci_cf")]
        for result in results:
            np.testing.assert_allclose(result.per_step_loss, math.log(2),
                                       rtol=1e-15)
        np.testing.assert_array_equal(results[0].per_step_loss,
                                      results[1].per_step_loss)

    def test_schedule_validation(self):
        data = _data(n=30)
        cfg = _config("ci_fs", data)
        with pytest.raises(ValueError):
            run(cfg, data, schedule=[2, 40])
        with pytest.raises(ValueError):
            run(cfg, data, schedule=[8, 4, 30])

    def test_shrink_perturb_changes_later_chunks_only(self):
        data = _data(n=60, classes=2)
        base = _config("ci_cf", data, seed=5, schedule_first=16)
        plain = run(base, data)
        perturbed = run(replace(base, use_shrink_perturb=True), data)
        first_eval_end = 32  # schedule [16, 32, 60]: chunk one unaffected
        np.testing.assert_array_equal(
            plain.per_step_loss[:first_eval_end],
            perturbed.per_step_loss[:first_eval_end])
        assert not np.array_equal(plain.per_step_loss[first_eval_end:],
                                  perturbed.per_step_loss[first_eval_end:])


class TestCalibration:
    def test_disabled_keeps_beta_at_init(self):
        data = _data(n=40)
        result = run(_config("mi_rs", data, calibrate=False), data)
        np.testing.assert_array_equal(result.beta_trace,
                                      np.full(40, BETA_INIT))

    def test_enabled_moves_beta(self):
        data = _data(n=80)
        result = run(_config("mi_rs", data, lr=0.01), data)
        assert np.any(result.beta_trace != BETA_INIT)


class TestValidationAndResult:
    def test_model_data_mismatch(self):
        data = _data(n=10)
        spec = ModelSpec("linear", data.dim + 1, data.num_classes)
        with pytest.raises(ValueError):
            run(RunConfig(protocol="mi_rs", model=spec), data)

    def test_buffer_capacity_must_cover_batch(self):
        data = _data(n=10)
        with pytest.raises(ValueError):
            _config("mi_rb", data, batch_size=16, buffer_capacity=8)

    def test_result_internals_consistent(self):
        data = _data(n=50)
        result = run(_config("mi_rb", data, num_streams=2,
                             buffer_capacity=64), data)
        assert result.description_length == pytest.approx(
            float(result.per_step_loss.sum()), rel=1e-12)
        assert result.total_errors == int(result.per_step_error.sum())
        assert result.ledger.total == result.cumulative_eval_flops[-1] \
            + result.cumulative_train_flops[-1]
        assert np.all(np.diff(result.cumulative_eval_flops) >= 0)
