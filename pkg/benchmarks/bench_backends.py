"""Compare the numpy and numba kernel implementations.

Runs every hot kernel with both backends on identical inputs, reports
per-call timings and the speedup, and verifies the outputs agree bitwise
(the numba twins are written to keep the exact same operation order).

Usage: python3 benchmarks/bench_backends.py [--size N] [--repeats R]
"""

import argparse
import time

import numpy as np

from preqmdl import backends


def _time(fn, args_factory, repeats):
    # warm up once on fresh buffers (also triggers jit compilation)
    fn(*args_factory())
    best = float("inf")
    for _ in range(repeats):
        args = args_factory()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _check_agreement(np_fn, nb_fn, args_factory, mutated_slots):
    args_a = args_factory()
    args_b = args_factory()
    np_fn(*args_a)
    nb_fn(*args_b)
    for slot in mutated_slots:
        if not np.array_equal(args_a[slot], args_b[slot]):
            raise AssertionError(f"backends disagree on argument {slot}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=1_000_000,
                        help="elements per parameter vector / stream count")
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if backends._numba_njit is None:
        raise SystemExit("numba is not importable; nothing to compare")

    n = args.size
    rng = np.random.default_rng(0)
    g = rng.normal(size=n)
    draws = rng.random(n)
    slot_draws = rng.integers(0, 10, size=(n, )).astype(np.int64)
    positions = rng.integers(1, 400, size=n)
    res_slots = rng.integers(0, 50, size=(n // 10, 10))

    cases = [
        ("adamw_step",
         backends._adamw_step_np, backends._adamw_step_nb,
         lambda: (np.ones(n), g.copy(), np.zeros(n), np.zeros(n),
                  1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001),
         (0, 2, 3)),
        ("sgd_momentum_step",
         backends._sgd_momentum_step_np, backends._sgd_momentum_step_nb,
         lambda: (np.ones(n), g.copy(), np.zeros(n), 1e-2, 0.9, 0.01),
         (0, 2)),
        ("ema_step",
         backends._ema_step_np, backends._ema_step_nb,
         lambda: (np.zeros(n), g.copy(), 0.01),
         (0,)),
        ("stream_step",
         backends._stream_step_np, backends._stream_step_nb,
         lambda: (positions.copy(), np.empty(n, np.int64),
                  draws.copy(), 0.02, 8, 500),
         (0, 1)),
        ("reservoir_step",
         backends._reservoir_step_np, backends._reservoir_step_nb,
         lambda: (res_slots.copy(),
                  draws[:n // 10].copy(), slot_draws[:n // 10].copy(),
                  0.2, 123),
         (0,)),
    ]

    print(f"size={n} repeats={args.repeats} (best-of timings)")
    print(f"{'kernel':<20}{'numpy':>12}{'numba':>12}{'speedup':>9}")
    for name, np_fn, nb_fn, factory, mutated in cases:
        _check_agreement(np_fn, nb_fn, factory, mutated)
        t_np = _time(np_fn, factory, args.repeats)
        t_nb = _time(nb_fn, factory, args.repeats)
        print(f"{name:<20}{t_np * 1e3:>10.3f}ms{t_nb * 1e3:>10.3f}ms"
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
