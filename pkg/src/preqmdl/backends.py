"""Kernel backends: numba-jitted loops with a pure-numpy fallback.

The backend is chosen once at import time from the environment variable
``PREQMDL_BACKEND``:

* ``auto`` (default): use numba if it imports, otherwise numpy.
* ``numba``: require numba, raise if unavailable.
* ``numpy``: force the vectorized fallback.

Both paths produce bit-identical results.  Every kernel below is elementwise
over its arrays and restricted to +, *, /, sqrt and comparisons, all of which
are correctly rounded under IEEE-754, so looping (numba) and vectorizing
(numpy) round identically.  No kernel draws random numbers or calls
transcendental functions; callers pre-draw randomness with numpy Generators
and pass it in.  Dense matrix products are deliberately not kernels: they
stay on numpy's BLAS in both backends.
"""

import os

import numpy as np

_VALID = ("auto", "numba", "numpy")
_requested = os.environ.get("PREQMDL_BACKEND", "auto").strip().lower()
if _requested not in _VALID:
    raise RuntimeError(
        f"PREQMDL_BACKEND must be one of {_VALID}, got {_requested!r}"
    )

_numba_njit = None
if _requested in ("auto", "numba"):
    try:
        from numba import njit as _numba_njit
    except ImportError:
        if _requested == "numba":
            raise RuntimeError(
                "PREQMDL_BACKEND=numba but numba is not importable"
            ) from None


# ---------------------------------------------------------------------------
# numpy reference implementations


def _stream_step_np(positions, starts, reset_draws, p_reset, window, t_new):
    # Reset before reading; a stream whose window would run past the newest
    # example restarts from the head of the sequence.
    reset = reset_draws < p_reset
    positions[reset] = 1
    positions[positions + (window - 1) > t_new] = 1
    starts[:] = positions
    positions += window


def _adamw_step_np(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    m[:] = beta1 * m + (1.0 - beta1) * g
    v[:] = beta2 * v + (1.0 - beta2) * (g * g)
    p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + eps) + wd * p)


def _sgd_momentum_step_np(p, g, vel, lr, momentum, wd):
    vel[:] = momentum * vel + (g + wd * p)
    p -= lr * vel


def _ema_step_np(ema, p, alpha):
    ema[:] = (1.0 - alpha) * ema + alpha * p


def _reservoir_step_np(slots, accept_draws, slot_draws, accept_p, item):
    take = accept_draws < accept_p
    slots[np.nonzero(take)[0], slot_draws[take]] = item


# ---------------------------------------------------------------------------
# numba twins (same per-element operation order as the numpy versions)

if _numba_njit is not None:

    @_numba_njit(cache=True)
    def _stream_step_nb(positions, starts, reset_draws, p_reset, window, t_new):
        for k in range(positions.shape[0]):
            pos = positions[k]
            if reset_draws[k] < p_reset:
                pos = 1
            if pos + (window - 1) > t_new:
                pos = 1
            starts[k] = pos
            positions[k] = pos + window

    @_numba_njit(cache=True)
    def _adamw_step_nb(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
        for i in range(p.shape[0]):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
            m[i] = mi
            v[i] = vi
            p[i] -= lr * ((mi / bc1) / (np.sqrt(vi / bc2) + eps) + wd * p[i])

    @_numba_njit(cache=True)
    def _sgd_momentum_step_nb(p, g, vel, lr, momentum, wd):
        for i in range(p.shape[0]):
            vi = momentum * vel[i] + (g[i] + wd * p[i])
            vel[i] = vi
            p[i] -= lr * vi

    @_numba_njit(cache=True)
    def _ema_step_nb(ema, p, alpha):
        for i in range(ema.shape[0]):
            ema[i] = (1.0 - alpha) * ema[i] + alpha * p[i]

    @_numba_njit(cache=True)
    def _reservoir_step_nb(slots, accept_draws, slot_draws, accept_p, item):
        for k in range(slots.shape[0]):
            if accept_draws[k] < accept_p:
                slots[k, slot_draws[k]] = item


if _numba_njit is not None:
    _ACTIVE = "numba"
    stream_step = _stream_step_nb
    adamw_step = _adamw_step_nb
    sgd_momentum_step = _sgd_momentum_step_nb
    ema_step = _ema_step_nb
    reservoir_step = _reservoir_step_nb
else:
    _ACTIVE = "numpy"
    stream_step = _stream_step_np
    adamw_step = _adamw_step_np
    sgd_momentum_step = _sgd_momentum_step_np
    ema_step = _ema_step_np
    reservoir_step = _reservoir_step_np


def active_backend():
    """Name of the backend selected at import time, "numba" or "numpy"."""
    return _ACTIVE
