"""Numeric inner loops with an optional numba backend.

The hot paths of the simulator are the per-sample layer forward/backward
passes and the mean-squared-error loss, which get called tens of thousands
of times per scenario. They are compiled with numba's ``@njit`` when
available. Setting ``IOTA_SIM_BACKEND=numpy`` forces the pure-numpy
fallback (useful for debugging and for the backend benchmark).

Both backends implement identical float64 arithmetic in identical
operation order, so a scenario is deterministic within either backend.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "hidden_forward",
    "linear_forward",
    "hidden_backward",
    "linear_backward",
    "mse_loss",
    "warmup",
]


def _np_hidden_forward(matrix, bias, x):
    return np.tanh(matrix @ x + bias)


def _np_linear_forward(matrix, bias, x):
    return matrix @ x + bias


def _np_hidden_backward(matrix, bias, x, upstream):
    h = np.tanh(matrix @ x + bias)
    delta = upstream * (1.0 - h * h)
    return matrix.T @ delta, np.outer(delta, x), delta


def _np_linear_backward(matrix, bias, x, upstream):
    return matrix.T @ upstream, np.outer(upstream, x), upstream.copy()


def _np_mse_loss(pred, target):
    diff = pred - target
    n = pred.shape[0]
    loss = float(diff @ diff) / n
    return loss, (2.0 / n) * diff


_requested = os.environ.get("IOTA_SIM_BACKEND", "").strip().lower()

if _requested not in ("", "numpy", "numba"):
    raise ValueError(f"IOTA_SIM_BACKEND must be 'numpy' or 'numba', got {_requested!r}")

BACKEND = "numpy"

if _requested != "numpy":
    try:
        from numba import njit
    except ImportError:
        if _requested == "numba":
            raise
    else:
        BACKEND = "numba"

        @njit(cache=True)
        def _nb_hidden_forward(matrix, bias, x):
            return np.tanh(matrix @ x + bias)

        @njit(cache=True)
        def _nb_linear_forward(matrix, bias, x):
            return matrix @ x + bias

        @njit(cache=True)
        def _nb_hidden_backward(matrix, bias, x, upstream):
            h = np.tanh(matrix @ x + bias)
            delta = upstream * (1.0 - h * h)
            return matrix.T @ delta, np.outer(delta, x), delta

        @njit(cache=True)
        def _nb_linear_backward(matrix, bias, x, upstream):
            return matrix.T @ upstream, np.outer(upstream, x), upstream.copy()

        @njit(cache=True)
        def _nb_mse_loss(pred, target):
            diff = pred - target
            n = pred.shape[0]
            loss = float(diff @ diff) / n
            return loss, (2.0 / n) * diff


if BACKEND == "numba":
    hidden_forward = _nb_hidden_forward
    linear_forward = _nb_linear_forward
    hidden_backward = _nb_hidden_backward
    linear_backward = _nb_linear_backward
    mse_loss = _nb_mse_loss
else:
    hidden_forward = _np_hidden_forward
    linear_forward = _np_linear_forward
    hidden_backward = _np_hidden_backward
    linear_backward = _np_linear_backward
    mse_loss = _np_mse_loss


def warmup():
    """Trigger JIT compilation so timed runs do not pay it."""
    m = np.eye(2)
    b = np.zeros(2)
    x = np.ones(2)
    hidden_forward(m, b, x)
    linear_forward(m, b, x)
    hidden_backward(m, b, x, x)
    linear_backward(m, b, x, x)
    mse_loss(x, b)
