"""Cross-backend parity: the numba kernels must match pure numpy."""

import importlib.util

import numpy as np
import pytest

from iota_sim import kernels

numba_missing = importlib.util.find_spec("numba") is None


def test_backend_selection_is_reported():
    assert kernels.BACKEND in ("numpy", "numba")


@pytest.mark.skipif(numba_missing, reason="numba not installed")
@pytest.mark.skipif(kernels.BACKEND != "numba", reason="numba backend not active")
class TestParity:
    def _cases(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d_in = int(rng.integers(1, 20))
            d_out = int(rng.integers(1, 20))
            matrix = rng.uniform(-1.0, 1.0, (d_out, d_in))
            bias = rng.uniform(-1.0, 1.0, d_out)
            x = rng.uniform(-1.0, 1.0, d_in)
            upstream = rng.uniform(-1.0, 1.0, d_out)
            yield matrix, bias, x, upstream

    def test_forward_parity(self):
        for matrix, bias, x, _ in self._cases():
            nb = kernels.hidden_forward(matrix, bias, x)
            ref = kernels._np_hidden_forward(matrix, bias, x)
            assert np.max(np.abs(nb - ref)) < 1e-15
            nb = kernels.linear_forward(matrix, bias, x)
            ref = kernels._np_linear_forward(matrix, bias, x)
            assert np.max(np.abs(nb - ref)) < 1e-15

    def test_backward_parity(self):
        for matrix, bias, x, upstream in self._cases():
            for nb_fn, np_fn in (
                (kernels.hidden_backward, kernels._np_hidden_backward),
                (kernels.linear_backward, kernels._np_linear_backward),
            ):
                for got, ref in zip(nb_fn(matrix, bias, x, upstream), np_fn(matrix, bias, x, upstream)):
                    assert np.max(np.abs(got - ref)) < 1e-15

    def test_loss_parity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            pred = rng.uniform(-1.0, 1.0, n)
            target = rng.uniform(-1.0, 1.0, n)
            loss_nb, grad_nb = kernels.mse_loss(pred, target)
            loss_np, grad_np = kernels._np_mse_loss(pred, target)
            assert loss_nb == pytest.approx(loss_np, abs=1e-15)
            assert np.max(np.abs(grad_nb - grad_np)) < 1e-15
