import numpy as np
import pytest

from oracles import conv3d_naive, maxpool3d_naive
from relevis import backend
from relevis.errors import ShapeError


def test_selected_backend_is_reported():
    assert backend.BACKEND in ("numba", "numpy")


class TestConv3D:
    def test_matches_naive_small(self, kernel_impl, rng):
        x = rng.standard_normal((2, 3, 4, 5, 6)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        out = backend.conv3d(x, w, b)
        ref = conv3d_naive(x, w, b)
        assert out.shape == ref.shape
        np.testing.assert_allclose(out, ref, rtol=2e-5, atol=2e-5)

    def test_matches_naive_single_channel(self, kernel_impl, rng):
        x = rng.standard_normal((1, 1, 6, 5, 4)).astype(np.float32)
        w = rng.standard_normal((5, 1, 3, 3, 3)).astype(np.float32)
        b = np.zeros(5, dtype=np.float32)
        np.testing.assert_allclose(backend.conv3d(x, w, b),
                                   conv3d_naive(x, w, b), rtol=2e-5, atol=2e-5)

    def test_delta_kernel_is_identity(self, kernel_impl, rng):
        x = rng.standard_normal((1, 1, 5, 5, 5)).astype(np.float32)
        w = np.zeros((1, 1, 3, 3, 3), dtype=np.float32)
        w[0, 0, 1, 1, 1] = 1.0
        out = backend.conv3d(x, w, np.zeros(1, dtype=np.float32))
        np.testing.assert_array_equal(out, x)

    def test_channel_mismatch_rejected(self, kernel_impl):
        x = np.zeros((1, 2, 4, 4, 4), dtype=np.float32)
        w = np.zeros((1, 3, 3, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            backend.conv3d(x, w, np.zeros(1, dtype=np.float32))

    def test_backends_agree(self, rng):
        pytest.importorskip("numba")
        from relevis import _kernels_numba, _kernels_numpy
        x = rng.standard_normal((2, 2, 7, 6, 5)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        outs = []
        for impl in (_kernels_numba, _kernels_numpy):
            out = np.empty((2, 3, 7, 6, 5), dtype=np.float32)
            impl.conv3d_forward(backend.pad_same(x, (3, 3, 3)), w, b, out)
            outs.append(out)
        np.testing.assert_allclose(outs[0], outs[1], rtol=1e-5, atol=1e-5)


class TestConvAdjoints:
    def test_transpose_is_adjoint(self, kernel_impl, rng):
        # <conv(x), y> == <x, conv_transpose(y)> up to float64 rounding
        x = rng.standard_normal((1, 2, 5, 4, 6))
        w = rng.standard_normal((3, 2, 3, 3, 3))
        y = rng.standard_normal((1, 3, 5, 4, 6))
        zero = np.zeros(3)
        lhs = float(np.sum(backend.conv3d(x, w, zero) * y))
        rhs = float(np.sum(x * backend.conv3d_transpose(y, w)))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_grad_weights_is_adjoint(self, kernel_impl, rng):
        # <conv(x; w), y> is linear in w, so dw = <x-patches, y>
        x = rng.standard_normal((2, 2, 4, 5, 3))
        y = rng.standard_normal((2, 3, 4, 5, 3))
        w = rng.standard_normal((3, 2, 3, 3, 3))
        gw, gb = backend.conv3d_grad_weights(x, y, (3, 3, 3))
        lhs = float(np.sum(backend.conv3d(x, w, np.zeros(3)) * y))
        rhs = float(np.sum(w * gw))
        assert lhs == pytest.approx(rhs, rel=1e-10)
        np.testing.assert_allclose(gb, y.sum(axis=(0, 2, 3, 4)), rtol=1e-10)


class TestMaxPool:
    def test_matches_naive(self, kernel_impl, rng):
        x = rng.standard_normal((2, 3, 6, 4, 8)).astype(np.float32)
        out, win = backend.maxpool3d(x)
        ref_out, ref_win = maxpool3d_naive(x)
        np.testing.assert_array_equal(out, ref_out)
        np.testing.assert_array_equal(win, ref_win)

    def test_odd_trailing_planes_dropped(self, kernel_impl, rng):
        x = rng.standard_normal((1, 1, 5, 7, 9)).astype(np.float32)
        out, _ = backend.maxpool3d(x)
        assert out.shape == (1, 1, 2, 3, 4)
        ref_out, _ = maxpool3d_naive(x)
        np.testing.assert_array_equal(out, ref_out)

    def test_tie_goes_to_lowest_flat_index(self, kernel_impl):
        x = np.zeros((1, 1, 2, 2, 2), dtype=np.float32)  # eight-way tie
        out, win = backend.maxpool3d(x)
        assert win[0, 0, 0, 0, 0] == 0
        x[0, 0, 1, 0, 1] = 5.0
        x[0, 0, 1, 1, 0] = 5.0
        _, win = backend.maxpool3d(x)
        # flat index x*Y*Z + y*Z + z: (1,0,1) -> 5 beats (1,1,0) -> 6
        assert win[0, 0, 0, 0, 0] == 5

    def test_scatter_inverts_pool_routing(self, kernel_impl, rng):
        x = rng.standard_normal((1, 2, 4, 4, 4)).astype(np.float32)
        out, win = backend.maxpool3d(x)
        back = backend.maxpool3d_scatter(out, win, (4, 4, 4))
        # every pooled value lands on its winner, the rest stays zero
        assert back.sum() == pytest.approx(out.sum(), rel=1e-6)
        winners = back != 0
        np.testing.assert_array_equal(back[winners], x[winners])
        assert int(winners.sum()) <= out.size


class TestEnvSelection:
    def test_env_var_forces_numpy(self):
        import importlib
        import os
        import subprocess
        import sys
        code = ("import relevis.backend as b; print(b.BACKEND)")
        env = dict(os.environ, RELEVIS_BACKEND="numpy")
        got = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert got.stdout.strip() == "numpy"

    def test_bad_env_value_rejected(self):
        import os
        import subprocess
        import sys
        code = "import relevis.backend"
        env = dict(os.environ, RELEVIS_BACKEND="cuda")
        got = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True)
        assert got.returncode != 0
        assert "RELEVIS_BACKEND" in got.stderr
