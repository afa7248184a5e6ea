import numpy as np
import pytest

from opzo import convops


def _naive_conv2d(x, W, b, stride, padding):
    B, C, H, Wd = x.shape
    O, _, k, _ = W.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (Wd + 2 * padding - k) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for bi in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[bi, :, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[bi, o, i, j] = (patch * W[o]).sum() + b[o]
    return out


@pytest.mark.parametrize("stride,padding", [(1, 1), (1, 0), (2, 1)])
def test_conv2d_matches_naive(stride, padding):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 6, 6))
    W = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    got = convops.conv2d(x, W, b, stride, padding)
    want = _naive_conv2d(x, W, b, stride, padding)
    assert np.allclose(got, want)


def test_im2col_col2im_adjoint():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 5, 5))
    cols = convops.im2col(x, 3, 1, 1)
    g = rng.standard_normal(cols.shape)
    back = convops.col2im(g, x.shape, 3, 1, 1)
    assert float((cols * g).sum()) == pytest.approx(float((x * back).sum()))


def test_conv2d_weight_grad_finite_difference():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 2, 4, 4))
    W = rng.standard_normal((3, 2, 3, 3))
    b = np.zeros(3)
    g = rng.standard_normal((2, 3, 4, 4))
    gW, gb = convops.conv2d_weight_grad(x, g, 3, 1, 1)
    h = 1e-6
    # probe one weight and one bias entry against central differences of
    # the batch-mean inner product <g, conv(x)>
    idx = (1, 0, 2, 1)
    Wp, Wm = W.copy(), W.copy()
    Wp[idx] += h
    Wm[idx] -= h
    fd = ((g * convops.conv2d(x, Wp, b, 1, 1)).sum()
          - (g * convops.conv2d(x, Wm, b, 1, 1)).sum()) / (2 * h) / x.shape[0]
    assert gW[idx] == pytest.approx(fd, rel=1e-4)
    bp = b.copy()
    bp[1] += h
    fd_b = ((g * convops.conv2d(x, W, bp, 1, 1)).sum()
            - (g * convops.conv2d(x, W, b, 1, 1)).sum()) / h / x.shape[0]
    assert gb[1] == pytest.approx(fd_b, rel=1e-4)


def test_avg_pool_and_grad():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 4, 4))
    y = convops.avg_pool(x, 2)
    assert y[0, 0, 0, 0] == pytest.approx(x[0, 0, :2, :2].mean())
    g = rng.standard_normal(y.shape)
    gx = convops.avg_pool_input_grad(g, 2)
    assert float((g * y).sum()) == pytest.approx(float((gx * x).sum()))
