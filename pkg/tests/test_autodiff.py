import numpy as np
import pytest

from harmonia import autodiff as ad
from harmonia.image import resize_bilinear


def numeric_grad(f, x, eps=1e-6):
    """Central-difference gradient of scalar f with respect to array x."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return g


def check_op(op, *arrays, eps=1e-6, tol=1e-7):
    """Finite-difference check of a Tensor op against every input."""
    graph = ad.ModelGraph()
    tensors = [graph.parameter(f"p{i}", a) for i, a in enumerate(arrays)]
    graph.zero_grad()
    out = op(*tensors)
    loss = ad.sum_t(ad.mul(out, out))  # quadratic readout mixes all entries
    ad.backward(loss)
    for t in tensors:
        num = numeric_grad(lambda t=t: float(ad.sum_t(ad.mul(op(*tensors), op(*tensors))).value), t.value, eps)
        assert np.allclose(t.grad, num, atol=tol, rtol=1e-5), f"analytic {t.grad} vs numeric {num}"


class TestBasicOps:
    def test_sum_of_parameter_grad_is_ones(self):
        g = ad.ModelGraph()
        p = g.parameter("w", np.arange(6, dtype=float).reshape(2, 3))
        g.zero_grad()
        ad.backward(ad.sum_t(p))
        assert np.array_equal(p.grad, np.ones((2, 3)))

    def test_linear_least_squares_matches_closed_form(self):
        # r = W @ x - t, loss = 0.5 * ||r||^2  =>  dL/dW = outer(r, x)
        rng = np.random.default_rng(0)
        W = rng.random((3, 4))
        x = rng.random(4)
        t = rng.random(3)
        g = ad.ModelGraph()
        wp = g.parameter("W", W)
        g.zero_grad()
        r = ad.sub(ad.sum_t(ad.mul(wp, ad.constant(np.broadcast_to(x, (3, 4)))), axis=1), ad.constant(t))
        loss = ad.mul(ad.sum_t(ad.mul(r, r)), 0.5)
        ad.backward(loss)
        expected = np.outer(W @ x - t, x)
        assert np.allclose(wp.grad, expected, atol=1e-12)

    def test_mul_broadcast_grads(self):
        check_op(ad.mul, np.random.default_rng(1).random((2, 3)), np.random.default_rng(2).random((3,)))

    def test_div_grads(self):
        check_op(ad.div, np.random.default_rng(3).random((2, 2)) + 0.5, np.random.default_rng(4).random((2, 2)) + 0.5)

    def test_sigmoid_softplus_grads(self):
        a = np.random.default_rng(5).standard_normal((3, 3))
        check_op(ad.sigmoid, a)
        check_op(ad.softplus, a)

    def test_relu_away_from_kink(self):
        a = np.random.default_rng(6).standard_normal((4, 4))
        a[np.abs(a) < 0.1] = 0.5
        check_op(ad.relu, a)
        check_op(lambda x: ad.leaky_relu(x, 0.2), a)

    def test_abs_log_clamp_grads(self):
        a = np.random.default_rng(7).random((3, 3)) + 0.2
        check_op(ad.abs_t, a)
        check_op(lambda x: ad.log_clamped(x, 1e-7), a)
        interior = np.random.default_rng(8).random((3, 3)) * 0.8 + 0.1
        check_op(ad.clamp01, interior)
        check_op(lambda x: ad.clamp_min(x, 1e-3), a)

    def test_mean_cumsum_reshape_narrow_concat(self):
        a = np.random.default_rng(9).random((2, 6))
        check_op(lambda x: ad.mean_t(x, axis=1), a)
        check_op(lambda x: ad.cumsum_t(x, axis=1), a)
        check_op(lambda x: ad.reshape(x, (3, 4)), a)
        check_op(lambda x: ad.narrow(x, 1, 2, 3), a)
        b = np.random.default_rng(10).random((2, 4))
        check_op(lambda x, y: ad.concat([x, y], axis=1), a, b)

    def test_linear_layer_grads(self):
        x = np.random.default_rng(11).random((3, 4))
        w = np.random.default_rng(12).random((4, 2))
        b = np.random.default_rng(13).random(2)
        check_op(ad.linear, x, w, b)


class TestConv:
    def test_conv2d_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        x = rng.random((2, 3, 6, 6))
        w = rng.standard_normal((4, 3, 3, 3)) * 0.3
        b = rng.standard_normal(4) * 0.1
        check_op(lambda xx, ww, bb: ad.conv2d(xx, ww, bb, stride=1), x, w, b, tol=1e-6)

    def test_strided_conv2d(self):
        rng = np.random.default_rng(15)
        x = rng.random((1, 2, 8, 8))
        w = rng.standard_normal((3, 2, 3, 3)) * 0.3
        b = np.zeros(3)
        check_op(lambda xx, ww, bb: ad.conv2d(xx, ww, bb, stride=2), x, w, b, tol=1e-6)

    def test_conv_output_shape(self):
        x = ad.constant(np.zeros((2, 7, 64, 64)))
        w = ad.constant(np.zeros((16, 7, 3, 3)))
        b = ad.constant(np.zeros(16))
        assert ad.conv2d(x, w, b, stride=2).shape == (2, 16, 32, 32)

    def test_nearest_up2(self):
        rng = np.random.default_rng(16)
        x = rng.random((1, 2, 3, 3))
        check_op(ad.nearest_up2, x)
        out = ad.nearest_up2(ad.constant(x))
        assert out.shape == (1, 2, 6, 6)
        assert np.array_equal(out.value[0, 0, :2, :2], np.full((2, 2), x[0, 0, 0, 0]))


class TestBilinear:
    def test_forward_matches_image_resize(self):
        rng = np.random.default_rng(17)
        grid = rng.random((8, 8))
        out = ad.bilinear_hw(ad.constant(grid), 20, 14)
        expected = resize_bilinear(grid, 20, 14)
        assert np.allclose(out.value, expected, atol=1e-12)

    def test_identity_size_is_exact(self):
        rng = np.random.default_rng(18)
        grid = rng.random((5, 5))
        assert np.array_equal(ad.bilinear_hw(ad.constant(grid), 5, 5).value, grid)

    def test_gradients(self):
        rng = np.random.default_rng(19)
        x = rng.random((4, 4))
        check_op(lambda t: ad.bilinear_hw(t, 7, 9), x)

    def test_gradients_batched(self):
        rng = np.random.default_rng(20)
        x = rng.random((2, 4, 4))
        check_op(lambda t: ad.bilinear_hw(t, 6, 3), x)

    def test_preserves_gains_above_one(self):
        grid = np.full((4, 4), 1.8)
        out = ad.bilinear_hw(ad.constant(grid), 8, 8)
        assert np.allclose(out.value, 1.8)


class TestPiecewiseLinear:
    def _knots(self, rng, n=1):
        x = np.zeros((n, 3, 8))
        y = rng.random((n, 3, 8))
        for i in range(n):
            for c in range(3):
                deltas = rng.random(7) + 0.2
                xs = np.concatenate([[0], np.cumsum(deltas)])
                xs /= xs[-1]
                xs[-1] = 1.0
                x[i, c] = xs
        return x, y

    def test_identity_knots_reproduce_input(self):
        k = np.arange(8) / 7.0
        x = np.broadcast_to(k, (1, 3, 8)).copy()
        vals = np.random.default_rng(21).random((1, 3, 4, 4))
        out = ad.piecewise_linear(vals, ad.constant(x), ad.constant(x.copy()))
        assert np.allclose(out.value, vals, atol=1e-15)

    def test_matches_np_interp(self):
        rng = np.random.default_rng(22)
        x, y = self._knots(rng)
        vals = rng.random((1, 3, 5, 5))
        out = ad.piecewise_linear(vals, ad.constant(x), ad.constant(y))
        for c in range(3):
            expected = np.interp(vals[0, c], x[0, c], y[0, c])
            assert np.allclose(out.value[0, c], expected, atol=1e-12)

    def test_knot_gradients(self):
        rng = np.random.default_rng(23)
        x, y = self._knots(rng)
        # keep sample values away from knots so finite differences see no kinks
        vals = np.zeros((1, 3, 3, 3))
        for c in range(3):
            mids = (x[0, c, :-1] + x[0, c, 1:]) / 2
            vals[0, c] = rng.choice(mids, size=(3, 3))
        check_op(lambda xx, yy: ad.piecewise_linear(vals, xx, yy), x, y, eps=1e-7, tol=1e-5)


class TestBackwardContract:
    def test_backward_without_forward_raises(self):
        with pytest.raises(ad.GraphStateError):
            ad.backward(ad.constant(1.0))

    def test_backward_twice_raises(self):
        g = ad.ModelGraph()
        p = g.parameter("w", np.ones(3))
        g.zero_grad()
        loss = ad.sum_t(p)
        ad.backward(loss)
        with pytest.raises(ad.GraphStateError):
            ad.backward(loss)

    def test_non_scalar_loss_raises(self):
        g = ad.ModelGraph()
        p = g.parameter("w", np.ones(3))
        with pytest.raises(ad.GraphStateError):
            ad.backward(ad.mul(p, 2.0))

    def test_unreachable_parameter_has_zero_grad(self):
        g = ad.ModelGraph()
        a = g.parameter("a", np.ones(2))
        g.parameter("b", np.ones(2))
        g.zero_grad()
        ad.backward(ad.sum_t(a))
        grads = g.gradients()
        assert np.array_equal(grads["b"], np.zeros(2))
        assert np.array_equal(grads["a"], np.ones(2))

    def test_grad_accumulates_over_shared_subexpression(self):
        g = ad.ModelGraph()
        p = g.parameter("w", np.array([2.0]))
        g.zero_grad()
        ad.backward(ad.sum_t(ad.add(ad.mul(p, 3.0), ad.mul(p, 4.0))))
        assert np.allclose(p.grad, [7.0])

    def test_forward_backward_deterministic(self):
        def run():
            g = ad.ModelGraph()
            p = g.parameter("w", np.linspace(0.1, 0.9, 12).reshape(3, 4))
            g.zero_grad()
            loss = ad.sum_t(ad.sigmoid(ad.mul(p, p)))
            ad.backward(loss)
            return loss.value.copy(), p.grad.copy()

        l1, g1 = run()
        l2, g2 = run()
        assert np.array_equal(l1, l2) and np.array_equal(g1, g2)


class TestGradCheck:
    def test_linear_model_passes_tight(self):
        g = ad.ModelGraph()
        rng = np.random.default_rng(24)
        w = g.parameter("w", rng.random((3, 2)))
        x = ad.constant(rng.random((4, 3)))
        t = rng.random((4, 2))

        def loss_fn():
            r = ad.sub(ad.linear(x, w, ad.constant(np.zeros(2))), ad.constant(t))
            return ad.mul(ad.sum_t(ad.mul(r, r)), 0.5)

        report = ad.grad_check(g, loss_fn, epsilon=1e-5, tolerance=1e-6)
        assert report.passed, str(report)

    def test_relu_net_passes(self):
        g = ad.ModelGraph()
        rng = np.random.default_rng(25)
        w1 = g.parameter("w1", rng.standard_normal((4, 8)) * 0.5)
        w2 = g.parameter("w2", rng.standard_normal((8, 1)) * 0.5)
        x = ad.constant(rng.random((5, 4)) + 0.5)

        def loss_fn():
            h = ad.relu(ad.linear(x, w1, ad.constant(np.zeros(8))))
            out = ad.linear(h, w2, ad.constant(np.zeros(1)))
            return ad.mean_t(ad.mul(out, out))

        report = ad.grad_check(g, loss_fn, epsilon=1e-4, tolerance=1e-4)
        assert report.passed, str(report)

    def test_corrupted_gradient_fails(self):
        g = ad.ModelGraph()
        p = g.parameter("w", np.array([1.0, 2.0]))

        def bad_square(t):
            # wrong vjp on purpose: claims d(x^2)/dx = 3x
            return ad.Tensor(t.value**2, parents=(t,), vjps=(lambda gr: gr * 3.0 * t.value,))

        def loss_fn():
            return ad.sum_t(bad_square(p))

        report = ad.grad_check(g, loss_fn, epsilon=1e-5, tolerance=1e-4)
        assert not report.passed

    def test_parameter_budget_enforced(self):
        g = ad.ModelGraph()
        g.parameter("big", np.zeros(10_001))
        with pytest.raises(ValueError):
            ad.grad_check(g, lambda: ad.constant(0.0))
