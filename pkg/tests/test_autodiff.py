import math

import numpy as np
import pytest

from drumsynth import autodiff as ad
from drumsynth.autodiff import Tensor, grad_check
from drumsynth.descriptors import brightness_graph, warmth_graph
from drumsynth.gradcheck import check_ops


class TestForwardExamples:
    def test_sin_value_and_derivative_at_half_pi(self):
        x = Tensor(np.array(math.pi / 2), requires_grad=True)
        y = ad.sin(x)
        assert y.item() == pytest.approx(1.0)
        y.backward()
        assert x.grad == pytest.approx(math.cos(math.pi / 2), abs=1e-12)

    def test_conv_impulse_response_is_kernel_placed_causally(self):
        t0 = 5
        imp = np.zeros((1, 32))
        imp[0, t0] = 1.0
        kernel = np.arange(1.0, 10.0)[None, None, :]
        out = ad.causal_conv1d(Tensor(imp), Tensor(kernel)).data[0]
        assert np.allclose(out[t0 : t0 + 9], kernel[0, 0])
        assert np.allclose(out[:t0], 0.0)  # nothing before the impulse

    def test_division_floors_small_denominators(self):
        num = Tensor(np.array([1.0, 1.0, -1.0]))
        den = Tensor(np.array([1e-15, 0.0, -1e-15]))
        out = (num / den).data
        assert out[0] == pytest.approx(1e12)
        assert out[1] == pytest.approx(1e12)
        assert out[2] == pytest.approx(1e12)  # -1 / -1e-12

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros(3)) + Tensor(np.zeros(4))
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        with pytest.raises(ValueError):
            ad.causal_conv1d(Tensor(np.zeros((2, 8))), Tensor(np.zeros((1, 3, 9))))

    def test_float32_dtype_preserved(self):
        x = Tensor(np.ones(8, dtype=np.float32), requires_grad=True)
        y = ad.leaky_relu(x * 2.0 + 1.0, 0.2)
        assert y.dtype == np.float32
        y.sum().backward()
        assert x.grad.dtype == np.float32


class TestBackward:
    def test_sum_gradient_all_ones(self):
        x = Tensor(np.random.default_rng(0).standard_normal((3, 5)), requires_grad=True)
        x.sum().backward()
        assert np.allclose(x.grad, 1.0)

    def test_mean_square_gradient(self):
        data = np.random.default_rng(1).standard_normal(11)
        x = Tensor(data, requires_grad=True)
        (x * x).mean().backward()
        assert np.allclose(x.grad, 2.0 * data / data.size, atol=1e-12)

    def test_nonscalar_root_rejected(self):
        x = Tensor(np.zeros(4), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_accumulation_matches_single_path_rewrite(self):
        # leaf used twice: f(x) = sum(x*x + 3x) vs the same with x aliased once
        data = np.random.default_rng(2).standard_normal(16)
        x = Tensor(data, requires_grad=True)
        (x * x + x * 3.0).sum().backward()
        two_path = x.grad.copy()
        assert np.allclose(two_path, 2.0 * data + 3.0, atol=1e-12)

    def test_descriptor_pipeline_gradient(self):
        x = Tensor(np.random.default_rng(3).standard_normal(256))
        err = grad_check(lambda t: brightness_graph(t, 16000), x, 1e-5)
        assert err < 1e-4


class TestGradCheck:
    def test_linear_function_near_zero_error(self):
        x = Tensor(np.random.default_rng(4).standard_normal(32))
        assert grad_check(lambda t: t.sum(), x) < 1e-10

    def test_mean_sigmoid(self):
        x = Tensor(np.random.default_rng(5).standard_normal(16))
        assert grad_check(lambda t: ad.sigmoid(t).mean(), x) < 1e-6

    def test_warmth_descriptor(self):
        x = Tensor(np.random.default_rng(6).standard_normal(512))
        assert grad_check(lambda t: warmth_graph(t, 16000), x, 1e-5) < 1e-4

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValueError):
            grad_check(lambda t: t.sum(), Tensor(np.zeros(2)), h=0.0)

    def test_real_dft_power_gradient_length_64(self):
        x = Tensor(np.random.default_rng(7).standard_normal(64))
        weights = Tensor(np.random.default_rng(8).standard_normal(33))
        err = grad_check(lambda t: (ad.real_dft_power(t) * weights).sum(), x, 1e-5)
        assert err < 1e-4


class TestOpSweep:
    def test_every_op_passes_quick_sweep(self):
        errors = check_ops(seed=123, n_inputs=3)
        bad = {k: v for k, v in errors.items() if v >= 1e-4}
        assert not bad, f"ops failing gradient check: {bad}"


class TestDftAdjointness:
    def test_linear_dft_part_satisfies_adjoint_identity(self):
        # A x = rfft(x) stacked as (real, imag); A^T via the padded inverse
        # transform used by real_dft_power's backward rule
        rng = np.random.default_rng(9)
        n = 96
        n_bins = n // 2 + 1
        for _ in range(10):
            x = rng.standard_normal(n)
            y = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
            ax = np.fft.rfft(x)
            lhs = np.sum(ax.real * y.real + ax.imag * y.imag)
            padded = np.zeros(n, dtype=complex)
            padded[:n_bins] = y
            aty = np.real(np.fft.ifft(padded) * n)
            rhs = np.sum(x * aty)
            assert lhs == pytest.approx(rhs, rel=1e-9)


class TestGraphStructure:
    def test_constant_subgraphs_are_pruned(self):
        const = Tensor(np.ones(4)) * 2.0
        assert const._parents == ()
        live = Tensor(np.ones(4), requires_grad=True) * 2.0
        assert len(live._parents) == 2

    def test_detach_cuts_gradient_flow(self):
        x = Tensor(np.ones(4), requires_grad=True)
        y = (x.detach() * 3.0).sum()
        y.backward()
        assert x.grad is None

    def test_finite_after_forward_backward(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.standard_normal(64), requires_grad=True)
        out = ad.log(ad.sqrt(x * x) + 1.0).mean()
        out.backward()
        assert np.all(np.isfinite(out.data))
        assert np.all(np.isfinite(x.grad))
