"""Finite-difference verification sweep over every registered engine op and
the three descriptors end to end. Shared by the gradcheck CLI command and
the acceptance suite."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .descriptors import DescriptorConfig, brightness_graph, depth_graph, warmth_graph

TOLERANCE = 1e-4


def _rand(rng, n):
    return Tensor(rng.standard_normal(n))


def _op_cases(rng):
    """One (name, build) pair per op; build(rng) -> (f, x) for grad_check.

    Multi-input ops alternate which input is checked so both directions of
    every backward rule get exercised across the sweep.
    """
    flip = rng.integers(2) == 0

    def pick(n):
        return _rand(rng, n)

    cases = {}
    other = pick(96)
    cases["add"] = (lambda x: (x + other).sum(), pick(96))
    cases["sub"] = ((lambda x: (other - x).sum()) if flip else (lambda x: (x - other).sum()), pick(96))
    mul_w = pick(96)
    cases["mul"] = (lambda x: (x * mul_w).mean(), pick(96))
    denom = Tensor(rng.standard_normal(64) + np.sign(rng.standard_normal(64)) * 2.0)
    cases["div"] = (
        (lambda x: (x / denom).sum()) if flip else (lambda x: (denom / (x * x + 2.0)).sum()),
        pick(64),
    )
    cases["sum"] = (lambda x: x.sum(), pick(128))
    cases["mean"] = (lambda x: (x * x).mean(), pick(128))
    cases["sqrt"] = (lambda x: ad.sqrt(x * x + 0.3).sum(), pick(64))
    cases["log"] = (lambda x: ad.log(x * x + 0.5).sum(), pick(64))
    cases["exp"] = (lambda x: ad.exp(x * 0.5).mean(), pick(64))
    cases["sigmoid"] = (lambda x: ad.sigmoid(x).mean(), pick(64))
    cases["sin"] = (lambda x: ad.sin(x).sum(), pick(64))
    cases["cos"] = (lambda x: ad.cos(x).sum(), pick(64))
    cases["leaky_relu"] = (lambda x: ad.leaky_relu(x, 0.2).sum(), pick(64))
    cases["relu"] = (lambda x: ad.relu(x).sum(), pick(64))

    aff_w = Tensor(rng.standard_normal((12, 16)) * 0.4)
    aff_b = Tensor(rng.standard_normal(12))
    aff_x = Tensor(rng.standard_normal((16, 8)))
    if flip:
        cases["affine"] = (
            lambda wv: ad.affine(aff_x, ad.reshape(wv, (12, 16)), aff_b).mean(),
            pick(12 * 16),
        )
    else:
        cases["affine"] = (
            lambda x: ad.affine(ad.reshape(x, (16, 8)), aff_w, aff_b).mean(),
            pick(16 * 8),
        )
    mm_b = Tensor(rng.standard_normal((8, 6)) * 0.4)
    cases["matmul"] = (lambda x: ad.matmul(ad.reshape(x, (5, 8)), mm_b).sum(), pick(40))

    conv_w = Tensor(rng.standard_normal((3, 2, 9)) * 0.3)
    conv_x3 = Tensor(rng.standard_normal((2, 2, 24)))
    if flip:
        cases["causal_conv1d"] = (
            lambda wv: ad.causal_conv1d(conv_x3, ad.reshape(wv, (3, 2, 9))).mean(),
            pick(54),
        )
    else:
        cases["causal_conv1d"] = (
            lambda x: ad.causal_conv1d(ad.reshape(x, (2, 32)), conv_w).mean(),
            pick(64),
        )

    up_m = Tensor(rng.standard_normal((2, 2, 32)))
    cases["avg_upsample2x"] = (
        lambda x: (ad.avg_upsample2x(ad.reshape(x, (2, 2, 16))) * up_m).sum(),
        pick(64),
    )
    dn_m = Tensor(rng.standard_normal((2, 2, 8)))
    cases["avg_downsample2x"] = (
        lambda x: (ad.avg_downsample2x(ad.reshape(x, (2, 2, 16))) * dn_m).sum(),
        pick(64),
    )

    rdp_m = Tensor(rng.standard_normal(33))
    cases["real_dft_power"] = (
        lambda x: (ad.real_dft_power(x) * rdp_m).sum(),
        pick(64),
    )

    cases["reshape"] = (lambda x: (ad.reshape(x, (8, 8)) * Tensor(np.eye(8))).sum(), pick(64))
    cc_o = pick(16)
    cases["concat"] = (lambda x: (ad.concat([x, cc_o]) * Tensor(np.arange(32.0))).sum(), pick(16))
    vs_o = Tensor(rng.standard_normal((3, 6)))
    vs_m = Tensor(rng.standard_normal((7, 6)))
    cases["vstack"] = (lambda x: (ad.vstack([ad.reshape(x, (4, 6)), vs_o]) * vs_m).sum(), pick(24))
    tr_m = Tensor(rng.standard_normal((6, 4)))
    cases["transpose2d"] = (lambda x: (ad.transpose2d(ad.reshape(x, (4, 6))) * tr_m).sum(), pick(24))

    sc_g = Tensor(rng.standard_normal((2, 3)))
    sc_x = Tensor(rng.standard_normal((2, 3, 8)))
    if flip:
        cases["scale_channels"] = (
            lambda g: ad.scale_channels(sc_x, ad.reshape(g, (2, 3))).sum(),
            pick(6),
        )
    else:
        cases["scale_channels"] = (
            lambda x: ad.scale_channels(ad.reshape(x, (2, 3, 8)), sc_g).sum(),
            pick(48),
        )
    cb_b = Tensor(rng.standard_normal(3))
    cb_m = Tensor(rng.standard_normal((2, 3, 8)))
    if flip:
        cases["add_channel_bias"] = (
            lambda b: (ad.add_channel_bias(sc_x, b) * cb_m).sum(),
            pick(3),
        )
    else:
        cases["add_channel_bias"] = (
            lambda x: (ad.add_channel_bias(ad.reshape(x, (2, 3, 8)), cb_b) * cb_m).sum(),
            pick(48),
        )
    sig = rng.standard_normal((2, 8))
    as_g = Tensor(rng.standard_normal((2, 3)))
    if flip:
        cases["add_scaled_signal"] = (
            lambda g: (ad.add_scaled_signal(sc_x, ad.reshape(g, (2, 3)), sig) * cb_m).sum(),
            pick(6),
        )
    else:
        cases["add_scaled_signal"] = (
            lambda x: (ad.add_scaled_signal(ad.reshape(x, (2, 3, 8)), as_g, sig) * cb_m).sum(),
            pick(48),
        )
    tm_m = Tensor(rng.standard_normal((2, 3)))
    cases["time_mean"] = (lambda x: (ad.time_mean(ad.reshape(x, (2, 3, 8))) * tm_m).sum(), pick(48))
    rb_m = Tensor(rng.standard_normal((4, 2, 8)))
    cases["repeat_batch"] = (
        lambda x: (ad.repeat_batch(ad.reshape(x, (2, 8)), 4) * rb_m).sum(),
        pick(16),
    )
    return cases


def check_ops(seed: int = 0, n_inputs: int = 20, h: float = 1e-5) -> dict:
    """Max relative gradient error per op over n_inputs random instances."""
    worst = {}
    for trial in range(n_inputs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, trial]))
        for name, (f, x) in _op_cases(rng).items():
            err = grad_check(f, x, h)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def check_descriptors(seed: int = 0, n_inputs: int = 20,
                      lengths=(128, 256, 512, 1024), sample_rate: int = 16000,
                      cfg: DescriptorConfig = DescriptorConfig(), h: float = 1e-5) -> dict:
    """Max relative gradient error per descriptor, end to end through the
    spectral pipeline, over random signals of the given lengths."""
    graphs = {"brightness": brightness_graph, "depth": depth_graph, "warmth": warmth_graph}
    worst = {name: 0.0 for name in graphs}
    for trial in range(n_inputs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7000 + trial]))
        n = int(lengths[trial % len(lengths)])
        x = Tensor(rng.standard_normal(n))
        for name, graph in graphs.items():
            err = grad_check(lambda t, g=graph: g(t, sample_rate, cfg), x, h)
            worst[name] = max(worst[name], err)
    return worst
