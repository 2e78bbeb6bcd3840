import math
import random

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from scipy import stats

from factorgan.losses import (LossTerms, LossWeights, assemble_objectives,
                              code_l2, gan_losses, mixup_pair,
                              sample_mix_weights, smoothness_loss,
                              sup_code_loss, unsup_code_loss)
from gradcheck import fixed_batches, run_gradient_checks, tiny_models


class _FixedBetaRng:
    """Stands in for numpy's Generator where a chosen lambda is needed."""

    def __init__(self, value):
        self.value = value

    def beta(self, a, b, size=None):
        return np.full(size, self.value)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(gamma_g=-1)
    with pytest.raises(ValueError):
        LossWeights(xi=0.0)
    w = LossWeights()
    assert (w.gamma_g, w.gamma_e, w.alpha, w.xi) == (10.0, 0.0, 1.0, 0.75)


def test_gan_losses_at_zero_scores():
    zeros = torch.zeros(16)
    g_adv, d_adv = gan_losses(zeros, zeros, torch.zeros(16, 2), r1_gamma=0.0)
    assert abs(float(g_adv) - math.log(2)) < 1e-6
    assert abs(float(d_adv) - 2 * math.log(2)) < 1e-6


def test_gan_losses_asymptote():
    # a perfectly separating discriminator drives its adversarial terms to zero
    _, d_adv = gan_losses(torch.full((8,), 50.0), torch.full((8,), -50.0),
                          torch.zeros(8, 2), r1_gamma=0.0)
    assert float(d_adv) < 1e-6
    # and fakes scored as real drive the generator term to zero
    g_adv, _ = gan_losses(None, torch.full((8,), 50.0))
    assert float(g_adv) < 1e-6


def test_r1_linear_discriminator_closed_form():
    torch.manual_seed(0)
    w = torch.randn(12, dtype=torch.float64)

    x = torch.randn(6, 12, dtype=torch.float64).requires_grad_(True)
    scores = x @ w
    _, d_adv = gan_losses(scores, torch.zeros(6, dtype=torch.float64), x, r1_gamma=10.0)
    base = F.softplus(torch.zeros(6, dtype=torch.float64)).mean() \
        + F.softplus(-scores).mean()
    penalty = float(d_adv - base)
    assert abs(penalty - 5.0 * float(w @ w)) < 1e-9


def test_unsup_loss_closed_forms():
    c = torch.rand(10, 9, dtype=torch.float64)
    z = torch.zeros(10, 1)
    perfect = unsup_code_loss(lambda x: x, lambda z_, c_: c_, z, c)
    assert float(perfect) == 0.0
    offset = unsup_code_loss(lambda x: x + 0.1, lambda z_, c_: c_, z, c)
    assert abs(float(offset) - 0.3) < 1e-12


def test_unsup_loss_batch_order_invariant():
    torch.manual_seed(1)
    c = torch.rand(8, 4, dtype=torch.float64)
    pred = torch.rand(8, 4, dtype=torch.float64)
    perm = torch.randperm(8)
    assert abs(float(code_l2(pred, c)) - float(code_l2(pred[perm], c[perm]))) < 1e-14


def test_sup_loss_cases():
    loss, flag = sup_code_loss(lambda x: x, None, None)
    assert float(loss) == 0.0 and flag is False
    x = torch.tensor([[0.0, 0.0]])
    c = torch.tensor([[0.3, 0.4]])
    loss, flag = sup_code_loss(lambda v: v, x, c)
    assert flag is True
    assert abs(float(loss) - 0.5) < 1e-7


def test_sup_loss_has_no_generator_path():
    gen, de = tiny_models(0)
    z, c, x_real, c_real, _ = fixed_batches(1)
    loss, _ = sup_code_loss(lambda x: de(x)[1], x_real, c_real)
    grads = torch.autograd.grad(loss, list(gen.parameters()), allow_unused=True)
    assert all(g is None for g in grads)


def test_mixup_midpoint_and_direct_case():
    x = torch.zeros(1, 2)
    x2 = torch.ones(1, 2)
    pair = mixup_pair(x, torch.tensor([[0.0, 1.0]]), x2, torch.tensor([[1.0, 0.0]]),
                      xi=0.75, rng=_FixedBetaRng(0.5))
    assert torch.allclose(pair.x, torch.full((1, 2), 0.5))
    pair = mixup_pair(x, torch.tensor([[0.0, 1.0]]), x2, torch.tensor([[1.0, 0.0]]),
                      xi=0.75, rng=_FixedBetaRng(0.2))
    assert float(pair.lam[0]) == pytest.approx(0.8)
    assert torch.allclose(pair.c, torch.tensor([[0.2, 0.8]]))


def test_mixup_weight_range_and_mean():
    rng = np.random.default_rng(0)
    lam = sample_mix_weights(100_000, 0.75, rng).numpy()
    assert lam.min() >= 0.5 and lam.max() <= 1.0
    # independent oracle: Beta ppf applied to stdlib uniforms
    py = random.Random(123)
    oracle = stats.beta.ppf([py.random() for _ in range(100_000)], 0.75, 0.75)
    oracle = np.maximum(oracle, 1 - oracle)
    assert abs(lam.mean() - oracle.mean()) < 0.005


def test_mixup_convexity_of_codes():
    rng = np.random.default_rng(1)
    c = torch.rand(500, 5)
    c2 = torch.rand(500, 5)
    pair = mixup_pair(torch.rand(500, 5), c, torch.rand(500, 5), c2, xi=0.75, rng=rng)
    assert float(pair.c.min()) >= 0.0
    assert float(pair.c.max()) <= 1.0


def test_mixup_rejects_bad_xi():
    with pytest.raises(ValueError):
        sample_mix_weights(4, 0.0, np.random.default_rng(0))


def test_smoothness_degenerate_mix_equals_sup():
    gen, de = tiny_models(2)
    z, c, x_real, c_real, _ = fixed_batches(3)
    pair = mixup_pair(x_real, c_real, torch.zeros_like(x_real), torch.zeros_like(c_real),
                      xi=0.75, rng=_FixedBetaRng(1.0))
    sr = smoothness_loss(lambda x: de(x)[1], pair)
    sup, _ = sup_code_loss(lambda x: de(x)[1], x_real, c_real)
    assert abs(float(sr) - float(sup)) < 1e-12


def test_smoothness_linear_encoder_identity():
    # a linear encoder exact on both endpoints is exact on every convex mix
    torch.manual_seed(0)
    w = torch.randn(6, 3, dtype=torch.float64)

    def encode(x):
        return x.flatten(1) @ w

    x1 = torch.randn(5, 6, 1, 1, dtype=torch.float64)
    x2 = torch.randn(5, 6, 1, 1, dtype=torch.float64)
    c1, c2 = encode(x1), encode(x2)
    pair = mixup_pair(x1, c1, x2, c2, xi=0.75, rng=np.random.default_rng(0))
    assert float(smoothness_loss(encode, pair)) < 1e-12


def test_smoothness_reaches_generator():
    gen, de = tiny_models(4)
    z, c, x_real, c_real, lam = fixed_batches(5)

    def loss_fn():
        pair = mixup_pair(x_real, c_real, gen(z, c), c, xi=0.75, rng=_FixedBetaRng(0.7))
        return smoothness_loss(lambda x: de(x)[1], pair)

    params = list(gen.parameters())
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    total = sum(float(g.abs().sum()) for g in grads if g is not None)
    assert total > 0
    # finite-difference probe on one parameter agrees in sign of change
    p = params[0]
    g0 = grads[0]
    idx = tuple(int(v) for v in np.unravel_index(int(g0.abs().argmax()), g0.shape))
    eps = 1e-5
    with torch.no_grad():
        p[idx] += eps
    up = float(loss_fn())
    with torch.no_grad():
        p[idx] -= 2 * eps
    down = float(loss_fn())
    fd = (up - down) / (2 * eps)
    assert abs(fd - float(g0[idx])) < 1e-4


def test_assemble_reduction_identities():
    terms = LossTerms(gan_g=1.0, gan_d=2.0, unsup=3.0, sup=4.0, sr=5.0)
    # alpha = 0 reduces to the naive semi-supervised objective
    lg, lde = assemble_objectives(terms, LossWeights(gamma_g=2, gamma_e=1, beta=3, alpha=0))
    assert lg == 1.0 + 2 * 3.0
    assert lde == 2.0 + 1 * 3.0 + 3 * 4.0
    # alpha = beta = 0 with gamma_g = gamma_e reduces to the unsupervised objective
    lg, lde = assemble_objectives(terms, LossWeights(gamma_g=2, gamma_e=2, beta=0, alpha=0))
    assert lg == 1.0 + 2 * 3.0
    assert lde == 2.0 + 2 * 3.0


def test_assemble_arithmetic_example():
    terms = LossTerms(gan_g=1.0, gan_d=1.0, unsup=2.0, sup=3.0, sr=4.0)
    lg, _ = assemble_objectives(terms, LossWeights(gamma_g=10, gamma_e=0, beta=10, alpha=1))
    assert lg == 1.0 + 20.0 + 4.0


def test_assemble_rejects_negative_weights():
    with pytest.raises(ValueError):
        LossWeights(alpha=-0.5)


def test_gradient_checks_float64():
    errors = run_gradient_checks(torch.float64, eps=1e-5)
    for name, err in errors.items():
        assert err < 1e-6, f"{name}: {err}"


def test_all_losses_finite_on_random_models():
    gen, de = tiny_models(6)
    z, c, x_real, c_real, _ = fixed_batches(7)
    xr = x_real.clone().requires_grad_(True)
    scores, code = de(xr)
    fake_scores, fake_code = de(gen(z, c))
    g_adv, d_adv = gan_losses(scores, fake_scores, xr, r1_gamma=10.0)
    for v in (g_adv, d_adv, code_l2(fake_code, c)):
        assert math.isfinite(float(v))
