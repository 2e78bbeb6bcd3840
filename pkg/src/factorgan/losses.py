"""Objective terms: non-saturating GAN loss with R1, code reconstruction
(unsupervised and supervised), MixUp pair construction, and smoothness
regularization, plus their assembly into the generator / discriminator-encoder
objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossWeights:
    """gamma_g/gamma_e weight the unsupervised code term in the G and (D,E)
    objectives, beta the supervised term, alpha the smoothness term, xi the
    MixUp Beta concentration, r1_gamma the gradient penalty."""

    gamma_g: float = 10.0
    gamma_e: float = 0.0
    beta: float = 10.0
    alpha: float = 1.0
    xi: float = 0.75
    r1_gamma: float = 10.0

    def __post_init__(self):
        for name in ("gamma_g", "gamma_e", "beta", "alpha", "r1_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")


@dataclass
class MixedPair:
    """Convex combinations of a labeled real batch and a generated batch.

    x = lam * x_real + (1 - lam) * x_gen, same for codes; lam >= 0.5 always,
    so the real sample dominates every mix.
    """

    x: torch.Tensor
    c: torch.Tensor
    lam: torch.Tensor


def code_l2(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-sample Euclidean distance (the L2 score in loss form)."""
    return torch.linalg.vector_norm(pred - target, dim=1).mean()


def gan_losses(real_scores: torch.Tensor | None, fake_scores: torch.Tensor,
               real_images: torch.Tensor | None = None, r1_gamma: float = 10.0):
    """Non-saturating logistic GAN terms.

    loss_g_adv = mean softplus(-fake);
    loss_d_adv = mean softplus(fake) + mean softplus(-real) + (r1_gamma/2) * R1.

    The R1 penalty needs real_images with requires_grad so the score gradient
    can be taken; pass real_scores=None to get only the generator side.
    """
    loss_g_adv = F.softplus(-fake_scores).mean()
    if real_scores is None:
        return loss_g_adv, None
    loss_d_adv = F.softplus(fake_scores).mean() + F.softplus(-real_scores).mean()
    if r1_gamma > 0:
        if real_images is None or not real_images.requires_grad:
            raise ValueError("R1 needs real_images with requires_grad=True")
        (grad,) = torch.autograd.grad(real_scores.sum(), real_images, create_graph=True)
        r1 = grad.pow(2).flatten(1).sum(dim=1).mean()
        loss_d_adv = loss_d_adv + (r1_gamma / 2.0) * r1
    return loss_g_adv, loss_d_adv


def unsup_code_loss(encode, generate, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """Mean || encode(generate(z, c)) - c ||_2 over the batch."""
    return code_l2(encode(generate(z, c)), c)


def sup_code_loss(encode, x: torch.Tensor | None, c: torch.Tensor | None
                  ) -> tuple[torch.Tensor, bool]:
    """Mean || encode(x) - c ||_2 on labeled pairs.

    Returns (loss, supervised); an empty labeled batch gives (0, False) so the
    caller can tell apart "perfect" from "no supervision".
    """
    if x is None or len(x) == 0:
        return torch.zeros(()), False
    return code_l2(encode(x), c), True


def sample_mix_weights(n: int, xi: float, rng: np.random.Generator) -> torch.Tensor:
    """lam' = max(lam, 1 - lam) with lam ~ Beta(xi, xi); always in [0.5, 1]."""
    if xi <= 0:
        raise ValueError(f"xi must be positive, got {xi}")
    lam = rng.beta(xi, xi, size=n)
    return torch.as_tensor(np.maximum(lam, 1.0 - lam), dtype=torch.float32)


def mixup_pair(x: torch.Tensor, c: torch.Tensor, x_gen: torch.Tensor,
               c_gen: torch.Tensor, xi: float, rng: np.random.Generator) -> MixedPair:
    """Mix a labeled real batch with a generated batch, real side dominant."""
    lam = sample_mix_weights(x.shape[0], xi, rng).to(x.dtype)
    lx = lam.view(-1, *([1] * (x.dim() - 1)))
    lc = lam.view(-1, 1)
    return MixedPair(
        x=lx * x + (1.0 - lx) * x_gen,
        c=lc * c + (1.0 - lc) * c_gen,
        lam=lam,
    )


def smoothness_loss(encode, mixed: MixedPair) -> torch.Tensor:
    """Mean || encode(x_mixed) - c_mixed ||_2; gradients reach the generator
    through the generated half of the mix."""
    return code_l2(encode(mixed.x), mixed.c)


@dataclass
class LossTerms:
    """Component scalars of one training step."""

    gan_g: torch.Tensor | float = 0.0
    gan_d: torch.Tensor | float = 0.0
    unsup: torch.Tensor | float = 0.0
    sup: torch.Tensor | float = 0.0
    sr: torch.Tensor | float = 0.0


def assemble_objectives(terms: LossTerms, weights: LossWeights):
    """L_G = gan_g + gamma_g * unsup + alpha * sr;
    L_DE = gan_d + gamma_e * unsup + beta * sup + alpha * sr."""
    loss_g = terms.gan_g + weights.gamma_g * terms.unsup + weights.alpha * terms.sr
    loss_de = (terms.gan_d + weights.gamma_e * terms.unsup
               + weights.beta * terms.sup + weights.alpha * terms.sr)
    return loss_g, loss_de
