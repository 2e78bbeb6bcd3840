"""Semi-supervised disentanglement learning with a style-based GAN."""

__version__ = "0.1.0"

from .factors import (DatasetSplit, FactorSpec, LatentPrior, discretize_codes,
                      sample_code, sample_codes, split_labeled)
from .rendering import SceneSpec, analytic_encode, render_scene
from .losses import LossWeights, MixedPair, assemble_objectives
from .metrics import MetricConfig, MetricReport, mig, l2_score
from .networks import NetworkConfig, StyleVector, adain

__all__ = [
    "DatasetSplit", "FactorSpec", "LatentPrior", "LossWeights", "MetricConfig",
    "MetricReport", "MixedPair", "NetworkConfig", "SceneSpec", "StyleVector",
    "adain", "analytic_encode", "assemble_objectives", "discretize_codes",
    "l2_score", "mig", "render_scene", "sample_code", "sample_codes",
    "split_labeled", "__version__",
]
