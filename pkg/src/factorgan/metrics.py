"""Disentanglement metrics.

Encoder side: MIG, L2 score, Factor score. Generator side: MIG-gen and L2-gen,
scored through an oracle encoder that is trusted to decode generated images.
Mutual information uses plug-in histogram estimates over 20 uniform bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factors import FactorSpec, discretize_codes, sample_codes


@dataclass(frozen=True)
class MetricConfig:
    n_mig: int = 10000
    n_l2: int = 1000
    factor_score_train: int = 5000
    factor_score_test: int = 2000
    factor_score_batch: int = 64
    n_norm: int = 1000
    bins: int = 20

    def __post_init__(self):
        for name in ("n_mig", "n_l2", "factor_score_train", "factor_score_test",
                     "factor_score_batch", "n_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


class OracleGateError(RuntimeError):
    """The oracle encoder failed its accuracy gate and refuses metric duty."""


@dataclass
class MutualInfoResult:
    mi: np.ndarray                  # (K', K) in nats
    factor_entropy: np.ndarray      # (K,)
    degenerate_preds: list[int]
    degenerate_factors: list[int]


def _entropy(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _minmax_columns(preds: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Affine-map each column onto [0, 1]; constant columns map to zero."""
    preds = np.asarray(preds, dtype=np.float64)
    lo = preds.min(axis=0)
    hi = preds.max(axis=0)
    span = hi - lo
    degenerate = [int(j) for j in np.nonzero(span <= 0)[0]]
    safe = np.where(span > 0, span, 1.0)
    return (preds - lo) / safe, degenerate


def mutual_info_matrix(preds: np.ndarray, codes: np.ndarray, bins: int = 20
                       ) -> MutualInfoResult:
    """Plug-in MI between every prediction dimension and every factor.

    Both sides are discretized into uniform bins over [0, 1]; predictions are
    min-max normalized per column first since encoder outputs are unbounded.
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    if preds.shape[0] != codes.shape[0]:
        raise ValueError(f"sample counts differ: {preds.shape[0]} vs {codes.shape[0]}")
    normed, degenerate_preds = _minmax_columns(preds)
    dp = discretize_codes(normed, bins)
    dc = discretize_codes(codes, bins)
    kp, kc = dp.shape[1], dc.shape[1]

    factor_entropy = np.zeros(kc)
    degenerate_factors = []
    for k in range(kc):
        counts = np.bincount(dc[:, k], minlength=bins)
        factor_entropy[k] = _entropy(counts)
        if (counts > 0).sum() <= 1:
            degenerate_factors.append(k)

    mi = np.zeros((kp, kc))
    n = dp.shape[0]
    for j in range(kp):
        if j in degenerate_preds:
            continue
        for k in range(kc):
            if k in degenerate_factors:
                continue
            joint = np.bincount(dp[:, j] * bins + dc[:, k], minlength=bins * bins)
            joint = joint.reshape(bins, bins) / n
            pj = joint.sum(axis=1)
            pk = joint.sum(axis=0)
            nz = joint > 0
            mi[j, k] = float((joint[nz] * np.log(
                joint[nz] / (pj[:, None] * pk[None, :])[nz])).sum())
    return MutualInfoResult(mi=mi, factor_entropy=factor_entropy,
                            degenerate_preds=degenerate_preds,
                            degenerate_factors=degenerate_factors)


def mig_from_matrix(info: MutualInfoResult) -> float:
    """Mean over factors of (top MI - runner-up MI) / factor entropy."""
    gaps = []
    for k in range(info.mi.shape[1]):
        h = info.factor_entropy[k]
        if h <= 0:
            gaps.append(0.0)
            continue
        col = np.sort(info.mi[:, k])[::-1]
        top = col[0] if len(col) >= 1 else 0.0
        second = col[1] if len(col) >= 2 else 0.0
        gaps.append(max(top - second, 0.0) / h)
    return float(np.mean(gaps))


def mig(preds: np.ndarray, codes: np.ndarray, config: MetricConfig = MetricConfig()
        ) -> tuple[float, MutualInfoResult]:
    info = mutual_info_matrix(preds, codes, config.bins)
    return mig_from_matrix(info), info


def l2_score(preds: np.ndarray, codes: np.ndarray) -> float:
    """Mean per-sample Euclidean distance between predictions and codes."""
    preds = np.asarray(preds, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.float64)
    return float(np.linalg.norm(preds - codes, axis=1).mean())


def _require_gate(oracle):
    if not getattr(oracle, "gate_ok", False):
        raise OracleGateError(
            "oracle encoder failed its RMS gate and cannot score a generator "
            f"(per-dim RMS {getattr(oracle, 'holdout_rms', None)})")


def generated_pairs(generate, prior, spec: FactorSpec, n: int,
                    rng: np.random.Generator, batch: int = 128):
    """Sample (z, c') pairs, produce x' = generate(z, c'), return (images, codes)."""
    codes = sample_codes(spec, n, rng)
    images = []
    for i in range(0, n, batch):
        c = codes[i:i + batch]
        z = prior.sample(len(c), rng)
        images.append(np.asarray(generate(z, c)))
    return np.concatenate(images, axis=0), codes


def mig_gen(generate, prior, spec: FactorSpec, oracle,
            config: MetricConfig, rng: np.random.Generator
            ) -> tuple[float, MutualInfoResult]:
    """MIG computed between oracle predictions on generated images and the
    codes the generator was asked for."""
    _require_gate(oracle)
    images, codes = generated_pairs(generate, prior, spec, config.n_mig, rng)
    preds = oracle.predict(images)
    return mig(preds, codes, config)


def l2_gen(generate, prior, spec: FactorSpec, oracle,
           config: MetricConfig, rng: np.random.Generator) -> float:
    _require_gate(oracle)
    images, codes = generated_pairs(generate, prior, spec, config.n_l2, rng)
    return l2_score(oracle.predict(images), codes)


@dataclass
class FactorScoreResult:
    score: float
    vote_matrix: np.ndarray
    excluded_dims: list[int]


def factor_score(predict, provider, spec: FactorSpec,
                 config: MetricConfig, rng: np.random.Generator) -> FactorScoreResult:
    """Majority-vote classifier accuracy over argmin-variance votes.

    provider(rng, size, fixed_factor, fixed_value) must return a batch of
    observations; predict maps observations to (N, K') arrays. Each vote fixes
    one factor at a random grid value, leaves the rest random, and votes for
    the prediction dimension with the smallest normalized variance.
    """
    norm_batch = provider(rng, config.n_norm, None, None)
    stds = np.asarray(predict(norm_batch), dtype=np.float64).std(axis=0)
    excluded = [int(j) for j in np.nonzero(stds < 1e-10)[0]]
    active = np.array([j for j in range(len(stds)) if j not in excluded])
    if len(active) == 0:
        return FactorScoreResult(score=0.0, vote_matrix=np.zeros((0, spec.k)),
                                 excluded_dims=excluded)

    def one_vote():
        k = int(rng.integers(spec.k))
        grid = spec.grid(k)
        v = float(grid[rng.integers(len(grid))])
        batch = provider(rng, config.factor_score_batch, k, v)
        preds = np.asarray(predict(batch), dtype=np.float64)[:, active]
        variances = (preds / stds[active]).var(axis=0)
        return int(active[np.argmin(variances)]), k

    votes = np.zeros((len(stds), spec.k), dtype=np.int64)
    for _ in range(config.factor_score_train):
        d, k = one_vote()
        votes[d, k] += 1
    mapping = votes.argmax(axis=1)

    correct = 0
    for _ in range(config.factor_score_test):
        d, k = one_vote()
        correct += int(mapping[d] == k)
    return FactorScoreResult(score=correct / config.factor_score_test,
                             vote_matrix=votes, excluded_dims=excluded)


@dataclass
class MetricReport:
    """Metric values plus the estimation metadata they were produced under."""

    mig: float | None = None
    l2: float | None = None
    mig_gen: float | None = None
    l2_gen: float | None = None
    factor_score: float | None = None
    meta: dict = field(default_factory=dict)
    mi_matrix: list | None = None

    def __post_init__(self):
        for name in ("mig", "mig_gen", "factor_score"):
            v = getattr(self, name)
            if v is not None and not -1e-9 <= v <= 1 + 1e-9:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("l2", "l2_gen"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative, got {v}")

    def to_json(self) -> dict:
        return {
            "mig": self.mig,
            "l2": self.l2,
            "mig_gen": self.mig_gen,
            "l2_gen": self.l2_gen,
            "factor_score": self.factor_score,
            "meta": self.meta,
            "mi_matrix": self.mi_matrix,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MetricReport":
        return cls(mig=doc.get("mig"), l2=doc.get("l2"), mig_gen=doc.get("mig_gen"),
                   l2_gen=doc.get("l2_gen"), factor_score=doc.get("factor_score"),
                   meta=doc.get("meta", {}), mi_matrix=doc.get("mi_matrix"))
