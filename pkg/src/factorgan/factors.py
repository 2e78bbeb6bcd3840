"""Factor-of-variation schemas, grid codes, and the labeled/unlabeled split."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GRID_TOL = 1e-9


class InvalidCodeError(ValueError):
    """A factor code is off the grid or outside [0, 1]."""


@dataclass(frozen=True)
class FactorSpec:
    """Ordered list of named factors, each taking m >= 2 evenly spaced values in [0, 1].

    Factor i with cardinality m takes exactly the values {j / (m - 1) : j = 0..m-1}.
    """

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [n for n, _ in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor names: {names}")
        for name, m in self.factors:
            if m < 2:
                raise ValueError(f"factor {name!r} needs cardinality >= 2, got {m}")
        object.__setattr__(self, "factors", tuple((str(n), int(m)) for n, m in self.factors))

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.factors)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(m for _, m in self.factors)

    def grid(self, i: int) -> np.ndarray:
        """Grid values of factor i."""
        m = self.factors[i][1]
        return np.arange(m, dtype=np.float64) / (m - 1)

    def num_combinations(self) -> int:
        n = 1
        for _, m in self.factors:
            n *= m
        return n

    def validate_code(self, code) -> np.ndarray:
        """Check shape and range; return the code as a float64 vector."""
        code = np.asarray(code, dtype=np.float64)
        if code.shape != (self.k,):
            raise InvalidCodeError(f"code has shape {code.shape}, expected ({self.k},)")
        if np.any(code < -GRID_TOL) or np.any(code > 1 + GRID_TOL):
            raise InvalidCodeError(f"code entries outside [0, 1]: {code}")
        return np.clip(code, 0.0, 1.0)

    def on_grid(self, code) -> bool:
        code = np.asarray(code, dtype=np.float64)
        if code.shape != (self.k,):
            return False
        for i in range(self.k):
            if np.min(np.abs(self.grid(i) - code[i])) > GRID_TOL:
                return False
        return True

    def snap_to_grid(self, code) -> np.ndarray:
        """Nearest grid point, per dimension."""
        code = np.asarray(code, dtype=np.float64)
        out = np.empty(self.k)
        for i in range(self.k):
            g = self.grid(i)
            out[i] = g[np.argmin(np.abs(g - code[i]))]
        return out

    def levels(self, code) -> np.ndarray:
        """Integer grid indices of an on-grid code."""
        code = self.validate_code(code)
        idx = np.empty(self.k, dtype=np.int64)
        for i in range(self.k):
            g = self.grid(i)
            j = int(np.argmin(np.abs(g - code[i])))
            if abs(g[j] - code[i]) > GRID_TOL:
                raise InvalidCodeError(f"entry {i} = {code[i]} is off the grid of {self.factors[i]}")
            idx[i] = j
        return idx

    def to_json(self) -> dict:
        return {"factors": [{"name": n, "cardinality": m} for n, m in self.factors]}

    @classmethod
    def from_json(cls, doc: dict) -> "FactorSpec":
        return cls(tuple((f["name"], int(f["cardinality"])) for f in doc["factors"]))

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class LatentPrior:
    """Standard normal prior over the latent vector z."""

    dim: int = 128

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"latent dim must be >= 1, got {self.dim}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class DatasetSplit:
    """Partition of image indices into a labeled subset and its complement.

    Exactly round(eta * num_images) indices are labeled (round-half-even), drawn
    uniformly without replacement. Only indices are stored; ground-truth codes
    for the labeled side are attached via :func:`labeled_pairs`, so nothing in
    the training path can read an unlabeled image's code.
    """

    num_images: int
    eta: float
    seed: int
    labeled: np.ndarray = field(repr=False)
    unlabeled: np.ndarray = field(repr=False)

    def __post_init__(self):
        lab, unlab = set(self.labeled.tolist()), set(self.unlabeled.tolist())
        assert not (lab & unlab)
        assert len(lab) + len(unlab) == self.num_images
        assert len(lab) == round(self.eta * self.num_images)


def split_labeled(num_images: int, eta: float, seed: int) -> DatasetSplit:
    """Choose round(eta * num_images) labeled indices uniformly, deterministically."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if num_images < 0:
        raise ValueError(f"num_images must be >= 0, got {num_images}")
    n_labeled = round(eta * num_images)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(num_images)
    labeled = np.sort(perm[:n_labeled])
    unlabeled = np.sort(perm[n_labeled:])
    return DatasetSplit(num_images=num_images, eta=eta, seed=seed,
                        labeled=labeled, unlabeled=unlabeled)


def labeled_pairs(split: DatasetSplit, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(indices, codes) for the labeled side. The only sanctioned code access."""
    return split.labeled, np.asarray(codes, dtype=np.float64)[split.labeled]


def sample_code(spec: FactorSpec, rng: np.random.Generator) -> np.ndarray:
    """One code with each entry drawn uniformly from that factor's grid."""
    return sample_codes(spec, 1, rng)[0]


def sample_codes(spec: FactorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n codes, entries independent and uniform on each factor's grid."""
    out = np.empty((n, spec.k), dtype=np.float64)
    for i, (_, m) in enumerate(spec.factors):
        out[:, i] = rng.integers(0, m, size=n) / (m - 1)
    return out


def discretize_codes(codes: np.ndarray, bins: int) -> np.ndarray:
    """Map entries in [0, 1] to integer bins: v -> min(floor(v * bins), bins - 1)."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    codes = np.asarray(codes, dtype=np.float64)
    if np.any(codes < 0) or np.any(codes > 1):
        raise ValueError("discretize_codes requires entries in [0, 1]")
    return np.minimum(np.floor(codes * bins), bins - 1).astype(np.int64)
