import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from factorgan.factors import FactorSpec
from factorgan.networks import NetworkConfig
from factorgan.rendering import SCENE_FACTORS, SceneSpec, render_uint8


TINY_SPEC = FactorSpec((("hue", 4), ("size", 3), ("pos", 5)))


@pytest.fixture
def tiny_spec():
    return TINY_SPEC


@pytest.fixture
def tiny_net_config():
    return NetworkConfig(resolution=8, z_dim=6, code_dim=3, n_mp=2, f_mp=12, f_0=8)


def render_subset(resolution: int, n: int, seed: int = 0):
    """n random grid codes rendered at the given resolution."""
    spec = SceneSpec(resolution=resolution)
    rng = np.random.default_rng(seed)
    grids = [SCENE_FACTORS.grid(i) for i in range(SCENE_FACTORS.k)]
    codes = np.stack([
        np.array([g[rng.integers(len(g))] for g in grids]) for _ in range(n)])
    images = np.stack([render_uint8(c, spec) for c in codes])
    return images, codes, spec


@pytest.fixture(scope="session")
def scene_subset_32():
    """256 random renders at 32px, shared across tests."""
    return render_subset(32, 256, seed=11)


@pytest.fixture(scope="session")
def dataset_dir_32(tmp_path_factory) -> Path:
    """A full 32px dataset written through the CLI (also exercises gen-data)."""
    out = tmp_path_factory.mktemp("data") / "shapes32"
    proc = subprocess.run(
        [sys.executable, "-m", "factorgan.cli", "gen-data", "--out", str(out),
         "--seed", "7", "--resolution", "32"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


def acceptance_cache() -> Path:
    """Durable cache so the expensive acceptance artifacts survive reruns."""
    root = Path(os.environ.get("FACTORGAN_TEST_CACHE",
                               Path(__file__).resolve().parent.parent / ".acceptance_cache"))
    root.mkdir(parents=True, exist_ok=True)
    return root
