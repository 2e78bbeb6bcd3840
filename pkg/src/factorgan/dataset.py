"""On-disk dataset layout: manifest.json + codes.csv + images/%07d.png."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .rendering import SceneSpec, render_uint8, uint8_to_tensor

LAYOUT_VERSION = 1


class DatasetWriteError(RuntimeError):
    pass


class DatasetIntegrityError(RuntimeError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    factor_spec: dict
    resolution: int
    count: int
    seed: int
    layout_version: int
    digest: str

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "factor_spec": self.factor_spec,
            "resolution": self.resolution,
            "count": self.count,
            "seed": self.seed,
            "layout_version": self.layout_version,
            "digest": self.digest,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetManifest":
        return cls(**{k: doc[k] for k in (
            "name", "factor_spec", "resolution", "count", "seed", "layout_version", "digest")})


def enumerate_grid(spec: SceneSpec) -> np.ndarray:
    """Full Cartesian product of the factor grids, row-major in factor order."""
    grids = [spec.factor_spec.grid(i) for i in range(spec.k)]
    rows = list(itertools.product(*grids))
    return np.array(rows, dtype=np.float64)


def _image_path(root: Path, i: int) -> Path:
    return root / "images" / f"{i:07d}.png"


def generate_dataset(spec: SceneSpec, out_dir, seed: int = 0,
                     name: str = "shapes2d-mini") -> DatasetManifest:
    """Render the exhaustive factor grid into out_dir; the manifest is written
    last so interrupted runs are left without one and fail to load."""
    root = Path(out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        codes = enumerate_grid(spec)
        digest = hashlib.sha256()
        for i, code in enumerate(codes):
            img = render_uint8(code, spec)
            Image.fromarray(img).save(_image_path(root, i))
            digest.update(img.tobytes())
        with open(root / "codes.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(spec.factor_spec.names)
            for code in codes:
                writer.writerow([f"{v:.10g}" for v in code])
        digest.update((root / "codes.csv").read_bytes())
        manifest = DatasetManifest(
            name=name,
            factor_spec=spec.factor_spec.to_json(),
            resolution=spec.resolution,
            count=len(codes),
            seed=seed,
            layout_version=LAYOUT_VERSION,
            digest=digest.hexdigest(),
        )
        with open(root / "manifest.json", "w") as f:
            json.dump(manifest.to_json(), f, indent=2)
        return manifest
    except OSError as e:
        manifest_path = root / "manifest.json"
        if manifest_path.exists():
            manifest_path.unlink()
        raise DatasetWriteError(f"failed writing dataset to {root}: {e}") from e


class ImageAccessor:
    """Random access to stored images, as [-1, 1] float32 tensors."""

    def __init__(self, root: Path, count: int, resolution: int):
        self._root = root
        self._count = count
        self._resolution = resolution

    def __len__(self) -> int:
        return self._count

    def load_uint8(self, i: int) -> np.ndarray:
        if not 0 <= i < self._count:
            raise IndexError(i)
        path = _image_path(self._root, i)
        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except (OSError, SyntaxError) as e:
            raise DatasetIntegrityError(f"image {i} unreadable at {path}: {e}", index=i) from e
        if arr.shape != (self._resolution, self._resolution, 3):
            raise DatasetIntegrityError(
                f"image {i} has shape {arr.shape}, expected "
                f"({self._resolution}, {self._resolution}, 3)", index=i)
        return arr

    def __getitem__(self, i: int) -> np.ndarray:
        return uint8_to_tensor(self.load_uint8(i))

    def load_all_uint8(self) -> np.ndarray:
        return np.stack([self.load_uint8(i) for i in range(self._count)])


def load_dataset(dir_path) -> tuple[DatasetManifest, ImageAccessor, np.ndarray]:
    """Read a dataset directory; verifies presence of every image file."""
    root = Path(dir_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetIntegrityError(f"no manifest.json in {root}")
    manifest = DatasetManifest.from_json(json.loads(manifest_path.read_text()))
    if manifest.layout_version != LAYOUT_VERSION:
        raise DatasetIntegrityError(
            f"layout version {manifest.layout_version} unsupported (expected {LAYOUT_VERSION})")

    with open(root / "codes.csv", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    codes = np.array(rows, dtype=np.float64)
    expected_names = [f["name"] for f in manifest.factor_spec["factors"]]
    if header != expected_names:
        raise DatasetIntegrityError(f"codes.csv header {header} != factor names {expected_names}")
    if len(codes) != manifest.count:
        raise DatasetIntegrityError(
            f"codes.csv has {len(codes)} rows, manifest says {manifest.count}")
    for i in range(manifest.count):
        if not _image_path(root, i).exists():
            raise DatasetIntegrityError(f"missing image file for index {i}", index=i)
    accessor = ImageAccessor(root, manifest.count, manifest.resolution)
    return manifest, accessor, codes
