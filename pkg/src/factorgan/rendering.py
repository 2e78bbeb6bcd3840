"""Procedural 2D scene renderer with an exact analytic inverse.

One antialiased shape (circle / square / triangle) on a flat wall. All seven
factors act through closed-form geometry and color maps, so a grid-rendered
image can be decoded back to its exact factor code. Pixel values follow the
storage contract v_tensor = v_uint8 / 127.5 - 1.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .factors import FactorSpec, InvalidCodeError

SCENE_FACTORS = FactorSpec((
    ("object_shape", 3),
    ("object_scale", 4),
    ("object_hue", 4),
    ("wall_hue", 4),
    ("x_position", 8),
    ("y_position", 5),
    ("brightness", 4),
))

VALID_RESOLUTIONS = (32, 64, 128)
SUPERSAMPLE = 4  # fixed 4x supersampling; coverage is an integer in 0..16

# Geometry in units of the image side. Centers stay in the middle band and the
# largest object extent (square diagonal) is 0.17, so a 3x3 corner patch is
# always pure background.
CENTER_LO, CENTER_SPAN = 0.22, 0.56
SIZE_LO, SIZE_SPAN = 0.055, 0.065

BRIGHTNESS_LO, BRIGHTNESS_SPAN = 0.4, 0.6

SHAPE_NAMES = ("circle", "square", "triangle")
# area = coef * r^2
SHAPE_AREA_COEF = {"circle": math.pi, "square": 4.0, "triangle": 3.0 * math.sqrt(3.0) / 4.0}

_I_SHAPE, _I_SCALE, _I_OHUE, _I_WHUE, _I_X, _I_Y, _I_BRIGHT = range(7)


@dataclass(frozen=True)
class SceneSpec:
    """The fixed seven-factor schema plus a render resolution."""

    resolution: int = 64

    def __post_init__(self):
        if self.resolution not in VALID_RESOLUTIONS:
            raise ValueError(f"resolution must be one of {VALID_RESOLUTIONS}, got {self.resolution}")

    @property
    def factor_spec(self) -> FactorSpec:
        return SCENE_FACTORS

    @property
    def k(self) -> int:
        return SCENE_FACTORS.k


def object_color(c: float) -> np.ndarray:
    """Warm, saturated palette (red..yellow); disjoint from the wall palette."""
    return np.array(colorsys.hsv_to_rgb(0.26 * c, 0.95, 1.0))


def wall_color(c: float) -> np.ndarray:
    """Cool pastel palette (cyan..violet); max channel is always 1."""
    return np.array(colorsys.hsv_to_rgb(0.52 + 0.33 * c, 0.50, 1.0))


def brightness_factor(c: float) -> float:
    return BRIGHTNESS_LO + BRIGHTNESS_SPAN * c


@lru_cache(maxsize=8)
def _subpixel_coords(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Supersampled sample centers in pixel units, cached per resolution."""
    n = size * SUPERSAMPLE
    u = (np.arange(n, dtype=np.float64) + 0.5) / SUPERSAMPLE
    return np.meshgrid(u, u, indexing="xy")


def _inside(shape: str, xs, ys, cx: float, cy: float, r: float):
    if shape == "circle":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    if shape == "square":
        return np.maximum(np.abs(xs - cx), np.abs(ys - cy)) <= r
    if shape == "triangle":
        h = math.sqrt(3.0) / 2.0 * r
        v0 = (cx, cy - r)
        v1 = (cx - h, cy + r / 2.0)
        v2 = (cx + h, cy + r / 2.0)
        d0 = (xs - v0[0]) * (v1[1] - v0[1]) - (ys - v0[1]) * (v1[0] - v0[0])
        d1 = (xs - v1[0]) * (v2[1] - v1[1]) - (ys - v1[1]) * (v2[0] - v1[0])
        d2 = (xs - v2[0]) * (v0[1] - v2[1]) - (ys - v2[1]) * (v0[0] - v2[0])
        return (d0 >= 0) & (d1 >= 0) & (d2 >= 0)
    raise ValueError(f"unknown shape {shape!r}")


def _geometry(code: np.ndarray, size: int) -> tuple[str, float, float, float]:
    shape = SHAPE_NAMES[int(round(code[_I_SHAPE] * (len(SHAPE_NAMES) - 1)))]
    r = (SIZE_LO + SIZE_SPAN * code[_I_SCALE]) * size
    cx = (CENTER_LO + CENTER_SPAN * code[_I_X]) * size
    cy = (CENTER_LO + CENTER_SPAN * code[_I_Y]) * size
    return shape, r, cx, cy


def coverage_map(shape: str, cx: float, cy: float, r: float, size: int) -> np.ndarray:
    """Per-pixel object coverage on a 0..1 grid of integer sixteenths."""
    xs, ys = _subpixel_coords(size)
    mask = _inside(shape, xs, ys, cx, cy, r)
    counts = mask.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE).sum(axis=(1, 3))
    return counts.astype(np.float64) / (SUPERSAMPLE * SUPERSAMPLE)


def render_uint8(code, spec: SceneSpec) -> np.ndarray:
    """Render one on-grid code to an (S, S, 3) uint8 image."""
    if not SCENE_FACTORS.on_grid(code):
        raise InvalidCodeError(f"render is defined only on the factor grid, got {code}")
    code = np.asarray(code, dtype=np.float64)
    size = spec.resolution
    shape, r, cx, cy = _geometry(code, size)
    cov = coverage_map(shape, cx, cy, r, size)

    obj = object_color(code[_I_OHUE])
    wall = wall_color(code[_I_WHUE])
    beta = brightness_factor(code[_I_BRIGHT])
    img = (wall[None, None, :] + cov[:, :, None] * (obj - wall)[None, None, :]) * beta
    return np.rint(img * 255.0).astype(np.uint8)


def uint8_to_tensor(img: np.ndarray) -> np.ndarray:
    """Storage contract: v_tensor = v_uint8 / 127.5 - 1, bit-exact."""
    return (img.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


def tensor_to_unit(img: np.ndarray) -> np.ndarray:
    """[-1, 1] tensor back to [0, 1] float64 intensities."""
    return np.clip((img.astype(np.float64) + 1.0) / 2.0, 0.0, 1.0)


def render_scene(code, spec: SceneSpec) -> np.ndarray:
    """Render one on-grid code to an (S, S, 3) float32 tensor in [-1, 1]."""
    return uint8_to_tensor(render_uint8(code, spec))


@dataclass(frozen=True)
class AnalyticEncoding:
    """Decoded factor code plus a confidence verdict for non-renderer inputs."""

    code: np.ndarray
    confident: bool
    residual: float


def _palette(fn, grid) -> np.ndarray:
    return np.stack([fn(v) for v in grid])


_OBJ_PALETTE = _palette(object_color, SCENE_FACTORS.grid(_I_OHUE))
_WALL_PALETTE = _palette(wall_color, SCENE_FACTORS.grid(_I_WHUE))
_BRIGHT_GRID = np.array([brightness_factor(v) for v in SCENE_FACTORS.grid(_I_BRIGHT)])
# smallest object/wall color contrast, used to scale mask thresholds
_MIN_CONTRAST = min(
    float(np.abs(o - w).sum()) for o in _OBJ_PALETTE for w in _WALL_PALETTE
)


def _nearest(palette: np.ndarray, color: np.ndarray) -> tuple[int, float]:
    d = np.abs(palette - color[None, :]).sum(axis=1)
    i = int(np.argmin(d))
    return i, float(d[i])


def _corner_background(img01: np.ndarray) -> np.ndarray:
    """Median of the four 3x3 corner patch means; corners are background by design."""
    s = img01.shape[0]
    patches = [
        img01[:3, :3], img01[:3, s - 3:], img01[s - 3:, :3], img01[s - 3:, s - 3:],
    ]
    means = np.stack([p.reshape(-1, 3).mean(axis=0) for p in patches])
    return np.median(means, axis=0)


def analytic_encode(image: np.ndarray, spec: SceneSpec) -> AnalyticEncoding:
    """Recover the factor code of a grid-rendered image; exact on renderer output.

    Wall hue and brightness come from the corner background, position from the
    silhouette centroid, scale and shape from silhouette matching over the 12
    (shape, size) candidates, and object hue from unmixing covered pixels.
    Images that were not produced by the renderer get a best-effort code with
    ``confident=False``.
    """
    size = spec.resolution
    img01 = tensor_to_unit(np.asarray(image))
    if img01.shape != (size, size, 3):
        raise ValueError(f"expected ({size}, {size}, 3) image, got {img01.shape}")
    flags: list[str] = []
    code = np.zeros(SCENE_FACTORS.k)

    bg = _corner_background(img01)
    beta_est = float(bg.max())
    i_bright = int(np.argmin(np.abs(_BRIGHT_GRID - beta_est)))
    beta = float(_BRIGHT_GRID[i_bright])
    code[_I_BRIGHT] = SCENE_FACTORS.grid(_I_BRIGHT)[i_bright]
    if abs(beta_est - beta) > 0.05:
        flags.append("brightness-off-grid")
    if beta_est < 0.3:
        flags.append("background-too-dark")

    i_wall, wall_res = _nearest(_WALL_PALETTE, bg / max(beta_est, 1e-6))
    code[_I_WHUE] = SCENE_FACTORS.grid(_I_WHUE)[i_wall]
    if wall_res > 0.15:
        flags.append("wall-color-off-palette")

    # soft silhouette: project pixel colors onto the background->object axis
    diff = img01 - bg[None, None, :]
    dist = np.abs(diff).sum(axis=2)
    thresh = 0.5 * _MIN_CONTRAST * beta
    if float(dist.max()) < thresh:
        flags.append("no-object-found")
        return AnalyticEncoding(code=code, confident=False, residual=float("inf"))
    peak = np.unravel_index(int(np.argmax(dist)), dist.shape)
    axis = img01[peak] - bg
    cov = np.clip((diff * axis[None, None, :]).sum(axis=2) / float(axis @ axis), 0.0, 1.0)
    cov[cov < 0.08] = 0.0

    area = float(cov.sum())
    if not 2.0 <= area <= 0.25 * size * size:
        flags.append("implausible-silhouette-area")
        return AnalyticEncoding(code=code, confident=False, residual=float("inf"))
    ys, xs = np.mgrid[0:size, 0:size]
    cx = float((cov * (xs + 0.5)).sum() / area)
    cy = float((cov * (ys + 0.5)).sum() / area)
    code[_I_X] = _snap_span(cx / size, SCENE_FACTORS.grid(_I_X), flags, "x")
    code[_I_Y] = _snap_span(cy / size, SCENE_FACTORS.grid(_I_Y), flags, "y")

    shape_i, scale_v, match_res = _match_silhouette(cov, area, code, size)
    code[_I_SHAPE] = SCENE_FACTORS.grid(_I_SHAPE)[shape_i]
    code[_I_SCALE] = scale_v
    if match_res > 0.45:
        flags.append("silhouette-mismatch")

    # unmix object color from well-covered pixels: img = bg + cov * (obj - bg)
    sel = cov >= 0.6
    w = cov[sel] ** 2
    obj_est = bg + ((diff[sel] / cov[sel, None]) * w[:, None]).sum(axis=0) / w.sum()
    i_obj, obj_res = _nearest(_OBJ_PALETTE, np.clip(obj_est, 0, None) / beta)
    code[_I_OHUE] = SCENE_FACTORS.grid(_I_OHUE)[i_obj]
    if obj_res > 0.3:
        flags.append("object-color-off-palette")

    return AnalyticEncoding(code=code, confident=not flags, residual=match_res)


def _snap_span(frac: float, grid: np.ndarray, flags: list, name: str) -> float:
    """Invert the center placement map and snap to the factor grid."""
    v = (frac - CENTER_LO) / CENTER_SPAN
    i = int(np.argmin(np.abs(grid - v)))
    step = grid[1] - grid[0]
    if abs(grid[i] - v) > 0.4 * step:
        flags.append(f"{name}-position-off-grid")
    return float(grid[i])


def _match_silhouette(cov: np.ndarray, area: float, code: np.ndarray, size: int):
    """Pick (shape, scale) by comparing the observed coverage against the 12
    exact candidate silhouettes rendered at the snapped center."""
    cx = (CENTER_LO + CENTER_SPAN * code[_I_X]) * size
    cy = (CENTER_LO + CENTER_SPAN * code[_I_Y]) * size
    scale_grid = SCENE_FACTORS.grid(_I_SCALE)

    # compare on a window that always contains the largest candidate
    pad = int(math.ceil((SIZE_LO + SIZE_SPAN) * 1.5 * size)) + 2
    x0, x1 = max(0, int(cx) - pad), min(size, int(cx) + pad)
    y0, y1 = max(0, int(cy) - pad), min(size, int(cy) + pad)
    window = cov[y0:y1, x0:x1]

    best = (0, 0.0, float("inf"))
    for si, shape in enumerate(SHAPE_NAMES):
        for sv in scale_grid:
            r = (SIZE_LO + SIZE_SPAN * sv) * size
            cand = coverage_map(shape, cx - x0, cy - y0, r, max(x1 - x0, y1 - y0))
            cand = cand[: y1 - y0, : x1 - x0]
            res = float(np.abs(window - cand).sum()) / max(area, 1.0)
            if res < best[2]:
                best = (si, float(sv), res)
    return best
