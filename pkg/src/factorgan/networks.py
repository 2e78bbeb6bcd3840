"""Style-based conditional generator and the shared discriminator/encoder.

The mapping network consumes concat(z, code); its output modulates every
synthesis block through per-site AdaIN affines. The discriminator and encoder
are one module whose single final dense layer emits 1 + K outputs (realness
plus the code prediction). No noise inputs, no truncation: all forward passes
are pure functions of parameters and inputs.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .factors import FactorSpec

LRELU_SLOPE = 0.2
ADAIN_EPS = 1e-8


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture knobs: mapping depth/width, base feature count, resolution."""

    resolution: int = 64
    z_dim: int = 128
    code_dim: int = 7
    n_mp: int = 8
    f_mp: int = 512
    f_0: int = 512
    fine_cutoff: int | None = None
    fine_factors: tuple[int, ...] | None = None

    def __post_init__(self):
        if not _is_pow2(self.resolution) or self.resolution < 8:
            raise ValueError(f"resolution must be a power of two >= 8, got {self.resolution}")
        if self.n_mp < 1:
            raise ValueError("n_mp must be >= 1")
        if self.fine_cutoff is not None:
            if not _is_pow2(self.fine_cutoff) or not 4 <= self.fine_cutoff < self.resolution:
                raise ValueError(
                    f"fine_cutoff must be a power of two in [4, {self.resolution}), "
                    f"got {self.fine_cutoff}")
        if self.fine_factors is not None:
            object.__setattr__(self, "fine_factors", tuple(int(i) for i in self.fine_factors))

    def channels(self, res: int) -> int:
        """Base feature count; halves per octave above 32x32."""
        if res <= 32:
            return self.f_0
        return max(self.f_0 >> int(math.log2(res // 32)), 4)

    def block_resolutions(self) -> list[int]:
        return [2 ** e for e in range(2, int(math.log2(self.resolution)) + 1)]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkConfig":
        doc = dict(doc)
        if doc.get("fine_factors") is not None:
            doc["fine_factors"] = tuple(doc["fine_factors"])
        return cls(**doc)


def small_config(**overrides) -> NetworkConfig:
    """The small preset: n_mp=3, f_mp=64, f_0=64."""
    base = dict(n_mp=3, f_mp=64, f_0=64)
    base.update(overrides)
    return NetworkConfig(**base)


@dataclass(frozen=True)
class StyleVector:
    """Mapping-network output and its per-AdaIN-site (scale, bias) projections."""

    w: torch.Tensor
    styles: tuple[tuple[torch.Tensor, torch.Tensor], ...]


def adain(features: torch.Tensor, scale: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Per-channel renormalization: scale * (x - mean) / (std + eps) + bias.

    features: (B, C, H, W); scale, bias: (B, C) or (C,). Population std over
    the spatial dims; the epsilon guards constant channels.
    """
    if scale.dim() == 1:
        scale = scale.unsqueeze(0)
        bias = bias.unsqueeze(0)
    if features.shape[:2] != scale.shape or scale.shape != bias.shape:
        raise ValueError(
            f"shape mismatch: features {tuple(features.shape)}, "
            f"scale {tuple(scale.shape)}, bias {tuple(bias.shape)}")
    mean = features.mean(dim=(2, 3), keepdim=True)
    std = features.std(dim=(2, 3), unbiased=False, keepdim=True)
    normed = (features - mean) / (std + ADAIN_EPS)
    return normed * scale[:, :, None, None] + bias[:, :, None, None]


class StyleAffine(nn.Module):
    """Projects w to one (scale, bias) pair per channel; scale starts near 1."""

    def __init__(self, w_dim: int, channels: int):
        super().__init__()
        self.linear = nn.Linear(w_dim, 2 * channels)
        self.channels = channels
        with torch.no_grad():
            self.linear.weight.mul_(0.1)
            self.linear.bias.zero_()
            self.linear.bias[:channels] = 1.0

    def forward(self, w: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.linear(w)
        return out[:, :self.channels], out[:, self.channels:]


class MappingNetwork(nn.Module):
    """n_mp dense layers, width f_mp, on concat(z, code)."""

    def __init__(self, in_dim: int, width: int, depth: int):
        super().__init__()
        self.in_dim = in_dim
        dims = [in_dim] + [width] * depth
        self.layers = nn.ModuleList(nn.Linear(dims[i], dims[i + 1]) for i in range(depth))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = F.leaky_relu(layer(x), LRELU_SLOPE)
        return x


class SynthesisBlock(nn.Module):
    """Two 3x3 convolutions, each followed by lrelu + AdaIN; upsamples first."""

    def __init__(self, res: int, in_ch: int, out_ch: int, w_dim: int, modulated: bool = True):
        super().__init__()
        self.res = res
        self.modulated = modulated
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        if modulated:
            self.style1 = StyleAffine(w_dim, out_ch)
            self.style2 = StyleAffine(w_dim, out_ch)

    def forward(self, x: torch.Tensor, w: torch.Tensor | None, upsample: bool) -> torch.Tensor:
        if upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.leaky_relu(self.conv1(x), LRELU_SLOPE)
        if self.modulated:
            x = adain(x, *self.style1(w))
        x = F.leaky_relu(self.conv2(x), LRELU_SLOPE)
        if self.modulated:
            x = adain(x, *self.style2(w))
        return x


class Generator(nn.Module):
    """Learned 4x4 constant, style-modulated blocks up to the target resolution."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        if config.fine_cutoff is not None:
            raise ValueError("use FineGenerator for configs with a fine_cutoff")
        self.config = config
        self.mapping = MappingNetwork(config.z_dim + config.code_dim, config.f_mp, config.n_mp)
        self.const = nn.Parameter(torch.randn(1, config.channels(4), 4, 4))
        self.blocks = nn.ModuleList()
        self.to_rgb = nn.ModuleDict()
        prev_ch = config.channels(4)
        for res in config.block_resolutions():
            ch = config.channels(res)
            self.blocks.append(SynthesisBlock(res, prev_ch, ch, config.f_mp))
            self.to_rgb[str(res)] = nn.Conv2d(ch, 3, 1)
            prev_ch = ch

    def _check_inputs(self, z: torch.Tensor, c: torch.Tensor):
        if z.dim() != 2 or z.shape[1] != self.config.z_dim:
            raise ValueError(f"z must be (B, {self.config.z_dim}), got {tuple(z.shape)}")
        if c.dim() != 2 or c.shape[1] != self.config.code_dim:
            raise ValueError(f"code must be (B, {self.config.code_dim}), got {tuple(c.shape)}")
        if z.shape[0] != c.shape[0]:
            raise ValueError("z and code batch sizes differ")

    def map_styles(self, z: torch.Tensor, c: torch.Tensor) -> StyleVector:
        """Run the mapping network and project to per-site styles."""
        self._check_inputs(z, c)
        w = self.mapping(torch.cat([z, c], dim=1))
        styles = []
        for block in self.blocks:
            styles.append(block.style1(w))
            styles.append(block.style2(w))
        return StyleVector(w=w, styles=tuple(styles))

    def forward(self, z: torch.Tensor, c: torch.Tensor,
                active_res: int | None = None, fade: float = 1.0) -> torch.Tensor:
        self._check_inputs(z, c)
        active_res = active_res or self.config.resolution
        w = self.mapping(torch.cat([z, c], dim=1))
        x = self.const.expand(z.shape[0], -1, -1, -1)
        prev = None
        for block in self.blocks:
            if block.res > active_res:
                break
            prev = x
            x = block(x, w, upsample=block.res > 4)
        pre = self.to_rgb[str(active_res)](x)
        if fade < 1.0 and active_res > 4:
            low = self.to_rgb[str(active_res // 2)](prev)
            low = F.interpolate(low, scale_factor=2, mode="nearest")
            pre = fade * pre + (1.0 - fade) * low
        return torch.tanh(pre)


def generate(generator: Generator, z: torch.Tensor, c: torch.Tensor,
             active_res: int | None = None, fade: float = 1.0) -> torch.Tensor:
    """Image batch (B, 3, R, R) in [-1, 1]."""
    return generator(z, c, active_res=active_res, fade=fade)


class DBlock(nn.Module):
    """Two 3x3 convolutions then 2x average-pool downsampling."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, in_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.conv1(x), LRELU_SLOPE)
        x = F.leaky_relu(self.conv2(x), LRELU_SLOPE)
        return F.avg_pool2d(x, 2)


class DiscriminatorEncoder(nn.Module):
    """Shared trunk; the single final dense layer emits (realness, code)."""

    def __init__(self, config: NetworkConfig, code_dim: int | None = None):
        super().__init__()
        self.config = config
        self.out_code_dim = config.code_dim if code_dim is None else code_dim
        self.from_rgb = nn.ModuleDict()
        self.blocks = nn.ModuleDict()
        for res in config.block_resolutions():
            self.from_rgb[str(res)] = nn.Conv2d(3, config.channels(res), 1)
            if res > 4:
                self.blocks[str(res)] = DBlock(config.channels(res), config.channels(res // 2))
        ch4 = config.channels(4)
        self.final_conv = nn.Conv2d(ch4, ch4, 3, padding=1)
        self.fc1 = nn.Linear(16 * ch4, 64)
        self.final = nn.Linear(64, 1 + self.out_code_dim)

    def _trunk(self, image: torch.Tensor, active_res: int, fade: float,
               taps: dict | None = None) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != 3 or image.shape[2] != active_res \
                or image.shape[3] != active_res:
            raise ValueError(
                f"image must be (B, 3, {active_res}, {active_res}), got {tuple(image.shape)}")
        x = F.leaky_relu(self.from_rgb[str(active_res)](image), LRELU_SLOPE)
        res = active_res
        first = True
        while res > 4:
            if taps is not None:
                taps[res] = x
            x = self.blocks[str(res)](x)
            if first and fade < 1.0:
                low = F.avg_pool2d(image, 2)
                low = F.leaky_relu(self.from_rgb[str(res // 2)](low), LRELU_SLOPE)
                x = fade * x + (1.0 - fade) * low
            first = False
            res //= 2
        if taps is not None:
            taps[4] = x
        x = F.leaky_relu(self.final_conv(x), LRELU_SLOPE)
        x = F.leaky_relu(self.fc1(x.flatten(1)), LRELU_SLOPE)
        return x

    def forward(self, image: torch.Tensor, active_res: int | None = None,
                fade: float = 1.0) -> tuple[torch.Tensor, torch.Tensor]:
        active_res = active_res or self.config.resolution
        out = self.final(self._trunk(image, active_res, fade))
        return out[:, 0], out[:, 1:]


def forward_de(de: DiscriminatorEncoder, image: torch.Tensor,
               active_res: int | None = None, fade: float = 1.0):
    """(realness scalar batch, code prediction batch) from one trunk pass."""
    return de(image, active_res=active_res, fade=fade)


def fine_downsample(image: torch.Tensor, cutoff: int) -> torch.Tensor:
    """Area-average an (B, 3, R, R) batch down to the cutoff resolution."""
    factor = image.shape[-1] // cutoff
    if factor * cutoff != image.shape[-1]:
        raise ValueError(f"resolution {image.shape[-1]} not a multiple of cutoff {cutoff}")
    if factor == 1:
        return image
    return F.avg_pool2d(image, factor)


class FineGenerator(nn.Module):
    """Image-to-image variant: a learned input block ingests the image
    downsampled to the cutoff; only blocks above the cutoff carry styles."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        if config.fine_cutoff is None:
            raise ValueError("FineGenerator needs a fine_cutoff")
        self.config = config
        phi = config.fine_cutoff
        fine = config.fine_factors or tuple(range(config.code_dim))
        self.fine_factors = fine
        self.mapping = MappingNetwork(len(fine), config.f_mp, config.n_mp)
        ch_phi = config.channels(phi)
        self.input_conv1 = nn.Conv2d(3, ch_phi, 3, padding=1)
        self.input_conv2 = nn.Conv2d(ch_phi, ch_phi, 3, padding=1)
        self.blocks = nn.ModuleList()
        prev_ch = ch_phi
        self.styled_resolutions = tuple(r for r in config.block_resolutions() if r > phi)
        for res in self.styled_resolutions:
            ch = config.channels(res)
            self.blocks.append(SynthesisBlock(res, prev_ch, ch, config.f_mp))
            prev_ch = ch
        self.to_rgb = nn.Conv2d(prev_ch, 3, 1)

    def forward(self, image: torch.Tensor, c_fine: torch.Tensor) -> torch.Tensor:
        r = self.config.resolution
        if image.dim() != 4 or image.shape[1:] != (3, r, r):
            raise ValueError(f"image must be (B, 3, {r}, {r}), got {tuple(image.shape)}")
        if c_fine.dim() != 2 or c_fine.shape[1] != len(self.fine_factors):
            raise ValueError(
                f"fine code must be (B, {len(self.fine_factors)}), got {tuple(c_fine.shape)}")
        x = fine_downsample(image, self.config.fine_cutoff)
        x = F.leaky_relu(self.input_conv1(x), LRELU_SLOPE)
        x = F.leaky_relu(self.input_conv2(x), LRELU_SLOPE)
        w = self.mapping(c_fine)
        for block in self.blocks:
            x = block(x, w, upsample=True)
        return torch.tanh(self.to_rgb(x))


def build_fine_generator(config: NetworkConfig) -> FineGenerator:
    return FineGenerator(config)


def fine_generate(generator: FineGenerator, image: torch.Tensor,
                  c_fine: torch.Tensor) -> torch.Tensor:
    return generator(image, c_fine)


class FineDiscriminatorEncoder(nn.Module):
    """Realness from the full trunk; the code head taps the trunk features at
    the cutoff resolution and predicts the fine factors only."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        if config.fine_cutoff is None:
            raise ValueError("FineDiscriminatorEncoder needs a fine_cutoff")
        self.config = config
        fine = config.fine_factors or tuple(range(config.code_dim))
        self.fine_factors = fine
        self.code_head_resolution = config.fine_cutoff
        self.trunk = DiscriminatorEncoder(config, code_dim=0)
        ch = config.channels(config.fine_cutoff)
        self.head_conv = nn.Conv2d(ch, ch, 3, padding=1)
        self.head_fc1 = nn.Linear(ch, 64)
        self.head_fc2 = nn.Linear(64, len(fine))

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        taps: dict[int, torch.Tensor] = {}
        feats = self.trunk._trunk(image, self.config.resolution, 1.0, taps=taps)
        realness = self.trunk.final(feats)[:, 0]
        tap = taps[self.code_head_resolution]
        h = F.leaky_relu(self.head_conv(tap), LRELU_SLOPE)
        h = h.mean(dim=(2, 3))
        h = F.leaky_relu(self.head_fc1(h), LRELU_SLOPE)
        return realness, self.head_fc2(h)


def fine_forward_de(de: FineDiscriminatorEncoder, image: torch.Tensor):
    return de(image)


@dataclass
class ModelBundle:
    """Everything a checkpoint carries."""

    kind: str  # semi | info | fine | encoder_only | encoder_only_mixup
    config: NetworkConfig
    factor_spec: FactorSpec
    generator: nn.Module | None
    disc_encoder: nn.Module
    step: int = 0
    images_seen: int = 0
    rng_state: dict = field(default_factory=dict)


class CheckpointMismatchError(RuntimeError):
    pass


def build_bundle(kind: str, config: NetworkConfig, factor_spec: FactorSpec,
                 seed: int = 0) -> ModelBundle:
    """Construct fresh networks for the given mode with deterministic init."""
    torch.manual_seed(seed)
    if kind == "fine":
        gen = FineGenerator(config)
        de = FineDiscriminatorEncoder(config)
    elif kind in ("semi", "info"):
        gen = Generator(config)
        de = DiscriminatorEncoder(config)
    elif kind in ("encoder_only", "encoder_only_mixup"):
        gen = None
        de = DiscriminatorEncoder(config)
    else:
        raise ValueError(f"unknown bundle kind {kind!r}")
    return ModelBundle(kind=kind, config=config, factor_spec=factor_spec,
                       generator=gen, disc_encoder=de)


def save_checkpoint(path, bundle: ModelBundle, extra: dict | None = None) -> str:
    """Write a checkpoint archive; returns its sha256 digest."""
    payload = {
        "kind": bundle.kind,
        "network_config": bundle.config.to_json(),
        "factor_spec": bundle.factor_spec.to_json(),
        "step": bundle.step,
        "images_seen": bundle.images_seen,
        "rng_state": bundle.rng_state,
        "generator": None if bundle.generator is None else bundle.generator.state_dict(),
        "disc_encoder": bundle.disc_encoder.state_dict(),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    data = buf.getvalue()
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path, expect_factor_spec: FactorSpec | None = None
                    ) -> tuple[ModelBundle, dict, str]:
    """Read a checkpoint; returns (bundle, extra, digest)."""
    with open(path, "rb") as f:
        data = f.read()
    payload = torch.load(io.BytesIO(data), weights_only=False)
    spec = FactorSpec.from_json(payload["factor_spec"])
    if expect_factor_spec is not None and spec != expect_factor_spec:
        raise CheckpointMismatchError(
            f"checkpoint factor spec {spec.to_json()} does not match expected "
            f"{expect_factor_spec.to_json()}")
    config = NetworkConfig.from_json(payload["network_config"])
    bundle = build_bundle(payload["kind"], config, spec)
    if payload["generator"] is not None:
        bundle.generator.load_state_dict(payload["generator"])
    bundle.disc_encoder.load_state_dict(payload["disc_encoder"])
    bundle.step = payload["step"]
    bundle.images_seen = payload["images_seen"]
    bundle.rng_state = payload["rng_state"]
    return bundle, payload.get("extra", {}), hashlib.sha256(data).hexdigest()


def to_torch_images(batch: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(N, H, W, 3) arrays in [-1, 1] to (N, 3, H, W) tensors."""
    arr = np.ascontiguousarray(np.moveaxis(np.asarray(batch), -1, 1))
    return torch.as_tensor(arr, dtype=dtype)


def from_torch_images(batch: torch.Tensor) -> np.ndarray:
    """(N, 3, H, W) tensors back to (N, H, W, 3) float32 arrays."""
    return np.moveaxis(batch.detach().cpu().numpy(), 1, -1).astype(np.float32)
