"""Oracle encoders used to score generator controllability.

The trained oracle is a small CNN fit on every ground-truth observation-code
pair; it records a held-out per-dim RMS and refuses metric duty above the 0.05
gate. The analytic oracle wraps the renderer's closed-form inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .factors import FactorSpec
from .losses import code_l2
from .networks import to_torch_images
from .rendering import SceneSpec, analytic_encode

RMS_GATE = 0.05


def _as_unit_range(batch: np.ndarray) -> np.ndarray:
    """uint8 batches to [-1, 1] floats, batch-at-a-time to bound memory."""
    batch = np.asarray(batch)
    if batch.dtype == np.uint8:
        return batch.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
    return batch


@dataclass(frozen=True)
class OracleTrainConfig:
    epochs: int = 12
    batch_size: int = 128
    lr: float = 2e-3
    holdout: int = 1024
    seed: int = 0
    width: int = 32


class OracleNet(nn.Module):
    """Strided conv stack down to 4x4, then a dense regression head."""

    def __init__(self, resolution: int, k: int, width: int = 32):
        super().__init__()
        chans = [3]
        res = resolution
        w = width
        convs = []
        while res > 4:
            convs.append(nn.Conv2d(chans[-1], w, 3, stride=2, padding=1))
            chans.append(w)
            w = min(w * 2, 4 * width)
            res //= 2
        self.convs = nn.ModuleList(convs)
        self.fc1 = nn.Linear(chans[-1] * 16, 128)
        self.fc2 = nn.Linear(128, k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        x = F.leaky_relu(self.fc1(x.flatten(1)), 0.2)
        return self.fc2(x)


@dataclass
class OracleEncoder:
    """Trained oracle with its quality gate."""

    net: OracleNet
    factor_spec: FactorSpec
    holdout_rms: np.ndarray
    loss_record: list[float] = field(default_factory=list)
    rms_gate: float = RMS_GATE

    @property
    def gate_ok(self) -> bool:
        return bool(np.max(self.holdout_rms) <= self.rms_gate)

    @torch.no_grad()
    def predict(self, images: np.ndarray, batch: int = 256) -> np.ndarray:
        """(N, H, W, 3) images ([-1, 1] floats or uint8) to (N, K) predictions."""
        self.net.eval()
        out = []
        for i in range(0, len(images), batch):
            x = to_torch_images(_as_unit_range(images[i:i + batch]))
            out.append(self.net(x).numpy())
        return np.concatenate(out, axis=0)


def train_oracle_encoder(images: np.ndarray, codes: np.ndarray,
                         factor_spec: FactorSpec,
                         config: OracleTrainConfig = OracleTrainConfig(),
                         log=None) -> OracleEncoder:
    """Fit the oracle on ground-truth pairs, holding out a slice for the gate.

    images: (N, H, W, 3) uint8 or [-1, 1] float; codes: (N, K). Deterministic
    given config.seed: same seed, same gate decision.
    """
    images = np.asarray(images)
    codes = np.asarray(codes, dtype=np.float64)
    n = len(images)
    if config.holdout >= n:
        raise ValueError(f"holdout {config.holdout} >= dataset size {n}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    torch.manual_seed(config.seed)
    perm = rng.permutation(n)
    hold, train = perm[:config.holdout], perm[config.holdout:]

    net = OracleNet(images.shape[1], codes.shape[1], width=config.width)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    target = torch.as_tensor(codes, dtype=torch.float32)

    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(train)
        epoch_loss = 0.0
        batches = 0
        for i in range(0, len(order), config.batch_size):
            idx = order[i:i + config.batch_size]
            x = to_torch_images(_as_unit_range(images[idx]))
            loss = code_l2(net(x), target[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            batches += 1
        losses.append(epoch_loss / max(batches, 1))
        if log:
            log(f"oracle epoch {epoch + 1}/{config.epochs} loss {losses[-1]:.4f}")

    oracle = OracleEncoder(net=net, factor_spec=factor_spec,
                           holdout_rms=np.zeros(codes.shape[1]), loss_record=losses)
    preds = oracle.predict(images[hold])
    rms = np.sqrt(np.mean((preds - codes[hold]) ** 2, axis=0))
    oracle.holdout_rms = rms
    return oracle


@dataclass
class AnalyticOracle:
    """Closed-form renderer inverse packaged with the oracle interface."""

    scene: SceneSpec

    @property
    def gate_ok(self) -> bool:
        return True

    @property
    def holdout_rms(self) -> np.ndarray:
        return np.zeros(self.scene.k)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return np.stack([analytic_encode(img, self.scene).code for img in np.asarray(images)])


def save_oracle(path, oracle: OracleEncoder):
    torch.save({
        "state_dict": oracle.net.state_dict(),
        "factor_spec": oracle.factor_spec.to_json(),
        "holdout_rms": oracle.holdout_rms,
        "loss_record": oracle.loss_record,
        "net_args": {
            "resolution": _net_resolution(oracle.net),
            "k": oracle.net.fc2.out_features,
            "width": oracle.net.convs[0].out_channels,
        },
    }, path)


def load_oracle(path) -> OracleEncoder:
    payload = torch.load(path, weights_only=False)
    args = payload["net_args"]
    net = OracleNet(args["resolution"], args["k"], width=args["width"])
    net.load_state_dict(payload["state_dict"])
    return OracleEncoder(net=net, factor_spec=FactorSpec.from_json(payload["factor_spec"]),
                         holdout_rms=np.asarray(payload["holdout_rms"]),
                         loss_record=list(payload["loss_record"]))


def _net_resolution(net: OracleNet) -> int:
    return 4 * (2 ** len(net.convs))
