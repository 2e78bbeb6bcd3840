"""Training loops and evaluation sweeps.

One logical trainer owns the parameters. Each iteration runs one (D, E) update
and one G update on freshly drawn batches; labeled and mixed batches exist
only when the split has labels. All randomness flows through explicit,
checkpointable generators, so a fixed seed reproduces the trajectory and a
resumed run continues it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import load_dataset
from .factors import FactorSpec, LatentPrior, sample_codes, split_labeled
from .losses import (LossWeights, code_l2, gan_losses, mixup_pair,
                     smoothness_loss, sup_code_loss)
from .metrics import (MetricConfig, MetricReport, factor_score, l2_gen,
                      l2_score, mig, mig_gen)
from .networks import (ModelBundle, NetworkConfig, build_bundle,
                       save_checkpoint, to_torch_images, from_torch_images)

MODES = ("semi", "info", "fine", "encoder_only", "encoder_only_mixup")


class DivergenceError(RuntimeError):
    def __init__(self, step: int, losses: dict):
        super().__init__(f"non-finite loss at step {step}: {losses}")
        self.step = step


@dataclass
class TrainConfig:
    dataset_dir: str = ""
    mode: str = "semi"
    eta: float = 0.01
    seed: int = 0
    eval_seed: int = 7700
    total_images: int = 200_000
    batch_size: int = 16
    lr: float = 1e-3
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    eval_every: int = 0          # images between checkpoints; 0 = only at the end
    log_every: int = 2_000
    weights: LossWeights = field(default_factory=LossWeights)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    progressive: tuple[tuple[int, int], ...] | None = None
    fade_images: int = 10_000
    run_name: str = "run"
    out_dir: str = "runs"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.mode == "fine" and self.progressive is not None:
            raise ValueError("the fine variant trains at a fixed resolution")
        if self.progressive is not None:
            self.progressive = tuple((int(r), int(n)) for r, n in self.progressive)
            reses = [r for r, _ in self.progressive]
            if reses != sorted(reses) or len(set(reses)) != len(reses):
                raise ValueError(f"progressive resolutions must strictly ascend: {reses}")
            for lo, hi in zip(reses, reses[1:]):
                if hi != lo * 2:
                    raise ValueError(f"progressive resolutions must double: {reses}")
            if reses[-1] != self.network.resolution:
                raise ValueError("progressive schedule must end at the network resolution")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["weights"] = asdict(self.weights)
        doc["network"] = self.network.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        doc["weights"] = LossWeights(**doc.get("weights", {}))
        doc["network"] = NetworkConfig.from_json(doc.get("network", {}))
        if doc.get("progressive") is not None:
            doc["progressive"] = tuple(tuple(p) for p in doc["progressive"])
        return cls(**doc)

    def digest(self) -> str:
        """Hash of the semantic fields only; housekeeping (paths, run names,
        logging cadence) does not change what gets trained."""
        doc = self.to_json()
        for key in ("dataset_dir", "run_name", "out_dir", "log_every", "eval_every"):
            doc.pop(key, None)
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def progressive_phase(schedule, images_seen: int, fade_images: int
                      ) -> tuple[int, float]:
    """(active resolution, fade-in weight) as a pure function of progress.

    The first phase never fades; later phases ramp the new block linearly from
    0 to 1 over fade_images. Past the end of the schedule the final resolution
    stays active at weight 1.
    """
    start = 0
    for i, (res, n_images) in enumerate(schedule):
        end = start + n_images
        if images_seen < end or (res, n_images) == schedule[-1]:
            if i == 0 or fade_images <= 0:
                return res, 1.0
            return res, min(1.0, (images_seen - start) / fade_images)
        start = end
    return schedule[-1][0], 1.0


@dataclass
class RunRecord:
    config_digest: str
    run_dir: str
    loss_curve: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    checkpoint_paths: list = field(default_factory=list)
    final_bundle: ModelBundle | None = None


class _TrainState:
    """RNG plumbing that can be checkpointed and restored bit-exactly."""

    def __init__(self, seed: int):
        self.np_rng = np.random.Generator(np.random.PCG64(seed))
        self.torch_rng = torch.Generator().manual_seed(seed + 1)

    def state(self) -> dict:
        return {
            "np": self.np_rng.bit_generator.state,
            "torch": self.torch_rng.get_state(),
        }

    def restore(self, state: dict):
        self.np_rng.bit_generator.state = state["np"]
        self.torch_rng.set_state(state["torch"])


def _downsample_to(x: torch.Tensor, res: int) -> torch.Tensor:
    factor = x.shape[-1] // res
    return F.avg_pool2d(x, factor) if factor > 1 else x


class Trainer:
    """Drives one run; see :func:`train` for the functional entry point."""

    def __init__(self, config: TrainConfig, images: np.ndarray, codes: np.ndarray,
                 factor_spec: FactorSpec, log=None):
        if config.mode == "info":
            # eta forced to zero and the purely unsupervised objective taken
            w = config.weights
            self.eta = 0.0
            self.weights = LossWeights(gamma_g=w.gamma_g, gamma_e=w.gamma_g,
                                       beta=0.0, alpha=0.0, xi=w.xi,
                                       r1_gamma=w.r1_gamma)
        else:
            self.eta = config.eta
            self.weights = config.weights
        if config.mode in ("encoder_only", "encoder_only_mixup") and config.eta == 0:
            raise ValueError(f"mode {config.mode} needs eta > 0 (no labels to fit)")
        self.config = config
        self.images = images
        self.codes = np.asarray(codes, dtype=np.float64)
        self.factor_spec = factor_spec
        self.split = split_labeled(len(images), self.eta, config.seed)
        self.prior = LatentPrior(config.network.z_dim)
        self.state = _TrainState(config.seed)
        self.log = log or (lambda msg: None)

        self.bundle = build_bundle(
            "semi" if config.mode == "info" else config.mode,
            config.network, factor_spec, seed=config.seed)
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt_de = torch.optim.Adam(self.bundle.disc_encoder.parameters(),
                                       lr=config.lr, betas=betas)
        self.opt_g = None
        if self.bundle.generator is not None:
            self.opt_g = torch.optim.Adam(self.bundle.generator.parameters(),
                                          lr=config.lr, betas=betas)

        self.record = RunRecord(config_digest=config.digest(), run_dir="")
        self._labeled_codes = self.codes[self.split.labeled] if len(self.split.labeled) else None

    # -- batch plumbing ------------------------------------------------------

    def _image_batch(self, indices: np.ndarray, res: int) -> torch.Tensor:
        batch = self.images[indices]
        if batch.dtype == np.uint8:
            batch = batch.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
        return _downsample_to(to_torch_images(batch), res)

    def _sample_real(self, res: int) -> torch.Tensor:
        pool = self.split.unlabeled if len(self.split.unlabeled) else self.split.labeled
        idx = pool[self.state.np_rng.integers(0, len(pool), size=self.config.batch_size)]
        return self._image_batch(idx, res)

    def _sample_labeled(self, res: int):
        lab = self.split.labeled
        if len(lab) == 0:
            return None, None
        b = self.config.batch_size
        if len(lab) >= b:
            pick = self.state.np_rng.choice(len(lab), size=b, replace=False)
        else:
            pick = self.state.np_rng.integers(0, len(lab), size=b)
        x = self._image_batch(lab[pick], res)
        c = torch.as_tensor(self._labeled_codes[pick], dtype=torch.float32)
        return x, c

    def _sample_zc(self, n: int):
        z = torch.randn(n, self.config.network.z_dim, generator=self.state.torch_rng)
        c = torch.as_tensor(sample_codes(self.factor_spec, n, self.state.np_rng),
                            dtype=torch.float32)
        return z, c

    # -- steps ---------------------------------------------------------------

    def _phase(self, images_seen: int) -> tuple[int, float]:
        if self.config.progressive is None:
            return self.config.network.resolution, 1.0
        return progressive_phase(self.config.progressive, images_seen,
                                 self.config.fade_images)

    def _gan_step(self, res: int, fade: float) -> dict:
        cfg, w = self.config, self.weights
        gen, de = self.bundle.generator, self.bundle.disc_encoder

        def encode(x):
            return de(x, active_res=res, fade=fade)[1]

        # (D, E) update; the one generated batch serves both the GAN term and
        # the mixed batch
        self.opt_de.zero_grad(set_to_none=True)
        z, c = self._sample_zc(cfg.batch_size)
        with torch.no_grad():
            x_fake = gen(z, c, active_res=res, fade=fade)
        x_real = self._sample_real(res).requires_grad_(True)
        real_scores, _ = de(x_real, active_res=res, fade=fade)
        fake_scores, fake_code = de(x_fake, active_res=res, fade=fade)
        _, gan_d = gan_losses(real_scores, fake_scores, x_real, w.r1_gamma)
        unsup_de = code_l2(fake_code, c) if w.gamma_e > 0 else torch.zeros(())
        x_lab, c_lab = self._sample_labeled(res)
        sup, has_sup = sup_code_loss(encode, x_lab, c_lab)
        sr_de = torch.zeros(())
        if has_sup and w.alpha > 0:
            mixed = mixup_pair(x_lab, c_lab, x_fake, c, w.xi, self.state.np_rng)
            sr_de = smoothness_loss(encode, mixed)
        loss_de = gan_d + w.gamma_e * unsup_de + w.beta * sup + w.alpha * sr_de
        loss_de.backward()
        self.opt_de.step()

        # G update on a fresh generated batch, also shared with its mixed batch
        self.opt_g.zero_grad(set_to_none=True)
        self.opt_de.zero_grad(set_to_none=True)
        z2, c2 = self._sample_zc(cfg.batch_size)
        x_fake2 = gen(z2, c2, active_res=res, fade=fade)
        fake_scores2, fake_code2 = de(x_fake2, active_res=res, fade=fade)
        gan_g, _ = gan_losses(None, fake_scores2)
        unsup_g = code_l2(fake_code2, c2) if w.gamma_g > 0 else torch.zeros(())
        sr_g = torch.zeros(())
        if has_sup and w.alpha > 0:
            x_lab2, c_lab2 = self._sample_labeled(res)
            mixed = mixup_pair(x_lab2, c_lab2, x_fake2, c2, w.xi, self.state.np_rng)
            sr_g = smoothness_loss(encode, mixed)
        loss_g = gan_g + w.gamma_g * unsup_g + w.alpha * sr_g
        loss_g.backward()
        self.opt_g.step()

        return {
            "loss_g": float(loss_g.detach()), "loss_de": float(loss_de.detach()),
            "gan_g": float(gan_g.detach()), "gan_d": float(gan_d.detach()),
            "unsup": float(unsup_g.detach()), "sup": float(sup.detach()),
            "sr": float(sr_g.detach()),
        }

    def _fine_step(self) -> dict:
        """One (D,E) + G update for the image-to-image fine variant: the
        generator re-styles real images under sampled fine codes."""
        cfg, w = self.config, self.weights
        gen, de = self.bundle.generator, self.bundle.disc_encoder
        res = cfg.network.resolution
        fine_cols = np.asarray(gen.fine_factors)

        def encode(x):
            return de(x)[1]

        def sample_fine(n):
            full = sample_codes(self.factor_spec, n, self.state.np_rng)
            return torch.as_tensor(full[:, fine_cols], dtype=torch.float32)

        # (D, E) update
        self.opt_de.zero_grad(set_to_none=True)
        src = self._sample_real(res)
        c = sample_fine(cfg.batch_size)
        with torch.no_grad():
            x_fake = gen(src, c)
        x_real = self._sample_real(res).requires_grad_(True)
        real_scores, _ = de(x_real)
        fake_scores, fake_code = de(x_fake)
        _, gan_d = gan_losses(real_scores, fake_scores, x_real, w.r1_gamma)
        unsup_de = code_l2(fake_code, c) if w.gamma_e > 0 else torch.zeros(())
        x_lab, c_lab = self._sample_labeled(res)
        sup, has_sup = sup_code_loss(
            encode, x_lab, None if c_lab is None else c_lab[:, fine_cols])
        sr_de = torch.zeros(())
        if has_sup and w.alpha > 0:
            mixed = mixup_pair(x_lab, c_lab[:, fine_cols], x_fake, c,
                               w.xi, self.state.np_rng)
            sr_de = smoothness_loss(encode, mixed)
        loss_de = gan_d + w.gamma_e * unsup_de + w.beta * sup + w.alpha * sr_de
        loss_de.backward()
        self.opt_de.step()

        # G update
        self.opt_g.zero_grad(set_to_none=True)
        self.opt_de.zero_grad(set_to_none=True)
        src2 = self._sample_real(res)
        c2 = sample_fine(cfg.batch_size)
        x_fake2 = gen(src2, c2)
        fake_scores2, fake_code2 = de(x_fake2)
        gan_g, _ = gan_losses(None, fake_scores2)
        unsup_g = code_l2(fake_code2, c2) if w.gamma_g > 0 else torch.zeros(())
        sr_g = torch.zeros(())
        if has_sup and w.alpha > 0:
            x_lab2, c_lab2 = self._sample_labeled(res)
            mixed = mixup_pair(x_lab2, c_lab2[:, fine_cols], x_fake2, c2,
                               w.xi, self.state.np_rng)
            sr_g = smoothness_loss(encode, mixed)
        loss_g = gan_g + w.gamma_g * unsup_g + w.alpha * sr_g
        loss_g.backward()
        self.opt_g.step()

        return {
            "loss_g": float(loss_g.detach()), "loss_de": float(loss_de.detach()),
            "gan_g": float(gan_g.detach()), "gan_d": float(gan_d.detach()),
            "unsup": float(unsup_g.detach()), "sup": float(sup.detach()),
            "sr": float(sr_g.detach()),
        }

    def _encoder_step(self) -> dict:
        cfg, w = self.config, self.weights
        de = self.bundle.disc_encoder
        res = cfg.network.resolution

        def encode(x):
            return de(x)[1]

        self.opt_de.zero_grad(set_to_none=True)
        x_lab, c_lab = self._sample_labeled(res)
        sup, _ = sup_code_loss(encode, x_lab, c_lab)
        loss = w.beta * sup
        sr = torch.zeros(())
        if cfg.mode == "encoder_only_mixup":
            # real-real MixUp between two labeled draws; no generator involved
            x_b, c_b = self._sample_labeled(res)
            mixed = mixup_pair(x_lab, c_lab, x_b, c_b, w.xi, self.state.np_rng)
            sr = smoothness_loss(encode, mixed)
            loss = loss + w.alpha * sr
        loss.backward()
        self.opt_de.step()
        return {"loss_de": float(loss.detach()), "sup": float(sup.detach()),
                "sr": float(sr.detach()),
                "loss_g": 0.0, "gan_g": 0.0, "gan_d": 0.0, "unsup": 0.0}

    # -- loop ----------------------------------------------------------------

    def run(self, resume_state: dict | None = None) -> RunRecord:
        cfg = self.config
        run_dir = Path(cfg.out_dir) / cfg.run_name
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (run_dir / "reports").mkdir(exist_ok=True)
        (run_dir / "traversals").mkdir(exist_ok=True)
        self.record.run_dir = str(run_dir)
        with open(run_dir / "config.json", "w") as f:
            json.dump(cfg.to_json(), f, indent=2)

        if resume_state is not None:
            self._restore(resume_state)
        next_log = self.bundle.images_seen + cfg.log_every
        next_eval = (self.bundle.images_seen + cfg.eval_every) if cfg.eval_every else None

        losses = None
        while self.bundle.images_seen < cfg.total_images:
            res, fade = self._phase(self.bundle.images_seen)
            if self.bundle.generator is None:
                losses = self._encoder_step()
            elif cfg.mode == "fine":
                losses = self._fine_step()
            else:
                losses = self._gan_step(res, fade)
            self.bundle.step += 1
            self.bundle.images_seen += cfg.batch_size

            if not all(math.isfinite(v) for v in losses.values()):
                raise DivergenceError(self.bundle.step, losses)

            if self.bundle.images_seen >= next_log:
                self._log_entry(res, fade, losses)
                next_log += cfg.log_every
            if next_eval is not None and self.bundle.images_seen >= next_eval:
                self._checkpoint(run_dir)
                next_eval += cfg.eval_every

        last_logged = self.record.loss_curve[-1]["step"] if self.record.loss_curve else -1
        if losses is not None and last_logged != self.bundle.step:
            res, fade = self._phase(self.bundle.images_seen)
            self._log_entry(res, fade, losses)
        self._checkpoint(run_dir)
        self._write_loss_curve(run_dir)
        self.record.final_bundle = self.bundle
        return self.record

    def _log_entry(self, res: int, fade: float, losses: dict):
        entry = {"step": self.bundle.step, "images_seen": self.bundle.images_seen,
                 "res": res, "fade": round(fade, 4), **losses}
        self.record.loss_curve.append(entry)
        self.log(f"step {entry['step']} ({entry['images_seen']} imgs, {res}px) "
                 f"G {losses['loss_g']:.3f} DE {losses['loss_de']:.3f} "
                 f"sup {losses['sup']:.3f}")

    def _checkpoint(self, run_dir: Path):
        self.bundle.rng_state = {
            "train": self.state.state(),
            "opt_de": self.opt_de.state_dict(),
            "opt_g": self.opt_g.state_dict() if self.opt_g else None,
        }
        path = run_dir / "checkpoints" / f"step_{self.bundle.step:08d}.ckpt"
        save_checkpoint(path, self.bundle, extra={"config": self.config.to_json()})
        self.record.checkpoint_paths.append(str(path))

    def _restore(self, rng_state: dict):
        self.state.restore(rng_state["train"])
        self.opt_de.load_state_dict(rng_state["opt_de"])
        if self.opt_g and rng_state.get("opt_g"):
            self.opt_g.load_state_dict(rng_state["opt_g"])

    def _write_loss_curve(self, run_dir: Path):
        if not self.record.loss_curve:
            return
        keys = list(self.record.loss_curve[0].keys())
        with open(run_dir / "losses.csv", "w") as f:
            f.write(",".join(keys) + "\n")
            for entry in self.record.loss_curve:
                f.write(",".join(str(entry[k]) for k in keys) + "\n")


def load_training_arrays(dataset_dir) -> tuple[np.ndarray, np.ndarray, FactorSpec]:
    """Dataset directory to in-memory uint8 images + codes + spec."""
    manifest, accessor, codes = load_dataset(dataset_dir)
    images = accessor.load_all_uint8()
    spec = FactorSpec.from_json(manifest.factor_spec)
    return images, codes, spec


def train(config: TrainConfig, images=None, codes=None, factor_spec=None,
          resume_from=None, log=None) -> RunRecord:
    """Run one training job; arrays may be passed directly to skip dataset IO."""
    if images is None:
        images, codes, factor_spec = load_training_arrays(config.dataset_dir)
    trainer = Trainer(config, images, codes, factor_spec, log=log)
    resume_state = None
    if resume_from is not None:
        from .networks import load_checkpoint
        bundle, extra, _ = load_checkpoint(resume_from, expect_factor_spec=factor_spec)
        trainer.bundle = bundle
        betas = (config.adam_beta1, config.adam_beta2)
        trainer.opt_de = torch.optim.Adam(bundle.disc_encoder.parameters(),
                                          lr=config.lr, betas=betas)
        if bundle.generator is not None:
            trainer.opt_g = torch.optim.Adam(bundle.generator.parameters(),
                                             lr=config.lr, betas=betas)
        resume_state = bundle.rng_state
    return trainer.run(resume_state=resume_state)


def train_encoder_baseline(config: TrainConfig, **kwargs) -> RunRecord:
    """Encoder-only baselines; reports carry MIG and L2 only."""
    if config.mode not in ("encoder_only", "encoder_only_mixup"):
        raise ValueError(f"not an encoder baseline mode: {config.mode}")
    return train(config, **kwargs)


# -- evaluation --------------------------------------------------------------

def _grid_strides(spec: FactorSpec) -> np.ndarray:
    strides = np.ones(spec.k, dtype=np.int64)
    for i in range(spec.k - 2, -1, -1):
        strides[i] = strides[i + 1] * spec.cardinalities[i + 1]
    return strides


def grid_index(spec: FactorSpec, levels: np.ndarray) -> np.ndarray:
    """Row index of a level combination in the exhaustive row-major layout."""
    return np.asarray(levels, dtype=np.int64) @ _grid_strides(spec)


def make_dataset_provider(images: np.ndarray, spec: FactorSpec):
    """Factor-score batch provider backed by the exhaustive grid layout."""

    def provider(rng, size, fixed_factor, fixed_value):
        levels = np.stack([rng.integers(0, m, size=size) for m in spec.cardinalities], axis=1)
        if fixed_factor is not None:
            grid = spec.grid(fixed_factor)
            level = int(np.argmin(np.abs(grid - fixed_value)))
            levels[:, fixed_factor] = level
        idx = grid_index(spec, levels)
        batch = images[idx]
        if batch.dtype == np.uint8:
            batch = batch.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
        return batch

    return provider


def make_generate_fn(bundle: ModelBundle, batch_dtype=torch.float32):
    """(z, codes) arrays -> (N, H, W, 3) image arrays via the bundle generator."""

    gen = bundle.generator

    @torch.no_grad()
    def generate(z: np.ndarray, c: np.ndarray) -> np.ndarray:
        zt = torch.as_tensor(np.asarray(z), dtype=batch_dtype)
        ct = torch.as_tensor(np.asarray(c), dtype=batch_dtype)
        return from_torch_images(gen(zt, ct))

    return generate


def make_encode_fn(bundle: ModelBundle):
    de = bundle.disc_encoder
    res = bundle.config.resolution

    @torch.no_grad()
    def encode(images: np.ndarray, batch: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(images), batch):
            chunk = np.asarray(images[i:i + batch])
            if chunk.dtype == np.uint8:
                chunk = chunk.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
            x = _downsample_to(to_torch_images(chunk), res)
            out.append(de(x)[1].numpy())
        return np.concatenate(out, axis=0)

    return encode


def evaluate(bundle: ModelBundle, images: np.ndarray, codes: np.ndarray,
             oracle=None, metric_config: MetricConfig = MetricConfig(),
             seed: int = 7700, metrics: tuple = ("mig", "l2", "mig_gen", "l2_gen"),
             config_digest: str = "") -> MetricReport:
    """Compute the requested metrics on a model snapshot with fixed seeds."""
    spec = bundle.factor_spec
    rng = np.random.Generator(np.random.PCG64(seed))
    encode = make_encode_fn(bundle)
    report = MetricReport(meta={
        "seed": seed, "n_mig": metric_config.n_mig, "n_l2": metric_config.n_l2,
        "bins": metric_config.bins, "config_digest": config_digest,
        "mode": bundle.kind, "step": bundle.step,
        "mixup_baseline_mixing": "labeled-labeled",
    })
    # a fine encoder predicts only the fine factors; score it against them
    code_cols = slice(None)
    if bundle.kind == "fine":
        code_cols = np.asarray(bundle.config.fine_factors or tuple(range(spec.k)))

    if "mig" in metrics:
        idx = rng.choice(len(images), size=min(metric_config.n_mig, len(images)),
                         replace=False)
        preds = encode(images[idx])
        score, info = mig(preds, codes[idx][:, code_cols], metric_config)
        report.mig = score
        report.mi_matrix = info.mi.tolist()
        report.meta["mi_matrix_source"] = "mig"
    if "l2" in metrics:
        idx = rng.choice(len(images), size=min(metric_config.n_l2, len(images)),
                         replace=False)
        report.l2 = l2_score(encode(images[idx]), codes[idx][:, code_cols])

    generator_metrics = {"mig_gen", "l2_gen"} & set(metrics)
    if generator_metrics and bundle.generator is not None and bundle.kind != "fine":
        if oracle is None:
            raise ValueError("generator metrics need an oracle encoder")
        generate = make_generate_fn(bundle)
        prior = LatentPrior(bundle.config.z_dim)
        report.meta["oracle_rms"] = np.asarray(oracle.holdout_rms).tolist()
        if "mig_gen" in metrics:
            score, info = mig_gen(generate, prior, spec, oracle, metric_config, rng)
            report.mig_gen = score
            if report.mi_matrix is None:
                report.mi_matrix = info.mi.tolist()
                report.meta["mi_matrix_source"] = "mig_gen"
        if "l2_gen" in metrics:
            report.l2_gen = l2_gen(generate, prior, spec, oracle, metric_config, rng)
    if "factor_score" in metrics:
        provider = make_dataset_provider(images, spec)
        result = factor_score(encode, provider, spec, metric_config, rng)
        report.factor_score = result.score
        report.meta["factor_score_excluded_dims"] = result.excluded_dims
    return report


def sweep_eta(base_config: TrainConfig, etas, images, codes, factor_spec,
              oracle=None, metric_config: MetricConfig = MetricConfig(),
              metrics: tuple = ("mig", "l2", "mig_gen", "l2_gen"), log=None):
    """One run + one report per supervision rate."""
    results = []
    for eta in etas:
        cfg = TrainConfig.from_json(base_config.to_json())
        cfg.eta = float(eta)
        cfg.mode = "info" if eta == 0 else base_config.mode
        cfg.run_name = f"{base_config.run_name}-eta{eta:g}"
        record = train(cfg, images=images, codes=codes, factor_spec=factor_spec, log=log)
        report = evaluate(record.final_bundle, images, codes, oracle=oracle,
                          metric_config=metric_config, seed=cfg.eval_seed,
                          metrics=metrics, config_digest=cfg.digest())
        report.meta["eta"] = float(eta)
        results.append((float(eta), record, report))
    return results


# -- traversals --------------------------------------------------------------

@dataclass
class TraversalRow:
    """Anchor image first, then the sweep; codes holds the generating codes."""

    images: np.ndarray            # (steps + 1, H, W, 3)
    values: np.ndarray            # (steps,)
    codes: np.ndarray | None      # (steps, K) for code anchors, None for fine


def latent_traversal(bundle: ModelBundle, anchor, factor_index: int, steps: int,
                     z_seed: int = 0) -> TraversalRow:
    """Sweep one factor uniformly over [0, 1] with everything else held.

    For code anchors, z stays fixed and every non-swept entry is held. For the
    fine variant the anchor is an image and the sweep runs over a fine factor.
    """
    spec = bundle.factor_spec
    if bundle.generator is None:
        raise ValueError("traversal needs a generator checkpoint")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    values = np.linspace(0.0, 1.0, steps)

    if bundle.kind == "fine":
        fine = bundle.generator.fine_factors
        if not 0 <= factor_index < len(fine):
            raise ValueError(
                f"fine factor index {factor_index} out of range [0, {len(fine)})")
        image = np.asarray(anchor, dtype=np.float32)
        x = to_torch_images(image[None])
        base = torch.full((1, len(fine)), 0.5)
        rows = [image]
        with torch.no_grad():
            for v in values:
                c = base.clone()
                c[0, factor_index] = float(v)
                rows.append(from_torch_images(bundle.generator(x, c))[0])
        return TraversalRow(images=np.stack(rows), values=values, codes=None)

    if not 0 <= factor_index < spec.k:
        raise ValueError(f"factor index {factor_index} out of range [0, {spec.k})")
    anchor_code = spec.validate_code(anchor)
    z = torch.randn(1, bundle.config.z_dim,
                    generator=torch.Generator().manual_seed(z_seed))
    codes = np.tile(anchor_code, (steps, 1))
    codes[:, factor_index] = values
    batch = np.concatenate([anchor_code[None], codes], axis=0)
    with torch.no_grad():
        images = from_torch_images(bundle.generator(
            z.expand(steps + 1, -1), torch.as_tensor(batch, dtype=torch.float32)))
    return TraversalRow(images=images, values=values, codes=codes)
