"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints one ``ACCEPTANCE <name>: PASS`` line on success (pytest -v
also gives a line per criterion). Heavy artifacts (the 64px dataset, the
trained oracle, the trend/ablation training runs) are cached under
``.acceptance_cache`` keyed by config digest, so reruns and the ablation's
checkpoint reuse are cheap.
"""

import itertools
import json
import random
import shutil
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy import stats

from factorgan.dataset import generate_dataset
from factorgan.factors import FactorSpec, LatentPrior, sample_codes
from factorgan.losses import (LossTerms, LossWeights, assemble_objectives,
                              code_l2, gan_losses, mixup_pair,
                              sample_mix_weights, smoothness_loss,
                              sup_code_loss)
from factorgan.metrics import MetricConfig, factor_score, l2_gen, mig, mig_gen
from factorgan.networks import (NetworkConfig, build_fine_generator,
                                fine_downsample, load_checkpoint)
from factorgan.oracle import (OracleTrainConfig, load_oracle, save_oracle,
                              train_oracle_encoder)
from factorgan.rendering import SCENE_FACTORS, SceneSpec, analytic_encode, render_scene
from factorgan.training import (TrainConfig, evaluate, load_training_arrays,
                                train)
from conftest import acceptance_cache
from gradcheck import run_gradient_checks, tiny_models, fixed_batches

RESULT_LINES = []


def record(name: str):
    line = f"ACCEPTANCE {name}: PASS"
    RESULT_LINES.append(line)
    print(line)


# -- criterion: loss-reduction identities -------------------------------------

def _model_scalars(seed: int):
    """Component scalars computed through a real tiny model on random data."""
    gen, de = tiny_models(seed, dtype=torch.float64)
    z, c, x_real, c_real, lam = fixed_batches(seed + 1000)

    def encode(x):
        return de(x)[1]

    xr = x_real.clone().requires_grad_(True)
    real_scores, _ = de(xr)
    x_fake = gen(z, c)
    fake_scores, fake_code = de(x_fake)
    gan_g, gan_d = gan_losses(real_scores, fake_scores, xr, r1_gamma=10.0)
    unsup = code_l2(fake_code, c)
    sup, _ = sup_code_loss(encode, x_real, c_real)
    lx = lam.view(-1, 1, 1, 1)
    sr = code_l2(encode(lx * x_real + (1 - lx) * x_fake),
                 lam.view(-1, 1) * c_real + (1 - lam.view(-1, 1)) * c)
    return {k: float(v) for k, v in
            dict(gan_g=gan_g, gan_d=gan_d, unsup=unsup, sup=sup, sr=sr).items()}


def test_loss_reduction_identities():
    for seed in range(20):
        s = _model_scalars(seed)
        terms = LossTerms(**s)
        gamma = 1.0 + (seed % 3) * 4.5

        # alpha = 0 must equal the naive semi-supervised objective
        lg, lde = assemble_objectives(
            terms, LossWeights(gamma_g=gamma, gamma_e=0.5, beta=2.0, alpha=0.0))
        assert abs(lg - (s["gan_g"] + gamma * s["unsup"])) < 1e-6
        assert abs(lde - (s["gan_d"] + 0.5 * s["unsup"] + 2.0 * s["sup"])) < 1e-6

        # alpha = beta = 0 with equal gammas must equal the unsupervised objective
        lg, lde = assemble_objectives(
            terms, LossWeights(gamma_g=gamma, gamma_e=gamma, beta=0.0, alpha=0.0))
        assert abs(lg - (s["gan_g"] + gamma * s["unsup"])) < 1e-6
        assert abs(lde - (s["gan_d"] + gamma * s["unsup"])) < 1e-6
    record("loss-reduction-identities")


# -- criterion: gradient checks ------------------------------------------------

def test_gradient_checks():
    errors32 = run_gradient_checks(torch.float32, eps=1e-3)
    for name, err in errors32.items():
        assert err < 1e-3, f"32-bit {name}: {err}"
    errors64 = run_gradient_checks(torch.float64, eps=1e-5)
    for name, err in errors64.items():
        assert err < 1e-6, f"64-bit {name}: {err}"
    record("gradient-checks")


# -- criterion: mixup properties ------------------------------------------------

def test_mixup_properties():
    rng = np.random.default_rng(0)
    lam = sample_mix_weights(1_000_000, 0.75, rng).numpy()
    assert lam.min() >= 0.5
    assert lam.max() <= 1.0

    # independent Monte-Carlo oracle: stdlib uniforms through the Beta ppf
    py = random.Random(321)
    oracle = stats.beta.ppf([py.random() for _ in range(1_000_000)], 0.75, 0.75)
    oracle = np.maximum(oracle, 1 - oracle)
    assert abs(lam.mean() - oracle.mean()) < 0.005

    c = torch.rand(2000, 7, dtype=torch.float64)
    c2 = torch.rand(2000, 7, dtype=torch.float64)
    pair = mixup_pair(torch.rand(2000, 7, dtype=torch.float64), c,
                      torch.rand(2000, 7, dtype=torch.float64), c2,
                      xi=0.75, rng=np.random.default_rng(1))
    lamc = pair.lam.view(-1, 1).double()
    assert torch.equal(pair.c, lamc * c + (1 - lamc) * c2)
    assert float(pair.c.min()) >= 0.0 and float(pair.c.max()) <= 1.0
    record("mixup-properties")


# -- criterion: metric oracles ---------------------------------------------------

SPEC7 = FactorSpec((("a", 4), ("b", 6), ("c", 3), ("d", 8), ("e", 5), ("f", 4), ("g", 4)))


class _EchoOracle:
    gate_ok = True
    holdout_rms = np.zeros(7)

    def __init__(self, offset=0.0):
        self.offset = offset

    def predict(self, images):
        return np.asarray(images, dtype=np.float64) + self.offset


def test_metric_oracles():
    rng = np.random.default_rng(0)
    codes = sample_codes(SPEC7, 10_000, rng)

    perfect, _ = mig(codes, codes)
    assert abs(perfect - 1.0) <= 0.05
    noise, _ = mig(rng.random((10_000, 7)), codes)
    assert noise < 0.05
    dup = np.concatenate([codes[:, :1], codes], axis=1)
    _, info = mig(dup, codes)
    col = np.sort(info.mi[:, 0])[::-1]
    assert col[0] - col[1] == 0.0

    prior = LatentPrior(dim=2)

    def passthrough(z, c):
        return np.asarray(c)

    gen_perfect, _ = mig_gen(passthrough, prior, SPEC7, _EchoOracle(),
                             MetricConfig(n_mig=10_000), np.random.default_rng(1))
    assert abs(gen_perfect - 1.0) <= 0.05
    inner = np.random.default_rng(2)

    def blind(z, c):
        return sample_codes(SPEC7, len(np.asarray(c)), inner)

    gen_blind, _ = mig_gen(blind, prior, SPEC7, _EchoOracle(),
                           MetricConfig(n_mig=10_000), np.random.default_rng(3))
    assert gen_blind < 0.05

    # closed-form L2-gen cases, exact
    val = l2_gen(passthrough, prior, SPEC7, _EchoOracle(0.1),
                 MetricConfig(n_l2=1000), np.random.default_rng(4))
    assert abs(val - np.sqrt(0.07)) < 1e-9
    assert l2_gen(passthrough, prior, SPEC7, _EchoOracle(0.0),
                  MetricConfig(n_l2=1000), np.random.default_rng(5)) < 1e-12

    def provider(prng, size, fixed_factor, fixed_value):
        batch = sample_codes(SPEC7, size, prng)
        if fixed_factor is not None:
            batch[:, fixed_factor] = fixed_value
        return batch

    fs_cfg = MetricConfig(factor_score_train=5000, factor_score_test=2000)
    perfect_fs = factor_score(lambda x: np.asarray(x), provider, SPEC7, fs_cfg,
                              np.random.default_rng(6))
    assert perfect_fs.score == 1.0
    noise_rng = np.random.default_rng(7)
    noise_fs = factor_score(lambda x: noise_rng.random((len(x), 7)), provider,
                            SPEC7, fs_cfg, np.random.default_rng(8))
    assert abs(noise_fs.score - 1 / 7) <= 0.05
    record("metric-oracles")


# -- criterion: renderer/oracle round trip ---------------------------------------

def _dataset64() -> Path:
    root = acceptance_cache() / "shapes64"
    if not (root / "manifest.json").exists():
        generate_dataset(SceneSpec(resolution=64), root, seed=0)
    return root


def test_renderer_round_trip_full_grid():
    spec = SceneSpec(resolution=64)
    grids = [SCENE_FACTORS.grid(i) for i in range(SCENE_FACTORS.k)]
    count = 0
    for combo in itertools.product(*grids):
        code = np.array(combo)
        enc = analytic_encode(render_scene(code, spec), spec)
        assert np.abs(enc.code - code).max() <= 1e-3, f"mismatch at {code}"
        count += 1
    assert count == SCENE_FACTORS.num_combinations()
    record("renderer-analytic-round-trip-full-grid")


@pytest.fixture(scope="session")
def oracle64():
    path = acceptance_cache() / "oracle64.pt"
    if path.exists():
        return load_oracle(path)
    images, codes, spec = load_training_arrays(_dataset64())
    oracle = train_oracle_encoder(
        images, codes, spec,
        OracleTrainConfig(epochs=10, batch_size=256, lr=2e-3, holdout=1024,
                          seed=0, width=16))
    save_oracle(path, oracle)
    return oracle


@pytest.mark.slow
def test_oracle_encoder_gate(oracle64):
    assert np.max(oracle64.holdout_rms) <= 0.05, oracle64.holdout_rms
    # cross-oracle agreement with the closed-form inverse on fresh renders
    spec = SceneSpec(resolution=64)
    rng = np.random.default_rng(123)
    codes = sample_codes(SCENE_FACTORS, 100, rng)
    grids = [SCENE_FACTORS.grid(i) for i in range(SCENE_FACTORS.k)]
    codes = np.stack([np.array([g[np.argmin(np.abs(g - v))] for g, v in zip(grids, row)])
                      for row in codes])
    images = np.stack([render_scene(c, spec) for c in codes])
    preds = oracle64.predict(images)
    analytic = np.stack([analytic_encode(img, spec).code for img in images])
    assert np.abs(preds - analytic).max() <= 0.1
    record("oracle-encoder-rms-gate")


# -- criteria: supervision trend and ablation direction --------------------------

from trend_runs import trend_runs


@pytest.fixture(scope="session")
def trend_reports(oracle64):
    """Train (or reuse) each run and evaluate MIG-gen / L2-gen once."""
    cache = acceptance_cache()
    images = codes = spec = None
    reports = {}
    for name, cfg in trend_runs(str(cache / "runs")).items():
        report_path = cache / f"trend-{name}-{cfg.digest()}.json"
        if report_path.exists():
            reports[name] = json.loads(report_path.read_text())
            continue
        if images is None:
            images, codes, spec = load_training_arrays(_dataset64())
        ckpt_path = cache / f"trend-{name}-{cfg.digest()}.ckpt"
        if ckpt_path.exists():
            bundle, _, _ = load_checkpoint(ckpt_path)
        else:
            rec = train(cfg, images=images, codes=codes, factor_spec=spec)
            bundle = rec.final_bundle
            shutil.copy(rec.checkpoint_paths[-1], ckpt_path)
        rep = evaluate(bundle, images, codes, oracle=oracle64,
                       metric_config=MetricConfig(n_mig=10_000, n_l2=1_000),
                       seed=cfg.eval_seed, metrics=("mig", "l2", "mig_gen", "l2_gen"),
                       config_digest=cfg.digest())
        doc = {"mig": rep.mig, "l2": rep.l2, "mig_gen": rep.mig_gen,
               "l2_gen": rep.l2_gen, "meta": rep.meta}
        report_path.write_text(json.dumps(doc, indent=2))
        reports[name] = doc
    return reports


@pytest.mark.trend
def test_supervision_trend(trend_reports):
    r0 = trend_reports["eta0"]
    r001 = trend_reports["eta001"]
    r1 = trend_reports["eta1"]
    summary = {k: (round(trend_reports[k]["mig_gen"], 4),
                   round(trend_reports[k]["l2_gen"], 4))
               for k in ("eta0", "eta001", "eta1")}
    print("trend (mig_gen, l2_gen):", summary)
    assert r001["mig_gen"] >= r0["mig_gen"] + 0.15
    assert r001["l2_gen"] <= r0["l2_gen"] - 0.15
    assert abs(r001["mig_gen"] - r1["mig_gen"]) <= 0.15
    record("supervision-trend")


@pytest.mark.trend
def test_ablation_direction(trend_reports):
    default = trend_reports["eta001"]
    nosr = trend_reports["nosr"]
    nounsup = trend_reports["nounsup"]
    print("ablation mig_gen:", {k: round(trend_reports[k]["mig_gen"], 4)
                                for k in ("eta001", "nosr", "nounsup")})
    assert nosr["mig_gen"] <= default["mig_gen"]
    assert nounsup["mig_gen"] < 0.2
    record("ablation-direction")


# -- criterion: fine-variant bottleneck -------------------------------------------

def test_fine_bottleneck():
    config = NetworkConfig(resolution=64, z_dim=8, code_dim=7, n_mp=2, f_mp=16,
                           f_0=16, fine_cutoff=16, fine_factors=(2, 3, 6))
    for seed in (0, 1, 2):
        torch.manual_seed(seed)
        gen = build_fine_generator(config)
        base = torch.randint(-256, 257, (2, 3, 64, 64)).float() / 256
        detail = torch.zeros_like(base)
        detail[:, :, 0::4, 0::4] = 1 / 64
        detail[:, :, 1::4, 1::4] = -1 / 64
        detail[:, :, 2::4, 2::4] = 1 / 64
        detail[:, :, 3::4, 3::4] = -1 / 64
        other = base + detail
        assert not torch.equal(base, other)
        assert torch.equal(fine_downsample(base, 16), fine_downsample(other, 16))
        c = torch.rand(2, 3, generator=torch.Generator().manual_seed(seed))
        assert torch.equal(gen(base, c), gen(other, c))
        # styles exist only above the cutoff
        assert gen.styled_resolutions == (32, 64)
        assert all(block.res > config.fine_cutoff for block in gen.blocks)
        assert not hasattr(gen.input_conv1, "style1")
    record("fine-variant-bottleneck")


# -- criterion: determinism ---------------------------------------------------------

def test_determinism_and_resume(tmp_path, scene_subset_32):
    images, codes, _ = scene_subset_32
    net = NetworkConfig(resolution=16, z_dim=8, code_dim=7, n_mp=2, f_mp=16, f_0=12)

    def config(out, total):
        return TrainConfig(mode="semi", eta=0.1, seed=11, total_images=total,
                           batch_size=8, network=net, log_every=8,
                           run_name="det", out_dir=str(out))

    a = train(config(tmp_path / "a", 8 * 14), images=images, codes=codes,
              factor_spec=SCENE_FACTORS)
    b = train(config(tmp_path / "b", 8 * 14), images=images, codes=codes,
              factor_spec=SCENE_FACTORS)
    assert [e["loss_g"] for e in a.loss_curve] == [e["loss_g"] for e in b.loss_curve]
    assert [e["loss_de"] for e in a.loss_curve] == [e["loss_de"] for e in b.loss_curve]

    half = train(config(tmp_path / "half", 8 * 7), images=images, codes=codes,
                 factor_spec=SCENE_FACTORS)
    resumed = train(config(tmp_path / "resumed", 8 * 14), images=images, codes=codes,
                    factor_spec=SCENE_FACTORS, resume_from=half.checkpoint_paths[-1])
    tail = [e["loss_de"] for e in a.loss_curve[7:]]
    tail_resumed = [e["loss_de"] for e in resumed.loss_curve]
    assert len(tail) == len(tail_resumed)
    for x, y in zip(tail, tail_resumed):
        assert abs(x - y) <= 1e-5 * max(1.0, abs(x))
    record("determinism-and-resume")
