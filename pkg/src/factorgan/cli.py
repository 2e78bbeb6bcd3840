"""Command-line entry points: gen-data, train, eval, sweep-eta, traverse,
serve, oracle-train."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import generate_dataset
from .losses import LossWeights
from .metrics import MetricConfig
from .networks import NetworkConfig, load_checkpoint
from .oracle import OracleTrainConfig, load_oracle, save_oracle, train_oracle_encoder
from .rendering import SceneSpec
from .training import (TrainConfig, evaluate, latent_traversal,
                       load_training_arrays, sweep_eta, train)
from . import reports

RUN_DIR_ENV = "DISENT_RUN_DIR"


def _run_root(out: str | None) -> str:
    return out or os.environ.get(RUN_DIR_ENV, "runs")


def _add_weight_flags(p: argparse.ArgumentParser):
    p.add_argument("--gamma-g", type=float, default=10.0)
    p.add_argument("--gamma-e", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=0.75)
    p.add_argument("--r1-gamma", type=float, default=10.0)


def _add_network_flags(p: argparse.ArgumentParser):
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--z-dim", type=int, default=128)
    p.add_argument("--n-mp", type=int, default=3)
    p.add_argument("--f-mp", type=int, default=64)
    p.add_argument("--f0", type=int, default=64)
    p.add_argument("--phi", type=int, default=None,
                   help="fine cutoff resolution (enables the fine variant)")
    p.add_argument("--fine-factors", type=str, default=None,
                   help="comma-separated factor indices treated as fine")


def _parse_progressive(text: str | None):
    if not text:
        return None
    phases = []
    for part in text.split(","):
        res, n = part.split(":")
        phases.append((int(res), int(n)))
    return tuple(phases)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factorgan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render the exhaustive synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--name", default="shapes2d-mini")

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--run-name", default="run")
    p.add_argument("--mode", default="semi",
                   choices=["semi", "info", "fine", "encoder_only", "encoder_only_mixup"])
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--total-images", type=int, default=200_000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--progressive", type=str, default=None,
                   help="schedule as res:images,res:images,...")
    p.add_argument("--fade-images", type=int, default=10_000)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--resume", default=None)
    _add_weight_flags(p)
    _add_network_flags(p)

    p = sub.add_parser("oracle-train", help="pre-train the oracle encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=2e-3)

    p = sub.add_parser("eval", help="compute metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--oracle", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--metrics", default="mig,l2,mig_gen,l2_gen")
    p.add_argument("--seed", type=int, default=7700)
    p.add_argument("--n-mig", type=int, default=10_000)
    p.add_argument("--n-l2", type=int, default=1_000)

    p = sub.add_parser("sweep-eta", help="one training run and report per eta")
    p.add_argument("--data", required=True)
    p.add_argument("--etas", required=True, help="comma-separated supervision rates")
    p.add_argument("--out", default=None)
    p.add_argument("--run-name", default="sweep")
    p.add_argument("--oracle", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--total-images", type=int, default=200_000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--progressive", type=str, default=None)
    p.add_argument("--fade-images", type=int, default=10_000)
    _add_weight_flags(p)
    _add_network_flags(p)

    p = sub.add_parser("traverse", help="emit a latent traversal grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--anchor", default=None,
                   help="comma-separated code; defaults to all 0.5")
    p.add_argument("--anchor-image", default=None, help="PNG anchor for fine models")
    p.add_argument("--z-seed", type=int, default=0)
    p.add_argument("--out", default="traversal.png")

    p = sub.add_parser("serve", help="serve generation/encoding over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def _network_from_args(args, k: int) -> NetworkConfig:
    fine_factors = None
    if args.fine_factors:
        fine_factors = tuple(int(i) for i in args.fine_factors.split(","))
    return NetworkConfig(
        resolution=args.resolution, z_dim=args.z_dim, code_dim=k,
        n_mp=args.n_mp, f_mp=args.f_mp, f_0=args.f0,
        fine_cutoff=args.phi, fine_factors=fine_factors)


def _weights_from_args(args) -> LossWeights:
    return LossWeights(gamma_g=args.gamma_g, gamma_e=args.gamma_e, beta=args.beta,
                       alpha=args.alpha, xi=args.xi, r1_gamma=args.r1_gamma)


def _cmd_gen_data(args) -> int:
    spec = SceneSpec(resolution=args.resolution)
    manifest = generate_dataset(spec, args.out, seed=args.seed, name=args.name)
    print(f"wrote {manifest.count} images to {args.out} (digest {manifest.digest[:12]})")
    return 0


def _cmd_train(args) -> int:
    images, codes, spec = load_training_arrays(args.data)
    config = TrainConfig(
        dataset_dir=args.data, mode=args.mode, eta=args.eta, seed=args.seed,
        total_images=args.total_images, batch_size=args.batch_size, lr=args.lr,
        eval_every=args.eval_every, weights=_weights_from_args(args),
        network=_network_from_args(args, spec.k),
        progressive=_parse_progressive(args.progressive),
        fade_images=args.fade_images,
        run_name=args.run_name, out_dir=_run_root(args.out))
    record = train(config, images=images, codes=codes, factor_spec=spec,
                   resume_from=args.resume, log=print)
    reports.plot_loss_curves(record.loss_curve, Path(record.run_dir) / "losses.png")
    print(f"run complete: {record.run_dir} "
          f"({len(record.checkpoint_paths)} checkpoints)")
    return 0


def _cmd_oracle_train(args) -> int:
    images, codes, spec = load_training_arrays(args.data)
    config = OracleTrainConfig(epochs=args.epochs, seed=args.seed,
                               batch_size=args.batch_size, lr=args.lr)
    oracle = train_oracle_encoder(images, codes, spec, config, log=print)
    save_oracle(args.out, oracle)
    rms = ", ".join(f"{v:.4f}" for v in oracle.holdout_rms)
    print(f"oracle saved to {args.out}; held-out per-dim RMS [{rms}]; "
          f"gate {'OK' if oracle.gate_ok else 'FAILED'}")
    return 0


def _cmd_eval(args) -> int:
    bundle, _, digest = load_checkpoint(args.checkpoint)
    images, codes, spec = load_training_arrays(args.data)
    oracle = load_oracle(args.oracle) if args.oracle else None
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    metric_config = MetricConfig(n_mig=args.n_mig, n_l2=args.n_l2)
    report = evaluate(bundle, images, codes, oracle=oracle,
                      metric_config=metric_config, seed=args.seed,
                      metrics=metrics, config_digest=digest[:16])
    out_dir = Path(_run_root(args.out)) / "reports"
    reports.save_report(report, out_dir / f"eval_{bundle.step:08d}.json")
    reports.write_metrics_csv([(f"step{bundle.step}", report)], out_dir / "metrics.csv")
    print(json.dumps({k: v for k, v in report.to_json().items() if k != "mi_matrix"}))
    return 0


def _cmd_sweep_eta(args) -> int:
    images, codes, spec = load_training_arrays(args.data)
    etas = [float(v) for v in args.etas.split(",")]
    oracle = load_oracle(args.oracle) if args.oracle else None
    metrics = ("mig", "l2", "mig_gen", "l2_gen") if oracle else ("mig", "l2")
    base = TrainConfig(
        dataset_dir=args.data, mode="semi", seed=args.seed,
        total_images=args.total_images, batch_size=args.batch_size,
        weights=_weights_from_args(args), network=_network_from_args(args, spec.k),
        progressive=_parse_progressive(args.progressive), fade_images=args.fade_images,
        run_name=args.run_name, out_dir=_run_root(args.out))
    results = sweep_eta(base, etas, images, codes, spec, oracle=oracle,
                        metrics=metrics, log=print)
    out_dir = Path(base.out_dir) / base.run_name / "reports"
    rows = []
    for eta, record, report in results:
        reports.save_report(report, out_dir / f"eta_{eta:g}.json")
        rows.append((eta, report))
    reports.write_metrics_csv([(f"eta={e:g}", r) for e, r in rows], out_dir / "metrics.csv")
    reports.plot_eta_sweep(rows, out_dir / "sweep.png")
    print(f"sweep complete: {out_dir}")
    return 0


def _cmd_traverse(args) -> int:
    bundle, _, _ = load_checkpoint(args.checkpoint)
    if bundle.kind == "fine":
        if not args.anchor_image:
            raise ValueError("fine checkpoints need --anchor-image")
        from PIL import Image
        from .rendering import uint8_to_tensor
        anchor = uint8_to_tensor(np.asarray(
            Image.open(args.anchor_image).convert("RGB"), dtype=np.uint8))
    else:
        k = bundle.factor_spec.k
        anchor = (np.full(k, 0.5) if not args.anchor
                  else np.array([float(v) for v in args.anchor.split(",")]))
    row = latent_traversal(bundle, anchor, args.factor, args.steps, z_seed=args.z_seed)
    grid = reports.traversal_grid([list(row.images)])
    reports.save_png(grid, args.out)
    print(f"wrote {args.out} ({args.steps} steps + anchor)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn
    from .server import create_app
    app = create_app(args.checkpoint)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "oracle-train": _cmd_oracle_train,
    "eval": _cmd_eval,
    "sweep-eta": _cmd_sweep_eta,
    "traverse": _cmd_traverse,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # single-line machine-parsable failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
