"""Command-line entry point: train, invert, edit, sweep, stats.

Every command takes ``--config``; results land in ``--out`` (or the
config's out_dir). All runs are deterministic given the config, so
re-running a command overwrites byte-identical outputs.

Exit codes: 0 success, 2 config error, 3 numeric-constraint error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import datasets, pgm
from .config import RunConfig, load_config
from .errors import ConfigError, NumericError, ParameterError
from .guidance import ConceptEdit
from .inversion import InversionResult, invert
from .mlp import MlpPredictor, TrainConfig, load_checkpoint, save_checkpoint, train
from .pipeline import edit_image, ledits_edit
from .predictors import AnalyticGmmPredictor, component_posterior
from .schedule import NoiseSchedule, build_schedule


def _fmt(value) -> str:
    """CSV cell formatting: repr for floats (shortest round-trip)."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _build_schedule(cfg: RunConfig) -> NoiseSchedule:
    p = cfg.schedule_params
    try:
        return build_schedule(
            int(p["T"]), p.get("beta_start"), p.get("beta_end"), float(p.get("eta", 1.0))
        )
    except ParameterError as exc:
        raise ConfigError(f"config.schedule: {exc}") from exc


def _load_input(path):
    """Returns ("image", (16,16) array in [0,1]) or ("vector", (d,) array)."""
    if str(path).endswith(".pgm"):
        return "image", pgm.read_pgm(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    x = np.asarray(data, dtype=float)
    if x.ndim != 1:
        raise ConfigError(f"{path}: expected a flat JSON array of numbers")
    return "vector", x


def _predictor_for(cfg: RunConfig, schedule: NoiseSchedule):
    """(predictor, model-or-None); checkpoint takes precedence over mixture."""
    if cfg.checkpoint is not None:
        model = load_checkpoint(cfg.checkpoint)
        return MlpPredictor(model), model
    if cfg.mixture is not None:
        return AnalyticGmmPredictor(cfg.mixture, schedule), None
    raise ConfigError("config must provide a mixture or a checkpoint")


def _metrics_row(cfg, schedule, x_source, x_edited):
    """(header, row) for an edit: MSE to source plus posterior columns."""
    header = ["mse_to_source"]
    row = [float(np.mean((x_edited - x_source) ** 2))]
    gmm = cfg.mixture
    if gmm is not None and gmm.dimension == np.shape(x_edited)[-1]:
        post = component_posterior(x_edited, 0, gmm, schedule)
        header += [f"posterior_{k}" for k in range(gmm.n_components)]
        row += [float(p) for p in post]
    return header, row


# -- commands ----------------------------------------------------------------


def cmd_train(cfg: RunConfig, out_dir: str) -> None:
    if cfg.train is None:
        raise ConfigError("config has no 'train' section")
    section = cfg.train
    schedule = _build_schedule(cfg)
    if section.domain == "mixture":
        if cfg.mixture is None:
            raise ConfigError("train.domain=mixture requires a 'mixture' section")
        sampler = datasets.make_gmm_sampler(cfg.mixture)
        dim = cfg.mixture.dimension
        n_condition_ids = cfg.mixture.n_components + 1
    else:
        sampler = datasets.make_shapes_sampler()
        dim = datasets.IMAGE_DIM
        n_condition_ids = datasets.N_IMAGE_STYLES + 1
    config = TrainConfig(
        epochs=section.epochs,
        batch_size=section.batch_size,
        batches_per_epoch=section.batches_per_epoch,
        learning_rate=section.learning_rate,
        final_lr_scale=section.final_lr_scale,
        adam_beta1=section.adam_beta1,
        adam_beta2=section.adam_beta2,
        adam_eps=section.adam_eps,
        seed=cfg.seed,
        cond_dropout=section.cond_dropout,
    )
    model, history = train(
        sampler,
        schedule,
        config,
        dim=dim,
        n_condition_ids=n_condition_ids,
        hidden=section.hidden,
        cond_width=section.cond_width,
    )
    ckpt = os.path.join(out_dir, "checkpoint.ckpt")
    save_checkpoint(model, ckpt)
    _write_csv(os.path.join(out_dir, "training_log.csv"), ["epoch", "loss"], history)
    print(f"trained {section.domain} model: final loss {history[-1][1]:.6f} -> {ckpt}")


def cmd_invert(cfg: RunConfig, input_path: str, out_dir: str) -> None:
    schedule = _build_schedule(cfg)
    predictor, _ = _predictor_for(cfg, schedule)
    kind, data = _load_input(input_path)
    x0 = datasets.to_model_space(data) if kind == "image" else data
    result = invert(x0, predictor, cfg.invert_condition, schedule, cfg.seed)
    path = os.path.join(out_dir, "inversion.inv")
    result.save(path)
    print(f"inverted {input_path} -> {path}")


def cmd_edit(cfg: RunConfig, input_path: str, out_dir: str, artifact: str | None) -> None:
    schedule = _build_schedule(cfg)
    predictor, model = _predictor_for(cfg, schedule)
    kind, data = _load_input(input_path)
    inversion = InversionResult.load(artifact) if artifact else None
    params = cfg.edit_params()

    if kind == "image":
        if model is None:
            raise ConfigError("image edits require a 'checkpoint' in the config")
        out_path = os.path.join(out_dir, "edited.pgm")
        edited = edit_image(data, model, params, schedule, inversion, out_path=out_path)
        header, row = _metrics_row(cfg, schedule, data, edited)
    else:
        x_edited, _ = ledits_edit(data, predictor, params, schedule, inversion)
        out_path = os.path.join(out_dir, "edited.json")
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump([float(v) for v in x_edited], fh)
            fh.write("\n")
        header, row = _metrics_row(cfg, schedule, data, x_edited)
    _write_csv(os.path.join(out_dir, "metrics.csv"), header, [row])
    print(f"edited {input_path} -> {out_path}")


def _sweep_axes(cfg: RunConfig):
    sweep = cfg.sweep
    skips = sweep.skips or [cfg.skip]
    target_scales = sweep.target_scales or [cfg.guidance.target_scale]
    concept_scales = sweep.concept_scales or [None]
    if sweep.concept_scales and not cfg.guidance.concepts:
        raise ConfigError("sweep.concept_scales given but the config has no concepts")
    return skips, target_scales, concept_scales


def _cell_guidance(cfg: RunConfig, target_scale, concept_scale):
    concepts = cfg.guidance.concepts
    if concept_scale is not None:
        concepts = tuple(
            ConceptEdit(
                condition=c.condition,
                direction=c.direction,
                scale=float(concept_scale),
                warmup=c.warmup,
                threshold=c.threshold,
            )
            for c in concepts
        )
    return type(cfg.guidance)(
        target_scale=float(target_scale),
        concepts=concepts,
        concept_baseline=cfg.guidance.concept_baseline,
    )


def cmd_sweep(cfg: RunConfig, input_path: str, out_dir: str, threads: int) -> None:
    if cfg.sweep is None:
        raise ConfigError("config has no 'sweep' section")
    schedule = _build_schedule(cfg)
    predictor, model = _predictor_for(cfg, schedule)
    kind, data = _load_input(input_path)
    x0 = datasets.to_model_space(data) if kind == "image" else data
    source = data

    # one inversion shared by every cell: it depends only on (x0, seed)
    inversion = invert(x0, predictor, cfg.invert_condition, schedule, cfg.seed)
    skips, target_scales, concept_scales = _sweep_axes(cfg)
    cells = [
        (skip, ts, cs) for skip in skips for ts in target_scales for cs in concept_scales
    ]

    def run_cell(cell):
        skip, ts, cs = cell
        params = cfg.edit_params(
            skip=int(skip), guidance=_cell_guidance(cfg, ts, cs)
        )
        x_edited, _ = ledits_edit(x0, predictor, params, schedule, inversion)
        tag = f"s{skip}_g{_fmt(float(ts))}" + (f"_c{_fmt(float(cs))}" if cs is not None else "")
        if kind == "image":
            out_path = os.path.join(out_dir, f"edited_{tag}.pgm")
            edited = datasets.from_model_space(x_edited)
            pgm.write_pgm(out_path, edited)
            mse = float(np.mean((edited - source) ** 2))
            post = None
        else:
            out_path = os.path.join(out_dir, f"edited_{tag}.json")
            with open(out_path, "w", encoding="utf-8") as fh:
                json.dump([float(v) for v in x_edited], fh)
                fh.write("\n")
            mse = float(np.mean((x_edited - source) ** 2))
            post = (
                component_posterior(x_edited, 0, cfg.mixture, schedule)
                if cfg.mixture is not None and cfg.mixture.dimension == x0.shape[-1]
                else None
            )
        return mse, post, os.path.basename(out_path)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]

    header = ["skip", "target_scale", "concept_scale", "mse_to_source"]
    n_post = cfg.mixture.n_components if cfg.mixture is not None else 0
    if any(post is not None for _, post, _ in results):
        header += [f"posterior_{k}" for k in range(n_post)]
    header.append("output")
    rows = []
    for (skip, ts, cs), (mse, post, name) in zip(cells, results):
        row = [int(skip), float(ts), None if cs is None else float(cs), mse]
        if len(header) > 5:
            row += [float(p) for p in post] if post is not None else [None] * n_post
        row.append(name)
        rows.append(row)
    _write_csv(os.path.join(out_dir, "sweep.csv"), header, rows)
    print(f"swept {len(cells)} cells -> {os.path.join(out_dir, 'sweep.csv')}")


def cmd_stats(cfg: RunConfig, out_dir: str) -> None:
    if cfg.stats_runs is None:
        raise ConfigError("config has no 'stats' section")
    if cfg.mixture is None:
        raise ConfigError("stats requires a 'mixture' section")
    runs = cfg.stats_runs
    if runs < 2:
        print(
            "warning: stats with runs=1: variances and significance are undefined",
            file=sys.stderr,
        )
    schedule = _build_schedule(cfg)
    predictor = AnalyticGmmPredictor(cfg.mixture, schedule)
    x0, _ = cfg.mixture.sample(np.random.default_rng([cfg.seed, 0]), runs)
    result = invert(x0, predictor, cfg.invert_condition, schedule, seed=[cfg.seed, 1])
    zs = result.zs  # (T, runs, d)

    rows = []
    with np.errstate(invalid="ignore", divide="ignore"):
        for t in range(1, schedule.T + 1):
            per_coord_var = zs[t - 1].var(axis=0, ddof=1)
            if t < schedule.T:
                a = zs[t - 1].ravel()
                b = zs[t].ravel()
                r = float(np.corrcoef(a, b)[0, 1]) if a.size > 1 else float("nan")
                n = a.size
                tstat = (
                    float(r * np.sqrt(n - 2) / np.sqrt(1.0 - r * r))
                    if n > 2
                    else float("nan")
                )
            else:
                r, tstat = None, None
            rows.append(
                [t, float(per_coord_var.min()), float(per_coord_var.mean()), r, tstat]
            )
    _write_csv(
        os.path.join(out_dir, "stats.csv"),
        ["t", "var_min", "var_mean", "lag1_corr", "lag1_tstat"],
        rows,
    )
    print(f"noise-map statistics over {runs} runs -> {os.path.join(out_dir, 'stats.csv')}")


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledits", description="DDPM-inversion editing experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_input in (
        ("train", False),
        ("invert", True),
        ("edit", True),
        ("sweep", True),
        ("stats", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run-config JSON path")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=1, help="sweep cell parallelism")
        if needs_input:
            p.add_argument("--input", required=True, help="input point (.json) or image (.pgm)")
        if name == "edit":
            p.add_argument("--artifact", default=None, help="precomputed inversion artifact")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = args.out if args.out is not None else cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "train":
            cmd_train(cfg, out_dir)
        elif args.command == "invert":
            cmd_invert(cfg, args.input, out_dir)
        elif args.command == "edit":
            cmd_edit(cfg, args.input, out_dir, args.artifact)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.input, out_dir, max(1, args.threads))
        elif args.command == "stats":
            cmd_stats(cfg, out_dir)
        return 0
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
