"""Command-line pipeline: gen-data, ris-optimize, preprocess, train, eval, report.

Structured JSON event lines go to stderr; the human-readable summary goes to
stdout.  Every command is reproducible from (config, seed): artifacts are
byte-identical across reruns, with wall-clock timestamps confined to the
provenance sidecars.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import channel, preprocess, ris, storage
from .config import (ConfigError, RunConfig, load_config, resolve_output_dir)
from .model import VARIANTS, ModelConfig, build_model
from .report import build_report, write_csv
from .training import evaluate, stratified_split, train


def log_event(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _provenance(cfg: RunConfig, seed: int) -> dict:
    return {
        "seed": int(seed),
        "config_hash": storage.config_hash(cfg.to_dict()),
        "created_unix": time.time(),
    }


def frames_to_container(frames: list[channel.CsiFrame],
                        class_names: list[str]) -> storage.DatasetContainer:
    labels = np.array([class_names.index(f.label) for f in frames], dtype=np.int64)
    data = np.stack([f.data for f in frames])
    return storage.DatasetContainer(class_names=list(class_names),
                                    sample_rate=frames[0].sample_rate,
                                    labels=labels, data=data)


def build_ris_setup(cfg: RunConfig, n_paths: int):
    """Cascade channel, greedy-optimized configuration, and path coupling."""
    r = cfg.ris
    chan = ris.CascadeChannel.random(
        r.rows * r.cols, seed=r.channel_seed, tx_symbol_power=r.tx_symbol_power,
        noise_variance=r.noise_variance, averaging_samples=r.averaging_samples)
    config_mat, trace = ris.greedy_optimize(chan, r.rows, r.cols, seed=r.channel_seed)
    if r.coupling == "partition":
        coupling = channel.ElementPathCoupling.partition(chan, n_paths)
    else:
        coupling = channel.ElementPathCoupling.shared(chan, n_paths)
    return chan, config_mat, trace, coupling


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.scene.rng_seed = args.seed
    out = resolve_output_dir(args.out)
    os.makedirs(out, exist_ok=True)

    scene = cfg.scene_template()
    profiles = channel.default_activity_profiles(cfg.dataset.jitter_scale)
    class_names = [p.class_name for p in profiles]

    frames_off = channel.generate_activity_dataset(
        profiles, scene, cfg.dataset.samples_per_class, with_ris=False)
    off_path = os.path.join(out, "dataset_ris_off.bin")
    storage.write_container(frames_to_container(frames_off, class_names), off_path)
    storage.write_json(off_path + ".provenance.json", _provenance(cfg, cfg.scene.rng_seed))
    log_event("dataset_written", path=off_path, records=len(frames_off), ris=False)
    print(f"wrote {len(frames_off)} frames ({len(class_names)} classes) -> {off_path}")

    if cfg.dataset.with_ris:
        n_paths = cfg.scene.static_path_count + max(
            len(p.dynamic_path_templates) for p in profiles)
        _, config_mat, trace, coupling = build_ris_setup(cfg, n_paths)
        frames_on = channel.generate_activity_dataset(
            profiles, scene, cfg.dataset.samples_per_class, with_ris=True,
            config=config_mat, coupling=coupling)
        on_path = os.path.join(out, "dataset_ris_on.bin")
        storage.write_container(frames_to_container(frames_on, class_names), on_path)
        storage.write_json(on_path + ".provenance.json", _provenance(cfg, cfg.scene.rng_seed))
        storage.write_json(os.path.join(out, "ris_config.json"), {
            "rows": cfg.ris.rows, "cols": cfg.ris.cols,
            "half_pi_multipliers": config_mat.half_pi_multipliers().tolist(),
            "optimized_power_dbm": ris.power_to_dbm(trace.values[-1]),
        })
        mean_off = float(np.mean([f.mean_power() for f in frames_off]))
        mean_on = float(np.mean([f.mean_power() for f in frames_on]))
        log_event("dataset_written", path=on_path, records=len(frames_on), ris=True)
        print(f"wrote {len(frames_on)} frames with surface gain -> {on_path}")
        print(f"mean |H|^2: off={mean_off:.4g} on={mean_on:.4g} "
              f"({10*np.log10(mean_on/mean_off):.2f} dB)")
    return 0


def cmd_ris_optimize(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.ris.channel_seed = args.seed
    out = resolve_output_dir(args.out)
    os.makedirs(out, exist_ok=True)
    r = cfg.ris

    chan = ris.CascadeChannel.random(
        r.rows * r.cols, seed=r.channel_seed, tx_symbol_power=r.tx_symbol_power,
        noise_variance=r.noise_variance, averaging_samples=r.averaging_samples)
    config_mat, trace = ris.greedy_optimize(chan, r.rows, r.cols, seed=r.channel_seed)

    rows = [[0, "-", ris.power_to_dbm(trace.values[0]), ""]]
    for k in range(len(trace.candidates)):
        rows.append([k + 1, trace.flipped_index[k],
                     ris.power_to_dbm(trace.candidates[k]),
                     str(trace.accepted_flips[k]).lower()])
    write_csv(os.path.join(out, "trace.csv"),
              ["step", "flipped_index", "measured_power_dbm", "accepted"], rows)
    storage.write_json(os.path.join(out, "ris_config.json"), {
        "rows": r.rows, "cols": r.cols,
        "half_pi_multipliers": config_mat.half_pi_multipliers().tolist(),
    })
    rep = ris.array_gain_report(r.gain_report_trials, (r.rows, r.cols),
                                seed=r.channel_seed, threads=args.threads or 1)
    storage.write_json(os.path.join(out, "gain_report.json"), rep.summary())
    log_event("ris_optimized", final_power_dbm=ris.power_to_dbm(trace.values[-1]),
              gain_db=trace.gain_db(), mean_gain_db=rep.mean_db)
    print(f"greedy gain {trace.gain_db():.2f} dB over {r.rows}x{r.cols} elements; "
          f"mean over {r.gain_report_trials} random channels {rep.mean_db:.2f} dB")
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    out = resolve_output_dir(args.out)
    os.makedirs(out, exist_ok=True)

    ds = storage.read_container(args.input)
    amp = np.abs(ds.data)
    spec = preprocess.FilterSpec(order=cfg.filter.order, cutoff_hz=cfg.filter.cutoff_hz,
                                 sample_rate_hz=ds.sample_rate)
    filtered = preprocess.lowpass_filter(amp, spec)

    train_idx, _, _ = stratified_split(ds.labels, cfg.training.val_fraction,
                                       cfg.training.test_fraction, cfg.training.seed)
    time_major = filtered.transpose(0, 2, 1)
    normed, stats = preprocess.normalize(time_major, mode=cfg.normalize.mode,
                                         fit_indices=train_idx)
    features = storage.DatasetContainer(
        class_names=ds.class_names, sample_rate=ds.sample_rate,
        labels=ds.labels, data=normed.transpose(0, 2, 1))
    feat_path = os.path.join(out, "features.bin")
    storage.write_container(features, feat_path)
    storage.write_json(feat_path + ".norm.json", stats.to_dict())
    log_event("preprocessed", input=args.input, output=feat_path,
              records=int(ds.labels.size))
    print(f"preprocessed {ds.labels.size} frames -> {feat_path} "
          f"(order-{cfg.filter.order} low-pass at {cfg.filter.cutoff_hz} Hz, "
          f"{cfg.normalize.mode} normalization)")
    return 0


def _load_features(path: str):
    ds = storage.read_container(path)
    if np.iscomplexobj(ds.data):
        raise ConfigError(f"{path} holds complex CSI; run preprocess first")
    x = np.ascontiguousarray(ds.data.transpose(0, 2, 1))
    return ds, x


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = resolve_output_dir(args.out)
    os.makedirs(out, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.training.seed

    ds, x = _load_features(args.features)
    y = ds.labels
    # The split always keys off the config seed so it matches preprocessing.
    tr, va, te = stratified_split(y, cfg.training.val_fraction,
                                  cfg.training.test_fraction, cfg.training.seed)
    if va.size == 0 or te.size == 0:
        log_event("degenerate_split", note="empty val/test; falling back to train split")
        va = va if va.size else tr
        te = te if te.size else tr

    mcfg = cfg.model_config(variant=args.variant, input_len=x.shape[1],
                            input_channels=x.shape[2])
    model = build_model(mcfg, seed=seed)
    tcfg = cfg.train_config(seed=seed)
    log_event("train_start", variant=args.variant, seed=seed,
              train=len(tr), val=len(va), test=len(te))
    t0 = time.time()
    report = train(model, x[tr], y[tr], x[va], y[va], tcfg)
    test_metrics = evaluate(model, x[te], y[te])
    log_event("train_done", seconds=round(time.time() - t0, 3),
              best_epoch=report.best_epoch, test_accuracy=test_metrics["accuracy"])

    storage.save_checkpoint(os.path.join(out, "checkpoint.bin"),
                            model.named_parameters_data(),
                            meta={"model_config": mcfg.__dict__, "seed": seed,
                                  "config_hash": storage.config_hash(cfg.to_dict())})
    full_report = {
        "variant": args.variant,
        "seed": seed,
        "class_names": ds.class_names,
        "test_metrics": test_metrics,
        **report.to_dict(),
    }
    storage.write_json(os.path.join(out, "train_report.json"), full_report)
    write_csv(os.path.join(out, "train_report.csv"),
              ["epoch", "train_loss", "val_loss", "val_accuracy"],
              [[e["epoch"], e["train_loss"], e["val_loss"], e["val_accuracy"]]
               for e in report.epochs])
    write_csv(os.path.join(out, "confusion_matrix.csv"),
              ["true\\pred", *ds.class_names],
              [[ds.class_names[i], *row]
               for i, row in enumerate(test_metrics["confusion_matrix"])])
    storage.write_json(os.path.join(out, "run_provenance.json"), _provenance(cfg, seed))
    print(f"trained {args.variant} for {len(report.epochs)} epochs; "
          f"test accuracy {test_metrics['accuracy']:.4f}, "
          f"macro F1 {test_metrics['macro_f1']:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out = resolve_output_dir(args.out)
    os.makedirs(out, exist_ok=True)

    params, meta = storage.load_checkpoint(args.checkpoint)
    mcfg = ModelConfig(**meta["model_config"])
    model = build_model(mcfg, seed=meta.get("seed", 0))
    model.load_state_dict(params)

    ds, x = _load_features(args.features)
    y = ds.labels
    if args.split == "all":
        idx = np.arange(y.size)
    else:
        tr, va, te = stratified_split(y, cfg.training.val_fraction,
                                      cfg.training.test_fraction, cfg.training.seed)
        idx = {"train": tr, "val": va, "test": te}[args.split]
    metrics = evaluate(model, x[idx], y[idx])
    storage.write_json(os.path.join(out, "eval.json"),
                       {"split": args.split, "metrics": metrics,
                        "class_names": ds.class_names})
    write_csv(os.path.join(out, "confusion_matrix.csv"),
              ["true\\pred", *ds.class_names],
              [[ds.class_names[i], *row]
               for i, row in enumerate(metrics["confusion_matrix"])])
    log_event("evaluated", split=args.split, accuracy=metrics["accuracy"])
    print(f"eval[{args.split}] accuracy {metrics['accuracy']:.4f}, "
          f"macro F1 {metrics['macro_f1']:.4f} over {idx.size} samples")
    return 0


def cmd_report(args) -> int:
    out = resolve_output_dir(args.out)
    summary = build_report(args.run_dirs, out)
    log_event("report_written", out=out, runs=list(summary["runs"]))
    print(f"report over {len(summary['runs'])} runs -> {out} "
          f"({len(summary['figures'])} figures)")
    for name, run in summary["runs"].items():
        m = run["metrics"]
        print(f"  {name}: acc={m['accuracy']:.4f} P={m['macro_precision']:.4f} "
              f"R={m['macro_recall']:.4f} F1={m['macro_f1']:.4f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wallsense",
        description="Through-wall CSI simulation, surface optimization, and "
                    "activity classification")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override the command's primary seed")
        p.add_argument("--out", help=f"output directory (default $WALLSENSE_OUT or ./runs)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent trials")

    p = sub.add_parser("gen-data", help="synthesize labeled CSI datasets")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("ris-optimize", help="greedy surface configuration search")
    common(p)
    p.set_defaults(func=cmd_ris_optimize)

    p = sub.add_parser("preprocess", help="amplitude + low-pass + normalize")
    common(p)
    p.add_argument("input", help="CSI dataset container")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a classifier on a feature container")
    common(p)
    p.add_argument("features", help="feature container from preprocess")
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a feature container")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("features")
    p.add_argument("--variant", choices=VARIANTS, default=None,
                   help="unused; variant comes from the checkpoint")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare runs: tables, JSON, figures")
    common(p)
    p.add_argument("run_dirs", nargs="+", help="run directories from train")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}},
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
