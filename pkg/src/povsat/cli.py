"""``povsat`` command line: synth-gen, split, train, eval, experiment, report, stats.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
3 data shortage.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    augmentation_config,
    experiment_config,
    read_config,
    synth_config,
    train_section,
)
from .errors import DataShortageError, InvalidConfigError, PovsatError
from .experiments import (
    PRESET_NAMES,
    load_examples,
    parse_results_csv,
    preset,
    replicates,
    report,
    results_csv,
    run_experiment,
)
from .geo import country_stats, country_stats_csv, split_by_country
from .manifest import load_manifest
from .nn import DEFAULT_HIDDEN, init_model
from .seeding import derive_seed, rng_for
from .synth import generate_world
from .training import TrainConfig, eval_csv_row, evaluate, train

log = logging.getLogger("povsat")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_SHORTAGE = 0, 1, 2, 3


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_run_manifest(out_dir: Path, argv, seed, artifacts, config_sha256=None) -> None:
    """Record how an output directory was produced, next to its artifacts."""
    doc = {
        "command": list(argv),
        "config_sha256": config_sha256,
        "seed": seed,
        "artifacts": sorted(Path(a).relative_to(out_dir).as_posix() for a in artifacts),
        "version": __version__,
    }
    _atomic_write(out_dir / "run_manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _thread_limit():
    raw = os.environ.get("POVSAT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfigError(f"POVSAT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidConfigError("POVSAT_THREADS must be >= 0")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_synth_gen(args) -> int:
    cfg_file = read_config(args.config)
    cfg = synth_config(cfg_file)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.no_jitter:
        cfg = replace(cfg, jitter=False)
    out = Path(args.out)
    manifest = generate_world(cfg, out)
    artifacts = [out / "manifest.csv"]
    artifacts += [manifest.resolve(p) for r in manifest for p in (r.night_path, r.day_path)]
    write_run_manifest(out, args.argv, cfg.seed, artifacts, cfg_file.sha256)
    print(f"wrote {len(manifest)} cities to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    assignment = split_by_country(manifest.rows, seed=derive_seed(args.seed, "split"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.with_splits(assignment).save(out)
    counts = {s: sum(1 for v in assignment.values() if v == s) for s in ("train", "tune", "test")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()) + " countries")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg_file = read_config(args.config)
    fields = train_section(cfg_file)
    seed = args.seed if args.seed is not None else int(fields.pop("seed", 0))
    fields.pop("seed", None)
    modality = str(fields.pop("modality", "night"))
    hidden = tuple(fields.pop("hidden_dims", DEFAULT_HIDDEN))
    train_size = fields.pop("train_size", None)
    aug = augmentation_config(cfg_file, derive_seed(seed, "augment"))
    try:
        tc = TrainConfig(modality=modality, augmentation=aug, seed=derive_seed(seed, "train"), **fields)
    except InvalidConfigError as exc:
        raise cfg_file.error(cfg_file.section_lines.get("train"), str(exc)) from None

    manifest = load_manifest(args.manifest)
    train_rows = sorted(manifest.select("train"), key=lambda r: r.id)
    if train_size is not None:
        if train_size > len(train_rows):
            raise DataShortageError(f"train_size={train_size} exceeds the train split",
                                    {"train": len(train_rows)})
        order = rng_for(seed, "train-sample", "*").permutation(len(train_rows))
        train_rows = [train_rows[i] for i in order[:train_size]]
    tune_rows = sorted(manifest.select("tune"), key=lambda r: r.id)
    if not train_rows or not tune_rows:
        raise DataShortageError("train and tune splits must be nonempty",
                                {"train": len(train_rows), "tune": len(tune_rows)})
    train_set = load_examples(manifest, train_rows, modality)
    tune_set = load_examples(manifest, tune_rows, modality)
    model = init_model(train_set.features().shape[1], hidden, seed=derive_seed(seed, "init"))
    fit = train(model, train_set, tune_set, tc)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    history = ["epoch,train_loss,tune_rmse,selected"]
    for rec in fit.epochs:
        path = out / f"epoch_{rec.epoch:02d}.ckpt"
        save_checkpoint(rec.checkpoint, path)
        artifacts.append(path)
        history.append(f"{rec.epoch},{rec.train_loss!r},{rec.tune_rmse!r},{int(rec.epoch == fit.best_epoch)}")
    save_checkpoint(fit.best.checkpoint, out / "best.ckpt")
    _atomic_write(out / "history.csv", "\n".join(history) + "\n")
    artifacts += [out / "best.ckpt", out / "history.csv"]
    write_run_manifest(out, args.argv, seed, artifacts, cfg_file.sha256)
    print(f"selected epoch {fit.best_epoch} (tune rmse {fit.best.tune_rmse:.4f})")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    rows = sorted(manifest.select(args.split), key=lambda r: r.id)
    if not rows:
        raise DataShortageError(f"split {args.split!r} is empty", {args.split: 0})
    data = load_examples(manifest, rows, args.modality)
    result = evaluate(ckpt, data, args.n_resamples, seed=args.seed)
    text = "experiment,rmse,ci_low,ci_high,n,seed\n" + eval_csv_row(Path(args.checkpoint).stem, result) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    seed = args.seed if args.seed is not None else 0
    config_sha = None
    if args.config:
        cfg_file = read_config(args.config)
        configs = [experiment_config(cfg_file, args.seed)]
        config_sha = cfg_file.sha256
        seed = configs[0].seed
    elif args.preset:
        configs = [preset(name, seed) for name in args.preset]
    else:
        raise InvalidConfigError("give --preset or --config")
    if args.learning_rate is not None:
        configs = [
            replace(c, train_overrides={**c.train_overrides, "learning_rate": args.learning_rate})
            for c in configs
        ]
    if args.replicates != 1:
        configs = [r for c in configs for r in replicates(c, args.replicates)]
    manifest = load_manifest(Path(args.data) / "manifest.csv")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    artifacts = []
    for cfg in configs:
        res = run_experiment(cfg, manifest, args.n_resamples)
        results.append(res)
        stem = cfg.name if args.replicates == 1 else f"{cfg.name}-seed{cfg.seed}"
        path = out / f"{stem}.ckpt"
        save_checkpoint(res.checkpoint, path)
        artifacts.append(path)
        log.info("%s: rmse %.4f (%.4f-%.4f), %.1fs", cfg.name, res.eval.rmse,
                 res.eval.ci_low, res.eval.ci_high, res.seconds)
    _atomic_write(out / "results.csv", results_csv(results, include_timing=args.timing))
    artifacts.append(out / "results.csv")
    write_run_manifest(out, args.argv, seed, artifacts, config_sha)
    for res in results:
        print(f"{res.config.name}: {res.eval.rmse:.3f} ({res.eval.ci_low:.3f}-{res.eval.ci_high:.3f})")
    return EXIT_OK


def cmd_report(args) -> int:
    root = Path(args.results)
    files = sorted(root.rglob("results.csv"))
    out = Path(args.out).resolve()
    files = [f for f in files if f.resolve().parent != out]
    if not files:
        raise InvalidConfigError(f"no results.csv found under {root}")
    results = []
    for f in files:
        results.extend(parse_results_csv(f.read_text(encoding="utf-8")))
    written = report(results, out)
    write_run_manifest(out, args.argv, None, written)
    print(f"wrote {len(written)} report files for {len(results)} experiment(s) to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest, check_files=False)
    text = country_stats_csv(country_stats(manifest.rows))
    if args.out:
        _atomic_write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="povsat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"povsat {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="generate a synthetic world")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--no-jitter", action="store_true", help="skip survey coordinate jitter")
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("split", help="reassign country-level splits")
    s.add_argument("--manifest", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="path of the rewritten manifest")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train on the train split, select on tune")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="test", choices=("train", "tune", "test"))
    s.add_argument("--modality", default="night", choices=("day", "night"))
    s.add_argument("--n-resamples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", help="run presets or a configured experiment")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", action="append", choices=PRESET_NAMES)
    g.add_argument("--config")
    s.add_argument("--data", required=True, help="directory holding manifest.csv")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--n-resamples", type=int, default=1000)
    s.add_argument("--replicates", type=int, default=1, help="runs per config with consecutive seeds")
    s.add_argument("--timing", action="store_true", help="write wall-clock seconds into results.csv")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", help="render tables and plot data from results")
    s.add_argument("--results", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("stats", help="per-country wealth statistics")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = ["povsat", *argv]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except DataShortageError as exc:
        print(f"povsat: data shortage: {exc}", file=sys.stderr)
        return EXIT_SHORTAGE
    except InvalidConfigError as exc:
        print(f"povsat: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PovsatError, OSError) as exc:
        print(f"povsat: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
