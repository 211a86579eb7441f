"""Experiment presets, the end-to-end runner, and result reports.

Sampling is keyed so that comparisons are paired: configs sharing a seed
and continent filter draw train subsets as prefixes of one permutation
(800 within 1600 within 2400) and use the same test cities.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

from .augment import AugmentationConfig
from .checkpoint import Checkpoint
from .errors import DataShortageError, InvalidConfigError
from .geo import CONTINENTS
from .manifest import DatasetManifest, ManifestRow
from .nn import DEFAULT_HIDDEN, init_model
from .seeding import derive_seed, rng_for
from .training import EvalResult, ExampleSet, TrainConfig, TrainResult, evaluate, train

TRAIN_OVERRIDE_KEYS = ("learning_rate", "momentum", "epochs", "batch_size", "hidden_dims")
AUGMENT_OVERRIDE_KEYS = tuple(
    f.name for f in fields(AugmentationConfig) if f.name != "seed"
)

_CONTINENT_PRESETS = {
    "continent-africa-asia": ("Africa", "Asia", 800),
    # this preset trains on 672 images, matching the smaller Europe train split
    "continent-europe-africa": ("Europe", "Africa", 672),
    "continent-asia-europe": ("Asia", "Europe", 800),
}

PRESET_NAMES = (
    "baseline-night",
    "baseline-day",
    *(f"quantity-{m}-{n}" for m in ("night", "day") for n in (800, 1600, 2400)),
    "aug-night",
    "aug-day",
    *_CONTINENT_PRESETS,
)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    modality: str = "night"
    train_size: int = 800
    test_size: int = 100
    augmentation: bool = False
    train_continent: str | None = None
    test_continent: str | None = None
    seed: int = 0
    train_overrides: Mapping[str, object] = field(default_factory=dict)
    augment_overrides: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name or "," in self.name:
            raise InvalidConfigError(f"experiment name must be nonempty without commas: {self.name!r}")
        if self.modality not in ("day", "night"):
            raise InvalidConfigError(f"modality must be day or night, got {self.modality!r}")
        if self.train_size < 1 or self.test_size < 1:
            raise InvalidConfigError("train_size and test_size must be >= 1")
        for c in (self.train_continent, self.test_continent):
            if c is not None and c not in CONTINENTS:
                raise InvalidConfigError(f"unknown continent {c!r}")
        if (self.train_continent or self.test_continent) and self.modality != "night":
            raise InvalidConfigError("continent experiments are defined for night imagery only")
        bad = set(self.train_overrides) - set(TRAIN_OVERRIDE_KEYS)
        if bad:
            raise InvalidConfigError(f"unknown train override(s): {sorted(bad)}")
        bad = set(self.augment_overrides) - set(AUGMENT_OVERRIDE_KEYS)
        if bad:
            raise InvalidConfigError(f"unknown augmentation override(s): {sorted(bad)}")

    def train_config(self) -> TrainConfig:
        overrides = {k: v for k, v in self.train_overrides.items() if k != "hidden_dims"}
        aug = None
        if self.augmentation:
            aug = AugmentationConfig(seed=derive_seed(self.seed, "augment"), **self.augment_overrides)
        return TrainConfig(
            modality=self.modality,
            augmentation=aug,
            seed=derive_seed(self.seed, "train"),
            **overrides,
        )

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(self.train_overrides.get("hidden_dims", DEFAULT_HIDDEN))


def preset(name: str, seed: int = 0, **train_overrides) -> ExperimentConfig:
    """Experiment configuration for a named preset."""
    if name not in PRESET_NAMES:
        raise InvalidConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    common = dict(name=name, seed=seed, train_overrides=dict(train_overrides))
    if name.startswith("baseline-"):
        return ExperimentConfig(modality=name.split("-")[1], **common)
    if name.startswith("quantity-"):
        _, modality, size = name.split("-")
        return ExperimentConfig(modality=modality, train_size=int(size), **common)
    if name.startswith("aug-"):
        return ExperimentConfig(modality=name.split("-")[1], augmentation=True, **common)
    train_c, test_c, size = _CONTINENT_PRESETS[name]
    return ExperimentConfig(
        modality="night", train_size=size, train_continent=train_c, test_continent=test_c, **common
    )


def replicates(config: ExperimentConfig, count: int) -> list[ExperimentConfig]:
    """``count`` copies of ``config`` with consecutive seeds, starting at its own."""
    if count < 1:
        raise InvalidConfigError(f"replicate count must be >= 1, got {count}")
    return [replace(config, seed=config.seed + k) for k in range(count)]


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    eval: EvalResult
    seconds: float | None
    selected_epoch: int
    train_ids: tuple[str, ...] = ()
    test_ids: tuple[str, ...] = ()
    checkpoint: Checkpoint | None = None
    train_result: TrainResult | None = None


def _sample(rows: list[ManifestRow], k: int, seed: int, *keys) -> list[ManifestRow]:
    rows = sorted(rows, key=lambda r: r.id)
    order = rng_for(seed, *keys).permutation(len(rows))
    return [rows[i] for i in order[:k]]


def sample_splits(config: ExperimentConfig, manifest: DatasetManifest):
    """(train, tune, test) manifest rows for ``config``."""
    train_pool = manifest.select("train", config.train_continent)
    test_pool = manifest.select("test", config.test_continent)
    tune_rows = sorted(manifest.select("tune", config.train_continent), key=lambda r: r.id)
    if len(train_pool) < config.train_size or len(test_pool) < config.test_size or not tune_rows:
        raise DataShortageError(
            f"experiment {config.name!r} needs {config.train_size} train / {config.test_size} test "
            "examples and a nonempty tune split",
            {"train": len(train_pool), "tune": len(tune_rows), "test": len(test_pool)},
        )
    train_rows = _sample(train_pool, config.train_size, config.seed, "train-sample",
                         config.train_continent or "*")
    test_rows = _sample(test_pool, config.test_size, config.seed, "test-sample",
                        config.test_continent or "*")
    return train_rows, tune_rows, test_rows


def load_examples(manifest: DatasetManifest, rows: Sequence[ManifestRow], kind: str) -> ExampleSet:
    return ExampleSet(
        [r.id for r in rows],
        [manifest.load_tile(r, kind) for r in rows],
        [r.norm_wealth for r in rows],
    )


def run_experiment(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    n_resamples: int = 1000,
) -> ExperimentResult:
    """Sample, train, select the best tune-RMSE checkpoint, and evaluate on test."""
    t0 = time.perf_counter()
    train_rows, tune_rows, test_rows = sample_splits(config, manifest)
    kind = config.modality
    train_set = load_examples(manifest, train_rows, kind)
    tune_set = load_examples(manifest, tune_rows, kind)
    test_set = load_examples(manifest, test_rows, kind)

    model = init_model(
        train_set.features().shape[1], config.hidden_dims, seed=derive_seed(config.seed, "init")
    )
    fit = train(model, train_set, tune_set, config.train_config())
    best = fit.best.checkpoint
    result = evaluate(best, test_set, n_resamples, seed=derive_seed(config.seed, "bootstrap") % 2**32)
    return ExperimentResult(
        config,
        result,
        time.perf_counter() - t0,
        fit.best_epoch,
        tuple(train_set.ids),
        tuple(test_set.ids),
        best,
        fit,
    )


# --- reports ----------------------------------------------------------------

RESULT_COLUMNS = (
    "name", "modality", "train_size", "test_size", "augmented", "train_continent",
    "test_continent", "rmse", "ci_low", "ci_high", "selected_epoch", "seed", "seconds",
)


def format_rmse_ci(rmse: float, low: float, high: float) -> str:
    return f"{rmse:.3f} ({low:.3f}-{high:.3f})"


def _sorted(results: Sequence[ExperimentResult]) -> list[ExperimentResult]:
    return sorted(results, key=lambda r: (r.config.name, r.config.seed))


def results_csv(results: Sequence[ExperimentResult], include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in _sorted(results):
        c, e = r.config, r.eval
        seconds = "" if (not include_timing or r.seconds is None) else f"{r.seconds:.3f}"
        w.writerow([
            c.name, c.modality, c.train_size, c.test_size, int(c.augmentation),
            c.train_continent or "", c.test_continent or "",
            repr(e.rmse), repr(e.ci_low), repr(e.ci_high), r.selected_epoch, c.seed, seconds,
        ])
    return buf.getvalue()


def parse_results_csv(text: str) -> list[ExperimentResult]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise InvalidConfigError(f"results.csv header must be {','.join(RESULT_COLUMNS)}")
    out = []
    for row in reader:
        cfg = ExperimentConfig(
            name=row["name"],
            modality=row["modality"],
            train_size=int(row["train_size"]),
            test_size=int(row["test_size"]),
            augmentation=row["augmented"] == "1",
            train_continent=row["train_continent"] or None,
            test_continent=row["test_continent"] or None,
            seed=int(row["seed"]),
        )
        ev = EvalResult(float(row["rmse"]), float(row["ci_low"]), float(row["ci_high"]), cfg.test_size)
        seconds = float(row["seconds"]) if row["seconds"] else None
        out.append(ExperimentResult(cfg, ev, seconds, int(row["selected_epoch"])))
    return out


def display_name(config: ExperimentConfig) -> str:
    m = config.modality.capitalize()
    if config.name.startswith("baseline-"):
        return f"Baseline {m}"
    if config.name.startswith("quantity-"):
        return f"{m}, {config.train_size} images"
    if config.name.startswith("aug-"):
        return f"{m} with Augmentation"
    return config.name


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def tables_markdown(results: Sequence[ExperimentResult]) -> str:
    results = _sorted(results)
    by_prefix = lambda *p: [r for r in results if r.config.name.startswith(p)]  # noqa: E731
    ci = lambda r: format_rmse_ci(r.eval.rmse, r.eval.ci_low, r.eval.ci_high)  # noqa: E731
    night_first = lambda r: (r.config.modality != "night", r.config.train_size, r.config.name)  # noqa: E731
    out = ["# Results", ""]
    sections = [
        ("Baselines", sorted(by_prefix("baseline-"), key=night_first)),
        ("Data quantity", sorted(by_prefix("quantity-"), key=night_first)),
        # baselines appear here only as the reference for augmented runs
        ("Data augmentation", sorted(by_prefix("baseline-", "aug-") if by_prefix("aug-") else [], key=lambda r: (
            r.config.modality != "night", r.config.augmentation, r.config.name))),
    ]
    for title, rows in sections:
        if rows:
            out += [f"## {title}", ""]
            out += _table(("Experiment Name", "RMSE (95% CI)"), [(display_name(r.config), ci(r)) for r in rows])
            out.append("")
    continent = [r for r in results if r.config.train_continent or r.config.test_continent]
    if continent:
        sizes = {r.config.train_size for r in continent}
        full = max(sizes)
        rows = []
        for r in continent:
            star = "*" if r.config.train_size < full else ""
            rows.append((r.config.name, f"{r.config.train_continent or 'all'}{star}",
                         r.config.test_continent or "all", ci(r)))
        out += ["## Unseen continents", ""]
        out += _table(("Experiment Name", "Train Continent", "Test Continent", "RMSE (95% CI)"), rows)
        if len(sizes) > 1:
            small = sorted(r.config.train_size for r in continent if r.config.train_size < full)
            out += ["", f"\\* smaller train set: {', '.join(map(str, small))} images instead of {full}."]
        out.append("")
    known = {id(r) for r in by_prefix("baseline-", "quantity-", "aug-")} | {id(r) for r in continent}
    other = [r for r in results if id(r) not in known]
    if other:
        out += ["## Other", ""]
        out += _table(("Experiment Name", "RMSE (95% CI)"), [(r.config.name, ci(r)) for r in other])
        out.append("")
    return "\n".join(out)


def _curve_csv(results: Sequence[ExperimentResult]) -> tuple[str, str]:
    plain = [r for r in results if not (r.config.train_continent or r.config.test_continent)]
    q = io.StringIO()
    w = csv.writer(q, lineterminator="\n")
    w.writerow(("modality", "train_size", "rmse", "ci_low", "ci_high", "name"))
    for r in sorted((r for r in plain if not r.config.augmentation),
                    key=lambda r: (r.config.modality, r.config.train_size, r.config.name, r.config.seed)):
        w.writerow((r.config.modality, r.config.train_size, repr(r.eval.rmse),
                    repr(r.eval.ci_low), repr(r.eval.ci_high), r.config.name))
    a = io.StringIO()
    w = csv.writer(a, lineterminator="\n")
    w.writerow(("modality", "augmented", "train_size", "rmse", "ci_low", "ci_high", "name"))
    for r in sorted(plain, key=lambda r: (r.config.modality, r.config.augmentation,
                                          r.config.train_size, r.config.name, r.config.seed)):
        w.writerow((r.config.modality, int(r.config.augmentation), r.config.train_size,
                    repr(r.eval.rmse), repr(r.eval.ci_low), repr(r.eval.ci_high), r.config.name))
    return q.getvalue(), a.getvalue()


def report(results: Sequence[ExperimentResult], out_dir, include_timing: bool = True) -> list[Path]:
    """Write results.csv, tables.md and the two plot-data CSVs into ``out_dir``."""
    if not results:
        raise InvalidConfigError("no results to report")
    quantity, augmentation = _curve_csv(results)
    files = {
        "results.csv": results_csv(results, include_timing),
        "tables.md": tables_markdown(results),
        "rmse_vs_train_size.csv": quantity,
        "rmse_augmentation.csv": augmentation,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out_dir / name
        tmp = path.with_name(name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        written.append(path)
    return written
