"""Training loop with per-epoch checkpoints, tune-set selection, and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .augment import AugmentationConfig, augment
from .checkpoint import Checkpoint
from .errors import DivergenceError, InvalidConfigError, ShapeError
from .nn import MlpRegressor, SgdMomentum, backward, mse_loss, predict, sgd_step
from .seeding import rng_for
from .tiles import ImageTile, flatten

log = logging.getLogger(__name__)

DEFAULT_LEARNING_RATE = {"night": 1e-7, "day": 1e-9}


@dataclass(frozen=True)
class TrainConfig:
    modality: str = "night"
    learning_rate: float | None = None  # None -> modality default
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 32
    augmentation: AugmentationConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.modality not in DEFAULT_LEARNING_RATE:
            raise InvalidConfigError(f"modality must be day or night, got {self.modality!r}")
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", DEFAULT_LEARNING_RATE[self.modality])
        # zero is accepted so that "no update" runs can be expressed
        if not (self.learning_rate >= 0 and np.isfinite(self.learning_rate)):
            raise InvalidConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise InvalidConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise InvalidConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(eq=False)
class ExampleSet:
    """Parallel ids, tiles and labels. Features are flattened lazily and cached."""

    ids: list[str]
    tiles: list[ImageTile]
    labels: np.ndarray
    _features: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.ids = list(self.ids)
        self.tiles = list(self.tiles)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if not (len(self.ids) == len(self.tiles) == self.labels.shape[0]):
            raise ShapeError("ids, tiles and labels differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def kinds(self) -> set[str]:
        return {t.kind for t in self.tiles}

    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = np.stack([flatten(t) for t in self.tiles]) if self.tiles else np.zeros((0, 0))
        return self._features


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    checkpoint: Checkpoint
    tune_rmse: float
    train_loss: float


@dataclass(frozen=True)
class TrainResult:
    epochs: list[EpochRecord]
    initial_tune_rmse: float
    best_epoch: int  # 1-based

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]


@dataclass(frozen=True)
class EvalResult:
    rmse: float
    ci_low: float
    ci_high: float
    n_examples: int
    n_resamples: int = 1000
    seed: int = 0


def rmse(preds, targets) -> float:
    return float(np.sqrt(mse_loss(preds, targets)))


def bootstrap_ci(
    preds,
    targets,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for RMSE, resampling examples with replacement."""
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.size} preds vs {t.size} targets")
    if p.size == 0:
        raise ShapeError("bootstrap of an empty sample")
    if n_resamples < 1 or not 0 < level < 1:
        raise InvalidConfigError("need n_resamples >= 1 and level in (0, 1)")
    sq = (p - t) ** 2
    n = sq.size
    rng = np.random.default_rng(seed)
    stats = np.empty(n_resamples)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, n_resamples, chunk):
        stop = min(n_resamples, start + chunk)
        idx = rng.integers(0, n, size=(stop - start, n))
        stats[start:stop] = np.sqrt(sq[idx].mean(axis=1))
    tail = (1.0 - level) / 2.0 * 100.0
    low, high = np.percentile(stats, [tail, 100.0 - tail])
    return float(low), float(high)


def select_best(tune_rmses: Sequence[float]) -> int:
    """1-based epoch of the smallest tune RMSE; earliest epoch wins ties."""
    if not tune_rmses:
        raise InvalidConfigError("no epochs to select from")
    return int(np.argmin(np.asarray(tune_rmses, dtype=np.float64))) + 1


def _check_set(name: str, data: ExampleSet, modality: str, width: int) -> None:
    if len(data) == 0:
        raise InvalidConfigError(f"{name} set is empty")
    if data.kinds != {modality}:
        raise InvalidConfigError(f"{name} set holds {sorted(data.kinds)} tiles, expected {modality}")
    if data.features().shape[1] != width:
        raise ShapeError(f"{name} features have width {data.features().shape[1]}, model expects {width}")


def train(
    model: MlpRegressor,
    train_set: ExampleSet,
    tune_set: ExampleSet,
    config: TrainConfig,
) -> TrainResult:
    """Fit ``model`` (a copy; the argument is untouched) and keep one checkpoint per epoch.

    Each epoch visits the training set in a seeded shuffled order in
    mini-batches. Augmentation, when configured, is drawn per example from
    a stream keyed by (augmentation seed, example id, epoch) and touches
    only the training tiles.
    """
    _check_set("train", train_set, config.modality, model.input_dim)
    _check_set("tune", tune_set, config.modality, model.input_dim)

    model = model.copy()
    params = model.parameters()
    opt = SgdMomentum.for_params(params, config.learning_rate, config.momentum)
    y = train_set.labels
    n = len(train_set)
    x_tune = tune_set.features()
    initial = rmse(predict(model, x_tune), tune_set.labels)
    order_rng = rng_for(config.seed, "batch-order")
    aug = config.augmentation

    records = []
    for epoch in range(1, config.epochs + 1):
        perm = order_rng.permutation(n)
        if aug is not None:
            x = np.stack([
                flatten(augment(tile, aug, rng_for(aug.seed, ex_id, epoch)))
                for ex_id, tile in zip(train_set.ids, train_set.tiles)
            ])
        else:
            x = train_set.features()
        total = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                loss, grads = backward(model, x[idx], y[idx])
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                sgd_step(opt, params, grads)
                total += loss * idx.size
        # checkpoints hold float32, so values beyond its range count as divergence
        if not all(np.all(np.abs(p) <= np.finfo(np.float32).max) for p in params):
            raise DivergenceError(epoch, float("nan"))
        snap = Checkpoint.from_model(model, epoch)
        tune = rmse(predict(snap.to_model(), x_tune), tune_set.labels)
        records.append(EpochRecord(epoch, replace(snap, tune_rmse=tune), tune, total / n))
        log.debug("epoch %d train_loss=%.6f tune_rmse=%.6f", epoch, total / n, tune)

    best = select_best([r.tune_rmse for r in records])
    return TrainResult(records, initial, best)


def evaluate(
    model: MlpRegressor | Checkpoint,
    test_set: ExampleSet,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> EvalResult:
    """Test-set RMSE with a bootstrap confidence interval. Tiles are used as-is."""
    if isinstance(model, Checkpoint):
        model = model.to_model()
    if len(test_set) == 0:
        raise ShapeError("empty test set")
    x = test_set.features()
    if x.shape[1] != model.input_dim:
        raise ShapeError(f"test features have width {x.shape[1]}, checkpoint expects {model.input_dim}")
    preds = predict(model, x)
    low, high = bootstrap_ci(preds, test_set.labels, n_resamples, level, seed)
    return EvalResult(rmse(preds, test_set.labels), low, high, len(test_set), n_resamples, seed)


def eval_csv_row(name: str, result: EvalResult) -> str:
    return f"{name},{result.rmse!r},{result.ci_low!r},{result.ci_high!r},{result.n_examples},{result.seed}"
