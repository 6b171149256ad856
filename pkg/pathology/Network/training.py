"""
Mini-batch training and the cross-validated hyperparameter grid search.

Each (learning rate, batch size) pair is trained once per fold up to the
largest epoch count in the grid; validation MCC is scored at every epoch
count the grid lists, since no schedule depends on the epoch budget.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from logzero import logger
from sklearn.model_selection import StratifiedKFold

from pathology.exceptions import NetworkError
from pathology.Metrics.metrics import ConfusionMatrix, mcc_multiclass
from pathology.Network.nnet import (AdamState, CompactResNet, adam_step, cross_entropy, cross_entropy_grad,
                                    one_hot, softmax)


@dataclass(frozen=True)
class TrainConfig:
    learning_rates: tuple = (1e-3, 1e-4, 1e-5)
    batch_sizes: tuple = (32, 64)
    epochs: tuple = (10, 20, 30)
    seed: int = 42
    folds: int = 5
    workers: int = 1

    def __post_init__(self):
        if not (self.learning_rates and self.batch_sizes and self.epochs):
            raise NetworkError("hyperparameter grid has an empty axis")
        if min(self.batch_sizes) < 1 or min(self.epochs) < 1 or min(self.learning_rates) < 0:
            raise NetworkError(f"invalid hyperparameter grid {self}")
        if self.folds < 2:
            raise NetworkError(f"cross-validation needs at least 2 folds, got {self.folds}")

    def to_dict(self):
        return {key: list(value) if isinstance(value, tuple) else value for key, value in asdict(self).items()}


@dataclass
class GridScore:
    learning_rate: float
    batch_size: int
    epochs: int
    fold_mccs: list
    mean_mcc: float

    def sort_key(self):
        # best mean MCC, then fewer epochs, smaller batch, larger learning rate
        score = round(self.mean_mcc, 12) if np.isfinite(self.mean_mcc) else -np.inf
        return (-score, self.epochs, self.batch_size, -self.learning_rate)

    def to_dict(self):
        return {
            'learning_rate': self.learning_rate,
            'batch_size': self.batch_size,
            'epochs': self.epochs,
            'fold_mccs': self.fold_mccs,
            'mean_mcc': self.mean_mcc if np.isfinite(self.mean_mcc) else None,
        }


@dataclass
class TrainResult:
    model: CompactResNet
    learning_rate: float
    batch_size: int
    epochs: int
    grid: list = field(default_factory=list)
    history: dict = field(default_factory=dict)

    def hyperparameters(self):
        return {
            'learning_rate': self.learning_rate,
            'batch_size': self.batch_size,
            'epochs': self.epochs,
            'cv_mcc': next((score.to_dict()['mean_mcc'] for score in self.grid
                            if (score.learning_rate, score.batch_size, score.epochs)
                            == (self.learning_rate, self.batch_size, self.epochs)), None),
        }


def fit(model, X, y, learning_rate, batch_size, epochs, seed=42, on_epoch=None):
    """Train in place with Adam on shuffled mini-batches; returns per-epoch mean loss."""
    if len(X) == 0:
        raise NetworkError("cannot train on an empty dataset")
    rng = np.random.default_rng([int(seed), 1])
    state = AdamState(learning_rate=learning_rate)
    targets = one_hot(y, model.num_classes)
    losses = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            index = order[start:start + batch_size]
            logits, _ = model.forward(X[index].astype(np.float64))
            probs = softmax(logits)
            total += cross_entropy(probs, targets[index]) * len(index)
            model.backward(cross_entropy_grad(probs, targets[index]))
            adam_step(state, model.parameters(), model.gradients())
        losses.append(total / len(X))
        if on_epoch is not None:
            on_epoch(epoch, model)
    return losses


def predict_proba(model, X, batch_size=64):
    if len(X) == 0:
        return np.zeros((0, model.num_classes))
    return np.concatenate([
        softmax(model.forward(X[start:start + batch_size].astype(np.float64))[0])
        for start in range(0, len(X), batch_size)
    ])


def predict(model, X, batch_size=64):
    return predict_proba(model, X, batch_size).argmax(axis=1)


def default_factory(num_classes, input_shape, widths=None, activation='relu'):
    def build(seed):
        kwargs = {'widths': tuple(widths)} if widths else {}
        return CompactResNet(num_classes, input_shape=input_shape, activation=activation, seed=seed, **kwargs)
    return build


def _folds(y, config):
    splitter = StratifiedKFold(n_splits=config.folds, shuffle=True, random_state=config.seed)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', UserWarning)
            return list(splitter.split(np.zeros(len(y)), y))
    except ValueError as exc:
        raise NetworkError(f"cannot build {config.folds} stratified folds: {exc}") from exc


def _run_fold(fold, train_index, val_index, X, y, num_classes, learning_rate, batch_size, epochs, factory, seed):
    missing = sorted(set(np.unique(y)) - set(np.unique(y[train_index])))
    if missing:
        logger.warning(f"fold {fold}: classes {missing} absent from training, fold skipped")
        return None
    model = factory(seed)
    scores = {}

    def score(epoch, trained):
        if epoch in epochs:
            cm = ConfusionMatrix.from_predictions(y[val_index], predict(trained, X[val_index]),
                                                  class_names=[str(i) for i in range(num_classes)])
            scores[epoch] = mcc_multiclass(cm)

    losses = fit(model, X[train_index], y[train_index], learning_rate, batch_size, max(epochs),
                 seed=seed + fold + 1, on_epoch=score)
    return {'scores': scores, 'losses': losses}


def train(X, y, num_classes, config=TrainConfig(), model_factory=None):
    """Grid search with stratified k-fold CV, then retrain the best combination on all data."""
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise NetworkError("cannot train on an empty dataset")
    if len(X) != len(y):
        raise NetworkError(f"{len(X)} examples but {len(y)} labels")
    if y.min() < 0 or y.max() >= num_classes:
        raise NetworkError(f"labels must lie in 0..{num_classes - 1}")
    factory = model_factory or default_factory(num_classes, X.shape[1:])
    epochs = tuple(sorted(set(config.epochs)))
    folds = _folds(y, config)

    grid, history = [], {'folds': {}}
    for learning_rate, batch_size in itertools.product(config.learning_rates, config.batch_sizes):
        def run(item):
            fold, (train_index, val_index) = item
            return _run_fold(fold, train_index, val_index, X, y, num_classes,
                             learning_rate, batch_size, epochs, factory, config.seed)

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(run, enumerate(folds)))
        else:
            results = [run(item) for item in enumerate(folds)]

        key = f"lr={learning_rate:g},batch={batch_size}"
        history['folds'][key] = [
            None if result is None else {'losses': result['losses'],
                                         'mcc': {str(e): result['scores'][e] for e in epochs}}
            for result in results
        ]
        for e in epochs:
            fold_mccs = [None if result is None else result['scores'][e] for result in results]
            valid = [m for m in fold_mccs if m is not None]
            mean = float(np.mean(valid)) if valid else float('nan')
            grid.append(GridScore(learning_rate, batch_size, e, fold_mccs, mean))
            logger.info(f"{key} epochs={e}: mean validation MCC {mean:.4f} over {len(valid)} folds")

    best = min(grid, key=GridScore.sort_key)
    if not np.isfinite(best.mean_mcc):
        logger.warning("every fold was skipped; falling back to the first grid combination")
    logger.info(f"selected lr={best.learning_rate:g} batch={best.batch_size} epochs={best.epochs} "
                f"(MCC {best.mean_mcc:.4f})")

    model = factory(config.seed)
    final_losses = fit(model, X, y, best.learning_rate, best.batch_size, best.epochs, seed=config.seed)
    history['final_losses'] = final_losses
    return TrainResult(model=model, learning_rate=best.learning_rate, batch_size=best.batch_size,
                       epochs=best.epochs, grid=grid, history=history)
