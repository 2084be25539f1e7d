"""Seeded training loop with early stopping and per-epoch metrics."""
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .graphstore import iter_batches
from .nn.layers import cross_entropy
from .nn.model import backward, build_model, forward, prepare_batch, recalibrate_bn
from .nn.optim import AdamState, adam_step
from .tensor import counting


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    patience: int = 10
    lr: float = 1e-3
    batch_size: int = 128
    test_fraction: float = 0.2
    seed: int = 0
    bn_recalibrate: bool = True  # refresh BN statistics after every epoch

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 1 <= self.patience <= self.epochs:
            raise ValueError("patience must lie in [1, epochs]")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    seconds: float
    mult_count: int  # cumulative over the run

    def to_json(self, include_time=True):
        d = asdict(self)
        if not include_time:
            d.pop("seconds")
        return json.dumps(d, sort_keys=True)


def rng_streams(seed):
    """Independent generators for (split, init, shuffle) derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def split_dataset(records, test_fraction=0.2, seed=0):
    records = list(records)
    if not records:
        raise ValueError("cannot split an empty dataset")
    rng = rng_streams(seed)[0]
    order = rng.permutation(len(records))
    n_test = int(round(len(records) * test_fraction))
    test = [records[i] for i in order[:n_test]]
    train = [records[i] for i in order[n_test:]]
    return train, test


def train_epoch(state, opt, records, cfg, rng, epoch=0, counter_start=0):
    """One shuffled pass: forward, loss, backward, Adam.

    Only the compute (not batch assembly) is timed.
    """
    seconds = 0.0
    loss_sum = correct = seen = 0
    mults = counter_start
    for batch in iter_batches(records, cfg.batch_size, rng):
        gb = prepare_batch(batch, state.config)
        t0 = time.perf_counter()
        with counting() as c:
            logits, cache = forward(state, gb, train=True)
            loss, dlogits = cross_entropy(logits, gb.labels)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss {loss} at epoch {epoch}")
            grads = backward(state, cache, dlogits)
        adam_step(state.params, grads, opt, lr=cfg.lr)
        seconds += time.perf_counter() - t0
        mults += c.total
        g = gb.num_graphs
        loss_sum += loss * g
        correct += int((logits.argmax(1) == gb.labels).sum())
        seen += g
    return EpochMetrics(epoch, loss_sum / seen, correct / seen, float("nan"), seconds, mults)


class Evaluator:
    """Holds prepared eval batches so repeated evaluation skips assembly."""

    def __init__(self, records, config, batch_size=512):
        self.batches = [prepare_batch(b, config) for b in iter_batches(records, batch_size)]
        self.count = len(records)

    def __call__(self, state):
        if not self.count:
            return float("nan")
        correct = 0
        for gb in self.batches:
            logits, _ = forward(state, gb, train=False)
            correct += int((logits.argmax(1) == gb.labels).sum())
        return correct / self.count


def evaluate(state, records, batch_size=512):
    """Fraction of graphs whose arg-max logit equals the label (eval mode)."""
    return Evaluator(records, state.config, batch_size)(state)


@dataclass
class FitResult:
    best_state: object
    history: list
    best_epoch: int
    best_accuracy: float
    optimizer: AdamState = None  # optimizer state at the best epoch


def fit(model_cfg, train, test, cfg=TrainConfig(), on_epoch=None, state=None):
    """Train with early stopping on test accuracy and return the best state.

    Stops once ``cfg.patience`` consecutive epochs bring no strict
    improvement in validation accuracy.
    """
    _, init_rng, shuffle_rng = rng_streams(cfg.seed)
    if state is None:
        state = build_model(model_cfg, seed=int(init_rng.integers(2 ** 63)))
    opt = AdamState()
    evaluator = Evaluator(test, model_cfg)
    calib = Evaluator(train, model_cfg, cfg.batch_size).batches if cfg.bn_recalibrate else None
    history = []
    best, best_opt, best_acc, best_epoch, stale = state.copy(), AdamState(), -1.0, 0, 0
    mults = 0
    for epoch in range(1, cfg.epochs + 1):
        m = train_epoch(state, opt, train, cfg, shuffle_rng, epoch, mults)
        mults = m.mult_count
        if calib:
            recalibrate_bn(state, calib)
        m.val_accuracy = evaluator(state)
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
        if m.val_accuracy > best_acc:
            best, best_acc, best_epoch, stale = state.copy(), m.val_accuracy, epoch, 0
            best_opt = AdamState(opt.step, {k: v.copy() for k, v in opt.m.items()},
                                 {k: v.copy() for k, v in opt.v.items()})
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return FitResult(best, history, best_epoch, best_acc, best_opt)
