"""End-to-end training: mini-batch Adam, evaluation metrics, ablations, sweeps.

Each batch builds one loss graph (mean cross-entropy over the batch plus the
L2 penalty counted once), backpropagates, and takes a single Adam step.
Model selection keeps the checkpoint with the best dev accuracy, earliest
epoch winning ties. Relation statistics always come from the training split
only.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import head
from .autodiff import ParameterStore
from .config import TrainConfig, load_config, save_config
from .corpus import LABELS, EmbeddingTable, Vocab, build_vocab
from .model import AspectSentimentModel
from .syntax import SdiTable, collect_sdi_stats
from .util import make_rng

# re-exported contract surface for consumers of this module
__all__ = [
    "Adam", "TrainConfig", "MetricsReport", "EpochStats", "TrainResult",
    "train", "evaluate", "metrics_from_confusion", "confusion_matrix",
    "run_ablation", "layer_sweep", "ABLATION_VARIANTS", "apply_variant",
    "split_dev", "save_checkpoint", "load_checkpoint",
    "write_epoch_log", "write_sweep_series",
]


class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, parameters: ParameterStore, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = parameters
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in parameters.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in parameters.items()}

    def step(self) -> None:
        self.t += 1
        for name, tensor in self.parameters.items():
            g = tensor.grad
            m = self._m[name] = self.beta1 * self._m[name] + (1 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            tensor.data = tensor.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# metrics

@dataclass
class MetricsReport:
    """Confusion matrix (rows = gold, columns = predicted) and derived scores."""

    confusion: np.ndarray
    acc: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float

    def as_dict(self) -> dict:
        return {
            "labels": list(LABELS),
            "confusion": self.confusion.astype(int).tolist(),
            "acc": self.acc,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "macro_f1": self.macro_f1,
        }


def confusion_matrix(gold: list[int], predicted: list[int],
                     n_classes: int = len(LABELS)) -> np.ndarray:
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted label lists differ in length")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for g, p in zip(gold, predicted):
        matrix[g, p] += 1
    return matrix


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    """Micro accuracy plus one-vs-rest precision/recall/F1 and their macro mean.

    Undefined ratios (empty class or empty prediction column) count as 0.
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    total = confusion.sum()
    acc = float(np.trace(confusion) / total) if total else 0.0
    tp = np.diag(confusion)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    return MetricsReport(confusion=confusion.astype(np.int64), acc=acc,
                         precision=precision, recall=recall, f1=f1,
                         macro_f1=float(f1.mean()))


def evaluate(model: AspectSentimentModel, samples) -> MetricsReport:
    gold = [LABELS.index(s.label) for s in samples]
    predicted = [LABELS.index(model.predict(s).predicted_label) for s in samples]
    return metrics_from_confusion(confusion_matrix(gold, predicted))


# ---------------------------------------------------------------------------
# training loop

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_acc: float
    dev_f1: float


@dataclass
class TrainResult:
    model: AspectSentimentModel          # holds the final-epoch parameters
    best_state: dict[str, np.ndarray]    # parameters at the best dev accuracy
    best_epoch: int
    best_dev_acc: float
    log: list[EpochStats]

    def restore_best(self) -> AspectSentimentModel:
        self.model.parameters.load_state_dict(self.best_state)
        return self.model


def split_dev(samples, fraction: float, seed: int):
    """Seeded holdout used when a corpus ships without a dev split."""
    if not 0 < fraction < 1:
        raise ValueError("dev fraction must be in (0, 1)")
    rng = make_rng(seed, "devsplit")
    order = rng.permutation(len(samples))
    n_dev = max(1, int(round(len(samples) * fraction)))
    dev_ids = set(order[:n_dev].tolist())
    train = [s for i, s in enumerate(samples) if i not in dev_ids]
    dev = [s for i, s in enumerate(samples) if i in dev_ids]
    return train, dev


def train(config: TrainConfig, train_samples, dev_samples=None,
          embeddings: EmbeddingTable | None = None,
          vocab: Vocab | None = None) -> TrainResult:
    """Mini-batch Adam over shuffled epochs with best-dev-accuracy selection."""
    config.validate()
    if not train_samples:
        raise ValueError("cannot train on an empty sample list")
    if dev_samples is None:
        train_samples, dev_samples = split_dev(train_samples, config.dev_fraction,
                                               config.seed)
    if vocab is None:
        vocab = build_vocab(train_samples, min_freq=config.min_freq)
    sdi = None
    if config.use_dependency and config.use_sdi_weights:
        sdi = collect_sdi_stats(train_samples, count_root=config.count_root_edges,
                                count_punct=config.count_punct_edges)
    model = AspectSentimentModel(config, vocab, sdi=sdi, embeddings=embeddings)
    optimizer = Adam(model.parameters, config.learning_rate)
    shuffle_rng = make_rng(config.seed, "shuffle")

    log: list[EpochStats] = []
    best_state = model.parameters.state_dict()
    best_epoch = 0
    best_acc = -1.0
    n = len(train_samples)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_samples[i] for i in order[start:start + config.batch_size]]
            model.parameters.zero_grads()
            ce_sum = None
            for sample in batch:
                ce = model.cross_entropy(sample)
                ce_sum = ce if ce_sum is None else ad.add(ce_sum, ce)
            loss = ad.scale(ce_sum, 1.0 / len(batch))
            if config.lambda_l2 != 0.0:
                loss = ad.add(loss, ad.scale(head.l2_penalty(model.parameters),
                                             config.lambda_l2))
            ad.backward(loss)
            optimizer.step()
            total_loss += loss.item() * len(batch)
        dev_metrics = evaluate(model, dev_samples) if dev_samples else None
        stats = EpochStats(
            epoch=epoch,
            train_loss=total_loss / n,
            dev_acc=dev_metrics.acc if dev_metrics else float("nan"),
            dev_f1=dev_metrics.macro_f1 if dev_metrics else float("nan"),
        )
        log.append(stats)
        if dev_metrics and dev_metrics.acc > best_acc:
            best_acc = dev_metrics.acc
            best_epoch = epoch
            best_state = model.parameters.state_dict()
    if not dev_samples:
        best_state = model.parameters.state_dict()
        best_epoch = len(log)
        best_acc = float("nan")
    return TrainResult(model=model, best_state=best_state, best_epoch=best_epoch,
                       best_dev_acc=best_acc, log=log)


def write_epoch_log(path, log: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch\ttrain_loss\tdev_acc\tdev_f1\n")
        for e in log:
            f.write(f"{e.epoch}\t{e.train_loss!r}\t{e.dev_acc!r}\t{e.dev_f1!r}\n")


# ---------------------------------------------------------------------------
# ablations and the layer sweep

ABLATION_VARIANTS = {
    "full": {},
    "no_dependency": {"use_dependency": False},
    "no_edge_weights": {"use_sdi_weights": False},
    "no_bidirectional": {"use_bidirectional_gcn": False},
}


def apply_variant(config: TrainConfig, variant: str) -> TrainConfig:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; "
                         f"expected one of {sorted(ABLATION_VARIANTS)}")
    return dataclasses.replace(config, **ABLATION_VARIANTS[variant])


def run_ablation(config: TrainConfig, train_samples, eval_samples,
                 dev_samples=None, variants=None) -> dict[str, MetricsReport]:
    """Train every variant from the same seed and score it on the eval split."""
    results: dict[str, MetricsReport] = {}
    for variant in (variants or list(ABLATION_VARIANTS)):
        variant_config = apply_variant(config, variant)
        result = train(variant_config, list(train_samples), dev_samples)
        results[variant] = evaluate(result.restore_best(), eval_samples)
    return results


@dataclass
class SweepPoint:
    gcn_layers: int
    acc: float
    macro_f1: float


def layer_sweep(config: TrainConfig, train_samples, eval_samples,
                k_range=None, dev_samples=None) -> list[SweepPoint]:
    """Train one model per layer count and collect plot-ready scores."""
    points = []
    for k in (k_range if k_range is not None else config.layer_sweep_range):
        k_config = dataclasses.replace(config, gcn_layers=int(k))
        result = train(k_config, list(train_samples), dev_samples)
        metrics = evaluate(result.restore_best(), eval_samples)
        points.append(SweepPoint(gcn_layers=int(k), acc=metrics.acc,
                                 macro_f1=metrics.macro_f1))
    if not points:
        raise ValueError("layer sweep needs a non-empty range")
    return points


def write_sweep_series(path, points: list[SweepPoint]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("gcn_layers\tacc\tmacro_f1\n")
        for p in points:
            f.write(f"{p.gcn_layers}\t{p.acc!r}\t{p.macro_f1!r}\n")


# ---------------------------------------------------------------------------
# checkpoints: parameters + vocabulary + relation statistics + config

PARAMS_FILE = "params.tensors"
VOCAB_FILE = "vocab.txt"
SDI_FILE = "sdi.txt"
CONFIG_FILE = "config.txt"


def save_checkpoint(directory, model: AspectSentimentModel,
                    state: dict[str, np.ndarray] | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    ad.save_tensor_file(os.path.join(directory, PARAMS_FILE),
                        state if state is not None else model.parameters.state_dict())
    model.vocab.save(os.path.join(directory, VOCAB_FILE))
    save_config(os.path.join(directory, CONFIG_FILE), model.config)
    if model.sdi is not None:
        model.sdi.save(os.path.join(directory, SDI_FILE))


def load_checkpoint(directory) -> AspectSentimentModel:
    config = load_config(os.path.join(directory, CONFIG_FILE))
    vocab = Vocab.load(os.path.join(directory, VOCAB_FILE))
    sdi_path = os.path.join(directory, SDI_FILE)
    sdi = SdiTable.load(sdi_path) if os.path.exists(sdi_path) else None
    model = AspectSentimentModel(config, vocab, sdi=sdi)
    model.parameters.load_state_dict(
        ad.load_tensor_file(os.path.join(directory, PARAMS_FILE)))
    return model


def predictions_to_jsonl(path, model: AspectSentimentModel, samples) -> None:
    """One JSON record per sample: class probabilities, predicted and gold labels."""
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            record = model.predict(sample).as_record(gold_label=sample.label)
            f.write(json.dumps(record) + "\n")
