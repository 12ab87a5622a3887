"""Linear probing of frozen encoders and per-domain accuracy metrics.

The probe is a linear softmax classifier trained on the labeled split's
embeddings; the encoder is always frozen, so probe accuracy measures
representation quality only. Evaluation reports per-domain accuracies, the
sample-weighted overall accuracy, and the unweighted per-domain average
(they differ whenever domain sizes differ).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .contrastive import Checkpoint
from .data import DatasetBundle
from .encoder import encode
from .errors import ContractError
from .splits import UdgSplit


@dataclass
class ProbeConfig:
    """Finetuning knobs; epochs and lr default to the published recipe.

    ``seed`` is reserved: the probe starts from zeros, so training is
    deterministic without it.
    """

    epochs: int = 30
    lr: float = 1e-3
    weight_decay: float = 1e-4
    seed: int = 0


@dataclass
class LinearProbe:
    weight: np.ndarray
    bias: np.ndarray

    def logits(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.weight + self.bias

    def predict(self, z) -> np.ndarray:
        # np.argmax breaks ties toward the lowest category index
        return np.argmax(self.logits(z), axis=1)


@dataclass
class Metrics:
    """Per-domain accuracy plus the micro (overall) and macro (average) views."""

    per_domain: dict
    counts: dict
    overall: float
    average: float

    @property
    def n_samples(self) -> int:
        return sum(self.counts.values())


def train_linear_probe(checkpoint: Checkpoint, bundle: DatasetBundle, split: UdgSplit,
                       config: ProbeConfig) -> LinearProbe:
    """Full-batch gradient descent on softmax cross-entropy, probe params only.

    The encoder inside ``checkpoint`` is used for embeddings and never
    updated. The probe starts at zeros (zero epochs means uniform
    predictions).
    """
    idx = np.asarray(split.finetune_labeled, dtype=np.int64)
    if len(idx) == 0:
        raise ContractError("finetune set is empty")
    z = encode(checkpoint.query, bundle.features[idx])
    y = bundle.category_labels[idx]
    n_classes = len(bundle.category_names)

    w = np.zeros((z.shape[1], n_classes))
    b = np.zeros(n_classes)
    for _ in range(config.epochs):
        wt = tt.Tensor(w, requires_grad=True)
        bt = tt.Tensor(b, requires_grad=True)
        loss = tt.cross_entropy(tt.matmul(tt.Tensor(z), wt) + bt, y)
        grads = tt.backward(loss)
        w = w - config.lr * (grads[wt] + config.weight_decay * w)
        b = b - config.lr * grads[bt]
    return LinearProbe(w, b)


def compute_metrics(predictions, categories, domains) -> Metrics:
    """Metrics from parallel prediction/label/domain arrays."""
    predictions = np.asarray(predictions)
    categories = np.asarray(categories)
    domains = np.asarray(domains)
    per_domain, counts = {}, {}
    for d in sorted(set(domains.tolist())):
        mask = domains == d
        counts[int(d)] = int(mask.sum())
        per_domain[int(d)] = float(np.mean(predictions[mask] == categories[mask]))
    total = sum(counts.values())
    overall = sum(counts[d] * per_domain[d] for d in per_domain) / total if total else 0.0
    average = float(np.mean(list(per_domain.values()))) if per_domain else 0.0
    return Metrics(per_domain, counts, float(overall), average)


def evaluate(checkpoint: Checkpoint, probe: LinearProbe, bundle: DatasetBundle,
             split: UdgSplit) -> Metrics:
    """Frozen-encoder evaluation on the test split. Pure: no state changes."""
    idx = np.asarray(split.test, dtype=np.int64)
    if len(idx) == 0:
        raise ContractError("test set is empty")
    z = encode(checkpoint.query, bundle.features[idx])
    pred = probe.predict(z)
    return compute_metrics(pred, bundle.category_labels[idx], bundle.domain_labels[idx])


def training_accuracy(checkpoint: Checkpoint, probe: LinearProbe, bundle: DatasetBundle,
                      split: UdgSplit) -> float:
    idx = np.asarray(split.finetune_labeled, dtype=np.int64)
    z = encode(checkpoint.query, bundle.features[idx])
    return float(np.mean(probe.predict(z) == bundle.category_labels[idx]))


def metrics_rows(metrics: Metrics, variant: str, seed: int):
    """CSV rows: one per domain plus overall and average summary rows."""
    rows = [(variant, seed, f"domain{d}", metrics.counts[d], metrics.per_domain[d])
            for d in sorted(metrics.per_domain)]
    rows.append((variant, seed, "overall", metrics.n_samples, metrics.overall))
    rows.append((variant, seed, "average", metrics.n_samples, metrics.average))
    return rows


def write_metrics_csv(rows, path) -> None:
    """``variant,seed,domain,n,accuracy`` rows; floats via repr for determinism."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,seed,domain,n,accuracy\n")
        for variant, seed, domain, n, acc in rows:
            fh.write(f"{variant},{seed},{domain},{n},{acc!r}\n")
