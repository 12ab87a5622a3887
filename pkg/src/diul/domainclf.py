"""Domain classifier producing the per-sample mixture weights.

A linear softmax classifier over raw features predicts which source domain a
sample came from; its probability rows are the weights that mix the
per-domain contrastive terms. Training happens before contrastive
optimization and the classifier is frozen afterwards: weight values are
treated as constants by the contrastive code and no gradient ever reaches
them. Weights are computed from raw (un-augmented) features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .data import DatasetBundle
from .errors import ContractError, ShapeError


@dataclass
class DomainClfConfig:
    epochs: int = 300
    lr: float = 0.5
    seed: int = 0


@dataclass
class DomainWeighter:
    """Linear map features -> source-domain logits, plus the id table.

    ``domain_ids`` maps dense output positions 0..D-1 back to the original
    domain labels.
    """

    weight: np.ndarray
    bias: np.ndarray
    domain_ids: tuple

    def __post_init__(self):
        self.domain_ids = tuple(int(d) for d in self.domain_ids)
        if self.weight.shape[1] != len(self.domain_ids) or self.bias.shape != (len(self.domain_ids),):
            raise ShapeError("logit count must equal the number of source domains")

    @property
    def n_domains(self) -> int:
        return len(self.domain_ids)

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0]


def _init_weighter(n_features, domain_ids, seed) -> DomainWeighter:
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (n_features + len(domain_ids)))
    w = rng.uniform(-bound, bound, size=(n_features, len(domain_ids)))
    return DomainWeighter(w, np.zeros(len(domain_ids)), tuple(domain_ids))


def train_domain_classifier(bundle: DatasetBundle, config: DomainClfConfig,
                            indices=None) -> DomainWeighter:
    """Fit the classifier by full-batch gradient descent on cross-entropy.

    ``indices`` restricts training to a subset (the pretraining rows);
    deterministic given the config seed.
    """
    idx = np.arange(bundle.n_samples) if indices is None else np.asarray(indices, dtype=np.int64)
    x = bundle.features[idx]
    doms = bundle.domain_labels[idx]
    present = sorted(set(doms.tolist()))
    if len(present) < 2:
        raise ContractError("domain classifier needs at least 2 distinct domains")
    dense = {d: i for i, d in enumerate(present)}
    targets = np.array([dense[int(d)] for d in doms])

    weighter = _init_weighter(x.shape[1], present, config.seed)
    w, b = weighter.weight, weighter.bias
    for _ in range(config.epochs):
        wt = tt.Tensor(w, requires_grad=True)
        bt = tt.Tensor(b, requires_grad=True)
        loss = tt.cross_entropy(tt.matmul(tt.Tensor(x), wt) + bt, targets)
        grads = tt.backward(loss)
        w = w - config.lr * grads[wt]
        b = b - config.lr * grads[bt]
    return DomainWeighter(w, b, tuple(present))


def domain_logits(weighter: DomainWeighter, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weighter.input_dim:
        raise ShapeError(f"expected batch x {weighter.input_dim} input, got {x.shape}")
    return x @ weighter.weight + weighter.bias


def domain_weights(weighter: DomainWeighter, x) -> np.ndarray:
    """Probability rows over source domains: softmax of the logits.

    Shift-stable, so rows land on the simplex within 1e-12 for inputs of any
    magnitude.
    """
    logits = domain_logits(weighter, x)
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def classifier_accuracy(weighter: DomainWeighter, bundle: DatasetBundle, indices=None) -> float:
    idx = np.arange(bundle.n_samples) if indices is None else np.asarray(indices, dtype=np.int64)
    logits = domain_logits(weighter, bundle.features[idx])
    pred = np.array(weighter.domain_ids)[np.argmax(logits, axis=1)]
    return float(np.mean(pred == bundle.domain_labels[idx]))
