"""Contrastive pretraining with domain-weighted negative mixtures.

Two objectives over unit-norm embeddings:

* the plain temperature-scaled positive-vs-negatives loss against one flat
  bank of negatives, and
* the domain-weighted mixture loss, where each sample scores its positive
  pair against every per-domain negative bank separately and the resulting
  per-domain probabilities are mixed with the sample's domain-classifier
  weights. With a confident weight row the denominator is dominated by
  same-domain negatives, so domain-identifying directions stop being useful
  for telling samples apart.

Negative banks are learnable adversaries rather than FIFO queues: after each
descent step on the encoder they take a gradient *ascent* step and are
re-projected onto the unit sphere. The key encoder is a momentum average of
the query encoder and never receives gradient. Everything inside one step
lives on a single tape, rebuilt per step.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .data import AugmentSpec, DatasetBundle, make_views
from .domainclf import DomainWeighter, domain_weights
from .encoder import (
    EncoderParams,
    ema_update,
    encode,
    forward,
    init_params,
    params_from_bytes,
    params_to_bytes,
)
from .errors import ContractError, FormatError, ShapeError
from .splits import UdgSplit

CKPT_MAGIC = b"UDGC"
VARIANTS = ("random_init", "infonce", "diul")

SIMPLEX_TOL = 1e-9
BANK_NORM_TOL = 1e-10


@dataclass
class NegativeBank:
    """Per-domain sets of unit-norm negative embeddings."""

    entries: dict
    eta: float = 3.0

    def __post_init__(self):
        self.entries = {int(d): np.asarray(q, dtype=np.float64) for d, q in self.entries.items()}

    @property
    def domain_order(self):
        return tuple(sorted(self.entries))

    def stacked(self) -> np.ndarray:
        """All entries as one flat bank, in domain order."""
        return np.concatenate([self.entries[d] for d in self.domain_order])

    def copy(self) -> "NegativeBank":
        return NegativeBank({d: q.copy() for d, q in self.entries.items()}, self.eta)

    def norms_ok(self, tol=BANK_NORM_TOL) -> bool:
        return all(np.allclose(np.linalg.norm(q, axis=1), 1.0, atol=tol)
                   for q in self.entries.values() if len(q))


def init_banks(domain_ids, size: int, feature_dim: int, seed, eta: float = 3.0) -> NegativeBank:
    """Random unit vectors, ``size`` per domain."""
    rng = np.random.default_rng(seed)
    entries = {}
    for d in sorted(int(x) for x in domain_ids):
        q = rng.normal(size=(size, feature_dim))
        entries[d] = q / np.linalg.norm(q, axis=1, keepdims=True)
    return NegativeBank(entries, eta)


def _check_tau(tau):
    if not tau > 0:
        raise ContractError("temperature must be positive")


def _check_simplex(w, n_cols):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != n_cols:
        raise ShapeError(f"weights must be batch x {n_cols}, got {w.shape}")
    if np.any(w < -SIMPLEX_TOL) or np.any(np.abs(w.sum(axis=1) - 1.0) > SIMPLEX_TOL):
        raise ContractError("weight rows must lie on the probability simplex")
    return np.maximum(w, 0.0)


def _pos_logits(f: tt.Tensor, v: tt.Tensor, tau: float) -> tt.Tensor:
    return tt.scale(tt.tsum(tt.mul(f, v), axis=1), 1.0 / tau)


def info_nce_loss(f, v, bank, tau: float) -> tt.Tensor:
    """Positive-pair log-softmax against one flat bank of negatives.

    ``f`` (queries) and ``v`` (keys) are batch x d with unit rows; ``bank``
    is K x d and may be empty. Differentiable w.r.t. all three.
    """
    _check_tau(tau)
    f, v = tt._as_tensor(f), tt._as_tensor(v)
    if f.data.shape != v.data.shape or f.data.ndim != 2:
        raise ShapeError(f"queries and keys must share batch x d shape, got {f.data.shape} vs {v.data.shape}")
    pos = _pos_logits(f, v, tau)
    bank = tt._as_tensor(bank)
    b = f.data.shape[0]
    if bank.data.size == 0:
        lse = pos
    else:
        neg = tt.scale(tt.matmul(f, tt.transpose(bank)), 1.0 / tau)
        lse = tt.log_sum_exp(tt.concat([tt.reshape(pos, (b, 1)), neg], axis=1))
    return tt.tmean(tt.sub(lse, pos))


def _bank_items(banks):
    """Ordered (domain, tensor) pairs from a NegativeBank or a plain mapping.

    Mapping values that are already tensors keep their tape, so callers can
    request gradients w.r.t. individual bank entries.
    """
    entries = banks.entries if isinstance(banks, NegativeBank) else banks
    return [(d, tt._as_tensor(entries[d])) for d in sorted(entries)]


def _per_domain_log_probs(f, pos, bank_items, tau):
    """Columns of log P(positive | domain d) for each domain's bank."""
    b = f.data.shape[0]
    cols = []
    for _, q in bank_items:
        if q.data.size == 0:
            cols.append(tt.reshape(tt.scale(pos, 0.0), (b, 1)))
            continue
        neg = tt.scale(tt.matmul(f, tt.transpose(q)), 1.0 / tau)
        lse = tt.log_sum_exp(tt.concat([tt.reshape(pos, (b, 1)), neg], axis=1))
        cols.append(tt.reshape(tt.sub(pos, lse), (b, 1)))
    return tt.concat(cols, axis=1)


def diul_loss(f, v, banks, w, tau: float) -> tt.Tensor:
    """Domain-weighted mixture of the per-domain contrastive probabilities.

    ``banks`` is a NegativeBank or a {domain: entries} mapping (entries may
    be taped tensors). ``w`` rows (batch x n_domains, columns in ascending
    domain order) must lie on the probability simplex and are treated as
    constants: gradients flow to ``f``, ``v`` and every bank entry, never
    into ``w``. The mixture is evaluated in log space, so zero weights and
    extreme logits are safe.
    """
    _check_tau(tau)
    f, v = tt._as_tensor(f), tt._as_tensor(v)
    if f.data.shape != v.data.shape or f.data.ndim != 2:
        raise ShapeError(f"queries and keys must share batch x d shape, got {f.data.shape} vs {v.data.shape}")
    items = _bank_items(banks)
    w = _check_simplex(w, len(items))
    pos = _pos_logits(f, v, tau)
    log_p = _per_domain_log_probs(f, pos, items, tau)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    mix = tt.log_sum_exp(tt.add(log_p, tt.Tensor(log_w)))
    return tt.scale(tt.tmean(mix), -1.0)


def _ascend_bank(q, g, eta, renormalize):
    """One adversary update: +eta*g, then unit-sphere projection of moved rows."""
    if g is None or eta == 0.0:
        return q.copy()
    moved = q + eta * g
    if renormalize:
        norms = np.linalg.norm(moved, axis=1, keepdims=True)
        touched = (np.abs(g).sum(axis=1, keepdims=True) > 0) & (norms > 0)
        moved = np.where(touched, moved / np.where(norms == 0, 1.0, norms), q)
    return moved


def bank_adversarial_step(banks: NegativeBank, f, v, w, tau: float, eta: float,
                          renormalize: bool = True) -> NegativeBank:
    """Gradient-ascent update of every bank entry on the mixture loss.

    Entries move by +eta * dL/dq and are re-projected onto the unit sphere;
    rows that received an exactly-zero gradient (domains with no mixture
    weight in the batch) are left untouched bit-for-bit. ``renormalize=False``
    exposes the pre-projection state for first-order ascent checks.
    """
    bank_tensors = {d: tt.Tensor(q, requires_grad=True) for d, q in banks.entries.items()}
    loss = diul_loss(np.asarray(f, dtype=np.float64), np.asarray(v, dtype=np.float64),
                     bank_tensors, w, tau)
    grads = tt.backward(loss)
    new_entries = {d: _ascend_bank(banks.entries[d], grads.get(t), eta, renormalize)
                   for d, t in bank_tensors.items()}
    return NegativeBank(new_entries, banks.eta)


@dataclass
class PretrainConfig:
    """Knobs of the pretraining loop.

    Learning rate, weight decay and feature dimension default to the
    published recipe (0.03 / 1e-4 / 128); batch size defaults to the desk
    scale of 256 rather than the published 1024.
    """

    epochs: int = 200
    batch_size: int = 256
    lr: float = 0.03
    weight_decay: float = 1e-4
    momentum: float = 0.999
    temperature: float = 0.2
    bank_size: int = 256
    bank_lr: float = 3.0
    seed: int = 0
    hidden_sizes: tuple = (64, 64)
    feature_dim: int = 128
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    cosine_decay: bool = True
    debug: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ContractError("temperature must be positive")
        if self.lr < 0 or self.bank_lr < 0:
            raise ContractError("learning rates must be nonnegative")
        if not 0.0 <= self.momentum <= 1.0:
            raise ContractError("momentum must lie in [0, 1]")


@dataclass
class Checkpoint:
    """Immutable training snapshot: both encoders, the banks, the weighter."""

    variant: str
    query: EncoderParams
    key: EncoderParams
    banks: NegativeBank
    weighter: DomainWeighter | None = None


def pretrain(config: PretrainConfig, bundle: DatasetBundle, split: UdgSplit,
             weighter: DomainWeighter | None, variant: str):
    """Run the pretraining loop; returns (Checkpoint, per-epoch loss log).

    Per step: sample a batch, make two augmented views, embed with the query
    and key encoders, compute the variant's loss, descend the query encoder
    (weight decay, cosine-decayed lr), ascend the banks, then advance the key
    encoder by momentum averaging. Deterministic given config.seed. For
    ``variant="diul"`` the weighter must cover the pretraining domains and
    its weight rows are constants; for ``"infonce"`` it is ignored and one
    flat bank of ``bank_size * n_domains`` adversaries is used.
    """
    if variant not in ("infonce", "diul"):
        raise ContractError(f"variant must be 'infonce' or 'diul', got {variant!r}")
    idx = np.asarray(split.pretrain_unlabeled, dtype=np.int64)
    if len(idx) == 0:
        raise ContractError("pretraining set is empty")
    x_all = bundle.features[idx]
    n, p = x_all.shape

    domains_present = sorted(set(bundle.domain_labels[idx].tolist()))
    if variant == "diul":
        if weighter is None:
            raise ContractError("diul needs a trained domain weighter")
        if not set(domains_present) <= set(weighter.domain_ids):
            raise ContractError("weighter was not trained on the pretraining domains")
        w_all = domain_weights(weighter, x_all)

    ss = np.random.SeedSequence(config.seed)
    s_init, s_bank, s_loop = ss.spawn(3)
    arch = (p, *config.hidden_sizes, config.feature_dim)
    query = init_params(arch, s_init)
    key = query.copy()
    if variant == "diul":
        banks = init_banks(weighter.domain_ids, config.bank_size, config.feature_dim,
                           s_bank, eta=config.bank_lr)
    else:
        banks = init_banks([0], config.bank_size * max(1, len(domains_present)),
                           config.feature_dim, s_bank, eta=config.bank_lr)

    rng = np.random.default_rng(s_loop)
    total_steps = max(1, config.epochs * ((n + config.batch_size - 1) // config.batch_size))
    step = 0
    loss_log = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            take = perm[start:start + config.batch_size]
            v1, v2 = make_views(x_all[take], config.augment, rng)
            ws, bs = query.as_tensors()
            f = forward(ws, bs, tt.Tensor(v1))
            v = encode(key, v2)  # constant: no gradient reaches the key encoder

            bank_tensors = {d: tt.Tensor(banks.entries[d], requires_grad=True)
                            for d in banks.domain_order}
            if variant == "diul":
                w_batch = w_all[take]
                w_snapshot = w_batch.copy() if config.debug else None
                loss = diul_loss(f, v, bank_tensors, w_batch, config.temperature)
            else:
                loss = info_nce_loss(f, v, bank_tensors[0], config.temperature)

            grads = tt.backward(loss)
            if config.debug:
                expected = set(ws) | set(bs) | set(bank_tensors.values())
                assert set(grads) <= expected, "gradient reached a frozen parameter"
                if variant == "diul":
                    assert np.array_equal(w_batch, w_snapshot), "mixture weights were mutated"

            lr = config.lr
            if config.cosine_decay:
                lr = config.lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))
            new_w = [wq - lr * (grads[wt] + config.weight_decay * wq)
                     for wq, wt in zip(query.weights, ws)]
            new_b = [bq - lr * (grads[bt] + config.weight_decay * bq)
                     for bq, bt in zip(query.biases, bs)]
            query = EncoderParams(arch, new_w, new_b)

            banks = NegativeBank(
                {d: _ascend_bank(banks.entries[d], grads.get(t), config.bank_lr, True)
                 for d, t in bank_tensors.items()},
                banks.eta)
            if config.debug:
                assert banks.norms_ok(), "bank entry left the unit sphere"

            key = ema_update(key, query, config.momentum)
            epoch_losses.append(loss.item())
            step += 1
        loss_log.append((epoch, float(np.mean(epoch_losses))))

    ckpt = Checkpoint(variant=variant, query=query, key=key, banks=banks,
                      weighter=weighter if variant == "diul" else None)
    return ckpt, loss_log


def random_init_checkpoint(config: PretrainConfig, n_features: int) -> Checkpoint:
    """The no-pretraining baseline: freshly initialized encoders, empty banks."""
    ss = np.random.SeedSequence(config.seed)
    s_init, _, _ = ss.spawn(3)
    arch = (n_features, *config.hidden_sizes, config.feature_dim)
    query = init_params(arch, s_init)
    return Checkpoint("random_init", query, query.copy(),
                      NegativeBank({}, config.bank_lr), None)


# ---------------------------------------------------------------------------
# checkpoint binary: "UDGC" magic, variant string, both parameter blocks,
# bank block, optional weighter block; all little-endian, float64 payloads

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    out = [CKPT_MAGIC]
    raw = ckpt.variant.encode("utf-8")
    out.append(struct.pack("<I", len(raw)))
    out.append(raw)
    out.append(params_to_bytes(ckpt.query))
    out.append(params_to_bytes(ckpt.key))
    order = ckpt.banks.domain_order
    out.append(struct.pack("<I", len(order)))
    out.append(struct.pack("<d", ckpt.banks.eta))
    for d in order:
        q = ckpt.banks.entries[d]
        out.append(struct.pack("<III", d, q.shape[0], q.shape[1] if q.size else 0))
        out.append(q.astype("<f8").tobytes(order="C"))
    if ckpt.weighter is None:
        out.append(struct.pack("<I", 0))
    else:
        w = ckpt.weighter
        out.append(struct.pack("<I", 1))
        out.append(struct.pack("<II", w.input_dim, w.n_domains))
        out.append(struct.pack(f"<{w.n_domains}I", *w.domain_ids))
        out.append(w.weight.astype("<f8").tobytes(order="C"))
        out.append(w.bias.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    offset = 0

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=offset)
        piece = blob[offset:offset + n]
        offset += n
        return piece

    if take(4, "magic") != CKPT_MAGIC:
        raise FormatError(f"bad magic, expected {CKPT_MAGIC!r}", offset=0)
    (vlen,) = struct.unpack("<I", take(4, "variant length"))
    variant = take(vlen, "variant").decode("utf-8")
    query, offset = params_from_bytes(blob, offset)
    key, offset = params_from_bytes(blob, offset)
    (n_banks,) = struct.unpack("<I", take(4, "bank count"))
    (eta,) = struct.unpack("<d", take(8, "bank lr"))
    entries = {}
    for _ in range(n_banks):
        d, k, dim = struct.unpack("<III", take(12, "bank header"))
        q = np.frombuffer(take(8 * k * dim, "bank entries"), dtype="<f8")
        entries[d] = q.reshape(k, dim).copy() if k else np.zeros((0, dim))
    (has_weighter,) = struct.unpack("<I", take(4, "weighter flag"))
    weighter = None
    if has_weighter:
        p, nd = struct.unpack("<II", take(8, "weighter dims"))
        ids = struct.unpack(f"<{nd}I", take(4 * nd, "weighter domains"))
        w = np.frombuffer(take(8 * p * nd, "weighter weights"), dtype="<f8").reshape(p, nd).copy()
        b = np.frombuffer(take(8 * nd, "weighter bias"), dtype="<f8").copy()
        weighter = DomainWeighter(w, b, ids)
    if offset != len(blob):
        raise FormatError("trailing bytes after checkpoint payload", offset=offset)
    return Checkpoint(variant, query, key, NegativeBank(entries, eta), weighter)


def write_loss_log(log, path, variant: str, seed: int) -> None:
    """Per-epoch loss CSV: epoch,loss,variant,seed."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss,variant,seed\n")
        for epoch, loss in log:
            fh.write(f"{epoch},{loss!r},{variant},{seed}\n")
