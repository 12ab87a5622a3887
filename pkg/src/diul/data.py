"""Synthetic multi-domain data with a controllable spurious correlation.

Samples are "blob" vectors: a category one-hot block, a domain one-hot
block, and pure-noise coordinates. The ``spurious_rho`` knob ties the domain
draw to the category (rho=0 independent, rho=1 deterministic pairing), which
is the trap a domain-sensitive representation falls into on a held-out
domain. A held-out domain occupies a one-hot direction the source data never
uses.

Datasets persist in the "UDG1" binary format documented in
:func:`write_dataset`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError

MAGIC = b"UDG1"


@dataclass(frozen=True)
class BlobSpec:
    """Geometry and sampling knobs for the synthetic generator."""

    n_categories: int = 4
    n_domains_total: int = 5
    cat_dims: int = 4
    dom_dims: int = 5
    noise_dims: int = 7
    alpha_cat: float = 1.0
    gamma_dom: float = 1.0
    noise_sigma: float = 0.25
    spurious_rho: float = 0.0
    n_per_domain: int = 100

    def __post_init__(self):
        if self.n_categories < 2:
            raise ContractError("need at least 2 categories")
        if self.n_domains_total < 2:
            raise ContractError("need at least 2 domains")
        if self.cat_dims < self.n_categories:
            raise ContractError("cat_dims must cover the category one-hots")
        if self.dom_dims < self.n_domains_total:
            raise ContractError("dom_dims must cover the domain one-hots")
        if self.noise_dims < 0:
            raise ContractError("noise_dims must be nonnegative")
        if self.alpha_cat <= 0 or self.gamma_dom <= 0:
            raise ContractError("signal amplitudes must be positive")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be nonnegative")
        if not 0.0 <= self.spurious_rho <= 1.0:
            raise ContractError("spurious_rho must lie in [0, 1]")
        if self.n_per_domain < 1:
            raise ContractError("n_per_domain must be positive")

    @property
    def n_dims(self) -> int:
        return self.cat_dims + self.dom_dims + self.noise_dims


@dataclass
class DatasetBundle:
    """Features plus category/domain labels and their name tables."""

    features: np.ndarray
    category_labels: np.ndarray
    domain_labels: np.ndarray
    category_names: list[str] = field(default_factory=list)
    domain_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.category_labels = np.asarray(self.category_labels, dtype=np.int64)
        self.domain_labels = np.asarray(self.domain_labels, dtype=np.int64)
        n = self.features.shape[0]
        if self.category_labels.shape != (n,) or self.domain_labels.shape != (n,):
            raise ContractError("label arrays must match the feature row count")
        if not self.category_names:
            self.category_names = [f"cat{i}" for i in range(int(self.category_labels.max(initial=-1)) + 1)]
        if not self.domain_names:
            self.domain_names = [f"dom{i}" for i in range(int(self.domain_labels.max(initial=-1)) + 1)]
        if n and (self.category_labels.min() < 0 or self.category_labels.max() >= len(self.category_names)):
            raise ContractError("category labels out of range of the name table")
        if n and (self.domain_labels.min() < 0 or self.domain_labels.max() >= len(self.domain_names)):
            raise ContractError("domain labels out of range of the name table")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "DatasetBundle":
        """Row subset sharing the name tables."""
        idx = np.asarray(indices, dtype=np.int64)
        return DatasetBundle(
            self.features[idx],
            self.category_labels[idx],
            self.domain_labels[idx],
            list(self.category_names),
            list(self.domain_names),
        )


@dataclass(frozen=True)
class AugmentSpec:
    """Vector analogue of the usual contrastive view augmentations."""

    noise_sigma: float = 0.1
    scale_jitter: float = 0.1
    mask_fraction: float = 0.25

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be nonnegative")
        if not 0.0 <= self.scale_jitter < 1.0:
            raise ContractError("scale_jitter must lie in [0, 1)")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ContractError("mask_fraction must lie in [0, 1]")


def generate(spec: BlobSpec, domain_ids, seed: int) -> DatasetBundle:
    """Draw ``n_per_domain * len(domain_ids)`` i.i.d. samples.

    Per sample: category uniform over the categories; the domain is the
    category's paired entry of ``domain_ids`` with probability rho, else
    uniform over ``domain_ids``. The feature is alpha * onehot(category) on
    the category block, gamma * onehot(domain) on the domain block, plus
    Gaussian noise everywhere. Pure function of (spec, domain_ids, seed).
    """
    domain_ids = [int(d) for d in domain_ids]
    if not domain_ids:
        raise ContractError("domain_ids must be nonempty")
    if len(set(domain_ids)) != len(domain_ids):
        raise ContractError("domain_ids must be distinct")
    if max(domain_ids) >= spec.n_domains_total or min(domain_ids) < 0:
        raise ContractError("domain_ids must be < n_domains_total")

    rng = np.random.default_rng(seed)
    n = spec.n_per_domain * len(domain_ids)
    cats = rng.integers(0, spec.n_categories, size=n)
    paired = np.array(domain_ids)[cats % len(domain_ids)]
    uniform = rng.choice(domain_ids, size=n)
    doms = np.where(rng.random(n) < spec.spurious_rho, paired, uniform)

    x = rng.normal(0.0, 1.0, size=(n, spec.n_dims)) * spec.noise_sigma
    x[np.arange(n), cats] += spec.alpha_cat
    x[np.arange(n), spec.cat_dims + doms] += spec.gamma_dom

    cat_names = [f"cat{i}" for i in range(spec.n_categories)]
    dom_names = [f"dom{i}" for i in range(spec.n_domains_total)]
    return DatasetBundle(x, cats, doms, cat_names, dom_names)


def augment(x, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """One stochastic view of ``x``: scale jitter, additive noise, coordinate mask."""
    x = np.asarray(x, dtype=np.float64)
    u = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter)
    out = u * x
    if spec.noise_sigma > 0:
        out = out + rng.normal(0.0, spec.noise_sigma, size=x.shape)
    else:
        out = out.copy()
    p = x.shape[-1]
    n_mask = int(spec.mask_fraction * p)
    if n_mask:
        masked = rng.choice(p, size=n_mask, replace=False)
        if out.ndim == 1:
            out[masked] = 0.0
        else:
            out[:, masked] = 0.0
    return out


def make_views(batch: np.ndarray, spec: AugmentSpec, rng: np.random.Generator):
    """The two independently augmented views of a positive-pair batch."""
    v1 = np.stack([augment(row, spec, rng) for row in batch])
    v2 = np.stack([augment(row, spec, rng) for row in batch])
    return v1, v2


def concat_bundles(a: DatasetBundle, b: DatasetBundle) -> DatasetBundle:
    """Row-concatenate two bundles sharing name tables."""
    if a.category_names != b.category_names or a.domain_names != b.domain_names:
        raise ContractError("bundles disagree on name tables")
    return DatasetBundle(
        np.concatenate([a.features, b.features]),
        np.concatenate([a.category_labels, b.category_labels]),
        np.concatenate([a.domain_labels, b.domain_labels]),
        list(a.category_names),
        list(a.domain_names),
    )


# ---------------------------------------------------------------------------
# "UDG1" binary format
#
#   magic "UDG1"                                   4 bytes
#   N, p, C, D_total as little-endian uint32       16 bytes
#   category name table, domain name table         per string: uint32 length
#                                                  prefix + UTF-8 bytes
#   features, float32 little-endian, row-major     4*N*p bytes
#   category labels, uint16 little-endian          2*N bytes
#   domain labels, uint16 little-endian            2*N bytes
#
# Storage reals are 32-bit and are widened to 64-bit on load.

def write_dataset(bundle: DatasetBundle, path) -> None:
    if len(bundle.category_names) >= 2 ** 16 or len(bundle.domain_names) >= 2 ** 16:
        raise ContractError("name tables exceed uint16 label range")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", bundle.n_samples, bundle.n_dims,
                             len(bundle.category_names), len(bundle.domain_names)))
        for name in bundle.category_names + bundle.domain_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(bundle.features.astype("<f4").tobytes(order="C"))
        fh.write(bundle.category_labels.astype("<u2").tobytes())
        fh.write(bundle.domain_labels.astype("<u2").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise FormatError(f"truncated file while reading {what}", offset=self.offset)
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.read(4, what))[0]


def read_dataset(path) -> DatasetBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    magic = r.read(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    n = r.u32("sample count")
    p = r.u32("feature width")
    n_cat = r.u32("category count")
    n_dom = r.u32("domain count")
    names = []
    for i in range(n_cat + n_dom):
        ln = r.u32("name length")
        names.append(r.read(ln, "name bytes").decode("utf-8"))
    feats = np.frombuffer(r.read(4 * n * p, "features"), dtype="<f4").reshape(n, p)
    cats = np.frombuffer(r.read(2 * n, "category labels"), dtype="<u2").astype(np.int64)
    doms = np.frombuffer(r.read(2 * n, "domain labels"), dtype="<u2").astype(np.int64)
    if r.offset != len(blob):
        raise FormatError("trailing bytes after dataset payload", offset=r.offset)
    if n and (cats.max() >= n_cat or doms.max() >= n_dom):
        raise FormatError("label exceeds its name table", offset=r.offset)
    return DatasetBundle(feats.astype(np.float64), cats, doms, names[:n_cat], names[n_cat:])


def dataset_file_size(bundle: DatasetBundle) -> int:
    """Exact byte size :func:`write_dataset` will produce for ``bundle``."""
    names = bundle.category_names + bundle.domain_names
    return (
        20
        + sum(4 + len(s.encode("utf-8")) for s in names)
        + 4 * bundle.n_samples * bundle.n_dims
        + 2 * bundle.n_samples
        + 2 * bundle.n_samples
    )
