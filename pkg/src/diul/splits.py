"""Four-way data splits for unsupervised domain generalization.

A split carves a bundle (or a pretraining bundle plus an evaluation bundle)
into pretrain-unlabeled / finetune-labeled / validation / test index sets
under two hard support constraints:

  * test domains never appear in pretraining or finetuning data
    (``domain_overlap``), and
  * the test category support equals the finetune category support
    (``category_support``).

The four settings differ in how the pretraining data relates to the labeled
data: ``all_correlated`` shares both supports, ``domain_correlated`` shares
domains but uses disjoint categories, ``category_correlated`` shares
categories across disjoint domains, and ``uncorrelated`` shares neither.

The labeled pool is drawn per (domain, category) cell: ``max(1,
floor(label_fraction * cell))`` samples, so no represented category is ever
emptied; validation takes 10% per cell of that pool (floored) and the
finetune set is the remainder. All sets are pairwise disjoint, which in
``all_correlated`` means the pretraining set is the unlabeled remainder (and
is empty at label_fraction=1.0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetBundle
from .errors import ConstraintError, ContractError

SETTINGS = ("all_correlated", "domain_correlated", "category_correlated", "uncorrelated")

# stable violation codes; messages carry the human-readable constraint
DOMAIN_OVERLAP = "domain_overlap"
CATEGORY_SUPPORT = "category_support"
SETTING_DOMAIN = "setting_domain_support"
SETTING_CATEGORY = "setting_category_support"
INDEX_OVERLAP = "index_overlap"
INDEX_RANGE = "index_range"


@dataclass(frozen=True)
class SplitParams:
    """Request parameters for :func:`make_split`.

    ``finetune_domains`` defaults to ``source_domains`` and must be given
    (disjoint from them) for the category_correlated and uncorrelated
    settings, which need three pairwise-disjoint domain groups.
    """

    source_domains: tuple
    target_domains: tuple
    labeled_categories: tuple | None = None
    unlabeled_categories: tuple | None = None
    finetune_domains: tuple | None = None
    label_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.label_fraction <= 1.0:
            raise ContractError("label_fraction must lie in (0, 1]")
        if not self.source_domains or not self.target_domains:
            raise ContractError("source_domains and target_domains must be nonempty")


@dataclass
class UdgSplit:
    """Index sets of one split, plus the request that produced it."""

    setting: str
    pretrain_unlabeled: np.ndarray
    finetune_labeled: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    label_fraction: float = 1.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    two_bundles: bool = False

    def __post_init__(self):
        for name in ("pretrain_unlabeled", "finetune_labeled", "validation", "test"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.setting not in SETTINGS:
            raise ContractError(f"unknown setting {self.setting!r}")


def _as_pair(bundles):
    if isinstance(bundles, DatasetBundle):
        return bundles, bundles
    pre, ev = bundles
    return pre, ev


def _cells(bundle, indices):
    """Group ``indices`` by (domain, category), sorted for determinism."""
    groups = {}
    for i in indices:
        key = (int(bundle.domain_labels[i]), int(bundle.category_labels[i]))
        groups.setdefault(key, []).append(int(i))
    return dict(sorted(groups.items()))


def _pool(bundle, domains, categories):
    mask = np.isin(bundle.domain_labels, list(domains))
    if categories is not None:
        mask &= np.isin(bundle.category_labels, list(categories))
    return np.nonzero(mask)[0]


def make_split(bundles, setting, params: SplitParams, seed: int) -> UdgSplit:
    """Build a split satisfying every UdgSplit invariant, or raise.

    ``bundles`` is a single DatasetBundle or a (pretrain_bundle,
    eval_bundle) pair; with a pair, pretraining indices address the first
    bundle and the other three sets address the second, and domain/category
    ids are assumed to share one vocabulary across both.

    Sampling of the labeled pool is uniform without replacement per
    (domain, category) cell and deterministic given ``seed``. Infeasible
    requests raise ConstraintError naming the violated constraint.
    """
    if setting not in SETTINGS:
        raise ContractError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    pre_bundle, eval_bundle = _as_pair(bundles)
    two = pre_bundle is not eval_bundle

    source = tuple(sorted(int(d) for d in params.source_domains))
    target = tuple(sorted(int(d) for d in params.target_domains))
    finetune_domains = params.finetune_domains
    if finetune_domains is None:
        if setting in ("category_correlated", "uncorrelated"):
            raise ConstraintError(
                SETTING_DOMAIN,
                f"{setting} needs finetune_domains disjoint from source_domains")
        finetune_domains = source
    finetune_domains = tuple(sorted(int(d) for d in finetune_domains))

    all_cats = tuple(range(len(eval_bundle.category_names)))
    labeled = tuple(sorted(params.labeled_categories)) if params.labeled_categories is not None else all_cats
    unlabeled = params.unlabeled_categories
    if unlabeled is None:
        if setting in ("domain_correlated", "uncorrelated"):
            unlabeled = tuple(c for c in all_cats if c not in labeled)
        else:
            unlabeled = labeled
    unlabeled = tuple(sorted(unlabeled))

    # ---- request feasibility per setting -------------------------------
    if set(target) & (set(source) | set(finetune_domains)):
        raise ConstraintError(
            DOMAIN_OVERLAP, "target domains must be disjoint from all training domains")
    if setting in ("all_correlated", "domain_correlated"):
        if finetune_domains != source:
            raise ConstraintError(
                SETTING_DOMAIN, f"{setting} requires finetune domains equal to source domains")
    else:
        if set(finetune_domains) & set(source):
            raise ConstraintError(
                SETTING_DOMAIN, f"{setting} requires finetune domains disjoint from source domains")
    if setting in ("all_correlated", "category_correlated"):
        if set(labeled) != set(unlabeled):
            raise ConstraintError(
                SETTING_CATEGORY, f"{setting} requires equal labeled and unlabeled category sets")
    else:
        if set(labeled) & set(unlabeled):
            raise ConstraintError(
                SETTING_CATEGORY, f"{setting} requires disjoint labeled and unlabeled category sets")
    if not unlabeled:
        raise ConstraintError(SETTING_CATEGORY, "no categories left for the pretraining pool")

    # ---- pools ----------------------------------------------------------
    pretrain_pool = _pool(pre_bundle, source, unlabeled)
    labeled_pool = _pool(eval_bundle, finetune_domains, labeled)
    test_idx = _pool(eval_bundle, target, labeled)

    rng = np.random.default_rng(seed)
    chosen, val = [], []
    for _, cell in _cells(eval_bundle, labeled_pool).items():
        k = max(1, int(params.label_fraction * len(cell)))
        pick = sorted(rng.choice(cell, size=k, replace=False).tolist())
        n_val = int(0.10 * k)
        val_pick = set(rng.choice(pick, size=n_val, replace=False).tolist()) if n_val else set()
        val.extend(sorted(val_pick))
        chosen.append((pick, val_pick))
    finetune = [i for pick, val_pick in chosen for i in pick if i not in val_pick]
    labeled_all = {i for pick, _ in chosen for i in pick}

    if setting == "all_correlated" and not two:
        pretrain = np.array([i for i in pretrain_pool if i not in labeled_all], dtype=np.int64)
    else:
        pretrain = pretrain_pool

    split = UdgSplit(
        setting=setting,
        pretrain_unlabeled=pretrain,
        finetune_labeled=np.array(sorted(finetune), dtype=np.int64),
        validation=np.array(sorted(val), dtype=np.int64),
        test=test_idx,
        label_fraction=params.label_fraction,
        seed=int(seed),
        params={
            "source_domains": list(source),
            "target_domains": list(target),
            "finetune_domains": list(finetune_domains),
            "labeled_categories": list(labeled),
            "unlabeled_categories": list(unlabeled),
            "label_fraction": params.label_fraction,
        },
        two_bundles=two,
    )
    report = validate_split(split, bundles)
    if not report["ok"]:
        raise ConstraintError(report["violations"][0]["code"],
                              "infeasible request: " + report["violations"][0]["message"])
    return split


def _support(labels, indices):
    return set(int(v) for v in labels[np.asarray(indices, dtype=np.int64)]) if len(indices) else set()


def validate_split(split: UdgSplit, bundles) -> dict:
    """Check every UdgSplit invariant from scratch.

    Returns ``{"ok": bool, "violations": [{"code", "message"}, ...]}``.
    Support-equality checks involving an empty side are vacuously satisfied
    (the label_fraction=1.0 degeneracy leaves no unlabeled remainder).
    """
    pre_bundle, eval_bundle = _as_pair(bundles)
    violations = []

    def bad(code, message):
        violations.append({"code": code, "message": message})

    sets = {
        "pretrain_unlabeled": (split.pretrain_unlabeled, pre_bundle),
        "finetune_labeled": (split.finetune_labeled, eval_bundle),
        "validation": (split.validation, eval_bundle),
        "test": (split.test, eval_bundle),
    }
    for name, (idx, bundle) in sets.items():
        if len(idx) and (idx.min() < 0 or idx.max() >= bundle.n_samples):
            raise ContractError(f"{name} contains out-of-range indices")

    names = list(sets)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            idx_a, bun_a = sets[a]
            idx_b, bun_b = sets[b]
            if bun_a is bun_b and set(idx_a.tolist()) & set(idx_b.tolist()):
                bad(INDEX_OVERLAP, f"{a} and {b} share sample indices")

    d_pre = _support(pre_bundle.domain_labels, split.pretrain_unlabeled)
    d_fin = _support(eval_bundle.domain_labels, split.finetune_labeled)
    d_test = _support(eval_bundle.domain_labels, split.test)
    y_pre = _support(pre_bundle.category_labels, split.pretrain_unlabeled)
    y_fin = _support(eval_bundle.category_labels, split.finetune_labeled)
    y_test = _support(eval_bundle.category_labels, split.test)

    if d_test & (d_pre | d_fin):
        bad(DOMAIN_OVERLAP,
            f"test domains {sorted(d_test & (d_pre | d_fin))} appear in training data")
    if y_test != y_fin:
        bad(CATEGORY_SUPPORT,
            f"test categories {sorted(y_test)} differ from finetune categories {sorted(y_fin)}")

    pre_nonempty = len(split.pretrain_unlabeled) > 0
    fin_nonempty = len(split.finetune_labeled) > 0
    if split.setting == "all_correlated":
        if pre_nonempty and fin_nonempty and d_pre != d_fin:
            bad(SETTING_DOMAIN, "all_correlated requires equal pretrain/finetune domain supports")
        if pre_nonempty and fin_nonempty and y_pre != y_fin:
            bad(SETTING_CATEGORY, "all_correlated requires equal pretrain/finetune category supports")
    elif split.setting == "domain_correlated":
        if pre_nonempty and fin_nonempty and d_pre != d_fin:
            bad(SETTING_DOMAIN, "domain_correlated requires equal pretrain/finetune domain supports")
        if y_pre & y_fin:
            bad(SETTING_CATEGORY, "domain_correlated requires disjoint pretrain/finetune categories")
    elif split.setting == "category_correlated":
        if d_pre & d_fin:
            bad(SETTING_DOMAIN, "category_correlated requires disjoint pretrain/finetune domains")
        if pre_nonempty and fin_nonempty and y_pre != y_fin:
            bad(SETTING_CATEGORY, "category_correlated requires equal pretrain/finetune categories")
    elif split.setting == "uncorrelated":
        if d_pre & d_fin:
            bad(SETTING_DOMAIN, "uncorrelated requires disjoint pretrain/finetune domains")
        if y_pre & y_fin:
            bad(SETTING_CATEGORY, "uncorrelated requires disjoint pretrain/finetune categories")

    return {"ok": not violations, "violations": violations}


# ---------------------------------------------------------------------------
# JSON manifest

def split_to_json(split: UdgSplit) -> str:
    doc = {
        "setting": split.setting,
        "params": split.params,
        "seed": split.seed,
        "label_fraction": split.label_fraction,
        "two_bundles": split.two_bundles,
        "indices": {
            "pretrain_unlabeled": split.pretrain_unlabeled.tolist(),
            "finetune_labeled": split.finetune_labeled.tolist(),
            "validation": split.validation.tolist(),
            "test": split.test.tolist(),
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def split_from_json(text: str) -> UdgSplit:
    doc = json.loads(text)
    return UdgSplit(
        setting=doc["setting"],
        pretrain_unlabeled=doc["indices"]["pretrain_unlabeled"],
        finetune_labeled=doc["indices"]["finetune_labeled"],
        validation=doc["indices"]["validation"],
        test=doc["indices"]["test"],
        label_fraction=doc.get("label_fraction", 1.0),
        seed=doc.get("seed", 0),
        params=doc.get("params", {}),
        two_bundles=doc.get("two_bundles", False),
    )


def write_split(split: UdgSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(split_to_json(split))


def read_split(path) -> UdgSplit:
    with open(path, encoding="utf-8") as fh:
        return split_from_json(fh.read())
