"""Scratch calibration sweep for the default experiment config (not shipped)."""
import sys, time
import numpy as np

from diul.contrastive import PretrainConfig, pretrain, random_init_checkpoint
from diul.data import AugmentSpec, BlobSpec, concat_bundles, generate
from diul.domainclf import DomainClfConfig, train_domain_classifier
from diul.probe import ProbeConfig, evaluate, train_linear_probe
from diul.splits import SplitParams, make_split


def run_once(seed, epochs, aug, lr, bank_size, bank_lr, momentum, gamma, noise, alpha, probe_epochs=300, probe_lr=2.0):
    spec = BlobSpec(n_categories=4, n_domains_total=5, cat_dims=4, dom_dims=5,
                    noise_dims=7, alpha_cat=alpha, gamma_dom=gamma, noise_sigma=noise,
                    spurious_rho=0.9, n_per_domain=740)
    src = generate(spec, [0, 1, 2], seed=seed * 31 + 1)
    tgt = generate(spec, [3], seed=seed * 31 + 2)
    bundle = concat_bundles(src, tgt)
    split = make_split(bundle, "all_correlated",
                       SplitParams((0, 1, 2), (3,), label_fraction=0.1), seed=seed)
    weighter = train_domain_classifier(bundle, DomainClfConfig(epochs=150, lr=0.5, seed=seed),
                                       indices=split.pretrain_unlabeled)
    pcfg = ProbeConfig(epochs=probe_epochs, lr=probe_lr, weight_decay=0.0)
    out = {}
    logs = {}
    for variant in ("infonce", "diul"):
        cfg = PretrainConfig(epochs=epochs, batch_size=256, lr=lr, weight_decay=1e-4,
                             momentum=momentum, temperature=0.2, bank_size=bank_size,
                             bank_lr=bank_lr, seed=seed, hidden_sizes=(64, 64),
                             feature_dim=128, augment=aug)
        ckpt, log = pretrain(cfg, bundle, split, weighter, variant)
        probe = train_linear_probe(ckpt, bundle, split, pcfg)
        out[variant] = evaluate(ckpt, probe, bundle, split).overall
        logs[variant] = (log[0][1], log[-1][1])
    rcfg = PretrainConfig(seed=seed, hidden_sizes=(64, 64), feature_dim=128)
    ckpt = random_init_checkpoint(rcfg, bundle.n_dims)
    probe = train_linear_probe(ckpt, bundle, split, pcfg)
    out["random_init"] = evaluate(ckpt, probe, bundle, split).overall
    return out, logs


def sweep(name, seeds=(0, 1), epochs=60, **kw):
    t0 = time.time()
    accs = {"diul": [], "infonce": [], "random_init": []}
    trends = []
    for s in seeds:
        out, logs = run_once(s, epochs, **kw)
        for k, v in out.items():
            accs[k].append(v)
        trends.append(logs["diul"])
    d, i, r = (np.mean(accs[k]) for k in ("diul", "infonce", "random_init"))
    wins = sum(a > b for a, b in zip(accs["diul"], accs["infonce"]))
    tr = all(last < first for first, last in trends)
    print(f"{name}: diul={d:.3f} infonce={i:.3f} rand={r:.3f} gap={d-i:+.3f} "
          f"wins={wins}/{len(accs['diul'])} trend_ok={tr} ({time.time()-t0:.0f}s)", flush=True)
    return accs


if __name__ == "__main__":
    base = dict(lr=0.3, bank_size=64, bank_lr=1.0, momentum=0.99, gamma=2.0, noise=0.3, alpha=1.0)
    sweep("A weak-aug   ", aug=AugmentSpec(0.1, 0.1, 0.25), **base)
    sweep("B strong-aug ", aug=AugmentSpec(0.2, 0.2, 0.4), **base)
    sweep("C mid-aug    ", aug=AugmentSpec(0.15, 0.15, 0.3), **base)
    sweep("D strong+K128", aug=AugmentSpec(0.2, 0.2, 0.4), **{**base, "bank_size": 128})
    sweep("E strong+g3  ", aug=AugmentSpec(0.2, 0.2, 0.4), **{**base, "gamma": 3.0})
    sweep("F strong+n45 ", aug=AugmentSpec(0.2, 0.2, 0.4), **{**base, "noise": 0.45})
