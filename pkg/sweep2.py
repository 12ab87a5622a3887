"""Scratch sweep 2: soft-weighter region (not shipped)."""
import time
import numpy as np

from diul.contrastive import PretrainConfig, pretrain, random_init_checkpoint
from diul.data import AugmentSpec, BlobSpec, DatasetBundle, concat_bundles, generate
from diul.domainclf import (DomainClfConfig, classifier_accuracy, domain_weights,
                            train_domain_classifier)
from diul.encoder import encode
from diul.probe import ProbeConfig, evaluate, train_linear_probe
from diul.splits import SplitParams, make_split


def dom_info(ckpt, bundle, idx):
    z = encode(ckpt.query, bundle.features[idx])
    zb = DatasetBundle(z, bundle.category_labels[idx], bundle.domain_labels[idx],
                       list(bundle.category_names), list(bundle.domain_names))
    wgt = train_domain_classifier(zb, DomainClfConfig(epochs=200, lr=1.0, seed=0))
    return classifier_accuracy(wgt, zb)


def run(name, seeds, *, alpha, gamma, sigma, noise_dims=7, aug=(0.2, 0.2, 0.4),
        K=64, bank_lr=1.0, lr=0.3, wepochs=150, infonce_flat_times_d=True,
        epochs=60, probe=(300, 2.0, 0.0), diag=False):
    t0 = time.time()
    accs = {"diul": [], "infonce": [], "random_init": []}
    for seed in seeds:
        spec = BlobSpec(n_categories=4, n_domains_total=5, cat_dims=4, dom_dims=5,
                        noise_dims=noise_dims, alpha_cat=alpha, gamma_dom=gamma,
                        noise_sigma=sigma, spurious_rho=0.9, n_per_domain=740)
        src = generate(spec, [0, 1, 2], seed=seed * 31 + 1)
        tgt = generate(spec, [3], seed=seed * 31 + 2)
        bundle = concat_bundles(src, tgt)
        split = make_split(bundle, "all_correlated",
                           SplitParams((0, 1, 2), (3,), label_fraction=0.1), seed=seed)
        weighter = train_domain_classifier(bundle, DomainClfConfig(epochs=wepochs, seed=seed),
                                           indices=split.pretrain_unlabeled)
        if diag and seed == seeds[0]:
            w = domain_weights(weighter, bundle.features[split.pretrain_unlabeled])
            print(f"  [{name}] weighter acc={classifier_accuracy(weighter, bundle, split.pretrain_unlabeled):.3f} "
                  f"mean-max-w={w.max(axis=1).mean():.3f}")
        pcfg = ProbeConfig(epochs=probe[0], lr=probe[1], weight_decay=probe[2])
        for variant in ("infonce", "diul"):
            bank = K if (variant == "diul" or infonce_flat_times_d) else K
            cfg = PretrainConfig(epochs=epochs, batch_size=256, lr=lr, weight_decay=1e-4,
                                 momentum=0.99, temperature=0.2, bank_size=K,
                                 bank_lr=bank_lr, seed=seed, hidden_sizes=(64, 64),
                                 feature_dim=128, augment=AugmentSpec(*aug))
            ckpt, log = pretrain(cfg, bundle, split, weighter, variant)
            probe_params = train_linear_probe(ckpt, bundle, split, pcfg)
            m = evaluate(ckpt, probe_params, bundle, split)
            accs[variant].append(m.overall)
            if diag and seed == seeds[0]:
                print(f"  [{name}] {variant}: target={m.overall:.3f} "
                      f"dom_info={dom_info(ckpt, bundle, split.pretrain_unlabeled):.3f} "
                      f"loss {log[0][1]:.2f}->{log[-1][1]:.2f}")
        ckpt = random_init_checkpoint(PretrainConfig(seed=seed, hidden_sizes=(64, 64),
                                                     feature_dim=128), bundle.n_dims)
        probe_params = train_linear_probe(ckpt, bundle, split, pcfg)
        accs["random_init"].append(evaluate(ckpt, probe_params, bundle, split).overall)
    d, i, r = (np.mean(accs[k]) for k in ("diul", "infonce", "random_init"))
    wins = sum(a > b for a, b in zip(accs["diul"], accs["infonce"]))
    print(f"{name}: diul={d:.3f} infonce={i:.3f} rand={r:.3f} gap={d-i:+.3f} "
          f"wins={wins}/{len(seeds)} ({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    seeds = (0, 1)
    run("G soft a.6 g1.2 s.5 ", seeds, alpha=0.6, gamma=1.2, sigma=0.5, diag=True)
    run("H soft a.5 g1.5 s.5 ", seeds, alpha=0.5, gamma=1.5, sigma=0.5)
    run("I underfit-w 40ep   ", seeds, alpha=0.6, gamma=1.2, sigma=0.5, wepochs=40)
    run("J fewer noise dims  ", seeds, alpha=0.6, gamma=1.2, sigma=0.5, noise_dims=3)
    run("K g1.0 s.6          ", seeds, alpha=0.6, gamma=1.0, sigma=0.6)
