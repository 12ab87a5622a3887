"""Scratch sweep 4: feature-dim bottleneck."""
import time
import numpy as np

from diul.contrastive import PretrainConfig, pretrain, random_init_checkpoint
from diul.data import AugmentSpec, BlobSpec, DatasetBundle, concat_bundles, generate
from diul.domainclf import DomainClfConfig, train_domain_classifier
from diul.probe import ProbeConfig, evaluate, train_linear_probe
from diul.splits import SplitParams, make_split


def run(name, seeds, *, alpha=1.0, gamma=2.0, sigma=0.3, noise_dims=7,
        aug=(0.3, 0.2, 0.25), K=64, bank_lr=1.0, lr=0.3, wepochs=150,
        epochs=60, d_f=8, hidden=(64, 64), probe=(300, 2.0, 0.0)):
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
        pcfg = ProbeConfig(epochs=probe[0], lr=probe[1], weight_decay=probe[2])
        for variant in ("infonce", "diul"):
            cfg = PretrainConfig(epochs=epochs, batch_size=256, lr=lr, weight_decay=1e-4,
                                 momentum=0.99, temperature=0.2, bank_size=K,
                                 bank_lr=bank_lr, seed=seed, hidden_sizes=hidden,
                                 feature_dim=d_f, augment=AugmentSpec(*aug))
            ckpt, _ = pretrain(cfg, bundle, split, weighter, variant)
            pp = train_linear_probe(ckpt, bundle, split, pcfg)
            accs[variant].append(evaluate(ckpt, pp, bundle, split).overall)
        ckpt = random_init_checkpoint(PretrainConfig(seed=seed, hidden_sizes=hidden,
                                                     feature_dim=d_f), bundle.n_dims)
        pp = train_linear_probe(ckpt, bundle, split, pcfg)
        accs["random_init"].append(evaluate(ckpt, pp, bundle, split).overall)
    d, i, r = (np.mean(accs[k]) for k in ("diul", "infonce", "random_init"))
    wins = sum(a > b for a, b in zip(accs["diul"], accs["infonce"]))
    print(f"{name}: diul={d:.3f} infonce={i:.3f} rand={r:.3f} gap={d-i:+.3f} "
          f"wins={wins}/{len(seeds)} ({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    seeds = (0, 1, 2)
    run("Q d_f=16", seeds, d_f=16)
    run("R d_f=8 ", seeds, d_f=8)
    run("S d_f=4 ", seeds, d_f=4)
    run("T d_f=8 a.8", seeds, d_f=8, alpha=0.8)
    run("U d_f=8 soft g1.2 s.5", seeds, d_f=8, gamma=1.2, sigma=0.5, aug=(0.5, 0.2, 0.25))
