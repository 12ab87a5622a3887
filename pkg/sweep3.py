"""Scratch sweep 3: augmentation-noise matching + noise-dim overfit channel."""
from sweep2 import run

if __name__ == "__main__":
    seeds = (0, 1, 2)
    # augment noise ~= data noise, many noise dims
    run("L a1 g2 s.3 nd16 augN.3", seeds, alpha=1.0, gamma=2.0, sigma=0.3, noise_dims=16,
        aug=(0.3, 0.2, 0.25), diag=True)
    run("M a.8 same              ", seeds, alpha=0.8, gamma=2.0, sigma=0.3, noise_dims=16,
        aug=(0.3, 0.2, 0.25))
    run("N a.8 g2 augN.45        ", seeds, alpha=0.8, gamma=2.0, sigma=0.3, noise_dims=16,
        aug=(0.45, 0.2, 0.25))
    run("O a.8 soft g1.2 s.5     ", seeds, alpha=0.8, gamma=1.2, sigma=0.5, noise_dims=16,
        aug=(0.5, 0.2, 0.25))
    run("P a.6 g1.2 s.5 augN.5   ", seeds, alpha=0.6, gamma=1.2, sigma=0.5, noise_dims=16,
        aug=(0.5, 0.2, 0.25))
