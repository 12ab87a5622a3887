"""Shared oracles for the test suite.

The gradient oracle is central finite differences over raw parameter arrays;
each evaluation rebuilds the computation from scratch so the tape under test
never participates in producing the expected values.
"""

import numpy as np

DEFAULT_FD_STEP = 1e-5


def numeric_grad(f, x, step=DEFAULT_FD_STEP):
    """Central finite differences of scalar-valued ``f`` w.r.t. array ``x``.

    ``f`` takes no arguments and must read ``x`` (by reference) on each call.
    """
    x = np.asarray(x)
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def grad_rel_error(analytic, numeric):
    """Worst-case elementwise relative error, floored at magnitude 1."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def random_unit_rows(rng, n, d):
    """n x d matrix with unit-norm rows, bounded away from the degenerate case."""
    m = rng.normal(size=(n, d))
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    while np.any(norms < 1e-3):
        m = rng.normal(size=(n, d))
        norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / norms


def random_simplex_rows(rng, n, d):
    """n x d matrix of rows on the probability simplex (Dirichlet(1))."""
    m = rng.gamma(1.0, size=(n, d))
    return m / m.sum(axis=1, keepdims=True)
