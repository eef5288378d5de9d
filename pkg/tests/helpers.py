"""Shared test oracles: central finite differences and error measures."""

import numpy as np


def fd_grad(f, arrays, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. each array in `arrays`.

    Perturbs entries in place; f must re-read the arrays on every call.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(a, b, floor=1e-6):
    """Worst relative error; the floor keeps finite-difference noise on
    near-zero entries from registering as disagreement."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
