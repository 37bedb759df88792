"""Random instance generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from spsa.model import LtiAdmittance


def random_hurwitz(rng, n, slowest=0.3, fastest=3.0):
    """Real matrix with eigenvalue real parts in ``[-fastest, -slowest]``.

    Built from 2x2 rotation blocks and scalars, then a random similarity, so the
    spectrum is known exactly.
    """
    blocks = []
    i = 0
    while i < n:
        a = -rng.uniform(slowest, fastest)
        if n - i >= 2 and rng.random() < 0.5:
            b = rng.uniform(0.2, 2.0)
            blocks.append(np.array([[a, b], [-b, a]]))
            i += 2
        else:
            blocks.append(np.array([[a]]))
            i += 1
    J = np.zeros((n, n))
    k = 0
    for blk in blocks:
        m = blk.shape[0]
        J[k:k + m, k:k + m] = blk
        k += m
    T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    return T @ J @ np.linalg.inv(T)


def random_system(rng, n, n_p, gain=1.0, slowest=0.3, fastest=3.0):
    """Random stable admittance with a symmetric-part-positive feedthrough plus noise."""
    if n == 0:
        M = rng.standard_normal((n_p, n_p))
        return LtiAdmittance.static(gain * (0.5 * (M @ M.T) / n_p + 0.3 * rng.standard_normal((n_p, n_p))))
    A = random_hurwitz(rng, n, slowest, fastest)
    B = rng.standard_normal((n, n_p))
    C = gain * (0.5 * B.T + 0.5 * rng.standard_normal((n_p, n)))
    M = rng.standard_normal((n_p, n_p))
    D = gain * (0.5 * (M @ M.T) / n_p + 0.2 * rng.standard_normal((n_p, n_p)))
    return LtiAdmittance(A, B, C, D)


def scalar_system(a, b, c, d):
    return LtiAdmittance([[a]], [[b]], [[c]], [[d]])
