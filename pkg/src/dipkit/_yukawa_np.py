"""Vectorized closed-form screened-Coulomb derivatives in three dimensions.

Y(r) = exp(-eps r) / (4 pi r) solves (-Laplacian + eps^2) Y = delta. With
A(r) = Y'(r)/r and B(r) = Y''(r) - Y'(r)/r one has
d_i d_j Y = B * xhat_i xhat_j + A * delta_ij, so the coupling matrix is
-d_i d_j Y = -B * xhat_i xhat_j - A * delta_ij.
"""

from __future__ import annotations

import numpy as np

FOUR_PI = 4.0 * np.pi


def yukawa_np(r, eps):
    return np.exp(-eps * r) / (FOUR_PI * r)


def hessian_prefactors(r, eps):
    """Return (-A, -B/r^2) so that (-ddY)_ij = (-B/r^2) z_i z_j + (-A) delta_ij."""
    r2 = r * r
    pref = np.exp(-eps * r) / (FOUR_PI * r * r2)
    er = eps * r
    neg_a = pref * (1.0 + er)
    neg_b_over_r2 = -pref * (3.0 + er * (3.0 + er)) / r2
    return neg_a, neg_b_over_r2


def hessian3_batch(z, eps):
    """Coupling matrices -d_i d_j Y at displacement rows z, shape (M, 3) -> (M, 3, 3)."""
    z = np.asarray(z, dtype=np.float64)
    r = np.sqrt(np.einsum("mi,mi->m", z, z))
    neg_a, nb = hessian_prefactors(r, eps)
    out = nb[:, None, None] * z[:, :, None] * z[:, None, :]
    out[:, np.arange(3), np.arange(3)] += neg_a[:, None]
    return out
