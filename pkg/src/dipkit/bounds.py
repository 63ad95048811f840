"""Infrared bounds on mode occupations and long-range-order estimates.

The two-point matrix Q_ll(p) = <|S-hat^l_p|^2> of the Gibbs state is bounded
above, off the corner momentum pi_l, first by the inverse of the shifted
coupling and then by the explicit dispersion form:

    Q_ll(p) <= (2 beta)^-1 [ (what(p) - e0)^-1 ]_ll
            <= d / (2 beta (alpha sin^2(p_l/2) + gamma sum_{j!=l} cos^2(p_j/2)))

Combining the second bound with the Parseval sum rule (1/N) sum_p Q_ll = 1/d
gives a lower bound on the staggered magnetization, and in the infinite
volume limit the critical estimate c_d(beta) = 1 - beta_d / beta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernel import FourierKernel
from .lattice import LatticeSpec, momentum_values, special_momentum_index
from .spectral import ConstantsRecord, dispersion_diag

__all__ = [
    "IRBoundTable",
    "LROEstimate",
    "b36_table",
    "beta_critical",
    "beta_for_target",
    "cd_curve_csv",
    "cd_value",
    "diag_bound_table",
    "dispersion_integral",
    "ir_bound",
    "lro_lower_bound",
]


def b36_table(spec: LatticeSpec, alpha: float, gamma: float,
              beta: float) -> np.ndarray:
    """Dispersion-form bound on Q_ll(p), shape (N, d).

    Entry (p, l) is d / (2 beta (alpha sin^2(p_l/2) + gamma sum cos^2));
    at p = pi_l the denominator vanishes and the entry is +inf (the bound
    says nothing about the condensate mode itself).
    """
    dd = dispersion_diag(spec, alpha, gamma)
    out = np.full_like(dd, np.inf)
    np.divide(1.0, 2.0 * beta * dd, out=out, where=dd > 0.0)
    return out


def diag_bound_table(fk: FourierKernel, beta: float) -> np.ndarray:
    """Matrix-inverse bound on Q_ll(p): (2 beta)^-1 [(what - e0)^-1]_ll.

    At the corner momentum pi_m the shifted matrix is diagonal with a single
    zero in component m; the other diagonal entries of the inverse are then
    exactly 1/(e1 - e0), and entry (pi_m, m) is +inf.
    """
    spec = fk.spec
    w0 = fk.w0hat
    corners = [special_momentum_index(spec, axis)
               for axis in range(1, spec.d + 1)]
    out = np.empty((spec.n_sites, spec.d))
    mask = np.ones(spec.n_sites, dtype=bool)
    mask[corners] = False
    inv = np.linalg.inv(w0[mask])
    idx = np.arange(spec.d)
    out[mask] = inv[:, idx, idx] / (2.0 * beta)
    for axis0, k in enumerate(corners):
        # the vanishing entry sits in the corner's own component; the
        # other diagonal entries are e1 - e0 up to transform roundoff
        diag = np.diagonal(w0[k])
        row = np.full(spec.d, np.inf)
        off = idx != axis0
        row[off] = 1.0 / (2.0 * beta * diag[off])
        out[k] = row
    return out


@dataclass(frozen=True)
class IRBoundTable:
    """Both infrared bounds over the momentum grid at one temperature."""

    spec: LatticeSpec
    beta: float
    diag: np.ndarray
    b36: np.ndarray

    def ordering_violation(self) -> float:
        """Largest amount by which the matrix bound exceeds the dispersion
        bound; should be <= 0 up to roundoff at every finite entry."""
        finite = np.isfinite(self.b36) & np.isfinite(self.diag)
        return float(np.max(self.diag[finite] - self.b36[finite]))


def ir_bound(fk: FourierKernel, rec: ConstantsRecord,
             beta: float) -> IRBoundTable:
    return IRBoundTable(spec=fk.spec, beta=beta,
                        diag=diag_bound_table(fk, beta),
                        b36=b36_table(fk.spec, rec.alpha, rec.gamma, beta))


@dataclass(frozen=True)
class LROEstimate:
    """Staggered-magnetization lower bound on one box at one temperature.

    per_component[l] bounds <|sigma-hat^l_0|^2>/N from below by
    1/d - (1/N) sum_{p != pi_l} b36(p, l); total is their sum, a lower
    bound for <|M|^2>/N^2 with M the total staggered moment.
    """

    spec: LatticeSpec
    beta: float
    per_component: tuple
    total: float
    mode_sums: tuple


def lro_lower_bound(spec: LatticeSpec, rec: ConstantsRecord,
                    beta: float) -> LROEstimate:
    table = b36_table(spec, rec.alpha, rec.gamma, beta)
    n = spec.n_sites
    comps, sums = [], []
    for axis in range(1, spec.d + 1):
        col = table[:, axis - 1].copy()
        col[special_momentum_index(spec, axis)] = 0.0
        s = float(col.sum()) / n
        sums.append(s)
        comps.append(1.0 / spec.d - s)
    return LROEstimate(spec=spec, beta=beta, per_component=tuple(comps),
                       total=float(sum(comps)), mode_sums=tuple(sums))


def _midpoint_value(alpha: float, gamma: float, d: int, n: int) -> float:
    """Midpoint sum of 1/(alpha sin^2(p_1/2) + gamma sum_{j>1} cos^2(p_j/2))
    over [-pi, pi]^d on an n^d half-step-shifted grid (n even, so no node
    hits the integrand's zero at (0, pi, ..., pi))."""
    p = -np.pi + (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    s2 = np.sin(0.5 * p) ** 2  # for axis 1
    c2 = np.cos(0.5 * p) ** 2  # for the transverse axes
    acc = alpha * s2
    for _ in range(d - 1):
        acc = acc[..., None] + gamma * c2
    return float(np.mean(1.0 / acc))


def dispersion_integral(alpha: float, gamma: float, d: int = 3,
                        n_base: int = 48) -> tuple:
    """Brillouin-zone average of the inverse dispersion form, with error.

    The integrand has an integrable quadratic zero, so the midpoint rule
    converges like h^(d-2) plus smooth h^2 terms; two Richardson stages on
    grids n, 2n, 4n remove the h and h^2 terms in d = 3.  Returns
    (value, error_estimate).
    """
    v1 = _midpoint_value(alpha, gamma, d, n_base)
    v2 = _midpoint_value(alpha, gamma, d, 2 * n_base)
    v4 = _midpoint_value(alpha, gamma, d, 4 * n_base)
    r1 = 2.0 * v2 - v1
    r2 = 2.0 * v4 - v2
    value = (4.0 * r2 - r1) / 3.0
    return value, abs(value - r2)


def beta_critical(rec: ConstantsRecord, d: int = 3, n_base: int = 48) -> float:
    """beta_d = (d^2 / 2) times the dispersion integral; LRO holds above it."""
    i_d, _ = dispersion_integral(rec.alpha, rec.gamma, d, n_base)
    return 0.5 * d * d * i_d


def cd_value(beta: float, beta_d: float) -> float:
    """Infinite-volume staggered-order bound c_d(beta) = 1 - beta_d / beta."""
    return 1.0 - beta_d / beta


def beta_for_target(target: float, beta_d: float,
                    tol: float = 1e-12) -> float:
    """Smallest beta with c_d(beta) >= target, found by bisection.

    Agrees with the closed form beta_d / (1 - target); the bisection route
    exists so the monotone relation itself is exercised.
    """
    if not 0.0 <= target < 1.0:
        raise ValueError(f"target must be in [0, 1), got {target}")
    lo = beta_d
    hi = beta_d * 2.0
    while cd_value(hi, beta_d) < target:
        hi *= 2.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if cd_value(mid, beta_d) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def cd_curve_csv(beta_d: float, betas, path) -> None:
    """Write beta versus c_d(beta) rows; negative values are kept as is."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["beta", "c_d"])
        for b in betas:
            wr.writerow([f"{float(b):.17g}", f"{cd_value(float(b), beta_d):.17g}"])
