"""Lattice constants and spectra of the shifted coupling matrix.

Four numbers control the momentum-space analysis at screening eps:

  e0     minimum of the diagonal Fourier coupling, attained at the corner
         momenta pi_l (zero in component l, pi elsewhere);
  e1     the same diagonal entry at the corner momentum of another axis;
  alpha  curvature constant of the soft branch of what - e0 near its zeros;
  gamma  transverse stiffness constant entering the dispersion bound.

Every constant is computed by two independent routes and cross-checked:
real-space staggered lattice sums over a ball with an explicit tail bound,
against the boxed Fourier kernel (e0, e1) or rapidly converging dual mode
sums (alpha, gamma).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._yukawa_np import hessian_prefactors
from .kernel import FourierKernel, _entry_bound, ensure_kernel, fourier_kernel
from .lattice import (
    LatticeSpec,
    momentum_grid,
    momentum_values,
    special_momentum_index,
)

__all__ = [
    "ConstantsMismatch",
    "ConstantsRecord",
    "SpectrumTable",
    "alpha_series",
    "ball_constants",
    "ball_radius_for",
    "ball_tail_bound",
    "conjecture_margin",
    "constants",
    "dispersion_diag",
    "gamma_series",
    "gap_identity_residual",
    "psd_sweep",
    "spectrum_csv",
    "zero_branch_curvature",
]


class ConstantsMismatch(RuntimeError):
    """Independent routes to a lattice constant disagree beyond tolerance."""


def _mode_energies(modes: np.ndarray, eps: float) -> np.ndarray:
    return np.sqrt(np.einsum("mi,mi->m", modes, modes) + eps * eps)


def alpha_series(eps: float, d: int = 3, mmax: int = 12) -> float:
    """Curvature constant alpha as a dual mode sum.

    Sums E t(1+t)/((1-t)(1+t^2)) with t = exp(-E) over transverse modes
    k = pi (2m+1), m in Z^(d-1).  Terms decay like exp(-pi |2m+1|), so
    mmax = 12 is far past double precision.
    """
    r = np.arange(-mmax, mmax + 1)
    grids = np.meshgrid(*([r] * (d - 1)), indexing="ij")
    modes = np.pi * (2 * np.stack(grids, axis=-1).reshape(-1, d - 1) + 1)
    e = _mode_energies(modes, eps)
    t = np.exp(-e)
    return float(np.sum(e * t * (1 + t) / ((1 - t) * (1 + t * t))))


def gamma_series(eps: float, d: int = 3, mmax: int = 12) -> float:
    """Stiffness constant gamma as a dual mode sum.

    Sums (k_1^2 / E) t(1-t)/((1+t)(1+t^2)) over modes whose first transverse
    component is 2 pi m_1 and the rest are pi (2m+1).
    """
    r = np.arange(-mmax, mmax + 1)
    grids = np.meshgrid(*([r] * (d - 1)), indexing="ij")
    m = np.stack(grids, axis=-1).reshape(-1, d - 1)
    modes = np.empty(m.shape, dtype=float)
    modes[:, 0] = 2.0 * np.pi * m[:, 0]
    modes[:, 1:] = np.pi * (2 * m[:, 1:] + 1)
    e = _mode_energies(modes, eps)
    t = np.exp(-e)
    k1sq = modes[:, 0] ** 2
    return float(np.sum(k1sq / e * t * (1 - t) / ((1 + t) * (1 + t * t))))


def ball_tail_bound(radius: int, eps: float, n_shells: int = 4000) -> float:
    """Bound on the staggered sums' remainder outside |z|_inf <= radius."""
    total = 0.0
    for c in range(radius + 1, radius + 1 + n_shells):
        count = (2 * c + 1) ** 3 - (2 * c - 1) ** 3
        term = count * _entry_bound(float(c), eps)
        total += term
        if term < 1e-9 * total:
            break
    return total


def ball_radius_for(eps: float, tail_target: float, r_max: int = 1500) -> int:
    lo, hi = 1, r_max
    if ball_tail_bound(hi, eps) > tail_target:
        raise ValueError(
            f"eps={eps} needs a summation ball beyond radius {r_max}; "
            "use the mode-sum routes instead")
    while lo < hi:
        mid = (lo + hi) // 2
        if ball_tail_bound(mid, eps) <= tail_target:
            hi = mid
        else:
            lo = mid + 1
    return hi


# 1 - g0 on residues 0..3, where g0(x) = cos(pi x / 2); even in x.
_ONE_MINUS_G0 = np.array([0.0, 1.0, 2.0, 1.0])


def ball_constants(eps: float, radius: int) -> dict:
    """e0, e1, alpha, gamma by direct staggered sums over |z|_inf <= radius.

    Folds the sums to one octant (every summand is even in each coordinate)
    and sweeps z_1-slices, so the pass is O(radius^3) with O(radius^2) memory.
    """
    r = np.arange(radius + 1)
    b, c = np.meshgrid(r, r, indexing="ij")
    b2 = (b * b).astype(float)
    c2 = (c * c).astype(float)
    mult_bc = np.where(b > 0, 2.0, 1.0) * np.where(c > 0, 2.0, 1.0)
    sign_bc = 1.0 - 2.0 * ((b + c) % 2)
    sign_c = 1.0 - 2.0 * (c % 2)
    e0 = e1 = alpha = gamma = 0.0
    for a in range(radius + 1):
        r2 = a * a + b2 + c2
        if a == 0:
            r2[0, 0] = 1.0  # placeholder; origin removed below
        dist = np.sqrt(r2)
        neg_a, nb = hessian_prefactors(dist, eps)
        h11 = nb * (a * a) + neg_a
        h22 = nb * b2 + neg_a
        if a == 0:
            h11[0, 0] = 0.0
            h22[0, 0] = 0.0
        ma = 2.0 if a > 0 else 1.0
        sa = 1.0 - 2.0 * (a % 2)
        w4 = _ONE_MINUS_G0[a % 4]
        a1 = float(np.sum(mult_bc * sign_bc * h11))
        a2 = float(np.sum(mult_bc * sign_c * h11))
        e0 += ma * a1
        e1 += ma * sa * a2
        if w4 != 0.0:
            alpha -= ma * w4 * a1
            a4 = float(np.sum(mult_bc * sign_c * h22))
            gamma -= ma * w4 * sa * a4
    return {"e0": e0, "e1": e1, "alpha": alpha, "gamma": gamma}


@dataclass(frozen=True)
class ConstantsRecord:
    """Cross-checked lattice constants at one screening value.

    Primary values: e0, e1 from the boxed Fourier kernel (image truncation
    below 1e-13); alpha, gamma from the mode sums (converged to double
    precision).  residuals holds the absolute gap to the ball-sum route,
    whose remainder is bounded by tail_bound.
    """

    epsilon: float
    e0: float
    e1: float
    alpha: float
    gamma: float
    box_L: int
    ball_radius: int
    tail_bound: float
    residuals: dict

    @property
    def gap(self) -> float:
        return self.e1 - self.e0


def _box_length_for(eps: float) -> int:
    length = 2
    while 2 * length * eps < 1.0 and length < 64:
        length += 2
    return length


def constants(eps: float, *, cross_tol: float = 1e-6,
              tail_target: float = 1e-9, box_L: int | None = None,
              cache_dir=None) -> ConstantsRecord:
    """Compute and cross-validate (e0, e1, alpha, gamma) at screening eps.

    Raises ConstantsMismatch if any ball-sum value differs from its primary
    route by more than cross_tol * |value| + 2 * tail_bound.
    """
    length = _box_length_for(eps) if box_L is None else box_L
    spec = LatticeSpec(d=3, L=length, epsilon=eps)
    fk = fourier_kernel(ensure_kernel(spec, cache_dir=cache_dir))
    e0 = fk.e0
    e1 = float(fk.what[special_momentum_index(spec, 2), 0, 0])
    alpha = alpha_series(eps)
    gamma = gamma_series(eps)
    radius = ball_radius_for(eps, tail_target)
    tail = ball_tail_bound(radius, eps)
    ball = ball_constants(eps, radius)
    primary = {"e0": e0, "e1": e1, "alpha": alpha, "gamma": gamma}
    residuals = {k: abs(primary[k] - ball[k]) for k in primary}
    bad = []
    for k, v in primary.items():
        # alpha/gamma carry weight (1 - g0) <= 2, so double the tail there
        weight = 1.0 if k in ("e0", "e1") else 2.0
        if residuals[k] > cross_tol * abs(v) + 2.0 * weight * tail:
            bad.append(f"{k}: {primary[k]!r} vs ball {ball[k]!r}")
    if bad:
        raise ConstantsMismatch("; ".join(bad))
    return ConstantsRecord(epsilon=eps, e0=e0, e1=e1, alpha=alpha,
                           gamma=gamma, box_L=length, ball_radius=radius,
                           tail_bound=tail, residuals=residuals)


def gap_identity_residual(rec: ConstantsRecord, d: int = 3) -> float:
    """Margin of the gap inequality e1 - e0 >= (alpha + gamma) / d."""
    return rec.gap - (rec.alpha + rec.gamma) / d


@dataclass(frozen=True)
class SpectrumTable:
    """Eigenvalues of the shifted coupling what - e0 over the momentum grid.

    eigenvalues has shape (N, d), ascending per momentum; scale is the
    largest matrix entry magnitude, the natural yardstick for roundoff;
    zero_indices are the d corner momenta where one eigenvalue vanishes.
    """

    spec: LatticeSpec
    eigenvalues: np.ndarray
    scale: float
    zero_indices: tuple

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues.min())

    def off_zero_minimum(self) -> float:
        """Smallest eigenvalue once the d exact zeros are excluded."""
        ev = self.eigenvalues.copy()
        for idx in self.zero_indices:
            ev[idx, 0] = np.inf
        return float(ev.min())


def psd_sweep(fk: FourierKernel) -> SpectrumTable:
    """Diagonalize what(p) - e0 at every grid momentum."""
    spec = fk.spec
    w0 = fk.w0hat
    ev = np.linalg.eigvalsh(w0)
    scale = float(np.max(np.abs(w0)))
    zeros = tuple(special_momentum_index(spec, axis)
                  for axis in range(1, spec.d + 1))
    return SpectrumTable(spec=spec, eigenvalues=ev, scale=scale,
                         zero_indices=zeros)


def dispersion_diag(spec: LatticeSpec, alpha: float, gamma: float,
                    p: np.ndarray | None = None) -> np.ndarray:
    """Diagonal comparison form D(p)_ii = (alpha sin^2(p_i/2)
    + gamma sum_{l != i} cos^2(p_l/2)) / d, shape (N, d)."""
    if p is None:
        p = momentum_values(spec)
    s2 = np.sin(0.5 * p) ** 2
    c2 = np.cos(0.5 * p) ** 2
    return (alpha * s2 + gamma * (c2.sum(axis=-1, keepdims=True) - c2)) / spec.d


def conjecture_margin(fk: FourierKernel, alpha: float, gamma: float):
    """Worst-case margin of what - e0 >= D(p) over the momentum grid.

    Returns (margin, index): the minimum eigenvalue of the difference and
    the flat momentum index where it is attained.  Nonnegative margin (up
    to roundoff) verifies the dispersion lower bound.
    """
    spec = fk.spec
    diff = fk.w0hat.copy()
    dd = dispersion_diag(spec, alpha, gamma)
    idx = np.arange(spec.d)
    diff[:, idx, idx] -= dd
    ev = np.linalg.eigvalsh(diff)
    k = int(np.argmin(ev[:, 0]))
    return float(ev[k, 0]), k


def zero_branch_curvature(fk: FourierKernel, axis: int = 1) -> float:
    """Curvature estimate of the soft branch at the corner momentum.

    Steps one grid unit along `axis` from pi_axis and divides the smallest
    eigenvalue there by sin^2(delta/2), delta = pi/L; comparable to alpha/d
    from below as L grows.
    """
    spec = fk.spec
    from .lattice import special_momentum, momentum_index

    m = special_momentum(spec, axis)
    m[axis - 1] = 1
    idx = int(momentum_index(spec, m))
    lam = float(np.linalg.eigvalsh(fk.w0hat[idx])[0])
    delta = np.pi / spec.L
    return lam / np.sin(0.5 * delta) ** 2


def spectrum_csv(table: SpectrumTable, path) -> None:
    """Write the eigenvalue sweep as CSV: momentum labels then eigenvalues."""
    spec = table.spec
    mg = momentum_grid(spec)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"m{a}" for a in range(1, spec.d + 1)]
                    + [f"eig{a}" for a in range(1, spec.d + 1)])
        for row_m, row_e in zip(mg, table.eigenvalues):
            wr.writerow([int(v) for v in row_m]
                        + [f"{v:.17g}" for v in row_e])
