"""Reflections, gauge identities, exact ground states, chessboard moves.

The staggered gauge sigma^i_x = (-1)^(x + x_i) S^i_x turns the dipole
coupling into a form with constant row sums: configurations constant in the
gauge are exact ground states with energy e0 N, for any unit vector and any
origin shift.  Reflections through half-integer lattice planes act on spins
by r_i together with the component sign theta that keeps component i; in the
staggered gauge this becomes a plain site reflection, which is why
chessboard estimates and reflection positivity hold in the original model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import compute_field, energy_from_field
from .kernel import KernelTable, offset_tables
from .lattice import (
    LatticeSpec,
    reduce_site,
    site_coordinates,
    site_index,
    stagger_signs,
)

__all__ = [
    "ReflectionPlane",
    "chessboard_descent",
    "chessboard_step",
    "energy",
    "energy_fourier",
    "energy_staggered_form",
    "ground_state",
    "ground_state_energy",
    "half_box_sites",
    "local_field",
    "random_config",
    "reflect_config",
    "reflect_sites",
    "reflection_planes",
    "row_sum_residual",
    "rp_cross_matrix",
    "to_staggered",
]


def random_config(spec: LatticeSpec, seed=None) -> np.ndarray:
    """Independent uniform unit spins, shape (N, d)."""
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((spec.n_sites, spec.d))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return s


def to_staggered(spec: LatticeSpec, s: np.ndarray) -> np.ndarray:
    """Apply the gauge signs componentwise; involutive, so it also inverts."""
    return stagger_signs(spec) * s


def local_field(table: KernelTable, s: np.ndarray) -> np.ndarray:
    """h_x = sum_y W(x - y) S_y, including y = x."""
    spec = table.spec
    coords = np.ascontiguousarray(site_coordinates(spec) % spec.side,
                                  dtype=np.intc)
    return np.asarray(compute_field(
        np.ascontiguousarray(s), table.w, offset_tables(spec), coords))


def energy(table: KernelTable, s: np.ndarray) -> float:
    """H = sum_{x,y} S_x . W(x - y) S_y, every ordered pair plus self terms."""
    return float(energy_from_field(np.ascontiguousarray(s),
                                   local_field(table, s)))


def energy_fourier(table: KernelTable, s: np.ndarray) -> float:
    """Same energy through Parseval: sum_p S-hat(p)^dagger what(p) S-hat(p).

    Independent of the field accumulation route; used as a cross-check.
    """
    spec = table.spec
    d = spec.d
    n = spec.n_sites
    sgrid = s.reshape(spec.shape + (d,))
    shat = (np.fft.ifftn(sgrid, axes=tuple(range(d)))
            * np.sqrt(n)).reshape(n, d)
    what = (np.fft.ifftn(table.as_grid(), axes=tuple(range(d)))
            * n).reshape(n, d, d)
    val = np.einsum("ni,nij,nj->", shat.conj(), what, shat)
    return float(val.real)


def energy_staggered_form(table: KernelTable, s: np.ndarray,
                          chunk: int = 256) -> float:
    """Energy via the gauged difference form.

    With W'_ij(x, y) = tau^i_x W_ij(x - y) tau^j_y and sigma the gauged
    spins, the big matrix over pairs (x, i) is symmetric with constant row
    sums e0, so

        H = e0 N - (1/2) sum_{x,y,i,j} W'_ij(x, y) (sigma^i_x - sigma^j_y)^2

    using e0 = what_11(pi_1) from the table's own transform.  The scalar
    differences run over the doubled index set; the vector difference form
    (sigma_x - sigma_y) is NOT equivalent, because swapping x and y in an
    off-diagonal entry costs a (-1)^(z_i + z_j) sign.  Exact up to the
    kernel truncation error.
    """
    from .kernel import fourier_kernel

    spec = table.spec
    n = spec.n_sites
    tau = stagger_signs(spec)
    sigma = tau * s
    e0 = fourier_kernel(table).e0
    coords = site_coordinates(spec) % spec.side
    offtab = offset_tables(spec)
    total = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        idx = offtab[0][coords[start:stop, 0][:, None], coords[None, :, 0]]
        for a in range(1, spec.d):
            idx = idx + offtab[a][coords[start:stop, a][:, None],
                                  coords[None, :, a]]
        wblk = table.w[idx] * (tau[start:stop][:, None, :, None]
                               * tau[None, :, None, :])
        diff = sigma[start:stop, None, :, None] - sigma[None, :, None, :]
        total += float(np.sum(wblk * diff * diff))
    return e0 * n - 0.5 * total


def row_sum_residual(table: KernelTable, chunk: int = 256) -> float:
    """max_x | sum_y W'(x, y) - e0 I | for the gauged kernel, brute force."""
    from .kernel import fourier_kernel

    spec = table.spec
    n = spec.n_sites
    tau = stagger_signs(spec)
    e0 = fourier_kernel(table).e0
    coords = site_coordinates(spec) % spec.side
    offtab = offset_tables(spec)
    worst = 0.0
    eye = np.eye(spec.d)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        idx = offtab[0][coords[start:stop, 0][:, None], coords[None, :, 0]]
        for a in range(1, spec.d):
            idx = idx + offtab[a][coords[start:stop, a][:, None],
                                  coords[None, :, a]]
        # sum over y of tau^i_x W_ij(x-y) tau^j_y
        rows = np.einsum("xyij,yj->xij", table.w[idx], tau)
        rows *= tau[start:stop, :, None]
        worst = max(worst, float(np.max(np.abs(rows - e0 * eye))))
    return worst


def ground_state(spec: LatticeSpec, v=None, x0=None) -> np.ndarray:
    """Exact minimizer: constant unit vector v in the staggered gauge.

    S^i_x = (-1)^((x - x0) + (x_i - x0_i)) v^i; the spin at x0 is v itself.
    Every unit v and every origin x0 gives energy exactly e0 N.
    """
    if v is None:
        v = np.zeros(spec.d)
        v[0] = 1.0
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("v must be a unit vector")
    if x0 is None:
        x0 = np.zeros(spec.d, dtype=np.int64)
    x0 = np.asarray(x0, dtype=np.int64)
    x = site_coordinates(spec) - x0
    tot = x.sum(axis=1)[:, None] + x
    return (1 - 2 * (tot % 2)).astype(float) * v


def ground_state_energy(table: KernelTable) -> float:
    """e0 N from the table's transform; the exact minimum of the energy."""
    from .kernel import fourier_kernel

    return fourier_kernel(table).e0 * table.spec.n_sites


@dataclass(frozen=True)
class ReflectionPlane:
    """Reflection through the pair of planes x_axis = a + 1/2 (+ L).

    axis is 1-based; a in {0, ..., L-1} labels the distinct reflections.
    Sites map by x_axis -> 2a + 1 - x_axis on the torus; the positive half
    is the L slabs a+1 <= x_axis <= a+L (wrapped into the box).
    """

    axis: int
    a: int = 0


def reflection_planes(spec: LatticeSpec):
    """All distinct half-integer reflections of the box: d L of them."""
    return [ReflectionPlane(axis=axis, a=a)
            for axis in range(1, spec.d + 1) for a in range(spec.L)]


def reflect_sites(spec: LatticeSpec, plane: ReflectionPlane) -> np.ndarray:
    """Permutation perm with perm[k] = site index of the mirror of site k."""
    x = site_coordinates(spec).copy()
    ax = plane.axis - 1
    x[:, ax] = 2 * plane.a + 1 - x[:, ax]
    return np.asarray(site_index(spec, reduce_site(spec, x)))


def reflect_config(spec: LatticeSpec, plane: ReflectionPlane,
                   s: np.ndarray) -> np.ndarray:
    """Reflected configuration: site permutation and component signs.

    Component `axis` keeps its sign; all others flip.  In the staggered
    gauge this is the plain site permutation with no signs at all.
    """
    perm = reflect_sites(spec, plane)
    flips = -np.ones(spec.d)
    flips[plane.axis - 1] = 1.0
    return s[perm] * flips


def half_box_sites(spec: LatticeSpec, plane: ReflectionPlane) -> np.ndarray:
    """Indices of the positive half: a + 1 <= x_axis <= a + L (wrapped)."""
    x = site_coordinates(spec)[:, plane.axis - 1]
    rel = np.mod(x - (plane.a + 1), spec.side)
    return np.nonzero(rel < spec.L)[0]


def rp_cross_matrix(table: KernelTable, plane: ReflectionPlane) -> np.ndarray:
    """Gram matrix of the cross coupling between the half box and its mirror.

    C[(x,l),(x',m)] = -theta_m W_lm(x - r x') over x, x' in the positive
    half, theta_m = +1 for the reflection axis and -1 otherwise.  Symmetric,
    and positive semidefinite for every plane: that is reflection positivity
    of the interaction.
    """
    spec = table.spec
    half = half_box_sites(spec, plane)
    nh = half.shape[0]
    d = spec.d
    coords = site_coordinates(spec)
    mirror = reflect_sites(spec, plane)[half]
    diff = coords[half][:, None, :] - coords[mirror][None, :, :]
    wblk = table.w[np.asarray(site_index(spec, reduce_site(spec, diff)))]
    theta = -np.ones(d)
    theta[plane.axis - 1] = 1.0
    c = -wblk * theta[None, None, None, :]
    return c.transpose(0, 2, 1, 3).reshape(nh * d, nh * d)


def chessboard_step(table: KernelTable, s: np.ndarray,
                    plane: ReflectionPlane):
    """Replace one half of the box by the mirror of the other, both ways.

    Returns (best config, its energy, energy of s).  The reflected
    configurations satisfy min(H+, H-) <= H(s), since H+ + H- <= 2 H(s)
    by reflection positivity of the cross term.
    """
    spec = table.spec
    half = half_box_sites(spec, plane)
    refl = reflect_config(spec, plane, s)
    s_pos = refl.copy()
    s_pos[half] = s[half]
    s_neg = s.copy()
    s_neg[half] = refl[half]
    h0 = energy(table, s)
    hp = energy(table, s_pos)
    hn = energy(table, s_neg)
    if hp <= hn:
        return s_pos, hp, h0
    return s_neg, hn, h0


def chessboard_descent(table: KernelTable, s: np.ndarray,
                       max_rounds: int = 8, tol: float = 1e-11):
    """Cycle chessboard steps over all planes until no step improves.

    Returns (config, energy, rounds used).  Each accepted step does not
    increase the energy, so the sequence is monotone.
    """
    spec = table.spec
    planes = reflection_planes(spec)
    cur = np.array(s, copy=True)
    h_cur = energy(table, cur)
    scale = abs(h_cur) + spec.n_sites
    for rounds in range(1, max_rounds + 1):
        improved = False
        for plane in planes:
            cand, h_cand, _ = chessboard_step(table, cur, plane)
            if h_cand < h_cur - tol * scale:
                cur, h_cur = cand, h_cand
                improved = True
        if not improved:
            return cur, h_cur, rounds
    return cur, h_cur, max_rounds
