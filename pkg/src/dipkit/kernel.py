"""Screened dipole pair kernel on a periodic box.

The pair coupling between unit spins at integer separation x is the negative
Hessian of the screened Coulomb potential Y(r) = exp(-eps r)/(4 pi r) (in
three dimensions), summed over all periodic images x + 2L n.  The on-site
matrix W(0) keeps only the nonzero images.

Two independent evaluation routes are provided for the point Hessian: the
closed form in three dimensions, and a slab-coordinate quadrature that works
in any dimension d >= 3 and doubles as a cross-check.  Kernel tables are
built once per (d, L, eps) and may be cached on disk in the DIPW1 format.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._backend import image_sum_3d
from ._yukawa_np import hessian3_batch, yukawa_np
from .lattice import (
    LatticeSpec,
    reduce_site,
    site_coordinates,
    site_index,
    special_momentum_index,
)

__all__ = [
    "CacheError",
    "FourierKernel",
    "KernelBudgetError",
    "KernelTable",
    "QuadratureError",
    "build_kernel",
    "ensure_kernel",
    "fourier_entry_direct",
    "fourier_kernel",
    "image_cutoff_for",
    "load_kernel",
    "offset_tables",
    "save_kernel",
    "truncation_bound",
    "yukawa",
    "yukawa_hessian",
    "yukawa_hessian_batch",
    "yukawa_hessian_slab",
]


class QuadratureError(RuntimeError):
    """Slab quadrature failed to reach the requested tolerance."""


class KernelBudgetError(RuntimeError):
    """A kernel build would exceed what this implementation can do."""


class CacheError(RuntimeError):
    """A kernel cache file is missing, corrupt, or does not match."""


def yukawa(r, eps: float):
    """Screened Coulomb potential exp(-eps r) / (4 pi r), d = 3."""
    return yukawa_np(np.asarray(r, dtype=float), eps)


def yukawa_hessian_batch(z: np.ndarray, eps: float) -> np.ndarray:
    """Closed-form -d_i d_j Y at rows of z (nonzero, shape (M, 3))."""
    z = np.asarray(z, dtype=float)
    return hessian3_batch(z, eps)


def yukawa_hessian(x, eps: float) -> np.ndarray:
    """Point coupling -d_i d_j Y at a single nonzero x, any d >= 3.

    Uses the closed form for d = 3 and the slab quadrature otherwise.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.any(x):
        raise ValueError("x must be a single nonzero point")
    if x.shape[0] == 3:
        return hessian3_batch(x[None, :], eps)[0]
    return yukawa_hessian_slab(x, eps)


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(eps: float, kmax: float, n: int):
    """Gauss-Legendre nodes on [-K, K] split at +-4 eps.

    The split resolves the curvature of sqrt(k^2 + eps^2) near k = 0, which
    a single panel misses badly when eps is small.
    """
    x, w = _leggauss(n)
    cut = 4.0 * eps
    edges = [-kmax, -cut, cut, kmax] if kmax > 2.0 * cut else [-kmax, kmax]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _slab_sums(xt: np.ndarray, xa_abs: float, eps: float,
               nodes: np.ndarray, wts: np.ndarray):
    """Accumulate the transverse-momentum sums for one node count.

    Returns (s_aa, s_t, s_tu): the weighted sums of E cos(k.xt) damp,
    k_t sin(k.xt) damp, and (k_t k_u / E) cos(k.xt) damp, where
    damp = exp(-|x_a| E) and E = sqrt(k^2 + eps^2).
    """
    dm1 = xt.shape[0]
    q = nodes.shape[0]
    s_aa = 0.0
    s_t = np.zeros(dm1)
    s_tu = np.zeros((dm1, dm1))
    if dm1 == 1:
        base_shape = ()
        base_grids = []
        base_w = np.ones(())
    else:
        base_grids = list(np.meshgrid(*([nodes] * (dm1 - 1)), indexing="ij"))
        base_w = np.ones(base_grids[0].shape)
        for wg in np.meshgrid(*([wts] * (dm1 - 1)), indexing="ij"):
            base_w = base_w * wg
        base_shape = base_grids[0].shape
    base_k2 = sum(g * g for g in base_grids) if base_grids else 0.0
    base_ph = sum(g * xt[i + 1] for i, g in enumerate(base_grids)) if base_grids else 0.0
    # chunk over the first transverse axis to bound memory in high d
    chunk = max(1, int(2 ** 21 // max(1, int(np.prod(base_shape)))))
    for start in range(0, q, chunk):
        k0 = nodes[start:start + chunk].reshape((-1,) + (1,) * len(base_shape))
        w0 = wts[start:start + chunk].reshape(k0.shape)
        e = np.sqrt(k0 * k0 + base_k2 + eps * eps)
        ph = k0 * xt[0] + base_ph
        damp = np.exp(-xa_abs * e)
        wd = (w0 * base_w) * damp
        cosw = np.cos(ph) * wd
        sinw = np.sin(ph) * wd
        grids = [k0] + [g[None, ...] for g in base_grids]
        s_aa += float(np.sum(e * cosw))
        cos_e = cosw / e
        for t in range(dm1):
            s_t[t] += float(np.sum(grids[t] * sinw))
            for u in range(t, dm1):
                s_tu[t, u] += float(np.sum(grids[t] * grids[u] * cos_e))
    for t in range(dm1):
        for u in range(t):
            s_tu[t, u] = s_tu[u, t]
    return s_aa, s_t, s_tu


def _slab_assemble(d: int, a_axis: int, sgn: float, pref: float,
                   s_aa: float, s_t: np.ndarray, s_tu: np.ndarray) -> np.ndarray:
    h = np.empty((d, d))
    taxes = [i for i in range(d) if i != a_axis]
    h[a_axis, a_axis] = -pref * s_aa
    for ti, t in enumerate(taxes):
        val = -pref * sgn * s_t[ti]
        h[a_axis, t] = h[t, a_axis] = val
        for uj in range(ti, d - 1):
            u = taxes[uj]
            h[t, u] = h[u, t] = pref * s_tu[ti, uj]
    return h


def yukawa_hessian_slab(x, eps: float, rel_tol: float = 1e-10,
                        n_start: int = 24, n_max: int = 192) -> np.ndarray:
    """Point coupling -d_i d_j Y via the slab integral, any d >= 2.

    Writes Y as a (d-1)-dimensional momentum integral over the hyperplane
    orthogonal to the largest coordinate of x and differentiates under the
    integral.  Node counts double until successive results agree to rel_tol.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if not np.any(x):
        raise ValueError("slab integral needs x != 0")
    a_axis = int(np.argmax(np.abs(x)))
    xa = x[a_axis]
    xa_abs = abs(xa)
    sgn = 1.0 if xa > 0 else -1.0
    xt = np.delete(x, a_axis)
    kmax = max(40.0 / xa_abs, 8.0 * eps)
    pref = 1.0 / (2.0 * (2.0 * np.pi) ** (d - 1))
    prev = None
    n = n_start
    while n <= n_max:
        nodes, wts = _panel_nodes(eps, kmax, n)
        h = _slab_assemble(d, a_axis, sgn, pref,
                           *_slab_sums(xt, xa_abs, eps, nodes, wts))
        if prev is not None:
            scale = max(np.max(np.abs(h)), 1e-280)
            if np.max(np.abs(h - prev)) <= rel_tol * scale:
                return h
        prev = h
        n *= 2
    raise QuadratureError(
        f"slab quadrature did not converge at x={x.tolist()}, eps={eps}")


def _entry_bound(r: float, eps: float) -> float:
    """Upper bound on |(-d_i d_j Y)(z)| for |z| >= r, d = 3."""
    if r <= 0.0:
        return np.inf
    er = eps * r
    return np.exp(-er) * (er * er + 4.0 * er + 4.0) / (4.0 * np.pi * r ** 3)


def truncation_bound(spec: LatticeSpec, cutoff: int, n_shells: int = 800) -> float:
    """Bound the per-entry error of stopping the image sum at |n|_inf <= cutoff."""
    two_l = spec.side
    half_diag = spec.L * np.sqrt(spec.d)
    total = 0.0
    for c in range(cutoff + 1, cutoff + 1 + n_shells):
        count = (2 * c + 1) ** spec.d - (2 * c - 1) ** spec.d
        term = count * _entry_bound(two_l * c - half_diag, spec.epsilon)
        total += term
        if term < 1e-6 * total and term < 1e-300 * max(total, 1.0):
            break
    return total


def image_cutoff_for(spec: LatticeSpec, tol: float) -> int:
    """Smallest image cutoff whose truncation bound is below tol."""
    for c in range(1, 100_000):
        if truncation_bound(spec, c) <= tol:
            return c
    raise KernelBudgetError(f"no feasible image cutoff for tol={tol}")


@dataclass(frozen=True)
class KernelTable:
    """Pair couplings W_ij(x) for every offset x in the box.

    w has shape (n_sites, d, d) in the row-major site order of the lattice
    helpers; entry 0 is the on-site matrix W(0).
    """

    spec: LatticeSpec
    w: np.ndarray
    image_cutoff: int
    truncation_error_bound: float

    def matrix(self, x) -> np.ndarray:
        """Coupling matrix at integer offset x (reduced into the box)."""
        return self.w[site_index(self.spec, reduce_site(self.spec, x))]

    def as_grid(self) -> np.ndarray:
        """View of w with shape (2L,)*d + (d, d)."""
        d = self.spec.d
        return self.w.reshape(self.spec.shape + (d, d))


def build_kernel(spec: LatticeSpec, tol: float = 1e-13,
                 max_images: int = 400_000_000) -> KernelTable:
    """Tabulate W_ij(x) for all x in the box by summed periodic images.

    Only canonical offsets (coordinates sorted by decreasing magnitude) are
    summed; the rest follow from the sign and permutation symmetries of the
    Hessian.  tol is an absolute per-entry bound on the discarded images.
    """
    if spec.d != 3:
        raise KernelBudgetError(
            "full kernel tables are implemented for d = 3 only; use "
            "yukawa_hessian_slab for point values in higher dimensions")
    cutoff = image_cutoff_for(spec, tol)
    bound = truncation_bound(spec, cutoff)
    coords = site_coordinates(spec)
    ax = np.abs(coords)
    perm = np.argsort(-ax, axis=1, kind="stable")
    canon = np.take_along_axis(ax, perm, axis=1)
    inv = np.argsort(perm, axis=1)
    signs = np.where(coords < 0, -1.0, 1.0)
    uniq, uidx = np.unique(canon, axis=0, return_inverse=True)
    n_images = uniq.shape[0] * (2 * cutoff + 1) ** spec.d
    if n_images > max_images:
        raise KernelBudgetError(
            f"kernel build needs {n_images} image evaluations "
            f"(limit {max_images}); raise tol or shrink the box")
    wcanon = np.asarray(image_sum_3d(uniq.astype(np.int64), spec.side,
                                     spec.epsilon, cutoff))
    # off-diagonal entries along a coordinate that is 0 or L vanish exactly
    # (flipping that coordinate fixes the offset and negates the entry);
    # enforce this so the sign symmetries of the table are exact
    fixed = (uniq == 0) | (uniq == spec.L)
    kill = fixed[:, :, None] | fixed[:, None, :]
    kill &= ~np.eye(spec.d, dtype=bool)[None, :, :]
    wcanon[kill] = 0.0
    wc = wcanon[uidx]
    n = coords.shape[0]
    rows = np.arange(n)[:, None, None]
    w = wc[rows, inv[:, :, None], inv[:, None, :]]
    w = w * (signs[:, :, None] * signs[:, None, :])
    return KernelTable(spec=spec, w=np.ascontiguousarray(w),
                       image_cutoff=cutoff, truncation_error_bound=bound)


@dataclass(frozen=True)
class FourierKernel:
    """Lattice Fourier transform of a kernel table.

    what[k] = sum_x exp(i p_k . x) W(x), real symmetric, in the row-major
    momentum order of the lattice helpers.  e0 is the minimum of the first
    diagonal entry over the zone, attained at the axis-1 corner momentum;
    w0hat subtracts e0 from the diagonal.
    """

    spec: LatticeSpec
    what: np.ndarray
    e0: float
    imag_residual: float

    @property
    def w0hat(self) -> np.ndarray:
        out = self.what.copy()
        idx = np.arange(self.spec.d)
        out[:, idx, idx] -= self.e0
        return out


def fourier_kernel(table: KernelTable) -> FourierKernel:
    """Transform W to momentum space on the dual grid p = pi m / L."""
    spec = table.spec
    d = spec.d
    n = spec.n_sites
    grid = table.as_grid()
    what_c = np.fft.ifftn(grid, axes=tuple(range(d))) * n
    resid = float(np.max(np.abs(what_c.imag)))
    scale = float(np.max(np.abs(what_c.real)))
    if resid > 1e-10 * scale:
        raise ValueError(f"Fourier transform not real: residual {resid:.3e}")
    what = np.ascontiguousarray(what_c.real.reshape(n, d, d))
    e0 = float(what[special_momentum_index(spec, 1), 0, 0])
    return FourierKernel(spec=spec, what=what, e0=e0, imag_residual=resid)


def fourier_entry_direct(spec: LatticeSpec, m, tol: float = 1e-10,
                         chunk: int = 2_000_000) -> np.ndarray:
    """Direct-sum value of what(p) at integer momentum index m, d = 3 only.

    Sums cos(p . z) (-d_i d_j Y)(z) over the infinite lattice inside a cube
    chosen from the tail bound; independent of the boxed image construction,
    so it cross-checks build_kernel and fourier_kernel together.
    """
    if spec.d != 3:
        raise KernelBudgetError("direct Fourier sums are d = 3 only")
    p = np.pi * np.asarray(m, dtype=float) / spec.L
    radius = 1
    while True:
        tail = 0.0
        for c in range(radius + 1, radius + 800):
            count = (2 * c + 1) ** 3 - (2 * c - 1) ** 3
            term = count * _entry_bound(float(c), spec.epsilon)
            tail += term
            if term < 1e-9 * tail:
                break
        if tail <= tol:
            break
        radius += max(1, radius // 4)
        if radius > 4000:
            raise KernelBudgetError("direct Fourier sum radius too large")
    r = np.arange(-radius, radius + 1)
    total = np.zeros((3, 3))
    plane = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    for z0 in r:
        z = np.empty((plane.shape[0], 3))
        z[:, 0] = z0
        z[:, 1:] = plane
        keep = np.any(z != 0.0, axis=1)
        z = z[keep]
        for start in range(0, z.shape[0], chunk):
            blk = z[start:start + chunk]
            h = hessian3_batch(blk, spec.epsilon)
            c = np.cos(blk @ p)
            total += np.einsum("m,mij->ij", c, h)
    return total


def offset_tables(spec: LatticeSpec) -> np.ndarray:
    """Per-axis flat-index offsets: offtab[a, ux, uy] = stride_a * ((uy-ux) mod 2L).

    Summing over axes turns coordinate differences into kernel row indices:
    index(y - x) = sum_a offtab[a, u_x[a], u_y[a]].
    """
    two_l = spec.side
    d = spec.d
    strides = [spec.side ** (d - 1 - a) for a in range(d)]
    u = np.arange(two_l)
    diff = (u[None, :] - u[:, None]) % two_l
    out = np.empty((d, two_l, two_l), dtype=np.intc)
    for a in range(d):
        out[a] = strides[a] * diff
    return out


_HEADER_FMT = "<5sBIIddq"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_MAGIC = b"DIPW1"


def save_kernel(table: KernelTable, path) -> None:
    """Write a kernel table in the DIPW1 cache format.

    Layout: magic "DIPW1"; packed little-endian header (dim u8, L u32,
    image cutoff u32, eps f64, truncation bound f64, entry count i64);
    row-major float64 entries; CRC32 of header plus body.
    """
    spec = table.spec
    body = np.ascontiguousarray(table.w, dtype="<f8").tobytes()
    header = struct.pack(_HEADER_FMT, _MAGIC, spec.d, spec.L,
                         table.image_cutoff, spec.epsilon,
                         table.truncation_error_bound, table.w.size)
    crc = zlib.crc32(header + body) & 0xFFFFFFFF
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def load_kernel(path, spec: LatticeSpec | None = None) -> KernelTable:
    """Read a DIPW1 cache file, verifying the checksum and, if given, spec."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read kernel cache {path}: {exc}") from exc
    if len(raw) < _HEADER_SIZE + 4:
        raise CacheError(f"kernel cache {path} is truncated")
    header, body, tail = (raw[:_HEADER_SIZE], raw[_HEADER_SIZE:-4], raw[-4:])
    magic, dim, length, cutoff, eps, bound, count = struct.unpack(
        _HEADER_FMT, header)
    if magic != _MAGIC:
        raise CacheError(f"kernel cache {path} has bad magic {magic!r}")
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(header + body) & 0xFFFFFFFF != crc:
        raise CacheError(f"kernel cache {path} failed its checksum")
    if count * 8 != len(body):
        raise CacheError(f"kernel cache {path} has wrong body size")
    file_spec = LatticeSpec(d=dim, L=length, epsilon=eps)
    if spec is not None and (spec.d, spec.L) != (dim, length):
        raise CacheError(f"kernel cache {path} is for another box")
    if spec is not None and spec.epsilon != eps:
        raise CacheError(f"kernel cache {path} is for eps={eps:.12g}")
    n = file_spec.n_sites
    d = file_spec.d
    if count != n * d * d:
        raise CacheError(f"kernel cache {path} has inconsistent entry count")
    w = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, d, d)
    return KernelTable(spec=file_spec, w=w, image_cutoff=cutoff,
                       truncation_error_bound=bound)


def _cache_name(spec: LatticeSpec, tol: float) -> str:
    return f"dipw_d{spec.d}_L{spec.L}_eps{spec.epsilon:.12g}_tol{tol:.3g}.dipw"


def ensure_kernel(spec: LatticeSpec, tol: float = 1e-13,
                  cache_dir=None) -> KernelTable:
    """Load the kernel for spec from cache_dir, building and saving if absent."""
    if cache_dir is None:
        return build_kernel(spec, tol=tol)
    path = Path(cache_dir) / _cache_name(spec, tol)
    if path.exists():
        return load_kernel(path, spec=spec)
    table = build_kernel(spec, tol=tol)
    save_kernel(table, path)
    return table
