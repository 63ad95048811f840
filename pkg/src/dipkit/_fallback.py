"""Pure numpy implementations of the hot loops.

Mirrors `dipkit._core` operation by operation. The Metropolis sweep consumes
pre-drawn random arrays in the same order and with the same scalar arithmetic
as the compiled path, so the two produce bit-identical trajectories from a
shared kernel table and field.
"""

from __future__ import annotations

import math

import numpy as np

from ._yukawa_np import hessian3_batch


def image_cube(cutoff: int) -> np.ndarray:
    """All integer image shifts n with |n|_inf <= cutoff, shape (K, 3)."""
    r = np.arange(-cutoff, cutoff + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


def image_sum_3d(sites: np.ndarray, two_l: int, eps: float, cutoff: int) -> np.ndarray:
    """Sum -d_i d_j Y over periodic images x + 2L n, |n|_inf <= cutoff.

    sites: integer coordinates, shape (M, 3). The self term (image exactly at
    the origin) is skipped; it only occurs for the x = 0 site at n = 0.
    """
    sites = np.asarray(sites, dtype=np.int64)
    shifts = image_cube(cutoff) * two_l
    out = np.empty((sites.shape[0], 3, 3))
    for k, x in enumerate(sites):
        z = x[None, :] + shifts
        keep = np.any(z != 0, axis=1)
        out[k] = hessian3_batch(z[keep], eps).sum(axis=0)
    return out


def _offset_index(offtab: np.ndarray, coords: np.ndarray, x: int) -> np.ndarray:
    """Flat kernel index of (y - x) mod 2L for every site y."""
    cx = coords[x]
    idx = offtab[0][cx[0], coords[:, 0]].copy()
    for a in range(1, coords.shape[1]):
        idx += offtab[a][cx[a], coords[:, a]]
    return idx


def compute_field(
    spins: np.ndarray, wtable: np.ndarray, offtab: np.ndarray, coords: np.ndarray
) -> np.ndarray:
    """Local field h_y = sum_x W(y - x) S_x, including x = y."""
    field = np.zeros_like(spins)
    for x in range(spins.shape[0]):
        idx = _offset_index(offtab, coords, x)
        field += np.einsum("nij,j->ni", wtable[idx], spins[x])
    return field


def energy_from_field(spins: np.ndarray, field: np.ndarray) -> float:
    return float(np.einsum("ni,ni->", spins, field))


def metropolis_sweeps(
    spins: np.ndarray,
    field: np.ndarray,
    wtable: np.ndarray,
    offtab: np.ndarray,
    coords: np.ndarray,
    sites: np.ndarray,
    beta: float,
    cos_cone: float,
    u_t: np.ndarray,
    z_dir: np.ndarray,
    u_acc: np.ndarray,
):
    """Sequential-scan Metropolis sweeps with cone proposals.

    spins and field are updated in place. Returns (accepted moves, summed
    energy change). Random inputs are pre-drawn: u_t (nsweeps, M) uniforms for
    the cone cosine, z_dir (nsweeps, M, d) standard normals for the transverse
    direction, u_acc (nsweeps, M) uniforms for the accept test.
    """
    nsweeps, nmoves = u_t.shape
    d = spins.shape[1]
    one_minus = 1.0 - cos_cone
    w0 = wtable[0]
    n_acc = 0
    dh_sum = 0.0
    zp = np.empty(d)
    sp = np.empty(d)
    ds = np.empty(d)
    for s in range(nsweeps):
        for k in range(nmoves):
            x = int(sites[k])
            spin = spins[x]
            z = z_dir[s, k]
            t = 1.0 - u_t[s, k] * one_minus
            sdz = 0.0
            for i in range(d):
                sdz += z[i] * spin[i]
            nz2 = 0.0
            for i in range(d):
                zp[i] = z[i] - sdz * spin[i]
                nz2 += zp[i] * zp[i]
            if nz2 < 1e-24:
                continue
            coef = math.sqrt(1.0 - t * t) / math.sqrt(nz2)
            nrm2 = 0.0
            for i in range(d):
                sp[i] = t * spin[i] + coef * zp[i]
                nrm2 += sp[i] * sp[i]
            nrm = math.sqrt(nrm2)
            dot_f = 0.0
            for i in range(d):
                sp[i] = sp[i] / nrm
                ds[i] = sp[i] - spin[i]
            for i in range(d):
                dot_f += ds[i] * field[x, i]
            quad = 0.0
            for i in range(d):
                for j in range(d):
                    quad += ds[i] * w0[i, j] * ds[j]
            dh = 2.0 * dot_f + quad
            if dh > 0.0 and u_acc[s, k] >= math.exp(-beta * dh):
                continue
            idx = _offset_index(offtab, coords, x)
            field += np.einsum("nij,j->ni", wtable[idx], ds)
            for i in range(d):
                spins[x, i] = sp[i]
            n_acc += 1
            dh_sum += dh
    return n_acc, dh_sum
