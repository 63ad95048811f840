#!/usr/bin/env python3
"""Throughput comparison of the compiled core against the NumPy fallback.

Times the two hot paths behind the backend seam, on identical inputs:

  * periodic image summation (kernel construction)
  * sequential Metropolis sweeps (sampling)

Both implementations must agree before timing counts: image sums to a few
ulp, sweep trajectories bitwise.  Run from a built checkout:

    python3 benchmarks/bench_core.py [--L 2] [--epsilon 0.25] [--sweeps 64]
"""

import argparse
import sys
import time

import numpy as np

from dipkit import _fallback
from dipkit.kernel import build_kernel, image_cutoff_for, offset_tables
from dipkit.lattice import LatticeSpec, site_coordinates
from dipkit.rp import ground_state

try:
    from dipkit import _core
except ImportError:
    _core = None


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_image_sum(spec, repeat, n_sites_timed):
    cutoff = image_cutoff_for(spec, 1e-13)
    sites = site_coordinates(spec)[:n_sites_timed].astype(np.int64)
    sites = np.ascontiguousarray(sites)
    n_images = sites.shape[0] * (2 * cutoff + 1) ** spec.d
    rows = {}
    ref = None
    for name, mod in (("compiled", _core), ("fallback", _fallback)):
        if mod is None:
            continue
        dt, out = best_time(
            lambda m=mod: m.image_sum_3d(sites, spec.side, spec.epsilon, cutoff),
            repeat)
        if ref is None:
            ref = out
        else:
            scale = np.max(np.abs(ref))
            worst = np.max(np.abs(out - ref)) / scale
            if worst > 1e-12:
                sys.exit(f"image sums disagree between backends: {worst:.3e}")
        rows[name] = (dt, n_images / dt)
    return cutoff, rows


def bench_sweeps(spec, table, n_sweeps, repeat):
    n, d = spec.n_sites, spec.d
    coords = np.ascontiguousarray(site_coordinates(spec) % spec.side,
                                  dtype=np.intc)
    offtab = offset_tables(spec)
    site_order = np.arange(n, dtype=np.intc)
    wtable = table.w
    rng = np.random.default_rng(0)
    u_t = rng.random((n_sweeps, n))
    z_dir = rng.standard_normal((n_sweeps, n, d))
    u_acc = rng.random((n_sweeps, n))
    beta, cone = 170.0, 0.98

    rows = {}
    ref_spins = None
    for name, mod in (("compiled", _core), ("fallback", _fallback)):
        if mod is None:
            continue
        def run(m=mod):
            spins = ground_state(spec).copy()
            field = m.compute_field(spins, wtable, offtab, coords)
            m.metropolis_sweeps(spins, field, wtable, offtab, coords,
                                site_order, beta, cone, u_t, z_dir, u_acc)
            return spins
        dt, spins = best_time(run, repeat)
        if ref_spins is None:
            ref_spins = spins
        elif not np.array_equal(spins, ref_spins):
            sys.exit("sweep trajectories are not bitwise identical")
        rows[name] = (dt, n_sweeps / dt)
    return rows


def print_rows(title, unit, rows):
    print(f"\n{title}")
    base = rows.get("fallback", (None, None))[0]
    for name in ("compiled", "fallback"):
        if name not in rows:
            print(f"  {name:<9} (not built)")
            continue
        dt, rate = rows[name]
        speedup = "" if base is None or name == "fallback" \
            else f"  ({base / dt:.1f}x over fallback)"
        print(f"  {name:<9} {dt * 1e3:9.2f} ms   {rate:12.3g} {unit}{speedup}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--epsilon", type=float, default=0.25)
    ap.add_argument("--sweeps", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--image-sites", type=int, default=16,
                    help="sites per timed image-sum call")
    args = ap.parse_args()

    spec = LatticeSpec(3, args.L, args.epsilon)
    if _core is None:
        print("compiled core not available; timing fallback only")

    cutoff, rows = bench_image_sum(spec, args.repeat, args.image_sites)
    print(f"box: L={spec.L} side={spec.side} N={spec.n_sites} "
          f"epsilon={spec.epsilon} image cutoff={cutoff}")
    print_rows("image summation", "hessians/s", rows)

    table = build_kernel(spec)
    rows = bench_sweeps(spec, table, args.sweeps, args.repeat)
    print_rows(f"metropolis sweeps (x{args.sweeps})", "sweeps/s", rows)


if __name__ == "__main__":
    main()
