"""Metropolis sampling of the dipole spin model with fluctuation checks.

Sequential-scan Metropolis with cone proposals around the current spin.
All randomness comes from numpy's PCG64 seeded through SeedSequence(seed)
.spawn(chain); each sweep draws, in this order, the cone uniforms u_t (N,),
the direction normals z (N, d), and the accept uniforms u_acc (N,).  Draws
never depend on outcomes, so a run is reproducible bit for bit on a given
backend, and the compiled and fallback backends consume identical streams.

The energy is tracked incrementally through the local field; a periodic
audit recomputes both from scratch and raises EnergyDriftError if the
incremental value has drifted beyond tolerance.

Measurements per sweep: mode occupations Q_ll(p) = |S-hat^l_p|^2 in the
original (unstaggered) variables, the staggered order parameter, per-site
energy, and the gauged fluctuation functionals entering the Gaussian
domination inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bounds as _bounds
from ._backend import backend_name, compute_field, energy_from_field, metropolis_sweeps
from .kernel import FourierKernel, KernelTable, fourier_kernel, offset_tables
from .lattice import (
    LatticeSpec,
    momentum_index,
    momentum_values,
    site_coordinates,
    special_momentum,
    special_momentum_index,
    stagger_signs,
)
from .rp import ground_state
from .spectral import ConstantsRecord

__all__ = [
    "EnergyDriftError",
    "MCParams",
    "MCRun",
    "blocked_mean_sem",
    "gaussdom_check",
    "gaussdom_test_set",
    "ir_check",
    "sample",
    "sum_rule_check",
]


class EnergyDriftError(RuntimeError):
    """Incremental energy lost track of the recomputed energy."""


@dataclass(frozen=True)
class MCParams:
    """Run parameters; see module docstring for the randomness contract.

    beta            inverse temperature
    n_sweeps        measurement sweeps per chain (multiple of block_size)
    n_burnin        discarded sweeps per chain, with step-size adaptation
    n_chains        independent chains (seeded by SeedSequence spawning)
    seed            root seed
    block_size      sweeps per block for error estimation
    cone_cos0       initial cone parameter cos(delta)
    adapt_interval  sweeps between step-size updates during burn-in
    target_acceptance  acceptance rate the adaptation steers toward
    drift_interval  sweeps between energy audits (0: audit only at the end)
    drift_rel_tol   audit tolerance relative to |e0| N
    """

    beta: float
    n_sweeps: int = 4096
    n_burnin: int = 1024
    n_chains: int = 4
    seed: int = 0
    block_size: int = 64
    cone_cos0: float = 0.5
    adapt_interval: int = 32
    target_acceptance: float = 0.5
    drift_interval: int = 256
    drift_rel_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.n_sweeps <= 0 or self.n_sweeps % self.block_size:
            raise ValueError("n_sweeps must be a positive multiple of block_size")
        if not 0.0 < self.cone_cos0 < 1.0:
            raise ValueError("cone_cos0 must be in (0, 1)")


def _draw_sweep(rng, n: int, d: int):
    """One sweep's random inputs, in the documented order."""
    u_t = rng.random((1, n))
    z = rng.standard_normal((1, n, d))
    u_acc = rng.random((1, n))
    return u_t, z, u_acc


def gaussdom_test_set(spec: LatticeSpec, fk: FourierKernel):
    """Deterministic gauged test functions for the domination inequality.

    For each momentum label m and unit vector v, the complex test function
    h^i_x = v_i exp(i p.x) splits into a cosine and sine pair; the exact
    upper bound on beta <|A|^2> is 2 N sum_i v_i^2 w0hat_ii(p + pi_i).
    Returns (labels, pairs, hset, rhs): hset stacks the real test functions,
    pairs[k] = (cos index, sin index) into hset for complex test k.
    """
    d = spec.d
    n = spec.n_sites
    x = site_coordinates(spec)
    ms = [np.zeros(d, dtype=np.int64)]
    m1 = np.zeros(d, dtype=np.int64)
    m1[0] = 1
    ms.append(m1)
    m2 = np.ones(d, dtype=np.int64)
    m2[min(1, d - 1)] = 2
    ms.append(m2)
    vs = [np.eye(d)[0], np.ones(d) / np.sqrt(d)]
    labels, pairs, hs, rhs = [], [], [], []
    for m in ms:
        phase = momentum_values(spec, m) @ x.T
        for v in vs:
            hc = v[None, :] * np.cos(phase)[:, None]
            hsin = v[None, :] * np.sin(phase)[:, None]
            k0 = len(hs)
            hs.extend([hc, hsin])
            pairs.append((k0, k0 + 1))
            bound = 0.0
            for i in range(d):
                mi = (m + special_momentum(spec, i + 1)) % spec.side
                bound += v[i] ** 2 * fk.w0hat[int(momentum_index(spec, mi)), i, i]
            rhs.append(2.0 * n * bound)
            labels.append(f"m={m.tolist()} v={np.round(v, 6).tolist()}")
    return labels, pairs, np.stack(hs), np.array(rhs)


@dataclass
class MCRun:
    """Everything a sampling run produced; arrays indexed (chain, sweep, ...)."""

    spec: LatticeSpec
    params: MCParams
    backend: str
    e0: float
    energy_series: np.ndarray        # (chains, sweeps) per-site energy
    comp2_series: np.ndarray         # (chains, sweeps, d) mean (S^l)^2
    m2_series: np.ndarray            # (chains, sweeps) staggered m^2
    gd_series: np.ndarray            # (chains, sweeps, K) A-functional values
    gd_labels: list
    gd_pairs: list
    gd_rhs: np.ndarray               # (K complex tests,)
    q_blocks: np.ndarray             # (chains, blocks, N, d) block means
    accept_rate: float
    cone_cos: np.ndarray             # (chains,) frozen step sizes
    drift_max: float
    final_spins: np.ndarray          # (chains, N, d)

    def q_mean_sem(self):
        """Pooled mean and standard error of Q_ll(p) per (momentum, l)."""
        blocks = self.q_blocks.reshape(-1, *self.q_blocks.shape[2:])
        mean = blocks.mean(axis=0)
        sem = blocks.std(axis=0, ddof=1) / np.sqrt(blocks.shape[0])
        return mean, sem

    def m2_mean_sem(self):
        return blocked_mean_sem(self.m2_series)

    def energy_mean_sem(self):
        return blocked_mean_sem(self.energy_series)


def blocked_mean_sem(series: np.ndarray, min_blocks: int = 8):
    """Mean and conservative standard error of (chains, sweeps) scalar series.

    Within each chain the series is blocked at doubling sizes; the standard
    error of the pooled mean is taken as the maximum over block levels with
    at least min_blocks blocks per chain, the usual plateau estimate for
    correlated data.  Chains count as independent.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    n_chains, n = series.shape
    mean = float(series.mean())
    best = 0.0
    size = 1
    while n // size >= min_blocks:
        nb = n // size
        trimmed = series[:, :nb * size].reshape(n_chains, nb, size)
        bm = trimmed.mean(axis=2)
        var_chain_mean = bm.var(axis=1, ddof=1) / nb
        sem = float(np.sqrt(var_chain_mean.sum()) / n_chains)
        best = max(best, sem)
        size *= 2
    return mean, best


def sample(table: KernelTable, params: MCParams,
           initial: str = "cold") -> MCRun:
    """Run Metropolis chains and collect per-sweep observables.

    initial: "cold" starts every chain in the axis-1 ground state (no draws
    consumed); "random" draws uniform spins from the chain stream first.
    """
    spec = table.spec
    n = spec.n_sites
    d = spec.d
    fk = fourier_kernel(table)
    e0 = fk.e0
    coords = np.ascontiguousarray(site_coordinates(spec) % spec.side,
                                  dtype=np.intc)
    offtab = offset_tables(spec)
    sites = np.arange(n, dtype=np.intc)
    tau = stagger_signs(spec)
    corners = [special_momentum_index(spec, axis) for axis in range(1, d + 1)]
    gd_labels, gd_pairs, hset, gd_rhs = gaussdom_test_set(spec, fk)
    hset_tau = hset * tau[None, :, :]
    k_tests = hset.shape[0]
    drift_tol = params.drift_rel_tol * abs(e0) * n

    n_chains = params.n_chains
    n_sweeps = params.n_sweeps
    n_blocks = n_sweeps // params.block_size
    energy_series = np.empty((n_chains, n_sweeps))
    comp2_series = np.empty((n_chains, n_sweeps, d))
    m2_series = np.empty((n_chains, n_sweeps))
    gd_series = np.empty((n_chains, n_sweeps, k_tests))
    q_blocks = np.zeros((n_chains, n_blocks, n, d))
    final_spins = np.empty((n_chains, n, d))
    cone_cos = np.empty(n_chains)
    accepted_total = 0
    drift_max = 0.0

    seqs = np.random.SeedSequence(params.seed).spawn(n_chains)
    fft_axes = tuple(range(d))
    sqrt_n = np.sqrt(n)

    for chain in range(n_chains):
        rng = np.random.Generator(np.random.PCG64(seqs[chain]))
        if initial == "cold":
            spins = ground_state(spec)
        elif initial == "random":
            spins = rng.standard_normal((n, d))
            spins /= np.linalg.norm(spins, axis=1, keepdims=True)
        else:
            raise ValueError(f"unknown initial state {initial!r}")
        spins = np.ascontiguousarray(spins)
        fld = np.asarray(compute_field(spins, table.w, offtab, coords))
        h_run = float(energy_from_field(spins, fld))

        cos_cone = params.cone_cos0
        # burn-in with step adaptation
        acc_window = 0
        for sweep in range(params.n_burnin):
            u_t, z, u_acc = _draw_sweep(rng, n, d)
            acc, dh = metropolis_sweeps(spins, fld, table.w, offtab, coords,
                                        sites, params.beta, cos_cone,
                                        u_t, z, u_acc)
            h_run += dh
            acc_window += acc
            if (sweep + 1) % params.adapt_interval == 0:
                rate = acc_window / (params.adapt_interval * n)
                one_minus = (1.0 - cos_cone) * np.exp(rate - params.target_acceptance)
                cos_cone = float(np.clip(1.0 - one_minus, 1e-6, 1.0 - 1e-6))
                acc_window = 0
        cone_cos[chain] = cos_cone

        block = 0
        q_acc = np.zeros((n, d))
        for sweep in range(n_sweeps):
            u_t, z, u_acc = _draw_sweep(rng, n, d)
            acc, dh = metropolis_sweeps(spins, fld, table.w, offtab, coords,
                                        sites, params.beta, cos_cone,
                                        u_t, z, u_acc)
            h_run += dh
            accepted_total += acc

            shat = (np.fft.ifftn(spins.reshape(spec.shape + (d,)),
                                 axes=fft_axes) * sqrt_n).reshape(n, d)
            qinst = (shat.real ** 2 + shat.imag ** 2)
            q_acc += qinst
            energy_series[chain, sweep] = h_run / n
            comp2_series[chain, sweep] = np.mean(spins ** 2, axis=0)
            m2_series[chain, sweep] = sum(qinst[corners[i], i]
                                          for i in range(d)) / n
            sigma = tau * spins
            gd_series[chain, sweep] = (
                2.0 * e0 * np.einsum("knd,nd->k", hset, sigma)
                - 2.0 * np.einsum("knd,nd->k", hset_tau, fld))

            audit = (params.drift_interval
                     and (sweep + 1) % params.drift_interval == 0)
            if audit or sweep + 1 == n_sweeps:
                fld = np.asarray(compute_field(spins, table.w, offtab, coords))
                h_full = float(energy_from_field(spins, fld))
                drift = abs(h_run - h_full)
                drift_max = max(drift_max, drift)
                if drift > drift_tol:
                    raise EnergyDriftError(
                        f"chain {chain} sweep {sweep + 1}: incremental energy "
                        f"off by {drift:.3e} (tol {drift_tol:.3e})")
                h_run = h_full
            if (sweep + 1) % params.block_size == 0:
                q_blocks[chain, block] = q_acc / params.block_size
                q_acc[:] = 0.0
                block += 1
        final_spins[chain] = spins

    accept_rate = accepted_total / (n_chains * n_sweeps * n)
    return MCRun(spec=spec, params=params, backend=backend_name(), e0=e0,
                 energy_series=energy_series, comp2_series=comp2_series,
                 m2_series=m2_series, gd_series=gd_series,
                 gd_labels=gd_labels, gd_pairs=gd_pairs, gd_rhs=gd_rhs,
                 q_blocks=q_blocks, accept_rate=accept_rate,
                 cone_cos=cone_cos, drift_max=drift_max,
                 final_spins=final_spins)


def ir_check(run: MCRun, fk: FourierKernel, rec: ConstantsRecord) -> dict:
    """Compare measured Q_ll(p) with both infrared bounds.

    Returns worst z-scores (measured minus bound over its standard error)
    across all finite entries; negative means the bound holds with room.
    """
    ir = _bounds.ir_bound(fk, rec, run.params.beta)
    mean, sem = run.q_mean_sem()
    out = {}
    for name, bound in (("diag", ir.diag), ("b36", ir.b36)):
        finite = np.isfinite(bound)
        gap = mean[finite] - bound[finite]
        z = gap / np.maximum(sem[finite], 1e-300)
        k = int(np.argmax(z))
        out[f"worst_z_{name}"] = float(z[k])
        out[f"worst_gap_{name}"] = float(gap[k])
    out["beta"] = run.params.beta
    return out


def sum_rule_check(run: MCRun) -> dict:
    """Parseval sum rule: mean_p Q_ll(p) = <(S^l)^2> exactly per sweep.

    trace_gap and parseval_residual are exact identities, valid always.
    max_abs_z compares each component with 1/d and is meaningful only when
    the sampler explores the symmetric ensemble (high temperature or
    direction-averaged starts); a cold start deep in the ordered phase
    stays in one orientation sector and will fail it by construction.
    """
    mean, _ = run.q_mean_sem()
    d = run.spec.d
    per_comp = mean.mean(axis=0)
    comp2 = run.comp2_series.mean(axis=(0, 1))
    trace_gap = float(abs(per_comp.sum() - 1.0))
    zs = []
    for i in range(d):
        m, s = blocked_mean_sem(run.comp2_series[:, :, i])
        zs.append((m - 1.0 / d) / max(s, 1e-300))
    return {
        "per_component": per_comp.tolist(),
        "parseval_residual": float(np.max(np.abs(per_comp - comp2))),
        "trace_gap": trace_gap,
        "max_abs_z": float(np.max(np.abs(zs))),
    }


def gaussdom_check(run: MCRun, null_tol: float = 1e-9) -> dict:
    """Check beta <|A|^2> <= RHS for every stored test function.

    Null tests (RHS exactly zero, the condensate modes) must give A = 0
    identically up to roundoff; the rest are compared statistically.
    """
    beta = run.params.beta
    worst_z = -np.inf
    worst_label = ""
    null_max = 0.0
    results = []
    for k, (ic, isn) in enumerate(run.gd_pairs):
        rhs = float(run.gd_rhs[k])
        a_c = run.gd_series[:, :, ic]
        a_s = run.gd_series[:, :, isn]
        if rhs <= null_tol * run.spec.n_sites:
            null_max = max(null_max, float(np.max(np.abs(a_c))),
                           float(np.max(np.abs(a_s))))
            results.append({"label": run.gd_labels[k], "null": True})
            continue
        mc, sc = blocked_mean_sem(a_c ** 2)
        ms, ss = blocked_mean_sem(a_s ** 2)
        lhs = beta * (mc + ms)
        sem = beta * float(np.hypot(sc, ss))
        z = (lhs - rhs) / max(sem, 1e-300)
        results.append({"label": run.gd_labels[k], "lhs": lhs, "rhs": rhs,
                        "z": z, "null": False})
        if z > worst_z:
            worst_z, worst_label = z, run.gd_labels[k]
    scale = abs(run.e0) * run.spec.n_sites
    return {"worst_z": float(worst_z), "worst_label": worst_label,
            "null_max_abs": null_max, "null_scale": scale,
            "tests": results}
