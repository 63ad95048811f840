"""Command line driver.

Subcommands map one-to-one onto the library layers:

  kernel      build the interaction table, save the binary cache
  spectrum    eigenvalue sweep of the transformed kernel, CSV output
  constants   cross-validated lattice constants at one screening value
  bounds      infrared bound tables, ordering bound, c_d curve CSV
  verify-rp   reflection structure checks on one box
  groundstate write the exact minimizer and verify its energy
  simulate    Metropolis run with bound and sum-rule checks
  report      merge saved reports into one summary

Every command writes a JSON report (schema in dipkit.report) and exits 0
only when all its checks pass.  Given the same configuration and seed,
reruns produce byte-identical CSV artifacts, and reports that agree
after the wall-time field is stripped.

Configuration is resolved in three layers: built-in defaults, then an
optional flat key=value file (--config), then explicit flags.  Tolerance
knobs are namespaced: `tol.cross_tol = 1e-8` in a file, or repeated
`--tol cross_tol=1e-8` flags.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bounds as _bounds
from . import kernel as _kernel
from . import mc as _mc
from . import rp as _rp
from . import spectral as _spectral
from ._backend import backend_name
from .lattice import (LatticeSpec, momentum_grid, momentum_index,
                      site_coordinates, site_index, special_momentum_index)
from .report import CheckResult, VerificationReport, exit_code, merge_reports, render_table

TOL_DEFAULTS = {
    "kernel_tol": 1e-13,      # image truncation target for kernel builds
    "cross_tol": 1e-6,        # constants dual-route relative agreement
    "tail_target": 1e-9,      # ball-sum tail bound target
    "psd_tol": 1e-12,         # relative floor for exact-identity checks
    "route_tol": 1e-10,       # relative energy-route agreement
    "fourier_tol": 1e-10,     # direct Fourier entry agreement
    "drift_rel_tol": 1e-6,    # sampling energy audit tolerance
    "z_max": 4.0,             # statistical gates, in standard errors
    "null_tol": 1e-9,         # null-test scale for domination checks
}

_CONFIG_SCHEMA = (
    # name, kind, default
    ("dim", "int", 3),
    ("L", "int", 4),
    ("epsilon", "eps", "auto"),
    ("beta", "float", 0.0),
    ("seed", "int", 0),
    ("sweeps", "int", 512),
    ("burnin", "int", 256),
    ("chains", "int", 2),
    ("block", "int", 64),
    ("init", "choice", "cold"),
    ("out", "str", "."),
    ("cache", "str", ""),
)
_INIT_CHOICES = ("cold", "random")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dim: int = 3
    L: int = 4
    epsilon: object = "auto"   # float, or the string "auto"
    beta: float = 0.0
    seed: int = 0
    sweeps: int = 512
    burnin: int = 256
    chains: int = 2
    block: int = 64
    init: str = "cold"
    out: str = "."
    cache: str = ""
    tols: dict = field(default_factory=lambda: dict(TOL_DEFAULTS))

    def spec(self) -> LatticeSpec:
        if self.epsilon == "auto":
            return LatticeSpec.auto(self.dim, self.L)
        return LatticeSpec(self.dim, self.L, float(self.epsilon))

    def tol(self, name: str) -> float:
        return self.tols[name]


def _parse_value(name: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "eps":
            return "auto" if raw == "auto" else float(raw)
        if kind == "choice":
            if raw not in _INIT_CHOICES:
                raise ValueError(f"one of {_INIT_CHOICES}")
            return raw
        if kind == "str":
            return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {raw!r} ({exc})") from None
    raise ConfigError(f"unknown kind {kind!r}")


def parse_config(text: str) -> RunConfig:
    """Parse the flat key=value format; unknown or repeated keys fail."""
    kinds = {name: kind for name, kind, _ in _CONFIG_SCHEMA}
    values = {}
    tols = dict(TOL_DEFAULTS)
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        seen.add(key)
        if key.startswith("tol."):
            tname = key[4:]
            if tname not in TOL_DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown tolerance {tname!r}")
            tols[tname] = _parse_value(key, "float", raw)
        elif key in kinds:
            values[key] = _parse_value(key, kinds[key], raw)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return RunConfig(**values, tols=tols)


def dump_config(cfg: RunConfig) -> str:
    """Inverse of parse_config: parse(dump(cfg)) == cfg, losslessly."""
    lines = []
    for name, kind, _ in _CONFIG_SCHEMA:
        value = getattr(cfg, name)
        if kind == "float" or (kind == "eps" and value != "auto"):
            lines.append(f"{name} = {float(value)!r}")
        else:
            lines.append(f"{name} = {value}")
    for tname in sorted(cfg.tols):
        lines.append(f"tol.{tname} = {cfg.tols[tname]!r}")
    return "\n".join(lines) + "\n"


def _apply_cli(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    for name, kind, _ in _CONFIG_SCHEMA:
        raw = getattr(args, name, None)
        if raw is None:
            continue
        updates[name] = _parse_value(name, kind, str(raw))
    tols = dict(cfg.tols)
    for item in args.tol or ():
        if "=" not in item:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        tname, _, raw = item.partition("=")
        tname = tname.strip()
        if tname not in TOL_DEFAULTS:
            raise ConfigError(f"unknown tolerance {tname!r}; "
                              f"known: {', '.join(sorted(TOL_DEFAULTS))}")
        tols[tname] = _parse_value(tname, "float", raw)
    return replace(cfg, **updates, tols=tols)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    return _apply_cli(cfg, args)


# ---------------------------------------------------------------- helpers

def _new_report(command: str, cfg: RunConfig, spec: LatticeSpec | None) -> VerificationReport:
    box = {}
    if spec is not None:
        box = {"dim": spec.d, "L": spec.L, "epsilon": spec.epsilon,
               "epsilon_policy": spec.epsilon_policy}
    params = {"beta": cfg.beta, "seed": cfg.seed, "sweeps": cfg.sweeps,
              "burnin": cfg.burnin, "chains": cfg.chains, "block": cfg.block,
              "init": cfg.init, "tol": dict(sorted(cfg.tols.items()))}
    return VerificationReport(command=command, box=box, params=params,
                              backend=backend_name())


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cache_dir(cfg: RunConfig) -> str | None:
    return cfg.cache or None


def _table_for(cfg: RunConfig, spec: LatticeSpec):
    return _kernel.ensure_kernel(spec, tol=cfg.tol("kernel_tol"),
                                 cache_dir=_cache_dir(cfg))


def _finish(report: VerificationReport, outdir: Path, t0: float,
            filename: str) -> int:
    report.seconds = time.perf_counter() - t0
    report.save(outdir / filename)
    print(render_table(report))
    print(f"report: {outdir / filename}")
    return exit_code(report)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def cmd_kernel(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    cache_dir = cfg.cache or cfg.out
    tol = cfg.tol("kernel_tol")
    table = _kernel.ensure_kernel(spec, tol=tol, cache_dir=cache_dir)
    rep = _new_report("kernel", cfg, spec)

    rep.add(CheckResult("kernel.truncation_bound",
                        table.truncation_error_bound <= tol,
                        value=table.truncation_error_bound, threshold=tol,
                        detail={"image_cutoff": table.image_cutoff}))

    asym = float(np.max(np.abs(table.w - table.w.transpose(0, 2, 1))))
    rep.add(CheckResult("kernel.symmetry", asym == 0.0, value=asym,
                        threshold=0.0))

    coords = site_coordinates(spec)
    # wrap each coordinate of -x back into [-L+1, L]
    red = ((-coords) - (-spec.L + 1)) % spec.side + (-spec.L + 1)
    perm = site_index(spec, red)
    parity = float(np.max(np.abs(table.w - table.w[perm])))
    rep.add(CheckResult("kernel.parity", parity == 0.0, value=parity,
                        threshold=0.0))

    fixed = (coords == 0) | (coords == spec.L)
    kill = fixed[:, :, None] | fixed[:, None, :]
    kill &= ~np.eye(spec.d, dtype=bool)[None]
    axis_max = float(np.max(np.abs(table.w[kill]))) if kill.any() else 0.0
    rep.add(CheckResult("kernel.axis_zeros", axis_max == 0.0,
                        value=axis_max, threshold=0.0))

    path = Path(cache_dir) / _kernel._cache_name(spec, tol)
    loaded = _kernel.load_kernel(path, spec=spec)
    diff = float(np.max(np.abs(loaded.w - table.w)))
    meta_ok = (loaded.image_cutoff == table.image_cutoff
               and loaded.truncation_error_bound == table.truncation_error_bound)
    rep.add(CheckResult("kernel.cache_roundtrip", diff == 0.0 and meta_ok,
                        value=diff, threshold=0.0,
                        detail={"path": str(path)}))

    print(f"kernel: cutoff={table.image_cutoff} "
          f"bound={table.truncation_error_bound:.3e} cache={path}")
    return _finish(rep, outdir, t0, "kernel_report.json")


def cmd_spectrum(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    table = _table_for(cfg, spec)
    fk = _kernel.fourier_kernel(table)
    st = _spectral.psd_sweep(fk)
    _spectral.spectrum_csv(st, outdir / "spectrum.csv")
    rep = _new_report("spectrum", cfg, spec)

    psd_tol = cfg.tol("psd_tol")
    floor = -psd_tol * st.scale
    rep.add(CheckResult("spectral.psd", st.min_eigenvalue >= floor,
                        value=st.min_eigenvalue, threshold=floor,
                        detail={"scale": st.scale}))

    corner_max = float(np.max(np.abs(
        st.eigenvalues[list(st.zero_indices)].min(axis=1))))
    off_min = st.off_zero_minimum()
    thr = psd_tol * st.scale
    rep.add(CheckResult("spectral.zero_set",
                        corner_max <= thr and off_min > thr,
                        value=off_min, threshold=thr,
                        detail={"corner_eigenvalue_max": corner_max,
                                "n_zero_momenta": len(st.zero_indices)}))

    m = np.ones(spec.d, dtype=int)
    direct = _kernel.fourier_entry_direct(spec, m, tol=1e-12)
    via_fft = fk.what[_momentum_row(spec, m)]
    scale = float(np.max(np.abs(fk.what)))
    entry_diff = float(np.max(np.abs(direct - via_fft))) / scale
    ftol = cfg.tol("fourier_tol")
    rep.add(CheckResult("kernel.fourier_entry", entry_diff <= ftol,
                        value=entry_diff, threshold=ftol,
                        detail={"m": [int(v) for v in m]}))

    print(f"spectrum: min_eig={st.min_eigenvalue:.3e} "
          f"off_zero_min={off_min:.6g} csv={outdir / 'spectrum.csv'}")
    return _finish(rep, outdir, t0, "spectrum_report.json")


def _momentum_row(spec: LatticeSpec, m) -> int:
    return int(momentum_index(spec, np.asarray(m) % spec.side))


def cmd_constants(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    rep = _new_report("constants", cfg, spec)
    cross_tol = cfg.tol("cross_tol")
    try:
        rec = _spectral.constants(spec.epsilon, cross_tol=cross_tol,
                                  tail_target=cfg.tol("tail_target"),
                                  cache_dir=_cache_dir(cfg))
    except _spectral.ConstantsMismatch as exc:
        rep.add(CheckResult("spectral.cross_route", False,
                            detail={"error": str(exc)}))
        return _finish(rep, outdir, t0, "constants_report.json")

    worst = max(rec.residuals[k] / max(abs(getattr(rec, k)), 1e-300)
                for k in rec.residuals)
    rep.add(CheckResult("spectral.cross_route", True, value=worst,
                        threshold=cross_tol,
                        detail={"residuals": rec.residuals,
                                "tail_bound": rec.tail_bound,
                                "ball_radius": rec.ball_radius}))

    resid = _spectral.gap_identity_residual(rec, d=spec.d)
    floor = -cfg.tol("psd_tol") * rec.gap
    rep.add(CheckResult("spectral.gap_identity", resid >= floor,
                        value=resid, threshold=floor,
                        detail={"gap": rec.gap}))

    payload = {"epsilon": rec.epsilon, "e0": rec.e0, "e1": rec.e1,
               "alpha": rec.alpha, "gamma": rec.gamma, "gap": rec.gap,
               "box_L": rec.box_L, "ball_radius": rec.ball_radius,
               "tail_bound": rec.tail_bound, "residuals": rec.residuals}
    _write_json(outdir / "constants.json", payload)
    print(f"constants: e0={rec.e0:.12g} e1={rec.e1:.12g} "
          f"alpha={rec.alpha:.12g} gamma={rec.gamma:.12g}")
    return _finish(rep, outdir, t0, "constants_report.json")


def cmd_bounds(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    if cfg.beta <= 0.0:
        raise ConfigError("bounds requires beta > 0")
    outdir = _outdir(cfg)
    rec = _spectral.constants(spec.epsilon, cross_tol=cfg.tol("cross_tol"),
                              tail_target=cfg.tol("tail_target"),
                              cache_dir=_cache_dir(cfg))
    table = _table_for(cfg, spec)
    fk = _kernel.fourier_kernel(table)
    rep = _new_report("bounds", cfg, spec)
    psd_tol = cfg.tol("psd_tol")

    margin, at = _spectral.conjecture_margin(fk, rec.alpha, rec.gamma)
    floor = -psd_tol * rec.gap
    rep.add(CheckResult("spectral.dispersion_margin", margin >= floor,
                        value=margin, threshold=floor,
                        detail={"argmin_momentum_row": int(at)}))

    curv = _spectral.zero_branch_curvature(fk)
    need = rec.alpha / spec.d
    rep.add(CheckResult("spectral.zero_curvature", curv >= need,
                        value=curv, threshold=need))

    beta = cfg.beta
    irt = _bounds.ir_bound(fk, rec, beta)
    # gap of this box's transform; differs from rec.gap only by image
    # truncation when the constants box has another size
    gap_box = float(fk.what[special_momentum_index(spec, 1), 1, 1]) - fk.e0
    corner_diag = 1.0 / (2.0 * beta * gap_box)
    corner_b36 = spec.d / (2.0 * beta * (rec.alpha + rec.gamma))
    worst = 0.0
    for axis in range(1, spec.d + 1):
        row = special_momentum_index(spec, axis)
        for comp in range(spec.d):
            if comp == axis - 1:
                ok = np.isinf(irt.diag[row, comp]) and np.isinf(irt.b36[row, comp])
                worst = worst if ok else np.inf
            else:
                worst = max(worst,
                            abs(irt.diag[row, comp] - corner_diag) / corner_diag,
                            abs(irt.b36[row, comp] - corner_b36) / corner_b36)
    rep.add(CheckResult("bounds.corner_exact", worst <= psd_tol,
                        value=worst, threshold=psd_tol))

    finite = np.isfinite(irt.diag)
    viol = irt.ordering_violation()
    thr = psd_tol * float(np.max(irt.diag[finite]))
    rep.add(CheckResult("bounds.ordering", viol <= thr, value=viol,
                        threshold=thr))

    beta_d = _bounds.beta_critical(rec, d=spec.d)
    half = _bounds.cd_value(2.0 * beta_d, beta_d)
    beta_star = _bounds.beta_for_target(0.3, beta_d)
    closed = beta_d / (1.0 - 0.3)
    rep.add(CheckResult("bounds.cd_halfpoint", half == 0.5, value=half,
                        threshold=0.5,
                        detail={"beta_critical": beta_d,
                                "beta_for_c03": beta_star,
                                "beta_for_c03_closed_form": closed}))

    lro = _bounds.lro_lower_bound(spec, rec, beta)
    if beta > beta_d:
        rep.add(CheckResult("bounds.lro_positive", lro.total > 0.0,
                            value=lro.total, threshold=0.0,
                            detail={"per_component": list(lro.per_component)}))

    grid = [1.02, 1.05, 1.1, 1.2, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]
    _bounds.cd_curve_csv(beta_d, [beta_d * g for g in grid],
                         outdir / "cd_curve.csv")
    payload = {"beta": beta, "beta_critical": beta_d,
               "cd_at_beta": _bounds.cd_value(beta, beta_d),
               "lro_total": lro.total,
               "lro_per_component": list(lro.per_component),
               "dispersion_margin": margin,
               "zero_branch_curvature": curv}
    _write_json(outdir / "bounds.json", payload)
    print(f"bounds: beta_critical={beta_d:.6g} "
          f"lro_total(beta={beta:g})={lro.total:.6g}")
    return _finish(rep, outdir, t0, "bounds_report.json")


def cmd_verify_rp(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    table = _table_for(cfg, spec)
    rep = _new_report("verify-rp", cfg, spec)
    s = _rp.random_config(spec, seed=cfg.seed)
    n = spec.n_sites
    scale = abs(_rp.ground_state_energy(table))
    route_tol = cfg.tol("route_tol")
    psd_tol = cfg.tol("psd_tol")

    e_direct = _rp.energy(table, s)
    e_fourier = _rp.energy_fourier(table, s)
    e_stag = _rp.energy_staggered_form(table, s)
    route_err = max(abs(e_fourier - e_direct), abs(e_stag - e_direct)) / scale
    rep.add(CheckResult("rp.energy_routes", route_err <= route_tol,
                        value=route_err, threshold=route_tol,
                        detail={"direct": e_direct, "fourier": e_fourier,
                                "staggered_form": e_stag}))

    rows = _rp.row_sum_residual(table) / (scale / n)
    rep.add(CheckResult("rp.row_sums", rows <= route_tol, value=rows,
                        threshold=route_tol))

    g = _rp.ground_state(spec)
    eg = _rp.energy(table, g)
    e_min = _rp.ground_state_energy(table)
    g_err = abs(eg - e_min) / scale
    above = e_direct >= e_min - route_tol * scale
    rep.add(CheckResult("rp.ground_state", g_err <= route_tol and above,
                        value=g_err, threshold=route_tol,
                        detail={"ground_energy_per_site": e_min / n,
                                "random_config_above": bool(above)}))

    gauge_max = 0.0
    for axis in range(1, spec.d + 1):
        plane = _rp.ReflectionPlane(axis=axis, a=0)
        perm = _rp.reflect_sites(spec, plane)
        lhs = _rp.to_staggered(spec, _rp.reflect_config(spec, plane, s))
        rhs = _rp.to_staggered(spec, s)[perm]
        gauge_max = max(gauge_max, float(np.max(np.abs(lhs - rhs))))
    rep.add(CheckResult("rp.gauge_identity", gauge_max == 0.0,
                        value=gauge_max, threshold=0.0))

    asym_max = 0.0
    eig_min = np.inf
    c_scale = 0.0
    for plane in _rp.reflection_planes(spec):
        c = _rp.rp_cross_matrix(table, plane)
        asym_max = max(asym_max, float(np.max(np.abs(c - c.T))))
        eig_min = min(eig_min, float(np.linalg.eigvalsh(c)[0]))
        c_scale = max(c_scale, float(np.max(np.abs(c))))
    rep.add(CheckResult("rp.cross_symmetric", asym_max == 0.0,
                        value=asym_max, threshold=0.0))
    floor = -psd_tol * c_scale
    rep.add(CheckResult("rp.cross_psd", eig_min >= floor, value=eig_min,
                        threshold=floor))

    worst_gain = -np.inf
    for plane in _rp.reflection_planes(spec):
        _, h_best, h0 = _rp.chessboard_step(table, s, plane)
        worst_gain = max(worst_gain, (h_best - h0) / scale)
    desc, h_desc, rounds = _rp.chessboard_descent(table, s)
    desc_ok = h_desc >= e_min - route_tol * scale
    rep.add(CheckResult("rp.chessboard",
                        worst_gain <= route_tol and desc_ok,
                        value=worst_gain, threshold=route_tol,
                        detail={"descent_energy_per_site": h_desc / n,
                                "descent_rounds": rounds}))

    print(f"verify-rp: routes={route_err:.2e} cross_min_eig={eig_min:.3e} "
          f"descent={h_desc / n:.9g} vs ground={e_min / n:.9g}")
    return _finish(rep, outdir, t0, "verify_rp_report.json")


def cmd_groundstate(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    table = _table_for(cfg, spec)
    rep = _new_report("groundstate", cfg, spec)
    g = _rp.ground_state(spec)
    eg = _rp.energy(table, g)
    e_min = _rp.ground_state_energy(table)
    scale = abs(e_min)
    route_tol = cfg.tol("route_tol")
    err = abs(eg - e_min) / scale
    rep.add(CheckResult("rp.ground_state", err <= route_tol, value=err,
                        threshold=route_tol,
                        detail={"energy_per_site": eg / spec.n_sites}))

    coords = site_coordinates(spec)
    path = outdir / "groundstate.csv"
    with open(path, "w", newline="") as fh:
        import csv as _csv
        wr = _csv.writer(fh)
        wr.writerow([f"x{a}" for a in range(1, spec.d + 1)]
                    + [f"s{a}" for a in range(1, spec.d + 1)])
        for row_x, row_s in zip(coords, g):
            wr.writerow([int(v) for v in row_x]
                        + [f"{v:.17g}" for v in row_s])
    print(f"groundstate: energy_per_site={eg / spec.n_sites:.12g} csv={path}")
    return _finish(rep, outdir, t0, "groundstate_report.json")


def cmd_simulate(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    spec = cfg.spec()
    outdir = _outdir(cfg)
    table = _table_for(cfg, spec)
    fk = _kernel.fourier_kernel(table)
    rec = _spectral.constants(spec.epsilon, cross_tol=cfg.tol("cross_tol"),
                              tail_target=cfg.tol("tail_target"),
                              cache_dir=_cache_dir(cfg))
    params = _mc.MCParams(beta=cfg.beta, n_sweeps=cfg.sweeps,
                          n_burnin=cfg.burnin, n_chains=cfg.chains,
                          seed=cfg.seed, block_size=cfg.block,
                          drift_rel_tol=cfg.tol("drift_rel_tol"))
    run = _mc.sample(table, params, initial=cfg.init)
    rep = _new_report("simulate", cfg, spec)
    z_max = cfg.tol("z_max")
    n = spec.n_sites

    drift_thr = cfg.tol("drift_rel_tol") * abs(run.e0) * n
    rep.add(CheckResult("mc.drift", run.drift_max <= drift_thr,
                        value=run.drift_max, threshold=drift_thr,
                        detail={"accept_rate": run.accept_rate,
                                "cone_cos": run.cone_cos.tolist()}))

    sr = _mc.sum_rule_check(run)
    exact_thr = cfg.tol("psd_tol")
    rep.add(CheckResult("mc.parseval", sr["parseval_residual"] <= exact_thr,
                        value=sr["parseval_residual"], threshold=exact_thr))
    rep.add(CheckResult("mc.trace_rule", sr["trace_gap"] <= exact_thr,
                        value=sr["trace_gap"], threshold=exact_thr,
                        detail={"per_component": sr["per_component"]}))

    beta_d = _bounds.beta_critical(rec, d=spec.d)
    if cfg.beta < beta_d:
        rep.add(CheckResult("mc.component_symmetry",
                            sr["max_abs_z"] <= z_max,
                            value=sr["max_abs_z"], threshold=z_max))

    if cfg.beta == 0.0:
        e_ref = float(np.trace(table.matrix(np.zeros(spec.d, dtype=int)))) / spec.d
        e_mean, e_sem = run.energy_mean_sem()
        z = abs(e_mean - e_ref) / max(e_sem, 1e-300)
        rep.add(CheckResult("mc.energy_reference", z <= z_max, value=z,
                            threshold=z_max,
                            detail={"measured": e_mean, "exact": e_ref,
                                    "sem": e_sem}))

    if cfg.beta > 0.0:
        irc = _mc.ir_check(run, fk, rec)
        rep.add(CheckResult("mc.ir_diag", irc["worst_z_diag"] <= z_max,
                            value=irc["worst_z_diag"], threshold=z_max,
                            detail={"worst_gap": irc["worst_gap_diag"]}))
        rep.add(CheckResult("mc.ir_b36", irc["worst_z_b36"] <= z_max,
                            value=irc["worst_z_b36"], threshold=z_max,
                            detail={"worst_gap": irc["worst_gap_b36"]}))

        gd = _mc.gaussdom_check(run, null_tol=cfg.tol("null_tol"))
        rep.add(CheckResult("mc.gaussdom", gd["worst_z"] <= z_max,
                            value=gd["worst_z"], threshold=z_max,
                            detail={"worst_label": gd["worst_label"]}))
        null_rel = gd["null_max_abs"] / gd["null_scale"]
        rep.add(CheckResult("mc.gaussdom_null",
                            null_rel <= cfg.tol("null_tol"),
                            value=null_rel, threshold=cfg.tol("null_tol")))

        if cfg.beta > beta_d:
            m2_mean, m2_sem = run.m2_mean_sem()
            lro = _bounds.lro_lower_bound(spec, rec, cfg.beta)
            ok = m2_mean >= lro.total - z_max * m2_sem
            rep.add(CheckResult("mc.lro_bound", ok, value=m2_mean,
                                threshold=lro.total,
                                detail={"sem": m2_sem,
                                        "bound_per_component":
                                            list(lro.per_component)}))

    _write_observables_csv(outdir / "observables.csv", run)
    _write_q_csv(outdir / "q_table.csv", spec, run)
    e_mean, e_sem = run.energy_mean_sem()
    m2_mean, m2_sem = run.m2_mean_sem()
    print(f"simulate: beta={cfg.beta:g} accept={run.accept_rate:.3f} "
          f"energy={e_mean:.9g}({e_sem:.2g}) m2={m2_mean:.6g}({m2_sem:.2g})")
    return _finish(rep, outdir, t0, "simulate_report.json")


def _write_observables_csv(path: Path, run) -> None:
    import csv as _csv
    with open(path, "w", newline="") as fh:
        wr = _csv.writer(fh)
        wr.writerow(["chain", "sweep", "energy_per_site", "m2"])
        chains, sweeps = run.energy_series.shape
        for c in range(chains):
            for t in range(sweeps):
                wr.writerow([c, t, f"{run.energy_series[c, t]:.17g}",
                             f"{run.m2_series[c, t]:.17g}"])


def _write_q_csv(path: Path, spec: LatticeSpec, run) -> None:
    import csv as _csv
    mean, sem = run.q_mean_sem()
    mg = momentum_grid(spec)
    with open(path, "w", newline="") as fh:
        wr = _csv.writer(fh)
        wr.writerow([f"m{a}" for a in range(1, spec.d + 1)]
                    + [f"q{a}" for a in range(1, spec.d + 1)]
                    + [f"sem{a}" for a in range(1, spec.d + 1)])
        for k in range(spec.n_sites):
            wr.writerow([int(v) for v in mg[k]]
                        + [f"{v:.17g}" for v in mean[k]]
                        + [f"{v:.17g}" for v in sem[k]])


def cmd_report(cfg: RunConfig, inputs: list) -> int:
    t0 = time.perf_counter()
    outdir = _outdir(cfg)
    reports = [VerificationReport.load(p) for p in inputs]
    merged = merge_reports(reports)
    merged.params = {"n_inputs": len(inputs)}
    merged.seconds = time.perf_counter() - t0
    merged.save(outdir / "report.json")
    print(render_table(merged))
    print(f"report: {outdir / 'report.json'}")
    return exit_code(merged)


# ---------------------------------------------------------------- driver

_COMMANDS = {
    "kernel": cmd_kernel,
    "spectrum": cmd_spectrum,
    "constants": cmd_constants,
    "bounds": cmd_bounds,
    "verify-rp": cmd_verify_rp,
    "groundstate": cmd_groundstate,
    "simulate": cmd_simulate,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="flat key=value configuration file")
    common.add_argument("--dim", type=int, help="spatial dimension (>= 3)")
    common.add_argument("--L", type=int, help="half side of the box, even")
    common.add_argument("--epsilon", help="screening mass, or 'auto' (0.5/L)")
    common.add_argument("--beta", type=float, help="inverse temperature")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--sweeps", type=int, help="measurement sweeps per chain")
    common.add_argument("--burnin", type=int, help="burn-in sweeps per chain")
    common.add_argument("--chains", type=int, help="independent chains")
    common.add_argument("--block", type=int, help="sweeps per error block")
    common.add_argument("--init", choices=_INIT_CHOICES,
                        help="initial configuration for sampling")
    common.add_argument("--out", metavar="DIR", help="artifact directory")
    common.add_argument("--cache", metavar="DIR", help="kernel cache directory")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        help="override a tolerance (repeatable)")

    p = argparse.ArgumentParser(
        prog="dipkit",
        description="Numerics for lattice dipole spin systems.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "kernel": "build the interaction table and save its cache",
        "spectrum": "eigenvalue sweep of the transformed kernel",
        "constants": "cross-validated lattice constants",
        "bounds": "infrared bounds, ordering check, c_d curve",
        "verify-rp": "reflection structure checks",
        "groundstate": "write and verify the exact minimizer",
        "simulate": "Metropolis sampling with bound checks",
    }
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    pr = sub.add_parser("report", parents=[common],
                        help="merge saved report files")
    pr.add_argument("inputs", nargs="+", metavar="REPORT.json")
    return p


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "report":
            return cmd_report(cfg, args.inputs)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, _kernel.KernelBudgetError,
            _kernel.CacheError, _kernel.QuadratureError,
            _spectral.ConstantsMismatch, _mc.EnergyDriftError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
