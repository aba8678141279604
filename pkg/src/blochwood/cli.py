"""Batch front end: scenario runs, sweeps and the acceptance check suite.

Outputs land in the chosen directory: ``manifest.json`` with parameters,
norms, iteration counts and per-alpha diagnostics; ``fields_cell_<j1>_<j2>.bin``
with the synthesised complex field on the sample grid; delimited tables under
``tables/``.  Runs are deterministic for a fixed config: quadrature node
order, summation order and seeds are all fixed, independent of --threads.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import build_alpha_quadrature
from .cell import (Discretization, assemble_full, assemble_regular, load_from_profiles,
                   solve_smw)
from .config import ConfigError, Scenario, parse_config, scenario_preset, serialize_config
from .media import DefectPerturbation, MediumSamples, PeriodicMedium, validate_assumptions
from .modes import ModeSet
from .oracles import sqrt_fit_oracle
from .strip import SourceSpec, gaussian_cell_source, solve_perturbed

FIELD_MAGIC = b"BWFLD001"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def write_field_file(path, gridfield, R: float):
    et, e3 = np.ascontiguousarray(gridfield.et), np.ascontiguousarray(gridfield.e3)
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<4q1d", et.shape[1], et.shape[2], et.shape[3], e3.shape[2],
                             float(R)))
        fh.write(et.astype(complex).tobytes())
        fh.write(e3.astype(complex).tobytes())


def read_field_file(path):
    with open(path, "rb") as fh:
        if fh.read(len(FIELD_MAGIC)) != FIELD_MAGIC:
            raise ValueError("not a field dump")
        nx, ny, nzn, nzc, R = struct.unpack("<4q1d", fh.read(8 * 5))
        et = np.frombuffer(fh.read(16 * 2 * nx * ny * nzn), dtype=complex).reshape(2, nx, ny, nzn)
        e3 = np.frombuffer(fh.read(16 * nx * ny * nzc), dtype=complex).reshape(nx, ny, nzc)
    return et, e3, R


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def build_medium(sc: Scenario) -> PeriodicMedium:
    if sc.medium_profile == "constant":
        return PeriodicMedium.constant(eps=sc.eps, mu=sc.mu, r0=sc.r0, delta=sc.delta)
    if sc.medium_profile == "layered":
        return PeriodicMedium.layered(breaks=sc.layer_breaks, eps_values=sc.layer_eps,
                                      r0=sc.r0, delta=sc.delta)
    if sc.medium_profile == "lamellar":
        return PeriodicMedium.lamellar(eps_hi=sc.lamellar_eps_hi, eps_lo=sc.lamellar_eps_lo,
                                       fill=sc.lamellar_fill, height=sc.r0 - sc.delta,
                                       delta=sc.delta)
    if sc.medium_profile == "file":
        return PeriodicMedium.from_grid_file(sc.medium_file)
    raise ConfigError(f"unknown medium profile {sc.medium_profile!r}", key="medium.profile")


def build_source(sc: Scenario) -> SourceSpec:
    if sc.source_kind == "gaussian":
        return gaussian_cell_source(amplitude=sc.source_amp, center=sc.source_center,
                                    sigma=sc.source_sigma, cells=sc.source_cells)
    if sc.source_kind == "modal_mode0":
        lo, hi = 0.2 * sc.r0, 0.7 * sc.r0
        amp = np.asarray(sc.source_amp, dtype=complex)

        def modal(alpha_j, z):
            z = np.asarray(z)
            bump = np.exp(-((z - 0.5 * (lo + hi)) / (0.25 * (hi - lo))) ** 2)
            return amp[:, None] * bump[None, :]

        return SourceSpec(cells=np.array([[0, 0]]), modal=modal, label="modal_mode0")
    raise ConfigError(f"unknown source kind {sc.source_kind!r}", key="source.kind")


def build_defect(sc: Scenario) -> DefectPerturbation | None:
    if sc.defect_amp == 0.0:
        return None
    return DefectPerturbation.gaussian_bump(sc.defect_amp, center=sc.defect_center,
                                            sigma=sc.defect_sigma)


def run_scenario(sc: Scenario, outdir: Path, threads: int = 1) -> dict:
    medium = build_medium(sc)
    source = build_source(sc)
    defect = build_defect(sc)
    disc = Discretization(M=sc.modes, N=sc.depth_elems, R=sc.height)
    cutoff_tol = sc.cutoff_tol if sc.cutoff_tol > 0 else None
    quad = build_alpha_quadrature(k=sc.k, M=sc.modes, n_base=sc.n_base, levels=sc.levels,
                                  gl_order=sc.gl_order, cutoff_tol=cutoff_tol)
    report = validate_assumptions(medium, defect, R=sc.height)
    report.raise_on_error()

    t0 = time.time()
    strip = solve_perturbed(source, defect, quad, disc, medium, cells=sc.output_cells,
                            n_t=sc.grid, cutoff_tol=cutoff_tol, threads=threads)
    elapsed = time.time() - t0

    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)
    for cell in strip.cells:
        write_field_file(outdir / f"fields_cell_{cell[0]}_{cell[1]}.bin",
                         strip.field_at(cell), disc.R)
    write_csv(tables / "norms.csv", ["name", "value"],
              [[k, float(v)] for k, v in sorted(strip.norms.items())])

    return {
        "kind": "scenario",
        "elapsed_s": elapsed,
        "quadrature_nodes": int(quad.n),
        "shifted_nodes": int(quad.shifted_nodes),
        "norms": {k: float(v) for k, v in strip.norms.items()},
        "gmres_iterations": strip.diagnostics.get("gmres_iterations", 0),
        "defect_samples": strip.diagnostics.get("defect_samples", 0),
        "energy": strip.diagnostics.get("energy", {}),
        "validation_warnings": [e.name for e in report.warnings],
        "cells": [list(c) for c in strip.cells],
    }


def run_alpha_sweep(sc: Scenario, outdir: Path) -> dict:
    """Cutoff-path sweep: norms, conditioning and square-root fit columns."""
    medium = build_medium(sc)
    disc = Discretization(M=sc.modes, N=sc.depth_elems, R=sc.height)
    samples = MediumSamples.from_medium(medium, disc.midpoints,
                                        bandwidth=max(1, 2 * sc.modes))
    alpha_hat = np.asarray(sc.alpha, dtype=float)
    path_dir = np.array([1.0, 0.0])

    def prof(alpha_j, z):
        z = np.asarray(z)
        bump = np.exp(-((z - 0.45 * sc.r0) / (0.2 * sc.r0)) ** 2)
        return np.stack([bump, 0.3 * bump, 0.2 * bump])

    rows = []
    coeff_samples = []
    offsets = sorted(sc.sweep_offsets, reverse=True)
    for t in offsets:
        alpha = alpha_hat - t * path_dir
        ms = ModeSet.build(sc.k, alpha, sc.modes)
        S, U = assemble_regular(disc, samples, alpha, sc.k)
        F = load_from_profiles(disc, ms, prof)
        sol = solve_smw(S, U, F)
        cond_direct = float("nan")
        if disc.ndof <= 4000:
            A = assemble_full(disc, samples, alpha, sc.k).toarray()
            cond_direct = float(np.linalg.cond(A))
        cond_smw = float(np.linalg.cond(S.matrix.toarray())) if disc.ndof <= 4000 else float("nan")
        rows.append([float(t), float(alpha[0]), float(alpha[1]), int(U.rank),
                     float(sol.norm_l2()), cond_direct, cond_smw])
        coeff_samples.append((t, sol.coeffs.ravel()))

    fit_resid = float("nan")
    small = [(t, u) for t, u in coeff_samples if t <= 1e-6][-5:]
    if len(small) >= 4:
        ts = np.array([t for t, _ in small])
        us = np.array([u for _, u in small])
        rep = sqrt_fit_oracle(ts, us)
        fit_resid = rep.discrepancy

    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)
    write_csv(tables / "alpha_path.csv",
              ["offset", "alpha1", "alpha2", "n_singular", "norm_u",
               "cond_direct", "cond_smw"], rows)
    return {"kind": "sweep", "sweep": "alpha-path", "rows": len(rows),
            "sqrt_fit_residual": fit_resid}


def run_depth_sweep(sc: Scenario, outdir: Path) -> dict:
    """Depth-refinement study on the manufactured outgoing mode."""
    from .oracles import manufactured_case
    from .acceptance import _manufactured_l2_error

    case = manufactured_case("outgoing_mode", k=sc.k, R=sc.height, ramp_frac=(0.08, 0.9))
    rows = []
    errs = []
    for N in (sc.depth_elems, 2 * sc.depth_elems, 4 * sc.depth_elems):
        _, err = _manufactured_l2_error(case, 0, N)
        errs.append(err)
        rows.append([int(N), float(err)])
    order = float(np.log2(errs[0] / errs[-1]) / 2.0)
    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)
    write_csv(tables / "depth_convergence.csv", ["depth_elems", "l2_error"], rows)
    return {"kind": "sweep", "sweep": "depth-convergence", "observed_order": order,
            "errors": [float(e) for e in errs]}


def run_check(outdir: Path) -> dict:
    from .acceptance import run_all

    results = run_all(echo=print)
    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)
    write_csv(tables / "acceptance.csv", ["criterion", "passed", "runtime_s"],
              [[r.name, int(r.passed), float(r.runtime)] for r in results])
    return {
        "kind": "check",
        "passed": all(r.passed for r in results),
        "criteria": [{"name": r.name, "passed": bool(r.passed),
                      "runtime_s": float(r.runtime),
                      "detail": {k: str(v) for k, v in r.detail.items()}}
                     for r in results],
    }


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blochwood",
                                description="bi-periodic layer scattering solver")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="solve a scenario, run a sweep, or run checks")
    run.add_argument("--config", type=str, default=None, help="key=value config file")
    run.add_argument("--scenario", type=str, default=None,
                     help="named preset (see config.SCENARIOS)")
    run.add_argument("--modes", type=int, default=None, help="transverse truncation M")
    run.add_argument("--depth-elems", type=int, default=None, help="depth elements N")
    run.add_argument("--nalpha", type=int, default=None, help="quadrature base panels per axis")
    run.add_argument("--cutoff-tol", type=float, default=None,
                     help="cutoff band width (absolute)")
    run.add_argument("--threads", type=int, default=1, help="worker threads")
    run.add_argument("--output-dir", type=str, default="out", help="output directory")
    run.add_argument("--check", action="store_true", help="run the acceptance suite")
    run.add_argument("--sweep", type=str, default=None,
                     choices=["alpha-path", "depth-convergence"])
    return p


def _load_scenario(args) -> Scenario:
    sc = scenario_preset(args.scenario) if args.scenario else Scenario()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        sc = parse_config(path.read_text(), base=sc)
    if args.modes is not None:
        sc.modes = args.modes
    if args.depth_elems is not None:
        sc.depth_elems = args.depth_elems
    if args.nalpha is not None:
        sc.n_base = args.nalpha
    if args.cutoff_tol is not None:
        sc.cutoff_tol = args.cutoff_tol
    sc.validate()
    return sc


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "argv": sys.argv[1:] if argv is None else list(argv),
        "threads": args.threads,
    }
    try:
        sc = _load_scenario(args)
        manifest["scenario"] = sc.name
        manifest["config"] = serialize_config(sc)
        np.random.seed(sc.seed)

        if args.check:
            result = run_check(outdir)
        elif args.sweep == "alpha-path":
            result = run_alpha_sweep(sc, outdir)
        elif args.sweep == "depth-convergence":
            result = run_depth_sweep(sc, outdir)
        else:
            result = run_scenario(sc, outdir, threads=args.threads)
        manifest.update(result)
        status = EXIT_OK if result.get("passed", True) else EXIT_ERROR
    except ConfigError as exc:
        manifest["error"] = {"type": "config", "message": str(exc),
                             "line": exc.line, "key": exc.key}
        status = EXIT_CONFIG
        print(str(exc), file=sys.stderr)
    except Exception as exc:  # noqa: BLE001 - error record goes to the manifest
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc),
                             "traceback": traceback.format_exc()}
        status = EXIT_ERROR
        print(f"error: {exc}", file=sys.stderr)

    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
