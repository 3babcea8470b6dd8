"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.  ``TICEM_OUT`` and ``TICEM_THREADS`` override the output directory
and thread count of the config; explicit flags override both.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as tio
from . import pipeline as pl
from .assembly import AssemblyError, assemble, read_coo, write_coo
from .electrode import ElectrodeError, ImpedanceVector, perturb_contact
from .interference import SinusoidPair, interference_field, steering_scan, synthesize
from .leadfield import conductance_density, lead_field, pair_currents
from .linearization import BasePointError, impedance_jacobian, linearized_R
from .materials import MaterialError, build_admittivity_field
from .mesh import MeshError, read_mesh, write_mesh
from .metrics import MetricError
from .solver import KirchhoffError, SolverError, resistance_matrix

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("ticem")

_CONFIG_ERRORS = (pl.ConfigError, MeshError, MaterialError, ElectrodeError, KirchhoffError,
                  MetricError, KeyError)
_NUMERIC_ERRORS = (SolverError, AssemblyError, BasePointError, FloatingPointError,
                   np.linalg.LinAlgError, ArithmeticError)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, pl.PipelineError):
        exc = exc.cause
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def _load(args) -> pl.RunConfig:
    if not args.config:
        raise pl.ConfigError("--config is required for this command")
    cfg = pl.load_config(args.config)
    changes = {}
    out = args.out or os.environ.get("TICEM_OUT")
    if out:
        changes["out_dir"] = out
    threads = args.threads or os.environ.get("TICEM_THREADS")
    if threads:
        try:
            changes["threads"] = int(threads)
        except ValueError:
            raise pl.ConfigError(f"invalid thread count {threads!r}") from None
    return replace(cfg, **changes) if changes else cfg


def _out(args, cfg=None) -> Path:
    d = args.out or os.environ.get("TICEM_OUT") or (cfg.out_dir if cfg else "ticem-out")
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _mesh_for(cfg, out: Path):
    """Reuse ``out/mesh.txt`` when present so later stages build on stored products."""
    path = out / "mesh.txt"
    if path.is_file():
        mesh = read_mesh(path)
        if [p.label for p in mesh.patches] == cfg.labels:
            return mesh
    mesh = pl.build_mesh(cfg)
    write_mesh(mesh, path)
    return mesh


def _freq(cfg, args) -> float:
    return float(args.frequency) if args.frequency is not None else cfg.frequencies[0]


# -- subcommands ----------------------------------------------------------------

def cmd_mesh(args) -> int:
    if args.inspect:
        mesh = read_mesh(args.inspect)
    else:
        cfg = _load(args)
        out = _out(args, cfg)
        mesh = pl.build_mesh(cfg)
        write_mesh(mesh, out / "mesh.txt")
        print(f"wrote {out / 'mesh.txt'}")
    mesh.validate()
    comps, counts = np.unique(mesh.compartment, return_counts=True)
    _print({"nodes": mesh.n_nodes, "tets": mesh.n_tets,
            "boundary_triangles": len(mesh.boundary_tris),
            "tets_per_compartment": {int(c): int(n) for c, n in zip(comps, counts)},
            "patches": {p.label: {"triangles": len(p.tri_indices), "area_mm2": p.area}
                        for p in mesh.patches}})
    return EXIT_OK


def _system(cfg, out, f):
    mesh = _mesh_for(cfg, out)
    fld = build_admittivity_field(mesh, pl.tissue_table(cfg), f, cfg.with_permittivity)
    Z = ImpedanceVector.from_models(pl.electrode_models(cfg, f))
    return mesh, fld, assemble(mesh, fld, Z)


def cmd_assemble(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    f = _freq(cfg, args)
    _, _, sys_ = _system(cfg, out, f)
    d = out / f"f{f:g}"
    d.mkdir(parents=True, exist_ok=True)
    write_coo(d / "A.coo", sys_.A, "A")
    write_coo(d / "B.coo", sys_.B, "B")
    write_coo(d / "C.coo", sys_.C, "C")
    _print({"frequency_hz": f, "nodes": sys_.n_nodes, "electrodes": sys_.n_electrodes,
            "A_nnz": int(sys_.A.nnz), "key": sys_.key})
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    f = _freq(cfg, args)
    _, _, sys_ = _system(cfg, out, f)
    rm = resistance_matrix(sys_, cfg.solve_options())
    d = out / f"f{f:g}"
    d.mkdir(parents=True, exist_ok=True)
    for name in ("R", "T", "S"):
        write_coo(d / f"{name}.coo", getattr(rm, name), name)
    tio.write_solver_stats(d / "solver_stats.csv", rm.stats, f"f{f:g}")
    _print({"frequency_hz": f, "iterations": [s.iterations for s in rm.stats],
            "residuals": [s.residual for s in rm.stats]})
    return EXIT_OK


def _stored_or_solved_R(cfg, out, f):
    mesh, fld, sys_ = _system(cfg, out, f)
    path = out / f"f{f:g}" / "R.coo"
    if path.is_file():
        R = read_coo(path, dense=True)
        log.info("using stored %s", path)
    else:
        R = resistance_matrix(sys_, cfg.solve_options()).R
    return mesh, fld, R


def cmd_leadfield(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    f = _freq(cfg, args)
    mesh, fld, R = _stored_or_solved_R(cfg, out, f)
    L = lead_field(conductance_density(mesh, fld), R, f)
    d = out / f"f{f:g}"
    d.mkdir(parents=True, exist_ok=True)
    header, data = pl.field_columns(L.matrix.reshape(L.n_tets, -1), "lead_field")
    pl.write_columns_csv(d / "lead_field.csv", header, data)
    tio.write_vtk(d / "lead_field.vtk", mesh,
                  vectors={f"L_{lab}": L.tet_blocks()[:, :, k] for k, lab in enumerate(cfg.labels)})
    _print({"frequency_hz": f, "column_norms": L.column_norms().tolist()})
    return EXIT_OK


def cmd_linearize(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    f = _freq(cfg, args)
    if not cfg.perturbations:
        raise pl.ConfigError("config lists no perturbations")
    _, _, sys_ = _system(cfg, out, f)
    rm = resistance_matrix(sys_, cfg.solve_options())
    rows = []
    for label, dRc in cfg.perturbations:
        ell = cfg.labels.index(label)
        _, dZ = perturb_contact(pl.electrode_models(cfg, f)[ell], dRc)
        jac = impedance_jacobian(rm, sys_, [ell], cfg.solve_options())
        R_lin = linearized_R(rm, jac, {ell: dZ})
        R_ref = resistance_matrix(sys_.with_impedances(sys_.Z.perturbed(ell, dZ)),
                                  cfg.solve_options()).R
        d = out / f"f{f:g}" / f"perturb_{label}_{dRc:g}"
        d.mkdir(parents=True, exist_ok=True)
        write_coo(d / "dR_dZ.coo", jac.derivatives[ell], "dR_dZ")
        write_coo(d / "R_lin.coo", R_lin, "R_lin")
        write_coo(d / "R_ref.coo", R_ref, "R_ref")
        err = R_lin - R_ref
        rows.append([label, float(dRc), float(dZ.real), float(dZ.imag), f,
                     float(np.max(np.abs(err))), float(np.linalg.norm(err) / np.linalg.norm(R_ref))])
    tio.write_csv(out / f"f{f:g}" / "lin_vs_ref.csv",
                  ["electrode", "dRc_ohm", "dZ_re", "dZ_im", "f_hz", "max_abs_error_R",
                   "rel_error_R"], rows)
    _print({"lin_vs_ref": rows})
    return EXIT_OK


def cmd_interfere(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    leads, mesh = [], None
    for f in cfg.frequencies:
        mesh, fld, R = _stored_or_solved_R(cfg, out, f)
        leads.append(lead_field(conductance_density(mesh, fld), R, f))
    summary = {}
    for p, amps in enumerate(cfg.patterns_mA):
        J1, J2 = pair_currents(leads, cfg.pattern(amps))
        env = interference_field(J1, J2)
        d = out / "interference"
        header, data = pl.field_columns(env.values, "interference")
        pl.write_columns_csv(d / f"pattern{p}.csv", header, data)
        tio.write_vtk(d / f"pattern{p}.vtk", mesh, scalars={"interference": env.values},
                      vectors={"J1": J1.J, "J2": J2.J})
        summary[f"pattern{p}"] = {"max": float(env.values.max()), "argmax": env.argmax()}
    if cfg.steering_splits_mA:
        res = steering_scan(mesh, leads, cfg.steering_total_mA, cfg.steering_splits_mA,
                            frequencies=cfg.frequencies)
        tio.write_steering_csv(out / "interference" / "steering.csv", res)
        summary["steering_monotone"] = res.monotone
    _print(summary)
    return EXIT_OK


def cmd_compare(args) -> int:
    fields = None
    if args.field:
        fields = [tuple(f.split(",", 1)) if "," in f else f for f in args.field]
    reports = pl.compare(args.manifest1, args.manifest2, args.db, fields)
    rows = [[r.name, r.db, r.max_rel, float(r.rel.mean()), r.max_abs, r.norm1, r.norm2]
            for r in reports]
    if args.out:
        tio.write_csv(Path(args.out) / "compare.csv",
                      ["field", "db", "max_rel", "mean_rel", "max_abs", "norm1", "norm2"], rows)
    for row in rows:
        print(",".join(str(v) for v in row))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    man = pl.run(cfg)
    _print({"out_dir": man.out_dir, "complete": man.complete, "products": len(man.products),
            "timings_s": man.timings})
    return EXIT_OK


def cmd_envelope_demo(args) -> int:
    th1, th2 = args.theta1, args.theta2
    if args.random_phases:
        rng = np.random.default_rng(args.seed)
        th1, th2 = rng.uniform(0, 2 * np.pi, size=2)
    p = SinusoidPair(args.A1, args.A2, args.f1, args.f2, th1, th2)
    t = np.arange(int(round(args.duration * args.rate))) / args.rate
    cols = synthesize(p, t)
    names = list(cols)
    rows = zip(*[cols[n].tolist() for n in names])
    path = Path(args.out or os.environ.get("TICEM_OUT") or ".") / "envelope_demo.csv"
    tio.write_csv(path, names, rows)
    print(f"wrote {path} ({len(t)} samples)")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (TOML)")
    common.add_argument("--out", help="output directory (overrides TICEM_OUT and the config)")
    common.add_argument("--threads", type=int, help="solver threads (overrides TICEM_THREADS)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized utilities")
    common.add_argument("--verbosity", type=int, choices=(0, 1, 2), default=1,
                        help="0 warnings, 1 info, 2 debug")

    ap = argparse.ArgumentParser(prog="ticem", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("mesh", cmd_mesh, "generate the configured mesh, or inspect a mesh file")
    p.add_argument("--inspect", help="mesh file to summarise instead of generating")
    for name, fn, h in (("assemble", cmd_assemble, "export A, B, C in coordinate format"),
                        ("solve", cmd_solve, "export R, T, S and solver statistics"),
                        ("leadfield", cmd_leadfield, "lead field from stored or fresh R"),
                        ("linearize", cmd_linearize, "dR/dZ, linearized and reference R")):
        p = add(name, fn, h)
        p.add_argument("--frequency", type=float, help="carrier frequency in Hz "
                       "(default: first pair)")
    add("interfere", cmd_interfere, "interference fields and steering scan")
    p = add("compare", cmd_compare, "diff stored fields of two runs")
    p.add_argument("manifest1")
    p.add_argument("manifest2")
    p.add_argument("--db", type=float, default=-18.0, help="dynamic range in dB (negative)")
    p.add_argument("--field", action="append",
                   help="field name, or 'name1,name2'; repeatable (default: all shared)")
    add("run", cmd_run, "full pipeline with manifest")
    p = add("envelope-demo", cmd_envelope_demo, "two-carrier signal and envelope CSV")
    p.add_argument("--A1", type=float, default=1.0)
    p.add_argument("--A2", type=float, default=1.0)
    p.add_argument("--f1", type=float, default=1000.0, help="Hz")
    p.add_argument("--f2", type=float, default=1010.0, help="Hz")
    p.add_argument("--theta1", type=float, default=0.0, help="rad")
    p.add_argument("--theta2", type=float, default=0.0, help="rad")
    p.add_argument("--duration", type=float, default=0.2, help="s")
    p.add_argument("--rate", type=float, default=50000.0, help="samples per second")
    p.add_argument("--random-phases", action="store_true", help="draw phases from --seed")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}[args.verbosity]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = exit_code(exc)
        log.error("%s", exc)
        log.debug("traceback", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
