"""Batch pipeline: mesh, initial/reference/linearized lead fields, interference, diffs.

A run is driven by a TOML file whose physical keys carry their unit in the
key name (``radii_mm``, ``f_hz``, ``Rc_ohm`` ...).  Only the electrode
interface values (Rc, Rdl, Cdl) have defaults.  See configs/desk_sphere.toml.

Pair k of the stimulation runs at ``f_hz + k * beat_hz``; every lead field
is computed at the frequency of the pair that uses it.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io as tio
from .assembly import assemble, write_coo
from .electrode import ElectrodeModel, ImpedanceVector, impedance_of_f, perturb_contact
from .interference import interference_field, steering_scan
from .leadfield import CurrentPattern, conductance_density, lead_field, pair_currents
from .linearization import impedance_jacobian, linearized_R
from .materials import COMPARTMENT_NAMES, TissueTable, build_admittivity_field
from .mesh import attach_electrode, generate_layered_sphere, read_mesh, write_mesh
from .metrics import diff_report, lead_field_norm
from .solver import ResistanceMatrix, SolveOptions, resistance_matrix

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"
_COMPARTMENT_IDS = {v: k for k, v in COMPARTMENT_NAMES.items()}


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ElectrodeSpec:
    label: str
    direction: tuple
    diameter_mm: float
    Rc_ohm: float = 270.0


@dataclass(frozen=True)
class RunConfig:
    electrodes: tuple
    f_hz: float
    beat_hz: float
    pairs: tuple
    patterns_mA: tuple
    radii_mm: tuple = ()
    compartments: tuple = ()
    edge_mm: float = 0.0
    mesh_file: str | None = None
    tissue_csv: str | None = None
    with_permittivity: bool = True
    Rdl_ohm: float = 1.0e4
    Cdl_F: float = 1.0e-7
    capacitor_sign: int = -1
    perturbations: tuple = ()  # (label, dRc_ohm)
    steering_total_mA: float | None = None
    steering_splits_mA: tuple = ()
    lead_field_db: float = -18.0
    jv_db: float = -35.0
    interference_db: float = -18.0
    rtol: float = 1e-10
    max_iter: int = 20000
    threads: int = 1
    out_dir: str = "ticem-out"
    base_dir: str = "."

    def __post_init__(self):
        self.validate()

    @property
    def labels(self):
        return [e.label for e in self.electrodes]

    @property
    def frequencies(self):
        return tuple(self.f_hz + k * self.beat_hz for k in range(len(self.pairs)))

    def pair_indices(self):
        idx = {lab: k for k, lab in enumerate(self.labels)}
        return tuple(tuple(idx[lab] for lab in p) for p in self.pairs)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(rtol=self.rtol, max_iter=self.max_iter, threads=self.threads)

    def resolve(self, p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self) -> None:
        labels = self.labels
        if len(labels) < 2:
            raise ConfigError("need at least two electrodes")
        if len(set(labels)) != len(labels):
            raise ConfigError("electrode labels must be unique")
        for e in self.electrodes:
            if len(e.direction) != 3 or not np.linalg.norm(e.direction) > 0:
                raise ConfigError(f"electrode {e.label!r}: direction must be a nonzero 3-vector")
            if not e.diameter_mm > 0 or not e.Rc_ohm > 0:
                raise ConfigError(f"electrode {e.label!r}: diameter_mm and Rc_ohm must be positive")
        if self.mesh_file is None:
            if not self.radii_mm or len(self.radii_mm) != len(self.compartments):
                raise ConfigError("mesh needs radii_mm and compartments of equal length, or a file")
            if not self.edge_mm > 0:
                raise ConfigError("mesh.edge_mm must be positive")
        if not self.f_hz > 0 or self.beat_hz < 0:
            raise ConfigError("f_hz must be positive and beat_hz nonnegative")
        if not self.Rdl_ohm > 0 or not self.Cdl_F > 0:
            raise ConfigError("Rdl_ohm and Cdl_F must be positive")
        if len(self.pairs) != 2:
            raise ConfigError("interference needs exactly two electrode pairs")
        for p in self.pairs:
            if len(p) != 2 or any(lab not in labels for lab in p):
                raise ConfigError(f"pair {p} references unknown electrodes")
        used = [lab for p in self.pairs for lab in p]
        if len(set(used)) != len(used):
            raise ConfigError("an electrode appears in more than one pair")
        if not self.patterns_mA:
            raise ConfigError("at least one current pattern is required")
        for pat in self.patterns_mA:
            if len(pat) != len(labels):
                raise ConfigError(f"pattern {pat} has {len(pat)} entries for {len(labels)} electrodes")
            try:
                self.pattern(pat)
            except ValueError as exc:
                raise ConfigError(f"pattern {list(pat)}: {exc}") from exc
        for lab, dRc in self.perturbations:
            if lab not in labels:
                raise ConfigError(f"perturbation references unknown electrode {lab!r}")
            if not math.isfinite(dRc) or not dRc != 0:
                raise ConfigError("perturbation dRc_ohm must be finite and nonzero")
        for name in ("lead_field_db", "jv_db", "interference_db"):
            if not getattr(self, name) < 0:
                raise ConfigError(f"{name} must be negative")
        if self.steering_splits_mA and self.steering_total_mA is None:
            raise ConfigError("steering splits need steering total_mA")
        if not 0 < self.rtol < 1 or self.max_iter < 1 or self.threads < 1:
            raise ConfigError("invalid solver settings")

    def pattern(self, amps) -> CurrentPattern:
        return CurrentPattern(np.asarray(amps, dtype=float), self.pair_indices(), self.frequencies)

    def canonical(self) -> dict:
        """Config as a plain dict without output location, used for hashing."""
        d = asdict(self)
        d.pop("out_dir")
        d.pop("base_dir")
        d.pop("threads")
        return d

    def sha256(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing [{where}] {key}")
    return d[key]


def _compartment_id(c):
    if isinstance(c, int):
        return c
    try:
        return _COMPARTMENT_IDS[str(c).lower()]
    except KeyError:
        raise ConfigError(f"unknown compartment {c!r}") from None


def config_from_dict(d: dict, base_dir: str = ".") -> RunConfig:
    try:
        mesh = d.get("mesh", {})
        tissue = d.get("tissue", {})
        el = _req(d, "electrodes", "root")
        stim = _req(d, "stimulation", "root")
        metrics = d.get("metrics", {})
        solver = d.get("solver", {})
        output = d.get("output", {})
        steering = d.get("steering", {})
        montage = _req(el, "montage", "electrodes")
        electrodes = tuple(
            ElectrodeSpec(str(_req(m, "label", "electrodes.montage")),
                          tuple(float(v) for v in _req(m, "direction", "electrodes.montage")),
                          float(_req(m, "diameter_mm", "electrodes.montage")),
                          float(m.get("Rc_ohm", el.get("Rc_ohm", 270.0))))
            for m in montage)
        perts = tuple((str(_req(p, "electrode", "perturbations")),
                       float(_req(p, "dRc_ohm", "perturbations")))
                      for p in d.get("perturbations", []))
        return RunConfig(
            electrodes=electrodes,
            f_hz=float(_req(stim, "f_hz", "stimulation")),
            beat_hz=float(_req(stim, "beat_hz", "stimulation")),
            pairs=tuple(tuple(str(x) for x in p) for p in _req(stim, "pairs", "stimulation")),
            patterns_mA=tuple(tuple(float(x) for x in p)
                              for p in _req(stim, "patterns_mA", "stimulation")),
            radii_mm=tuple(float(r) for r in mesh.get("radii_mm", ())),
            compartments=tuple(_compartment_id(c) for c in mesh.get("compartments", ())),
            edge_mm=float(mesh.get("edge_mm", 0.0)),
            mesh_file=mesh.get("file"),
            tissue_csv=tissue.get("csv"),
            with_permittivity=bool(tissue.get("with_permittivity", True)),
            Rdl_ohm=float(el.get("Rdl_ohm", 1.0e4)),
            Cdl_F=float(el.get("Cdl_F", 1.0e-7)),
            capacitor_sign=int(el.get("capacitor_sign", -1)),
            perturbations=perts,
            steering_total_mA=(float(steering["total_mA"]) if "total_mA" in steering else None),
            steering_splits_mA=tuple(float(s) for s in steering.get("splits_mA", ())),
            lead_field_db=float(metrics.get("lead_field_db", -18.0)),
            jv_db=float(metrics.get("jv_db", -35.0)),
            interference_db=float(metrics.get("interference_db", -18.0)),
            rtol=float(solver.get("rtol", 1e-10)),
            max_iter=int(solver.get("max_iter", 20000)),
            threads=int(solver.get("threads", 1)),
            out_dir=str(output.get("dir", "ticem-out")),
            base_dir=base_dir,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(d, base_dir=str(path.parent))


# -- building blocks shared by the pipeline and the CLI subcommands ------------

def build_mesh(cfg: RunConfig):
    if cfg.mesh_file is not None:
        mesh = read_mesh(cfg.resolve(cfg.mesh_file))
        if mesh.patches:
            have = [p.label for p in mesh.patches]
            if sorted(have) != sorted(cfg.labels):
                raise ConfigError(f"mesh file patches {have} do not match montage {cfg.labels}")
            return mesh.with_patches([mesh.patch(lab) for lab in cfg.labels])
    else:
        mesh = generate_layered_sphere(cfg.radii_mm, cfg.compartments, cfg.edge_mm)
    patches = []
    for e in cfg.electrodes:
        d = np.asarray(e.direction, dtype=float)
        patches.append(attach_electrode(mesh, d / np.linalg.norm(d), e.diameter_mm, e.label))
    return mesh.with_patches(patches)


def tissue_table(cfg: RunConfig) -> TissueTable:
    if cfg.tissue_csv is None:
        return TissueTable.default()
    return TissueTable.from_csv(cfg.resolve(cfg.tissue_csv))


def electrode_models(cfg: RunConfig, f: float):
    return [ElectrodeModel(Rc=e.Rc_ohm, Rdl=cfg.Rdl_ohm, Cdl=cfg.Cdl_F, f=f,
                           capacitor_sign=cfg.capacitor_sign) for e in cfg.electrodes]


@dataclass
class FrequencyState:
    """Assembled system and initial solution at one carrier frequency."""

    f: float
    system: object
    D: object
    rm: ResistanceMatrix


def build_state(cfg: RunConfig, mesh, table: TissueTable, f: float) -> FrequencyState:
    fld = build_admittivity_field(mesh, table, f, cfg.with_permittivity)
    Z = ImpedanceVector.from_models(electrode_models(cfg, f))
    sys_ = assemble(mesh, fld, Z)
    rm = resistance_matrix(sys_, cfg.solve_options())
    return FrequencyState(f, sys_, conductance_density(mesh, fld), rm)


def field_columns(values, name: str):
    """Real column layout of a per-tet field, shared by exports and comparisons.

    Returns ``(header, data)`` with data of shape (M, k) float; complex
    components become ``_re``/``_im`` column pairs.
    """
    a = np.asarray(values)
    if a.ndim == 1:
        a = a[:, None]
    a = a.reshape(len(a), -1)
    header, cols = [], []
    for k in range(a.shape[1]):
        label = name if a.shape[1] == 1 else f"{name}_{k}"
        col = a[:, k]
        if np.iscomplexobj(col):
            header += [f"{label}_re", f"{label}_im"]
            cols += [col.real, col.imag]
        else:
            header.append(label)
            cols.append(col.astype(float))
    return header, np.column_stack(cols)


def write_columns_csv(path, header, data):
    rows = ([t] + r for t, r in enumerate(data.tolist()))
    return tio.write_csv(path, ["tet"] + header, rows)


def read_columns_csv(path):
    header, rows = tio.read_csv(path)
    data = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), -1)
    return header[1:], data


# -- the run ------------------------------------------------------------------

@dataclass
class RunManifest:
    out_dir: str
    config_sha256: str
    inputs: dict = field(default_factory=dict)
    products: dict = field(default_factory=dict)  # relpath -> sha256
    fields: dict = field(default_factory=dict)  # field name -> relpath of its CSV
    solver_stats: dict = field(default_factory=dict)
    diffs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    complete: bool = False
    failed_stage: str | None = None
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("timings")
        d.pop("out_dir")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def write(self) -> Path:
        root = Path(self.out_dir)
        tio._write_text(root / TIMINGS_NAME, json.dumps(self.timings, indent=2) + "\n")
        return tio._write_text(root / MANIFEST_NAME, self.to_json())

    def verify(self) -> list:
        """Products that are missing or whose hash changed."""
        bad = []
        for rel, digest in self.products.items():
            p = Path(self.out_dir) / rel
            if not p.is_file() or tio.file_sha256(p) != digest:
                bad.append(rel)
        return bad


def load_manifest(path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path, encoding="ascii") as fh:
        d = json.load(fh)
    m = RunManifest(out_dir=str(path.parent), config_sha256=d["config_sha256"])
    for k in ("inputs", "products", "fields", "solver_stats", "diffs", "summary",
              "complete", "failed_stage", "error"):
        setattr(m, k, d.get(k, getattr(m, k)))
    timings = path.parent / TIMINGS_NAME
    if timings.is_file():
        m.timings = json.loads(timings.read_text())
    return m


class _Run:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.manifest = RunManifest(str(out), cfg.sha256())

    def product(self, path) -> Path:
        path = Path(path)
        self.manifest.products[tio.relpath(path, self.out)] = tio.file_sha256(path)
        return path

    def coo(self, rel: str, matrix, name: str):
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_coo(path, matrix, name)
        self.product(path)

    def field(self, name: str, values, mesh, vtk_vectors=None, vtk: bool = True):
        """Store a per-tet field as CSV (and VTK) and register it by name."""
        header, data = field_columns(values, name.rsplit("/", 1)[-1])
        path = write_columns_csv(self.out / f"{name}.csv", header, data)
        self.product(path)
        self.manifest.fields[name] = tio.relpath(path, self.out)
        v = np.asarray(values)
        if vtk_vectors is not None:
            self.product(tio.write_vtk(self.out / f"{name}.vtk", mesh, vectors=vtk_vectors,
                                       title=name))
        elif v.ndim == 1 and vtk:
            self.product(tio.write_vtk(self.out / f"{name}.vtk", mesh, scalars={"value": v},
                                       title=name))
        return data

    def stats(self, label: str, stats):
        self.manifest.solver_stats[label] = {
            "columns": len(stats),
            "max_iterations": max(s.iterations for s in stats),
            "max_residual": max(s.residual for s in stats),
        }
        return [[label, j, s.iterations, float(s.residual)] for j, s in enumerate(stats)]

    @contextmanager
    def stage(self, name: str):
        log.info("stage %s", name)
        t0 = time.perf_counter()
        try:
            yield
        except Exception as exc:
            self.manifest.failed_stage = name
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            self.manifest.complete = False
            try:
                self.manifest.write()
            except OSError:
                log.exception("could not write the partial manifest")
            raise PipelineError(name, exc) from exc
        finally:
            self.manifest.timings[name] = time.perf_counter() - t0


def _lead_tets(L) -> np.ndarray:
    """(M, 3L) complex per-tet rows of a lead field."""
    return L.matrix.reshape(L.n_tets, -1)


def _stack_pairs(J1, J2) -> np.ndarray:
    return np.concatenate([J1.J, J2.J], axis=1)


def _diff(run: _Run, name: str, g_lin: np.ndarray, g_ref: np.ndarray, db: float, mesh):
    """Lin-vs-ref maps computed from the stored column layout so that
    :func:`compare` on the same products reproduces them exactly."""
    rep = diff_report(name, g_lin, g_ref, db)
    path = tio.write_diff_csv(run.out / f"{name}.csv", rep)
    run.product(path)
    run.product(tio.write_vtk(run.out / f"{name}.vtk", mesh,
                              scalars={"rel_diff": rep.rel, "abs_diff": rep.abs}, title=name))
    run.manifest.diffs[name] = rep.summary()
    return rep


def run(cfg: RunConfig, out_dir=None) -> RunManifest:
    """Execute the full pipeline and return the manifest written to ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError("setup", exc) from exc
    r = _Run(cfg, out)
    man = r.manifest
    stats_rows = []

    with r.stage("mesh"):
        mesh = build_mesh(cfg)
        table = tissue_table(cfg)
        write_mesh(mesh, out / "mesh.txt")
        r.product(out / "mesh.txt")
        table.to_csv(out / "tissue.csv")
        r.product(out / "tissue.csv")
        man.inputs = {"mesh_sha256": tio.file_sha256(out / "mesh.txt"),
                      "tissue_sha256": tio.file_sha256(out / "tissue.csv"),
                      "config_sha256": man.config_sha256}
        man.summary["mesh"] = {"nodes": mesh.n_nodes, "tets": mesh.n_tets,
                               "patch_areas_mm2": {p.label: p.area for p in mesh.patches}}

    states = []
    leads_ini = []
    with r.stage("initial"):
        for f in cfg.frequencies:
            st = build_state(cfg, mesh, table, f)
            states.append(st)
            tag = f"f{f:g}"
            r.coo(f"initial/{tag}/R.coo", st.rm.R, "R")
            stats_rows += r.stats(f"initial/{tag}", st.rm.stats)
            L = lead_field(st.D, st.rm, f)
            leads_ini.append(L)
            r.field(f"initial/{tag}/lead_field", _lead_tets(L), mesh,
                    vtk_vectors={f"L_{lab}": L.tet_blocks()[:, :, k]
                                 for k, lab in enumerate(cfg.labels)})
            man.summary[f"initial/{tag}/lead_field_norm"] = lead_field_norm(L.matrix)

    def currents_and_envelopes(tag, leads):
        out_env = []
        for p, amps in enumerate(cfg.patterns_mA):
            J1, J2 = pair_currents(leads, cfg.pattern(amps))
            # full vector VTK only for the initial state; the others keep CSV
            vec = {"J1": J1.J, "J2": J2.J} if tag == "initial" else None
            r.field(f"{tag}/pattern{p}/Jv", _stack_pairs(J1, J2), mesh, vtk_vectors=vec)
            env = interference_field(J1, J2)
            r.field(f"{tag}/pattern{p}/interference", env.values, mesh)
            t = env.argmax()
            man.summary[f"{tag}/pattern{p}/interference_max"] = float(env.values.max())
            man.summary[f"{tag}/pattern{p}/interference_argmax"] = t
            out_env.append((J1, J2, env))
        return out_env

    with r.stage("interference/initial"):
        currents_and_envelopes("initial", leads_ini)
        if cfg.steering_splits_mA:
            res = steering_scan(mesh, leads_ini, cfg.steering_total_mA, cfg.steering_splits_mA,
                                frequencies=cfg.frequencies)
            r.product(tio.write_steering_csv(out / "initial/steering.csv", res))
            man.summary["steering_monotone"] = res.monotone

    lin_rows = []
    for label, dRc in cfg.perturbations:
        ell = cfg.labels.index(label)
        ptag = f"perturb_{label}_{dRc:g}"
        leads = {"ref": [], "lin": []}
        with r.stage(ptag):
            for k, st in enumerate(states):
                tag = f"f{st.f:g}"
                base = electrode_models(cfg, st.f)[ell]
                _, dZ = perturb_contact(base, dRc)
                sys_ref = st.system.with_impedances(st.system.Z.perturbed(ell, dZ))
                rm_ref = resistance_matrix(sys_ref, cfg.solve_options())
                stats_rows += r.stats(f"{ptag}/ref/{tag}", rm_ref.stats)
                jac = impedance_jacobian(st.rm, st.system, [ell], cfg.solve_options())
                R_lin = linearized_R(st.rm, jac, {ell: dZ})
                r.coo(f"{ptag}/ref/{tag}/R.coo", rm_ref.R, "R")
                r.coo(f"{ptag}/lin/{tag}/R.coo", R_lin, "R")
                r.coo(f"{ptag}/dR_dZ_{label}_{tag}.coo", jac.derivatives[ell], "dR_dZ")
                L_ref = lead_field(st.D, rm_ref, st.f)
                L_lin = lead_field(st.D, R_lin, st.f)
                leads["ref"].append(L_ref)
                leads["lin"].append(L_lin)
                g_ref = r.field(f"{ptag}/ref/{tag}/lead_field", _lead_tets(L_ref), mesh)
                g_lin = r.field(f"{ptag}/lin/{tag}/lead_field", _lead_tets(L_lin), mesh)
                rep = _diff(r, f"{ptag}/diff/{tag}/lead_field", g_lin, g_ref,
                            cfg.lead_field_db, mesh)
                err = R_lin - rm_ref.R
                lin_rows.append([label, float(dRc), float(dZ.real), float(dZ.imag), float(st.f),
                                 float(np.max(np.abs(err))),
                                 float(np.linalg.norm(err) / np.linalg.norm(rm_ref.R)),
                                 rep.max_rel, rep.max_abs])
                man.summary[f"{ptag}/ref/{tag}/lead_field_norm"] = lead_field_norm(L_ref.matrix)
                man.summary[f"{ptag}/lin/{tag}/lead_field_norm"] = lead_field_norm(L_lin.matrix)
        with r.stage(f"interference/{ptag}"):
            env_ref = currents_and_envelopes(f"{ptag}/ref", leads["ref"])
            env_lin = currents_and_envelopes(f"{ptag}/lin", leads["lin"])
            for p, ((a1, a2, e_ref), (b1, b2, e_lin)) in enumerate(zip(env_ref, env_lin)):
                _, jr = field_columns(_stack_pairs(a1, a2), "Jv")
                _, jl = field_columns(_stack_pairs(b1, b2), "Jv")
                _diff(r, f"{ptag}/diff/pattern{p}/Jv", jl, jr, cfg.jv_db, mesh)
                _diff(r, f"{ptag}/diff/pattern{p}/interference", e_lin.values, e_ref.values,
                      cfg.interference_db, mesh)

    with r.stage("reports"):
        r.product(tio.write_csv(out / "solver_stats.csv",
                                ["solve", "column", "iterations", "relative_residual"], stats_rows))
        r.product(tio.write_csv(out / "lin_vs_ref.csv",
                                ["electrode", "dRc_ohm", "dZ_re", "dZ_im", "f_hz",
                                 "max_abs_error_R", "rel_error_R", "max_rel_diff_L",
                                 "max_abs_diff_L"], lin_rows))
        man.summary["impedance_at_f"] = {
            f"{f:g}": [impedance_of_f(m).real for m in electrode_models(cfg, f)]
            for f in cfg.frequencies}
        man.complete = True
    man.write()
    return man


def compare(manifest1, manifest2, db: float, fields=None):
    """Diff reports between stored per-tet fields of two runs.

    ``fields`` is a list of names (compared across the two runs) or of
    ``(name1, name2)`` pairs; by default every field both runs share.
    """
    m1 = manifest1 if isinstance(manifest1, RunManifest) else load_manifest(manifest1)
    m2 = manifest2 if isinstance(manifest2, RunManifest) else load_manifest(manifest2)
    if m1.inputs.get("mesh_sha256") != m2.inputs.get("mesh_sha256"):
        raise ValueError("runs were computed on different meshes")
    if fields is None:
        fields = sorted(set(m1.fields) & set(m2.fields))
    reports = []
    for item in fields:
        n1, n2 = (item, item) if isinstance(item, str) else item
        for m, n in ((m1, n1), (m2, n2)):
            if n not in m.fields:
                raise KeyError(f"field {n!r} not stored in {m.out_dir}")
        _, g1 = read_columns_csv(Path(m1.out_dir) / m1.fields[n1])
        _, g2 = read_columns_csv(Path(m2.out_dir) / m2.fields[n2])
        if g1.shape != g2.shape:
            raise ValueError(f"fields {n1!r} and {n2!r} have different shapes")
        if g1.shape[1] == 1:
            g1, g2 = g1[:, 0], g2[:, 0]
        name = n1 if n1 == n2 else f"{n1} vs {n2}"
        reports.append(diff_report(name, g1, g2, db))
    return reports
