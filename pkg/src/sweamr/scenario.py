"""Scenario configuration, run orchestration, and comparison reports.

A scenario is described by a flat INI-style file (sections of key = value).
Running it executes the adjoint phase on a fixed uniform grid (when the
adjoint refinement criterion or an explicit adjoint output is requested) and
then the forward AMR phase, writing gauges, space-time field histories, flag
maps, the patch layout log, and a JSON report into the output directory.
All outputs are ASCII.
"""

from __future__ import annotations

import configparser
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .adjoint import (
    Disk,
    FunctionalSpec,
    Interval,
    SINGLE_TIME,
    SnapshotStore,
    TIME_RANGE,
    run_adjoint,
)
from .amr import (
    ADJOINT_CRITERION,
    PatchHierarchy,
    Region,
    SURFACE,
    flag_adjoint,
    flag_surface,
)
from .bathymetry import (
    Bathymetry,
    load_bathymetry,
    radial_shelf_2d,
    step_shelf_1d,
)
from .grid import BoundaryKind, Domain, LevelGeometry
from .solver import Gauge, SolverConfig, read_gauge_csv, write_gauge_csv


class ConfigError(Exception):
    """Invalid scenario configuration; message names the offending field."""


@dataclass
class ScenarioConfig:
    """Fully resolved run description (defaults already applied)."""

    dim: int = 1
    x_lo: float = 0.0
    x_hi: float = 400e3
    y_lo: float = 0.0
    y_hi: float = 400e3
    bc: str = "wall"  # wall | extrapolation, all sides

    bathymetry: str = "step_shelf_1d"  # builtin name or file path
    bathymetry_file: str = ""

    ic_shape: str = "gaussian"  # gaussian | cosine
    amplitude: float = 0.4
    center_x: float = 125e3
    center_y: float = 200e3
    width: float = 10e3

    target_x_min: float = 10e3
    target_x_max: float = 25e3
    target_cx: float = 60e3
    target_cy: float = 200e3
    target_radius: float = 30e3
    t0: float = 0.0
    t_s: float = 3800.0
    t_f: float = 4200.0
    mode: str = SINGLE_TIME

    g: float = 9.81
    cfl_target: float = 0.9
    cfl_max: float = 1.0
    order: int = 2
    limiter: str = "mc"

    nx: int = 400
    ny: int = 50
    levels: int = 2
    ratios: tuple = (2,)
    criterion: str = ADJOINT_CRITERION  # surface | adjoint
    surface_tol: float = 0.1
    adjoint_tol: float = 0.1
    buffer_width: int = 2
    regrid_interval: int = 2
    efficiency: float = 0.7
    regions: tuple = ()

    adjoint_nx: int = 0   # 0 -> forward base resolution
    adjoint_ny: int = 0
    snapshot_interval: float = 0.0  # 0 -> (t_f - t0) / 100

    output_dir: str = "out"
    output_interval: float = 0.0  # 0 -> (t_f - t0) / 100
    gauges: tuple = ()  # (id, x, y)

    def validate(self) -> None:
        if self.dim not in (1, 2):
            raise ConfigError("domain.dim must be 1 or 2")
        if not self.t0 <= self.t_s <= self.t_f:
            raise ConfigError("functional: need t0 <= t_s <= t_f "
                              f"(t0={self.t0}, t_s={self.t_s}, t_f={self.t_f})")
        if self.t_f <= self.t0:
            raise ConfigError("functional.t_f must exceed t0")
        if self.surface_tol <= 0 or self.adjoint_tol <= 0:
            raise ConfigError("amr tolerances must be positive")
        if self.levels < 1 or len(self.ratios) != self.levels - 1:
            raise ConfigError("amr.ratios must list levels-1 integers")
        if self.criterion not in (SURFACE, ADJOINT_CRITERION):
            raise ConfigError(f"amr.criterion unknown: {self.criterion!r}")
        if self.mode not in (SINGLE_TIME, TIME_RANGE):
            raise ConfigError(f"functional.mode unknown: {self.mode!r}")
        if self.bc not in ("wall", "extrapolation"):
            raise ConfigError(f"domain.bc unknown: {self.bc!r}")

    # ----- construction helpers --------------------------------------------

    def domain(self) -> Domain:
        kind = BoundaryKind(self.bc)
        return Domain(self.dim, self.x_lo, self.x_hi, self.y_lo, self.y_hi,
                      bc_x_lo=kind, bc_x_hi=kind, bc_y_lo=kind, bc_y_hi=kind)

    def base_geometry(self) -> LevelGeometry:
        return LevelGeometry(self.domain(), self.nx,
                             self.ny if self.dim == 2 else 1)

    def adjoint_geometry(self) -> LevelGeometry:
        nx = self.adjoint_nx or self.nx
        ny = self.adjoint_ny or self.ny
        return LevelGeometry(self.domain(), nx, ny if self.dim == 2 else 1)

    def load_bathymetry(self) -> Bathymetry:
        if self.bathymetry == "step_shelf_1d":
            return step_shelf_1d(x_lo=self.x_lo - 10e3, x_hi=self.x_hi + 10e3)
        if self.bathymetry == "radial_shelf_2d":
            return radial_shelf_2d(center=(self.target_cx, self.target_cy),
                                   x_lo=self.x_lo - 10e3,
                                   x_hi=self.x_hi + 10e3,
                                   y_lo=self.y_lo - 10e3,
                                   y_hi=self.y_hi + 10e3)
        if self.bathymetry == "file":
            return load_bathymetry(self.bathymetry_file)
        raise ConfigError(f"bathymetry.builtin unknown: {self.bathymetry!r}")

    def functional(self) -> FunctionalSpec:
        if self.dim == 1:
            target = Interval(self.target_x_min, self.target_x_max)
        else:
            target = Disk(self.target_cx, self.target_cy, self.target_radius)
        return FunctionalSpec(target, t_s=self.t_s, t_f=self.t_f,
                              mode=self.mode)

    def solver(self) -> SolverConfig:
        return SolverConfig(g=self.g, cfl_target=self.cfl_target,
                            cfl_max=self.cfl_max, order=self.order,
                            limiter=self.limiter)

    def initial_condition(self, geom: LevelGeometry) -> np.ndarray:
        x = geom.x_centers()
        if self.dim == 1:
            r = np.abs(x - self.center_x)
            q = np.zeros((2, geom.nx))
        else:
            X, Y = np.meshgrid(x, geom.y_centers(), indexing="ij")
            r = np.hypot(X - self.center_x, Y - self.center_y)
            q = np.zeros((3, geom.nx, geom.ny))
        if self.ic_shape == "gaussian":
            q[0] = self.amplitude * np.exp(-((r / self.width) ** 2))
        elif self.ic_shape == "cosine":
            q[0] = np.where(r < self.width,
                            self.amplitude * 0.5
                            * (1 + np.cos(np.pi * r / self.width)), 0.0)
        else:
            raise ConfigError(f"initial.shape unknown: {self.ic_shape!r}")
        return q


_SECTIONS = {
    "domain": ("dim", "x_lo", "x_hi", "y_lo", "y_hi", "bc"),
    "bathymetry": ("builtin", "file"),
    "initial": ("shape", "amplitude", "center_x", "center_y", "width"),
    "functional": ("target_x_min", "target_x_max", "target_cx", "target_cy",
                   "target_radius", "t0", "t_s", "t_f", "mode"),
    "solver": ("g", "cfl_target", "cfl_max", "order", "limiter"),
    "amr": ("nx", "ny", "levels", "ratios", "criterion", "surface_tol",
            "adjoint_tol", "buffer_width", "regrid_interval", "efficiency"),
    "adjoint": ("nx", "ny", "snapshot_interval"),
    "output": ("directory", "interval"),
}

_FIELD_MAP = {
    ("bathymetry", "builtin"): "bathymetry",
    ("bathymetry", "file"): "bathymetry_file",
    ("initial", "shape"): "ic_shape",
    ("adjoint", "nx"): "adjoint_nx",
    ("adjoint", "ny"): "adjoint_ny",
    ("output", "directory"): "output_dir",
    ("output", "interval"): "output_interval",
}

_INT_FIELDS = {"dim", "order", "nx", "ny", "levels", "buffer_width",
               "regrid_interval", "adjoint_nx", "adjoint_ny"}
_STR_FIELDS = {"bc", "bathymetry", "bathymetry_file", "ic_shape", "mode",
               "limiter", "criterion", "output_dir"}


def _assign(cfg: ScenarioConfig, section: str, key: str, value: str) -> None:
    if section == "gauges":
        parts = value.split()
        if len(parts) not in (1, 2):
            raise ConfigError(f"gauges.{key}: expected 'x [y]', got {value!r}")
        cfg.gauges = cfg.gauges + (
            (key, float(parts[0]), float(parts[1]) if len(parts) == 2 else 0.0),)
        return
    if section == "regions":
        parts = value.split()
        if len(parts) != 6:
            raise ConfigError(
                f"regions.{key}: expected 'x_min x_max y_min y_max "
                f"min_level max_level', got {value!r}")
        cfg.regions = cfg.regions + (Region(
            x_min=float(parts[0]), x_max=float(parts[1]),
            y_min=float(parts[2]), y_max=float(parts[3]),
            min_level=int(parts[4]), max_level=int(parts[5])),)
        return
    if section not in _SECTIONS or key not in _SECTIONS[section]:
        raise ConfigError(f"unknown config field {section}.{key}")
    attr = _FIELD_MAP.get((section, key), key)
    try:
        if attr == "ratios":
            cfg.ratios = tuple(int(v) for v in value.replace(",", " ").split())
        elif attr in _INT_FIELDS:
            setattr(cfg, attr, int(value))
        elif attr in _STR_FIELDS:
            setattr(cfg, attr, value.strip())
        else:
            setattr(cfg, attr, float(value))
    except ValueError as e:
        raise ConfigError(f"{section}.{key}: {e}")


def load_config(path) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    cfg = ScenarioConfig()
    for section in parser.sections():
        for key, value in parser.items(section):
            _assign(cfg, section, key, value)
    cfg.validate()
    return cfg


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply 'section.key=value' strings on top of a config."""
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must be section.key=value: {ov!r}")
        dotted, value = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        _assign(cfg, section.strip(), key.strip(), value.strip())
    cfg.validate()
    return cfg


def builtin_scenario(name: str) -> ScenarioConfig:
    """Preset configurations for the two reference scenarios."""
    if name == "shelf1d":
        cfg = ScenarioConfig()
        cfg.gauges = (("g_target", 17.5e3, 0.0),)
        return cfg
    if name == "radial2d":
        cfg = ScenarioConfig(
            dim=2, x_hi=400e3, y_hi=400e3, bc="extrapolation",
            bathymetry="radial_shelf_2d",
            amplitude=0.4, center_x=300e3, center_y=200e3, width=20e3,
            target_cx=60e3, target_cy=200e3, target_radius=30e3,
            t0=0.0, t_s=2200.0, t_f=2200.0, mode=SINGLE_TIME,
            nx=50, ny=50, levels=3, ratios=(2, 2),
            surface_tol=0.02, adjoint_tol=0.02,
            gauges=(("g_target", 90e3, 200e3),))
        return cfg
    raise ConfigError(f"unknown builtin scenario {name!r}")


def echo_config(cfg: ScenarioConfig, path) -> None:
    """Write the fully resolved configuration (defaults included)."""
    parser = configparser.ConfigParser()
    inv = {v: k for k, v in _FIELD_MAP.items()}
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key in keys:
            attr = _FIELD_MAP.get((section, key), key)
            val = getattr(cfg, attr)
            if attr == "ratios":
                val = " ".join(str(v) for v in val)
            parser[section][key] = str(val)
    parser["gauges"] = {gid: f"{x} {y}" for gid, x, y in cfg.gauges}
    parser["regions"] = {
        f"r{k}": f"{r.x_min} {r.x_max} {r.y_min} {r.y_max} "
                 f"{r.min_level} {r.max_level}"
        for k, r in enumerate(cfg.regions)}
    with open(path, "w") as f:
        parser.write(f)


@dataclass
class RunReport:
    wall_adjoint: float
    wall_forward: float
    cell_steps: list
    gauge_files: list
    flag_map_files: list
    xt_files: dict
    report_file: str
    output_dir: str


def _write_xt_row(f, t: float, row: np.ndarray) -> None:
    f.write(" ".join([repr(float(t))] + [f"{v:.8e}" for v in row]) + "\n")


def _xt_header(geom: LevelGeometry, name: str) -> str:
    d = geom.domain
    return (f"# field {name} nx {geom.nx} x_lo {d.x_lo!r} x_hi {d.x_hi!r}\n"
            f"# rows: time value[0] ... value[nx-1]\n")


def run(cfg: ScenarioConfig) -> RunReport:
    """Execute the adjoint phase (if needed) then the forward AMR phase."""
    cfg.validate()
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    echo_config(cfg, os.path.join(outdir, "config.ini"))

    domain = cfg.domain()
    bathy = cfg.load_bathymetry()
    base = cfg.base_geometry()
    fspec = cfg.functional()
    solver_cfg = cfg.solver()
    span = cfg.t_f - cfg.t0
    out_int = cfg.output_interval or span / 100.0
    snap_int = cfg.snapshot_interval or span / 100.0

    store = None
    wall_adjoint = 0.0
    if cfg.criterion == ADJOINT_CRITERION:
        tic = time.perf_counter()
        store = run_adjoint(domain, bathy, cfg.adjoint_geometry(), fspec,
                            cfg.t0, solver_cfg, snapshot_interval=snap_int)
        store.save(os.path.join(outdir, "adjoint"))
        wall_adjoint = time.perf_counter() - tic

    if cfg.criterion == ADJOINT_CRITERION:
        def flagger(h, l):
            return flag_adjoint(h.q_interior(l), h.hbar_interior(l),
                                h.geoms[l], store, h.t, cfg.adjoint_tol,
                                fspec, l + 1)
    else:
        def flagger(h, l):
            return flag_surface(h.q_interior(l), h.hbar_interior(l),
                                cfg.surface_tol, l + 1)

    hier = PatchHierarchy(domain, base, bathy, cfg.levels, list(cfg.ratios),
                          solver_cfg, flagger=flagger,
                          buffer_width=cfg.buffer_width,
                          regrid_interval=cfg.regrid_interval,
                          efficiency=cfg.efficiency, regions=cfg.regions)
    hier.set_state(cfg.initial_condition(base))
    gauges = [Gauge(gid, x, y) for gid, x, y in cfg.gauges]

    tic = time.perf_counter()
    xt_files = {}
    if cfg.dim == 1:
        eta_path = os.path.join(outdir, "eta_xt.txt")
        ip_path = os.path.join(outdir, "ip_xt.txt")
        adj_path = os.path.join(outdir, "adjoint_xt.txt")
        f_eta = open(eta_path, "w")
        f_eta.write(_xt_header(base, "eta"))
        f_ip = None
        if store is not None:
            f_ip = open(ip_path, "w")
            f_ip.write(_xt_header(base, "inner_product"))
        n_out = int(round(span / out_int))
        times = [cfg.t0 + k * out_int for k in range(n_out + 1)]
        times[-1] = cfg.t_f
        from .adjoint import inner_product_field
        for t_out in times:
            if t_out > hier.t:
                hier.advance_to(t_out, gauges=gauges)
            _write_xt_row(f_eta, hier.t, hier.q_interior(0)[0])
            if f_ip is not None:
                ip = inner_product_field(hier.q_interior(0),
                                         hier.hbar_interior(0), base,
                                         store, hier.t, fspec)
                _write_xt_row(f_ip, hier.t, ip)
        f_eta.close()
        xt_files["eta"] = eta_path
        if f_ip is not None:
            f_ip.close()
            xt_files["inner_product"] = ip_path
        if store is not None:
            with open(adj_path, "w") as f_adj:
                f_adj.write(_xt_header(store.geom, "eta_hat"))
                for k, t_snap in enumerate(store.times):
                    _write_xt_row(f_adj, t_snap, store.states[k][0])
            xt_files["eta_hat"] = adj_path
    else:
        hier.advance_to(cfg.t_f, gauges=gauges)
    wall_forward = time.perf_counter() - tic

    gauge_dir = os.path.join(outdir, "gauges")
    os.makedirs(gauge_dir, exist_ok=True)
    gauge_files = []
    for gauge in gauges:
        path = os.path.join(gauge_dir, f"{gauge.id}.csv")
        write_gauge_csv(gauge, path)
        gauge_files.append(path)

    flag_dir = os.path.join(outdir, "flags")
    os.makedirs(flag_dir, exist_ok=True)
    flag_files = []
    for k, (t, level, ff) in enumerate(hier.flag_log):
        path = os.path.join(flag_dir, f"flags_{k:04d}_level{level}.txt")
        with open(path, "w") as f:
            f.write(f"# time {t!r} level {level} provenance {ff.provenance} "
                    f"tol {ff.tol!r}\n")
            m = np.atleast_2d(ff.mask.astype(int))
            for row in m:
                f.write(" ".join(str(v) for v in row) + "\n")
        flag_files.append(path)

    with open(os.path.join(outdir, "patches.txt"), "w") as f:
        f.write("# time level i0 i1 [j0 j1]\n")
        for t, layout in hier.layout_log:
            for level, box in layout:
                f.write(" ".join([repr(float(t)), str(level + 1)]
                                 + [str(b) for b in box]) + "\n")

    report_path = os.path.join(outdir, "report.json")
    report = RunReport(
        wall_adjoint=wall_adjoint, wall_forward=wall_forward,
        cell_steps=list(hier.cell_steps), gauge_files=gauge_files,
        flag_map_files=flag_files, xt_files=xt_files,
        report_file=report_path, output_dir=outdir)
    with open(report_path, "w") as f:
        json.dump({
            "wall_adjoint_s": wall_adjoint,
            "wall_forward_s": wall_forward,
            "cell_steps_per_level": list(hier.cell_steps),
            "coarse_steps": hier.coarse_steps,
            "criterion": cfg.criterion,
            "gauge_files": gauge_files,
            "flag_map_files": flag_files,
            "xt_files": xt_files,
        }, f, indent=2)
    return report


def adjoint_only(cfg: ScenarioConfig) -> str:
    """Run just the adjoint phase; returns the snapshot directory."""
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)
    echo_config(cfg, os.path.join(cfg.output_dir, "config.ini"))
    store = run_adjoint(cfg.domain(), cfg.load_bathymetry(),
                        cfg.adjoint_geometry(), cfg.functional(), cfg.t0,
                        cfg.solver(),
                        snapshot_interval=cfg.snapshot_interval
                        or (cfg.t_f - cfg.t0) / 100.0)
    directory = os.path.join(cfg.output_dir, "adjoint")
    store.save(directory)
    return directory


# ----- gauge comparison -----------------------------------------------------

def _arrival_time(t: np.ndarray, eta: np.ndarray) -> float:
    peak = np.max(np.abs(eta))
    if peak == 0.0:
        return float("nan")
    k = int(np.argmax(np.abs(eta) >= 0.1 * peak))
    return float(t[k])


def compare_gauges(path_a, path_b) -> dict:
    """Compare two gauge series; the second is the reference.

    Series are resampled onto the overlapping part of the first series' time
    axis by linear interpolation.
    """
    ta, va = read_gauge_csv(path_a)
    tb, vb = read_gauge_csv(path_b)
    lo = max(ta[0], tb[0])
    hi = min(ta[-1], tb[-1])
    if hi <= lo:
        raise ValueError("gauge series time ranges do not overlap")
    sel = (ta >= lo) & (ta <= hi)
    t = ta[sel]
    ea = va[sel, 0]
    eb = np.interp(t, tb, vb[:, 0])
    peak_a = float(np.max(np.abs(ea)))
    peak_b = float(np.max(np.abs(eb)))
    max_abs = float(np.max(np.abs(ea - eb)))
    rel_peak = (abs(peak_a - peak_b) / peak_b) if peak_b > 0 else 0.0
    arr_a = _arrival_time(t, ea)
    arr_b = _arrival_time(t, eb)
    # agreement quality before/after the reference's first peak
    k_peak = int(np.argmax(np.abs(eb)))
    early = np.max(np.abs(ea - eb)[: k_peak + 1]) if k_peak >= 0 else 0.0
    late = np.max(np.abs(ea - eb)[k_peak:])
    return {
        "max_abs_diff": max_abs,
        "relative_peak_error": float(rel_peak),
        "arrival_time_diff": float(arr_a - arr_b),
        "peak_a": peak_a,
        "peak_b": peak_b,
        "first_wave_only_agreement": bool(early <= 0.1 * peak_b < late),
    }


# ----- x-t aggregation ------------------------------------------------------

def read_xt_file(path):
    """Returns (times, x_lo, x_hi, values[ntime, nx]) from an x-t field file."""
    times = []
    rows = []
    x_lo = x_hi = None
    with open(path) as f:
        for line in f:
            if line.startswith("#"):
                toks = line.split()
                if "x_lo" in toks:
                    x_lo = float(toks[toks.index("x_lo") + 1])
                    x_hi = float(toks[toks.index("x_hi") + 1])
                continue
            vals = line.split()
            if not vals:
                continue
            times.append(float(vals[0]))
            rows.append([float(v) for v in vals[1:]])
    return np.array(times), x_lo, x_hi, np.array(rows)


def emit_xt_aggregate(field_file, threshold: float, out_path) -> str:
    """Threshold an x-t field history into an ASCII 0/1 mask file.

    Rows are output times, columns are cells; each row starts with its time.
    """
    times, x_lo, x_hi, values = read_xt_file(field_file)
    if values.ndim != 2:
        raise ValueError(f"{field_file}: not a 1D x-t history")
    mask = (np.abs(values) >= threshold).astype(int)
    with open(out_path, "w") as f:
        f.write(f"# mask threshold {threshold!r} nx {mask.shape[1]} "
                f"x_lo {x_lo!r} x_hi {x_hi!r}\n")
        f.write("# rows: time mask[0] ... mask[nx-1]\n")
        for t, row in zip(times, mask):
            f.write(" ".join([repr(float(t))] + [str(v) for v in row]) + "\n")
    return out_path


def read_xt_mask(path):
    """Returns (times, x_lo, x_hi, mask[ntime, nx]) from a mask file."""
    times, x_lo, x_hi, values = read_xt_file(path)
    return times, x_lo, x_hi, values.astype(int)
