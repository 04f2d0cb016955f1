import json
import os

import numpy as np
import pytest

from sweamr.cli import main as cli_main
from sweamr.scenario import (
    ConfigError,
    ScenarioConfig,
    apply_overrides,
    builtin_scenario,
    compare_gauges,
    echo_config,
    emit_xt_aggregate,
    load_config,
    read_xt_file,
    read_xt_mask,
    run,
)
from sweamr.solver import Gauge, write_gauge_csv


def quick_1d_overrides(outdir, criterion="surface"):
    return [
        f"output.directory={outdir}",
        "amr.nx=200",
        f"amr.criterion={criterion}",
        "functional.t_f=1200",
        "functional.t_s=1200",
        "output.interval=120",
        "adjoint.snapshot_interval=120",
    ]


def quick_run(tmp_path, criterion="surface", extra=()):
    cfg = builtin_scenario("shelf1d")
    apply_overrides(cfg, quick_1d_overrides(tmp_path / "out", criterion)
                    + list(extra))
    return run(cfg)


# ----- configuration --------------------------------------------------------

def test_builtin_scenarios_validate():
    for name in ("shelf1d", "radial2d"):
        builtin_scenario(name).validate()


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError, match="unknown builtin"):
        builtin_scenario("nope")


def test_config_file_roundtrip(tmp_path):
    cfg = builtin_scenario("radial2d")
    path = tmp_path / "scen.ini"
    echo_config(cfg, path)
    loaded = load_config(path)
    assert loaded.dim == 2
    assert loaded.ratios == (2, 2)
    assert loaded.bathymetry == "radial_shelf_2d"
    assert loaded.gauges == cfg.gauges


def test_config_validation_names_field():
    cfg = ScenarioConfig(t_s=5000.0, t_f=4200.0)
    with pytest.raises(ConfigError, match="t0 <= t_s <= t_f"):
        cfg.validate()
    cfg = ScenarioConfig(surface_tol=-1.0)
    with pytest.raises(ConfigError, match="tolerances"):
        cfg.validate()
    cfg = ScenarioConfig(levels=3, ratios=(2,))
    with pytest.raises(ConfigError, match="ratios"):
        cfg.validate()


def test_unknown_config_key_rejected():
    cfg = ScenarioConfig()
    with pytest.raises(ConfigError, match="unknown config field"):
        apply_overrides(cfg, ["solver.frobnicate=1"])


def test_override_format_enforced():
    with pytest.raises(ConfigError, match="section.key=value"):
        apply_overrides(ScenarioConfig(), ["cfl=0.5"])


def test_override_changes_value():
    cfg = apply_overrides(builtin_scenario("shelf1d"),
                          ["solver.cfl_target=0.5", "amr.ratios=4"])
    assert cfg.cfl_target == 0.5
    assert cfg.ratios == (4,)


# ----- runs -----------------------------------------------------------------

def test_zero_amplitude_run_is_quiet(tmp_path):
    report = quick_run(tmp_path, extra=["initial.amplitude=1e-30"])
    assert report.cell_steps[1] == 0  # no refinement triggered
    t, v = np.loadtxt(report.gauge_files[0], delimiter=",",
                      skiprows=1, ndmin=2).T[:2]
    assert np.max(np.abs(v)) < 1e-15


def test_surface_run_outputs(tmp_path):
    report = quick_run(tmp_path)
    assert os.path.exists(report.xt_files["eta"])
    assert os.path.exists(os.path.join(report.output_dir, "config.ini"))
    assert os.path.exists(os.path.join(report.output_dir, "patches.txt"))
    assert os.path.exists(report.report_file)
    times, x_lo, x_hi, vals = read_xt_file(report.xt_files["eta"])
    assert vals.shape[1] == 200
    assert x_lo == 0.0 and x_hi == 400e3
    assert np.all(np.diff(times) > 0)
    assert report.cell_steps[1] > 0
    with open(report.report_file) as f:
        data = json.load(f)
    assert data["cell_steps_per_level"] == report.cell_steps


def test_adjoint_run_outputs_and_masks(tmp_path):
    report = quick_run(tmp_path, criterion="adjoint")
    assert "inner_product" in report.xt_files
    assert "eta_hat" in report.xt_files
    assert os.path.isdir(os.path.join(report.output_dir, "adjoint"))
    assert report.flag_map_files
    # inner-product mask is a subset of the forward-wave mask
    eta_mask = emit_xt_aggregate(report.xt_files["eta"], 0.1,
                                 os.path.join(report.output_dir, "m_eta.txt"))
    ip_mask = emit_xt_aggregate(report.xt_files["inner_product"], 0.1,
                                os.path.join(report.output_dir, "m_ip.txt"))
    _t, _lo, _hi, me = read_xt_mask(eta_mask)
    _t, _lo, _hi, mi = read_xt_mask(ip_mask)
    assert me.any()
    assert not np.any((mi == 1) & (me == 0))


def test_run_determinism_byte_identical(tmp_path):
    r1 = quick_run(tmp_path / "a")
    r2 = quick_run(tmp_path / "b")
    with open(r1.xt_files["eta"], "rb") as f:
        b1 = f.read()
    with open(r2.xt_files["eta"], "rb") as f:
        b2 = f.read()
    assert b1 == b2
    with open(r1.gauge_files[0], "rb") as f:
        g1 = f.read()
    with open(r2.gauge_files[0], "rb") as f:
        g2 = f.read()
    assert g1 == g2


# ----- comparison and aggregation -------------------------------------------

def test_compare_identical_gauges(tmp_path):
    g = Gauge("g", 1.0)
    for k in range(40):
        g.append(k * 1.0, [np.sin(0.3 * k), 0.0])
    p = tmp_path / "g.csv"
    write_gauge_csv(g, p)
    m = compare_gauges(p, p)
    assert m["max_abs_diff"] == 0.0
    assert m["relative_peak_error"] == 0.0
    assert m["arrival_time_diff"] == 0.0


def test_compare_disjoint_ranges_rejected(tmp_path):
    a = Gauge("a", 1.0)
    b = Gauge("b", 1.0)
    for k in range(5):
        a.append(float(k), [1.0, 0.0])
        b.append(100.0 + k, [1.0, 0.0])
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_gauge_csv(a, pa)
    write_gauge_csv(b, pb)
    with pytest.raises(ValueError, match="overlap"):
        compare_gauges(pa, pb)


def test_emit_xt_zero_field_all_zero(tmp_path):
    path = tmp_path / "field.txt"
    with open(path, "w") as f:
        f.write("# field eta nx 4 x_lo 0.0 x_hi 4.0\n")
        for t in range(3):
            f.write(f"{float(t)!r} 0.0 0.0 0.0 0.0\n")
    out = emit_xt_aggregate(path, 0.1, tmp_path / "mask.txt")
    _t, _lo, _hi, mask = read_xt_mask(out)
    assert mask.shape == (3, 4)
    assert not mask.any()


# ----- CLI ------------------------------------------------------------------

def test_cli_missing_config_is_exit_2():
    assert cli_main(["run"]) == 2


def test_cli_bad_override_is_exit_2(tmp_path):
    assert cli_main(["run", "--builtin", "shelf1d",
                     "--solver.bogus=1"]) == 2


def test_cli_compare_and_emit(tmp_path, capsys):
    g = Gauge("g", 1.0)
    for k in range(10):
        g.append(float(k), [0.1 * k, 0.0])
    p = tmp_path / "g.csv"
    write_gauge_csv(g, p)
    assert cli_main(["compare-gauges", str(p), str(p),
                     "--report", str(tmp_path / "rep.json")]) == 0
    with open(tmp_path / "rep.json") as f:
        assert json.load(f)["max_abs_diff"] == 0.0

    field = tmp_path / "f.txt"
    with open(field, "w") as f:
        f.write("# field eta nx 2 x_lo 0.0 x_hi 2.0\n0.0 1.0 0.0\n")
    assert cli_main(["emit-xt", str(field), "--threshold", "0.5",
                     "--out", str(tmp_path / "m.txt")]) == 0


def test_cli_run_quick(tmp_path):
    args = (["run", "--builtin", "shelf1d", "--serial"]
            + ["--" + ov for ov in quick_1d_overrides(tmp_path / "out")])
    assert cli_main(args) == 0
    assert os.path.exists(tmp_path / "out" / "report.json")
