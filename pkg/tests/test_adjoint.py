import numpy as np
import pytest

from sweamr.adjoint import (
    SINGLE_TIME,
    TIME_RANGE,
    AdjointError,
    Disk,
    FunctionalSpec,
    Interval,
    SnapshotStore,
    build_functional,
    inner_product_field,
    run_adjoint,
    target_mask,
    tau_indices,
    verify_adjoint_identity,
    verify_algebraic_adjoint,
)
from sweamr.bathymetry import cell_average_bathymetry, depth_profile, step_shelf_1d
from sweamr.grid import Domain, LevelGeometry
from sweamr.solver import SolverConfig, UniformRun

G = 9.81


def paper_spec(mode=SINGLE_TIME, t_f=4200.0, t_s=3800.0):
    return FunctionalSpec(Interval(10e3, 25e3), t_s=t_s, t_f=t_f, mode=mode)


def shelf_setup(nx=400):
    domain = Domain(1, 0.0, 400e3)
    geom = LevelGeometry(domain, nx)
    bathy = step_shelf_1d()
    hbar = depth_profile(cell_average_bathymetry(bathy, geom.x_edges()))
    return domain, geom, bathy, hbar


# ----- algebraic adjoint ----------------------------------------------------

def test_algebraic_identity_small_system():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    b = np.array([1.0, 2.0])
    phi = np.array([1.0, 0.0])
    res = verify_algebraic_adjoint(A, b, phi)
    assert res["identity_residual"] < 1e-14
    assert abs(res["J_forward"] - res["J_adjoint"]) < 1e-14 * abs(res["J_forward"])


def test_algebraic_sensitivity_matches_fd():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    b = rng.normal(size=6)
    phi = rng.normal(size=6)
    res = verify_algebraic_adjoint(A, b, phi)
    assert res["sensitivity_error"] < 1e-6
    assert np.allclose(res["sensitivity_fd"], res["adjoint_solution"], atol=1e-6)


def test_algebraic_singular_rejected():
    A = np.zeros((3, 3))
    with pytest.raises(ValueError, match="singular"):
        verify_algebraic_adjoint(A, np.ones(3), np.ones(3))


# ----- functional construction ----------------------------------------------

def test_functional_cell_count_on_1km_grid():
    # [10, 25] km on a 1 km grid: 15 cell centers fall strictly inside
    domain, geom, bathy, hbar = shelf_setup(nx=400)
    mask = target_mask(paper_spec(), geom)
    assert mask.sum() == 15
    phi = build_functional(paper_spec(), geom, hbar)
    assert phi.shape == (2, 400)
    assert np.all(phi[0][mask] == 1.0)
    assert np.all(phi[0][~mask] == 0.0)
    assert np.all(phi[1] == 0.0)


def test_functional_empty_target_errors():
    domain, geom, _b, _h = shelf_setup(nx=10)  # 40 km cells
    spec = FunctionalSpec(Interval(21e3, 39e3), 0.0, 100.0)
    with pytest.raises(AdjointError, match="no cell centers"):
        build_functional(spec, geom)


def test_functional_dry_target_errors():
    domain, geom, _b, hbar = shelf_setup(nx=400)
    hdry = hbar.copy()
    hdry[:20] = 0.0  # dry out the first 20 km
    spec = FunctionalSpec(Interval(2e3, 18e3), 0.0, 100.0)
    with pytest.raises(AdjointError, match="entirely dry"):
        build_functional(spec, geom, hdry)


def test_disk_target_mask_2d():
    domain = Domain(2, 0.0, 100.0, 0.0, 100.0)
    geom = LevelGeometry(domain, 10, 10)
    spec = FunctionalSpec(Disk(55.0, 55.0, 10.0), 0.0, 1.0)
    mask = target_mask(spec, geom)
    assert mask[5, 5]          # center cell (55, 55) inside
    assert mask[4, 5]          # (45, 55) at exactly radius 10: included
    assert not mask[3, 5]


# ----- adjoint solve and snapshot store -------------------------------------

def test_snapshot_count_and_endpoints():
    domain, geom, bathy, hbar = shelf_setup(nx=200)
    spec = paper_spec(t_f=1000.0, t_s=1000.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=100.0)
    assert len(store) == 11
    assert store.times[0] == 0.0 and store.times[-1] == 1000.0
    assert np.allclose(np.diff(store.times), 100.0)


def test_snapshot_interval_not_dividing_span():
    domain, geom, bathy, hbar = shelf_setup(nx=200)
    spec = paper_spec(t_f=1000.0, t_s=1000.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=300.0)
    # 0, 300, 600, 900 in reversed time, plus the endpoint 1000
    assert len(store) == 5
    assert abs(store.times[0] - 0.0) < 1e-9
    assert abs(store.times[-1] - 1000.0) < 1e-9


def test_final_snapshot_is_phi_bit_exact():
    domain, geom, bathy, hbar = shelf_setup(nx=200)
    spec = paper_spec(t_f=800.0, t_s=800.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=200.0)
    phi = build_functional(spec, geom, hbar)
    assert np.array_equal(store.snapshot_at(800.0), phi)


def test_adjoint_pulse_propagates_into_ocean():
    # the weight leaves the shelf target and moves into deep water
    domain, geom, bathy, hbar = shelf_setup(nx=800)
    spec = paper_spec(t_f=1200.0, t_s=1200.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=300.0)
    early = store.snapshot_at(0.0)  # adjoint evolved the full 1200 s
    x = geom.x_centers()
    # energy beyond the shelf edge by then (deep-side front moved ~ c*t)
    deep = np.abs(early[0][x > 60e3])
    assert np.max(deep) > 1e-3
    assert np.all(np.isfinite(early))


def test_store_roundtrip(tmp_path):
    domain, geom, bathy, hbar = shelf_setup(nx=100)
    spec = paper_spec(t_f=600.0, t_s=600.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=200.0)
    store.save(tmp_path / "snaps")
    loaded = SnapshotStore.load(tmp_path / "snaps", domain)
    assert len(loaded) == len(store)
    assert np.allclose(loaded.times, store.times)
    for a, b in zip(loaded.states, store.states):
        assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert np.allclose(loaded.hbar, store.hbar)


def test_sample_exact_at_cell_centers_and_dry_flags():
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 10)
    hbar = np.ones(10)
    hbar[7] = 0.0
    q = np.arange(20, dtype=float).reshape(2, 10)
    store = SnapshotStore(geom, hbar, np.array([0.0, 1.0]),
                          [q, q.copy()], 0.0, 1.0)
    vals, dry = store.sample(0, geom.x_centers())
    assert np.allclose(vals[0][~dry], q[0][~dry])
    # stencils touching the dry cell 7 (centers 6.5 and 7.5) are flagged
    assert dry[6] and dry[7]
    vals2, dry2 = store.sample(0, np.array([6.9]))
    assert dry2[0] and vals2[0][0] == 0.0


def test_sample_outside_grid_errors():
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 10)
    store = SnapshotStore(geom, np.ones(10), np.array([0.0, 1.0]),
                          [np.zeros((2, 10)), np.zeros((2, 10))], 0.0, 1.0)
    with pytest.raises(AdjointError, match="outside"):
        store.sample(0, np.array([-1.0]))


# ----- tau selection and inner product --------------------------------------

def test_tau_indices_single_time_brackets():
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 4)
    states = [np.zeros((2, 4)) for _ in range(5)]
    store = SnapshotStore(geom, np.ones(4), np.arange(5.0), states, 0.0, 4.0)
    spec = FunctionalSpec(Interval(1.0, 3.0), 4.0, 4.0, mode=SINGLE_TIME)
    assert tau_indices(store, 1.4, spec) == [1, 2]
    assert tau_indices(store, 2.0, spec) == [2, 3]
    assert tau_indices(store, 4.0, spec) == [4]


def test_tau_indices_time_range_window():
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 4)
    states = [np.zeros((2, 4)) for _ in range(9)]
    store = SnapshotStore(geom, np.ones(4), np.arange(9.0), states, 0.0, 8.0)
    spec = FunctionalSpec(Interval(1.0, 3.0), t_s=6.0, t_f=8.0, mode=TIME_RANGE)
    # window [t, t + 2] clamped to t_f
    assert tau_indices(store, 1.0, spec) == [1, 2, 3]
    assert tau_indices(store, 7.5, spec) == [7, 8]
    assert tau_indices(store, 8.0, spec) == [8]


def test_inner_product_zero_when_waves_disjoint():
    # forward state localized far from any adjoint support at matching times
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 10)
    hbar = np.ones(10)
    p = np.zeros((2, 10))
    p[0, :3] = 1.0  # adjoint support on the left
    store = SnapshotStore(geom, hbar, np.array([0.0, 1.0]), [p, p], 0.0, 1.0)
    q = np.zeros((2, 10))
    q[0, 8] = 1.0   # forward wave on the right
    spec = FunctionalSpec(Interval(0.0, 1.0), 1.0, 1.0)
    ip = inner_product_field(q, hbar, geom, store, 0.5, spec)
    assert np.all(ip == 0.0)


def test_inner_product_dot_value_and_dry_zeroing():
    domain = Domain(1, 0.0, 10.0)
    geom = LevelGeometry(domain, 10)
    hbar = np.ones(10)
    hbar[4] = 0.0
    p = np.zeros((2, 10))
    p[0] = 2.0
    p[1] = -1.0
    store = SnapshotStore(geom, hbar, np.array([0.0, 1.0]), [p, p], 0.0, 1.0)
    q = np.zeros((2, 10))
    q[0] = 0.5
    q[1] = 3.0
    spec = FunctionalSpec(Interval(0.0, 1.0), 1.0, 1.0)
    ip = inner_product_field(q, hbar, geom, store, 0.5, spec)
    # |2*0.5 + (-1)*3| = 2 at cell centers away from the dry cell
    assert abs(ip[0] - 2.0) < 1e-12
    assert ip[4] == 0.0


# ----- conservation identity over the PDE evolution -------------------------

def test_identity_residual_small_on_shared_grid():
    nx = 2000
    domain, geom, bathy, hbar = shelf_setup(nx=nx)
    t_f = 1200.0
    spec = paper_spec(t_f=t_f, t_s=t_f)
    cfg = SolverConfig()
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0, cfg=cfg,
                        snapshot_interval=t_f / 4)

    run = UniformRun(domain, geom, hbar, cfg)
    x = geom.x_centers()
    q0 = np.zeros((2, nx))
    q0[0] = 0.4 * np.exp(-((x - 125e3) / 10e3) ** 2)
    run.set_state(q0)
    saved = {}
    run.advance_to(t_f, event_times=[t_f / 4],
                   on_time=lambda t, r: saved.setdefault(round(t), r.interior().copy()))
    res = verify_adjoint_identity(saved[round(t_f / 4)], q0, store,
                                  t=t_f / 4, t0=0.0)
    assert res < 0.05


def test_identity_grid_mismatch_rejected():
    domain, geom, bathy, hbar = shelf_setup(nx=100)
    spec = paper_spec(t_f=600.0, t_s=600.0)
    store = run_adjoint(domain, bathy, geom, spec, t0=0.0,
                        cfg=SolverConfig(), snapshot_interval=300.0)
    with pytest.raises(AdjointError, match="does not match"):
        verify_adjoint_identity(np.zeros((2, 50)), np.zeros((2, 50)),
                                store, 300.0, 0.0)
