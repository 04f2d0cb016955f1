"""Functional definition, time-reversed adjoint solve, snapshot storage,
inner-product evaluation, and adjoint identity checks.

The adjoint problem p_t + (A^T p)_x = 0 runs backward from data phi at t_f.
We substitute t -> t_f - t and integrate the reversed system forward on a
fixed uniform grid, saving snapshots at regular intervals.  Snapshots are
indexed here by increasing *physical* time t in [t0, t_f]; the last one (at
t_f) is the functional weight phi itself, bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .bathymetry import Bathymetry, cell_average_bathymetry, depth_profile
from .grid import GHOST, Domain, LevelGeometry
from .riemann import ADJOINT_REVERSED
from .solver import SolverConfig, UniformRun


class AdjointError(Exception):
    pass


@dataclass(frozen=True)
class Interval:
    x_min: float
    x_max: float


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float


SINGLE_TIME = "single_time"
TIME_RANGE = "time_range"


@dataclass(frozen=True)
class FunctionalSpec:
    """Target region and time window defining the quantity of interest.

    The weighted component is the surface elevation: phi = [indicator, 0(, 0)].
    """

    target: Interval | Disk
    t_s: float
    t_f: float
    mode: str = SINGLE_TIME

    def __post_init__(self):
        if self.t_s > self.t_f:
            raise ValueError("t_s must not exceed t_f")
        if self.mode not in (SINGLE_TIME, TIME_RANGE):
            raise ValueError(f"unknown mode {self.mode!r}")


def target_mask(spec: FunctionalSpec, geom: LevelGeometry) -> np.ndarray:
    """Cell-center membership indicator of the target region."""
    x = geom.x_centers()
    if isinstance(spec.target, Interval):
        if geom.domain.dim != 1:
            raise AdjointError("interval target requires a 1D domain")
        return (x > spec.target.x_min) & (x < spec.target.x_max)
    if geom.domain.dim != 2:
        raise AdjointError("disk target requires a 2D domain")
    y = geom.y_centers()
    X, Y = np.meshgrid(x, y, indexing="ij")
    d = spec.target
    return np.hypot(X - d.cx, Y - d.cy) <= d.radius


def build_functional(spec: FunctionalSpec, geom: LevelGeometry,
                     hbar_interior: np.ndarray | None = None) -> np.ndarray:
    """Interior state array phi with eta = 1 inside the target, momenta zero."""
    mask = target_mask(spec, geom)
    if not mask.any():
        raise AdjointError("target region contains no cell centers")
    phi = np.zeros((geom.domain.ncomp,) + mask.shape)
    phi[0][mask] = 1.0
    if hbar_interior is not None:
        if not np.any(mask & (hbar_interior > 0)):
            raise AdjointError("target region is entirely dry")
        phi[:, hbar_interior == 0.0] = 0.0
    return phi


class SnapshotStore:
    """Adjoint snapshots on one fixed uniform grid, ordered by physical time."""

    def __init__(self, geom: LevelGeometry, hbar_interior: np.ndarray,
                 times: np.ndarray, states: list[np.ndarray],
                 t0: float, t_f: float):
        times = np.asarray(times, dtype=float)
        if len(times) != len(states):
            raise AdjointError("times/states length mismatch")
        if np.any(np.diff(times) <= 0):
            raise AdjointError("snapshot times must be strictly increasing")
        if abs(times[0] - t0) > 1e-9 or abs(times[-1] - t_f) > 1e-9:
            raise AdjointError("snapshots must span [t0, t_f]")
        self.geom = geom
        self.hbar = np.asarray(hbar_interior, dtype=float)
        self.times = times
        self.states = states
        self.t0 = t0
        self.t_f = t_f

    def __len__(self) -> int:
        return len(self.times)

    def bracket(self, t: float) -> tuple[int, int]:
        """Indices of the snapshots bracketing physical time t (clamped)."""
        n = int(np.searchsorted(self.times, t, side="right")) - 1
        n = max(0, min(n, len(self.times) - 1))
        return n, min(n + 1, len(self.times) - 1)

    def snapshot_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-6 * max(1.0, abs(t)):
            raise AdjointError(f"no snapshot stored at t={t}")
        return self.states[k]

    def _interp_weights(self, x, y=None):
        geom = self.geom
        fx = (np.asarray(x, dtype=float) - geom.domain.x_lo) / geom.dx - 0.5
        if np.any(fx < -0.5 - 1e-9) or np.any(fx > geom.nx - 0.5 + 1e-9):
            raise AdjointError("sample location outside snapshot grid")
        fx = np.clip(fx, 0.0, geom.nx - 1 - 1e-12)
        i = fx.astype(int)
        tx = fx - i
        if geom.domain.dim == 1:
            return (i, tx)
        fy = (np.asarray(y, dtype=float) - geom.domain.y_lo) / geom.dy - 0.5
        if np.any(fy < -0.5 - 1e-9) or np.any(fy > geom.ny - 0.5 + 1e-9):
            raise AdjointError("sample location outside snapshot grid")
        fy = np.clip(fy, 0.0, geom.ny - 1 - 1e-12)
        j = fy.astype(int)
        ty = fy - j
        return (i, tx, j, ty)

    def sample(self, k: int, x, y=None):
        """Spatially interpolated snapshot k at points, with dry flags.

        A point whose interpolation stencil touches any dry store cell is
        flagged dry (and its value zeroed).
        """
        state = self.states[k]
        w = self._interp_weights(x, y)
        if self.geom.domain.dim == 1:
            i, tx = w
            vals = state[:, i] * (1 - tx) + state[:, i + 1] * tx
            dry = (self.hbar[i] == 0.0) | (self.hbar[i + 1] == 0.0)
        else:
            i, tx, j, ty = w
            vals = (state[:, i, j] * (1 - tx) * (1 - ty)
                    + state[:, i + 1, j] * tx * (1 - ty)
                    + state[:, i, j + 1] * (1 - tx) * ty
                    + state[:, i + 1, j + 1] * tx * ty)
            dry = ((self.hbar[i, j] == 0.0) | (self.hbar[i + 1, j] == 0.0)
                   | (self.hbar[i, j + 1] == 0.0)
                   | (self.hbar[i + 1, j + 1] == 0.0))
        vals = np.where(dry, 0.0, vals)
        return vals, dry

    # ----- ASCII persistence ------------------------------------------------

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        geom = self.geom
        with open(os.path.join(directory, "index.txt"), "w") as f:
            f.write(f"t0 {self.t0!r}\n")
            f.write(f"t_f {self.t_f!r}\n")
            for k, t in enumerate(self.times):
                f.write(f"snapshot_{k:04d}.txt {float(t)!r}\n")
        np.savetxt(os.path.join(directory, "hbar.txt"),
                   np.atleast_2d(self.hbar), header=_grid_header(geom))
        for k, (t, state) in enumerate(zip(self.times, self.states)):
            path = os.path.join(directory, f"snapshot_{k:04d}.txt")
            flat = state.reshape(state.shape[0], -1)
            np.savetxt(path, flat,
                       header=f"time {float(t)!r}\n" + _grid_header(geom))

    @classmethod
    def load(cls, directory, domain: Domain) -> "SnapshotStore":
        with open(os.path.join(directory, "index.txt")) as f:
            lines = [ln.split() for ln in f.read().splitlines() if ln.strip()]
        t0 = float(lines[0][1])
        t_f = float(lines[1][1])
        names = [(ln[0], float(ln[1])) for ln in lines[2:]]
        hbar = np.loadtxt(os.path.join(directory, "hbar.txt"))
        if domain.dim == 1:
            hbar = np.atleast_2d(hbar)[0]
            geom = LevelGeometry(domain, hbar.shape[0])
            shape = (domain.ncomp, geom.nx)
        else:
            geom = LevelGeometry(domain, hbar.shape[0], hbar.shape[1])
            shape = (domain.ncomp, geom.nx, geom.ny)
        states = []
        for name, _t in names:
            flat = np.loadtxt(os.path.join(directory, name), ndmin=2)
            states.append(flat.reshape(shape))
        times = np.array([t for _n, t in names])
        return cls(geom, hbar, times, states, t0, t_f)


def _grid_header(geom: LevelGeometry) -> str:
    d = geom.domain
    return (f"dim {d.dim} nx {geom.nx} ny {geom.ny if d.dim == 2 else 1} "
            f"x_lo {d.x_lo!r} x_hi {d.x_hi!r} y_lo {d.y_lo!r} y_hi {d.y_hi!r}")


def run_adjoint(domain: Domain, bathy: Bathymetry, geom: LevelGeometry,
                spec: FunctionalSpec, t0: float, cfg: SolverConfig,
                snapshot_interval: float | None = None) -> SnapshotStore:
    """Solve the reversed adjoint system forward on a fixed uniform grid.

    Returns the snapshot store for the physical time span [t0, spec.t_f].
    """
    span = spec.t_f - t0
    if span <= 0:
        raise AdjointError("t_f must exceed t0")
    if snapshot_interval is None:
        snapshot_interval = span / 100.0
    if domain.dim == 1:
        b_avg = cell_average_bathymetry(bathy, geom.x_edges())
    else:
        b_avg = cell_average_bathymetry(bathy, geom.x_edges(), geom.y_edges())
    hbar = depth_profile(b_avg)
    phi = build_functional(spec, geom, hbar)

    run = UniformRun(domain, geom, hbar, cfg, kind=ADJOINT_REVERSED)
    run.set_state(phi, t=0.0)
    n = int(np.floor(span / snapshot_interval + 1e-9))
    stimes = [k * snapshot_interval for k in range(n + 1)]
    if stimes[-1] < span - 1e-9 * max(span, 1.0):
        stimes.append(span)
    stimes[-1] = span

    reversed_states: list[np.ndarray] = [phi.copy()]
    reversed_times = [0.0]

    def on_time(t, r):
        if t > reversed_times[-1] + 1e-12:
            reversed_states.append(r.interior().copy())
            reversed_times.append(t)

    run.advance_to(span, event_times=stimes, on_time=on_time)
    phys_times = [spec.t_f - s for s in reversed(reversed_times)]
    states = list(reversed(reversed_states))
    return SnapshotStore(geom, hbar, np.array(phys_times), states,
                         t0=t0, t_f=spec.t_f)


def tau_indices(store: SnapshotStore, t: float, spec: FunctionalSpec) -> list[int]:
    """Snapshot indices entering the inner-product maximum at forward time t."""
    if spec.mode == SINGLE_TIME:
        lo, hi = store.bracket(t)
        return sorted({lo, hi})
    upper = min(t + spec.t_f - spec.t_s, spec.t_f)
    lo = store.bracket(t)[0]
    hi_lo, hi_hi = store.bracket(upper)
    # don't pull in the snapshot past the window when upper lands on one
    if abs(store.times[hi_lo] - upper) <= 1e-9 * max(1.0, abs(upper)):
        hi = hi_lo
    else:
        hi = hi_hi
    idx = list(range(lo, hi + 1))
    if not idx:
        raise AdjointError("empty snapshot set for inner product")
    return idx


def inner_product_field(q_interior: np.ndarray, hbar_interior: np.ndarray,
                        geom: LevelGeometry, store: SnapshotStore, t: float,
                        spec: FunctionalSpec) -> np.ndarray:
    """Per-cell max_tau |p(x, tau) . q(x, t)|, zero where either side is dry."""
    x = geom.x_centers()
    if geom.domain.dim == 1:
        pts = (x,)
    else:
        X, Y = np.meshgrid(x, geom.y_centers(), indexing="ij")
        pts = (X, Y)
    out = np.zeros(q_interior.shape[1:])
    for k in tau_indices(store, t, spec):
        vals, dry = store.sample(k, *pts)
        ip = np.abs(np.sum(vals * q_interior, axis=0))
        ip = np.where(dry, 0.0, ip)
        out = np.maximum(out, ip)
    out[hbar_interior == 0.0] = 0.0
    return out


def verify_adjoint_identity(q_at_t: np.ndarray, q_at_t0: np.ndarray,
                            store: SnapshotStore, t: float, t0: float) -> float:
    """Relative defect of the conserved forward/adjoint inner product.

    Both forward states must live on the store's grid (interior arrays).
    Returns |IP(t) - IP(t0)| / max(|IP(t0)|, eps).
    """
    geom = store.geom
    cellarea = geom.dx * (geom.dy if geom.domain.dim == 2 else 1.0)
    for q in (q_at_t, q_at_t0):
        if q.shape[1:] != store.states[0].shape[1:]:
            raise AdjointError("forward state grid does not match store grid")
    ip_t = float(np.sum(store.snapshot_at(t) * q_at_t) * cellarea)
    ip_t0 = float(np.sum(store.snapshot_at(t0) * q_at_t0) * cellarea)
    d = geom.domain
    area = (d.x_hi - d.x_lo) * ((d.y_hi - d.y_lo) if d.dim == 2 else 1.0)
    eps = 1e-14 * area
    return abs(ip_t - ip_t0) / max(abs(ip_t0), eps)


def verify_algebraic_adjoint(A: np.ndarray, b: np.ndarray, phi: np.ndarray,
                             fd_eps: float = 1e-6) -> dict:
    """Check phi^T x == xhat^T b for Ax = b, A^T xhat = phi, plus an FD
    sensitivity probe dJ/db_i ~= xhat_i."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    try:
        x = np.linalg.solve(A, b)
        xhat = np.linalg.solve(A.T, phi)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"singular system: {e}")
    j_forward = float(phi @ x)
    j_adjoint = float(xhat @ b)
    scale = max(abs(j_forward), 1e-300)
    identity_residual = abs(j_forward - j_adjoint) / scale
    fd = np.empty(n)
    for i in range(n):
        bp = b.copy()
        bm = b.copy()
        bp[i] += fd_eps
        bm[i] -= fd_eps
        fd[i] = (phi @ np.linalg.solve(A, bp)
                 - phi @ np.linalg.solve(A, bm)) / (2 * fd_eps)
    sens_scale = np.maximum(np.abs(xhat), 1e-12)
    sensitivity_error = float(np.max(np.abs(fd - xhat) / sens_scale))
    return {
        "J_forward": j_forward,
        "J_adjoint": j_adjoint,
        "identity_residual": identity_residual,
        "sensitivity_fd": fd,
        "adjoint_solution": xhat,
        "sensitivity_error": sensitivity_error,
    }
