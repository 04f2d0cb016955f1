"""Single-grid explicit wave-propagation stepping with CFL control and gauges.

The update is the standard high-resolution Godunov form: left/right going
fluctuations from the face kernels in :mod:`sweamr.riemann`, plus limited
second-order correction fluxes.  In 2D the two directions are swept unsplit
from the same input state, without transverse corrections; the stability
bound therefore sums the per-direction Courant numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GHOST, BoundaryKind, Domain, LevelGeometry, Patch
from .riemann import FORWARD, face_waves


class SolverError(Exception):
    pass


class CFLViolation(SolverError):
    """Observed Courant number exceeded cfl_max; the step must be retried."""


@dataclass(frozen=True)
class SolverConfig:
    g: float = 9.81
    cfl_target: float = 0.9
    cfl_max: float = 1.0
    order: int = 2
    limiter: str = "mc"  # mc | minmod | none

    def __post_init__(self):
        if not (0 < self.cfl_target <= self.cfl_max <= 1.0):
            raise ValueError("require 0 < cfl_target <= cfl_max <= 1")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.limiter not in ("mc", "minmod", "none"):
            raise ValueError(f"unknown limiter {self.limiter!r}")


def _limit(theta: np.ndarray, limiter: str) -> np.ndarray:
    if limiter == "mc":
        return np.maximum(0.0, np.minimum(np.minimum((1 + theta) / 2, 2.0),
                                          2 * theta))
    if limiter == "minmod":
        return np.maximum(0.0, np.minimum(1.0, theta))
    return np.ones_like(theta)


def sweep(a, b, h, dx: float, dt: float, g: float, kind: str,
          order: int = 2, limiter: str = "mc"):
    """One-direction update increments for the coupled component pair (a, b).

    Arrays have the sweep axis last and must carry GHOST(=2) cells on each
    end of that axis.  Returns (da, db, smax) where the increments apply to
    cells trimmed by GHOST along the sweep axis.
    """
    ql_a, qr_a = a[..., :-1], a[..., 1:]
    ql_b, qr_b = b[..., :-1], b[..., 1:]
    hl, hr = h[..., :-1], h[..., 1:]
    speeds, waves, amdq, apdq, is_fwave = face_waves(
        ql_a, ql_b, qr_a, qr_b, hl, hr, g, kind)
    smax = float(np.max(np.abs(speeds))) if speeds.size else 0.0

    # fluctuation part: cell i gets apdq at its left face, amdq at its right
    da = -(dt / dx) * (apdq[0][..., 1:-2] + amdq[0][..., 2:-1])
    db = -(dt / dx) * (apdq[1][..., 1:-2] + amdq[1][..., 2:-1])

    if order == 2:
        # limited correction flux on faces 1..n-2 (face f between cells f, f+1)
        norms = np.sum(waves * waves, axis=1)
        ftilde = np.zeros_like(waves[:, :, ..., 1:-1])
        for p, shift in ((0, +1), (1, -1)):  # wave 0 left-going, 1 right-going
            w = waves[p]
            upw = w[..., 1 + shift:w.shape[-1] - 1 + shift]
            cur = w[..., 1:-1]
            den = norms[p][..., 1:-1]
            theta = np.where(den > 0,
                             np.sum(upw * cur, axis=0) / np.where(den > 0, den, 1.0),
                             0.0)
            phi = _limit(theta, limiter)
            s = speeds[p][..., 1:-1]
            if is_fwave:
                coef = 0.5 * np.sign(s) * (1 - np.abs(s) * dt / dx)
            else:
                coef = 0.5 * np.abs(s) * (1 - np.abs(s) * dt / dx)
            ftilde[p] = (coef * phi) * cur
        fsum = ftilde.sum(axis=0)
        da = da - (dt / dx) * (fsum[0][..., 1:] - fsum[0][..., :-1])
        db = db - (dt / dx) * (fsum[1][..., 1:] - fsum[1][..., :-1])
    return da, db, smax


def step_patch(p: Patch, dt: float, kind: str, cfg: SolverConfig):
    """Advance one patch by dt.  Ghosts must be filled.  Returns observed CFL.

    Raises CFLViolation when the achieved Courant number exceeds cfg.cfl_max.
    """
    q = p.state.q
    h = p.hbar
    cfl = _step_arrays(q, h, p.dim, p.dx, p.dy, dt, kind, cfg)
    if cfl > cfg.cfl_max * (1 + 1e-12):
        raise CFLViolation(f"CFL {cfl:.3f} > {cfg.cfl_max}")
    return cfl


def _step_arrays(q: np.ndarray, h: np.ndarray, dim: int, dx: float, dy: float,
                 dt: float, kind: str, cfg: SolverConfig) -> float:
    """In-place unsplit update of a ghosted state array; returns observed CFL."""
    dry = h == 0.0
    if dim == 1:
        da, db, smax = sweep(q[0], q[1], h, dx, dt, cfg.g, kind,
                             cfg.order, cfg.limiter)
        q[0, GHOST:-GHOST] += da
        q[1, GHOST:-GHOST] += db
        cfl = smax * dt / dx
    else:
        ax, bx, sx = sweep(q[0].T, q[1].T, h.T, dx, dt, cfg.g, kind,
                           cfg.order, cfg.limiter)
        ay, by, sy = sweep(q[0], q[2], h, dy, dt, cfg.g, kind,
                           cfg.order, cfg.limiter)
        q[0, GHOST:-GHOST, :] += ax.T
        q[1, GHOST:-GHOST, :] += bx.T
        q[0, :, GHOST:-GHOST] += ay
        q[2, :, GHOST:-GHOST] += by
        cfl = dt * (sx / dx + sy / dy)
    q[:, dry] = 0.0
    return cfl


def compute_stable_dt(p: Patch, cfg: SolverConfig) -> float:
    """Largest dt meeting cfl_target for this patch's wet cells."""
    return stable_dt_from_depth(p.hbar, p.dim, p.dx, p.dy, cfg)


def stable_dt_from_depth(hbar: np.ndarray, dim: int, dx: float, dy: float,
                         cfg: SolverConfig) -> float:
    hmax = float(np.max(hbar))
    if hmax <= 0:
        raise SolverError("all cells dry; no stable dt exists")
    c = np.sqrt(cfg.g * hmax)
    if dim == 1:
        return cfg.cfl_target * dx / c
    return cfg.cfl_target / (c * (1.0 / dx + 1.0 / dy))


def fill_ghost(q: np.ndarray, domain: Domain) -> None:
    """Fill the domain-edge ghost frame in place (wall mirror / extrapolation).

    Interfaces interior to the domain (same-level neighbors, coarse-fine) are
    the AMR layer's responsibility; this handles the physical boundary only.
    """
    g = GHOST
    dim = q.ndim - 1
    normal = {0: 1, 1: 2 if dim == 2 else 1}

    def _side(axis, lo):
        idx = [slice(None)] * (dim + 1)
        src = [slice(None)] * (dim + 1)
        bc = {(0, True): domain.bc_x_lo, (0, False): domain.bc_x_hi,
              (1, True): domain.bc_y_lo, (1, False): domain.bc_y_hi}[(axis, lo)]
        ax = axis + 1
        if bc is BoundaryKind.WALL:
            idx[ax] = slice(0, g) if lo else slice(-g, None)
            src[ax] = slice(2 * g - 1, g - 1, -1) if lo else slice(-g - 1, -2 * g - 1, -1)
            q[tuple(idx)] = q[tuple(src)]
            nc = normal[axis]
            idx[0] = nc
            q[tuple(idx)] = -q[tuple(idx)]
        else:
            edge = [slice(None)] * (dim + 1)
            edge[ax] = slice(g, g + 1) if lo else slice(-g - 1, -g)
            for k in range(g):
                idx[ax] = slice(k, k + 1) if lo else slice(-k - 1, -k if k else None)
                q[tuple(idx)] = q[tuple(edge)]

    _side(0, True)
    _side(0, False)
    if dim == 2:
        _side(1, True)
        _side(1, False)


def fill_hbar_ghost(h: np.ndarray, domain: Domain) -> None:
    """Mirror (wall) or copy (extrapolation) mean depth into the ghost frame."""
    g = GHOST
    dim = h.ndim

    def _side(axis, lo):
        bc = {(0, True): domain.bc_x_lo, (0, False): domain.bc_x_hi,
              (1, True): domain.bc_y_lo, (1, False): domain.bc_y_hi}[(axis, lo)]
        idx = [slice(None)] * dim
        src = [slice(None)] * dim
        if bc is BoundaryKind.WALL:
            idx[axis] = slice(0, g) if lo else slice(-g, None)
            src[axis] = slice(2 * g - 1, g - 1, -1) if lo else slice(-g - 1, -2 * g - 1, -1)
            h[tuple(idx)] = h[tuple(src)]
        else:
            edge = [slice(None)] * dim
            edge[axis] = slice(g, g + 1) if lo else slice(-g - 1, -g)
            for k in range(g):
                idx[axis] = slice(k, k + 1) if lo else slice(-k - 1, -k if k else None)
                h[tuple(idx)] = h[tuple(edge)]

    _side(0, True)
    _side(0, False)
    if dim == 2:
        _side(1, True)
        _side(1, False)


@dataclass
class Gauge:
    """A fixed location recording the interpolated state every step."""

    id: str
    x: float
    y: float = 0.0
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, t: float, state: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            return
        self.times.append(float(t))
        self.values.append(np.asarray(state, dtype=float).copy())


def interpolate_state(q: np.ndarray, geom: LevelGeometry, x, y=0.0) -> np.ndarray:
    """(Bi)linear interpolation of a ghosted state array at physical points."""
    g = GHOST
    dim = q.ndim - 1
    fx = (np.asarray(x, dtype=float) - geom.domain.x_lo) / geom.dx - 0.5 + g
    fx = np.clip(fx, 0.0, q.shape[1] - 1.000001)
    i = fx.astype(int)
    tx = fx - i
    if dim == 1:
        return q[:, i] * (1 - tx) + q[:, i + 1] * tx
    fy = (np.asarray(y, dtype=float) - geom.domain.y_lo) / geom.dy - 0.5 + g
    fy = np.clip(fy, 0.0, q.shape[2] - 1.000001)
    j = fy.astype(int)
    ty = fy - j
    return (q[:, i, j] * (1 - tx) * (1 - ty) + q[:, i + 1, j] * tx * (1 - ty)
            + q[:, i, j + 1] * (1 - tx) * ty + q[:, i + 1, j + 1] * tx * ty)


def record_gauges(q: np.ndarray, geom: LevelGeometry, gauges, t: float) -> None:
    for gauge in gauges:
        if not (geom.domain.x_lo <= gauge.x <= geom.domain.x_hi):
            continue
        if geom.domain.dim == 2 and not (
                geom.domain.y_lo <= gauge.y <= geom.domain.y_hi):
            continue
        gauge.append(t, interpolate_state(q, geom, gauge.x, gauge.y))


def write_gauge_csv(gauge: Gauge, path) -> None:
    ncomp = len(gauge.values[0]) if gauge.values else 2
    header = "time,eta,mu" + (",gamma" if ncomp == 3 else "")
    with open(path, "w") as f:
        f.write(header + "\n")
        for t, v in zip(gauge.times, gauge.values):
            f.write(",".join([repr(t)] + [repr(float(c)) for c in v]) + "\n")


def read_gauge_csv(path):
    """Returns (times, values[ntime, ncomp])."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise SolverError(f"{path}: empty gauge series")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return data[:, 0], data[:, 1:]


class UniformRun:
    """Forward or reversed-adjoint integration on one uniform grid."""

    def __init__(self, domain: Domain, geom: LevelGeometry, hbar_interior,
                 cfg: SolverConfig, kind: str = FORWARD):
        self.domain = domain
        self.geom = geom
        self.cfg = cfg
        self.kind = kind
        g = GHOST
        if domain.dim == 1:
            shape = (geom.nx + 2 * g,)
        else:
            shape = (geom.nx + 2 * g, geom.ny + 2 * g)
        self.hbar = np.zeros(shape)
        sl = tuple(slice(g, -g) for _ in shape)
        self.hbar[sl] = hbar_interior
        fill_hbar_ghost(self.hbar, domain)
        self.q = np.zeros((domain.ncomp,) + shape)
        self.t = 0.0
        self.steps = 0

    def set_state(self, q_interior: np.ndarray, t: float = 0.0) -> None:
        g = GHOST
        sl = (slice(None),) + tuple(slice(g, -g) for _ in self.q.shape[1:])
        self.q[sl] = q_interior
        self.q[:, self.hbar == 0.0] = 0.0
        self.t = t

    def interior(self) -> np.ndarray:
        g = GHOST
        sl = (slice(None),) + tuple(slice(g, -g) for _ in self.q.shape[1:])
        return self.q[sl]

    def advance_to(self, t_end: float, gauges=(), on_time=None,
                   event_times=()) -> None:
        """Step until t_end, landing exactly on sorted event_times.

        ``on_time(t, run)`` is called at each event time and at t_end.
        """
        events = sorted(set(list(event_times) + [t_end]))
        events = [t for t in events if t > self.t + 1e-12]
        dt_stable = stable_dt_from_depth(self.hbar, self.domain.dim,
                                         self.geom.dx, self.geom.dy, self.cfg)
        for target in events:
            while self.t < target - 1e-9:
                dt = min(dt_stable, target - self.t)
                fill_ghost(self.q, self.domain)
                backup = self.q.copy()
                try:
                    cfl = _step_arrays(self.q, self.hbar, self.domain.dim,
                                       self.geom.dx, self.geom.dy, dt,
                                       self.kind, self.cfg)
                    if cfl > self.cfg.cfl_max * (1 + 1e-12):
                        raise CFLViolation(f"CFL {cfl}")
                except CFLViolation:
                    self.q = backup
                    dt_stable *= 0.5
                    continue
                self.t += dt
                self.steps += 1
                if gauges:
                    record_gauges(self.q, self.geom, gauges, self.t)
            self.t = target
            if on_time is not None:
                on_time(self.t, self)
