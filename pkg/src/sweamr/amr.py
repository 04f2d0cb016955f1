"""Block-structured adaptive mesh refinement on nested full-domain levels.

Each level stores one ghosted full-domain array at its resolution plus a
coverage mask and the list of rectangular patch boxes that generate it.  Only
covered cells hold live solution data; cells just outside the coverage are
refreshed from the parent level (space-time interpolation) before every step,
so the patch stepping itself is plain single-grid stepping on box windows.

Flag fields are produced per level (surface magnitude or adjoint inner
product), buffered, clustered into boxes by recursive signature bisection,
and promoted to the next level at regrid time.  Fine levels subcycle: level
l+1 takes ratio[l] steps per level-l step and is then averaged back down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import FunctionalSpec, SnapshotStore, inner_product_field
from .bathymetry import Bathymetry, cell_average_bathymetry, depth_profile
from .grid import GHOST, Domain, LevelGeometry
from .riemann import FORWARD
from .solver import (
    CFLViolation,
    SolverConfig,
    _step_arrays,
    fill_ghost,
    fill_hbar_ghost,
    record_gauges,
    stable_dt_from_depth,
)


class AmrError(Exception):
    pass


SURFACE = "surface"
ADJOINT_CRITERION = "adjoint"


@dataclass(frozen=True)
class FlagField:
    """Per-cell refinement flags on one level's interior grid."""

    mask: np.ndarray
    provenance: str  # SURFACE | ADJOINT_CRITERION
    level: int
    tol: float


@dataclass(frozen=True)
class Region:
    """Rectangle where refinement is required up to min_level and permitted
    only up to max_level (levels numbered from 1)."""

    x_min: float = -np.inf
    x_max: float = np.inf
    y_min: float = -np.inf
    y_max: float = np.inf
    min_level: int = 1
    max_level: int = 10 ** 9


def flag_surface(q_interior: np.ndarray, hbar_interior: np.ndarray,
                 tol: float, level: int = 1) -> FlagField:
    """Flag wet cells where the surface magnitude reaches tol."""
    if tol <= 0:
        raise AmrError("surface flag tolerance must be positive")
    mask = (np.abs(q_interior[0]) >= tol) & (hbar_interior > 0)
    return FlagField(mask, SURFACE, level, tol)


def flag_adjoint(q_interior: np.ndarray, hbar_interior: np.ndarray,
                 geom: LevelGeometry, store: SnapshotStore, t: float,
                 tol: float, spec: FunctionalSpec, level: int = 1) -> FlagField:
    """Flag wet cells where max_tau |p . q| reaches tol."""
    if tol <= 0:
        raise AmrError("adjoint flag tolerance must be positive")
    ip = inner_product_field(q_interior, hbar_interior, geom, store, t, spec)
    mask = (ip >= tol) & (hbar_interior > 0)
    return FlagField(mask, ADJOINT_CRITERION, level, tol)


# ----- mask morphology ------------------------------------------------------

def _shift(a: np.ndarray, s: int, axis: int, fill: bool) -> np.ndarray:
    n = a.shape[axis]
    out = np.full_like(a, fill)
    if abs(s) >= n:
        return out
    if s == 0:
        return a.copy()
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if s > 0:
        dst[axis] = slice(s, None)
        src[axis] = slice(0, n - s)
    else:
        dst[axis] = slice(0, n + s)
        src[axis] = slice(-s, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def dilate(mask: np.ndarray, width: int) -> np.ndarray:
    out = mask.copy()
    for ax in range(mask.ndim):
        acc = out.copy()
        for s in range(1, width + 1):
            acc |= _shift(out, s, ax, False)
            acc |= _shift(out, -s, ax, False)
        out = acc
    return out


def erode(mask: np.ndarray, width: int, boundary: bool = True) -> np.ndarray:
    """Shrink the mask by width cells; boundary=True treats the outside of the
    array as covered (so coverage touching the physical edge is not eroded)."""
    out = mask.copy()
    for ax in range(mask.ndim):
        acc = out.copy()
        for s in range(1, width + 1):
            acc &= _shift(out, s, ax, boundary)
            acc &= _shift(out, -s, ax, boundary)
        out = acc
    return out


# ----- clustering -----------------------------------------------------------

def cluster_flags(mask: np.ndarray, efficiency: float = 0.7) -> list[tuple]:
    """Cluster flagged cells into rectangles by recursive signature bisection.

    Returns boxes (i0, i1) in 1D or (i0, i1, j0, j1) in 2D with exclusive
    upper ends.  Every flagged cell is covered; a box is accepted when its
    flagged fraction reaches ``efficiency`` or it cannot be split further.
    """
    if not 0.0 < efficiency <= 1.0:
        raise AmrError("efficiency must be in (0, 1]")
    m = np.asarray(mask, dtype=bool)
    one_d = m.ndim == 1
    if one_d:
        m = m[:, None]
    boxes: list[tuple] = []
    _bisect(m, 0, 0, boxes, efficiency)
    boxes.sort()
    if one_d:
        return [(i0, i1) for (i0, i1, _j0, _j1) in boxes]
    return boxes


def _bisect(m: np.ndarray, oi: int, oj: int, boxes: list, eff: float) -> None:
    if not m.any():
        return
    si = np.flatnonzero(m.any(axis=1))
    sj = np.flatnonzero(m.any(axis=0))
    i0, i1 = int(si[0]), int(si[-1]) + 1
    j0, j1 = int(sj[0]), int(sj[-1]) + 1
    sub = m[i0:i1, j0:j1]
    ni, nj = sub.shape
    if sub.sum() / sub.size >= eff or max(ni, nj) <= 2:
        boxes.append((oi + i0, oi + i1, oj + j0, oj + j1))
        return
    cut = _signature_cut(sub)
    if cut is None:
        cut = (0, ni // 2) if ni >= nj else (1, nj // 2)
    ax, pos = cut
    if ax == 0:
        _bisect(sub[:pos, :], oi + i0, oj + j0, boxes, eff)
        _bisect(sub[pos:, :], oi + i0 + pos, oj + j0, boxes, eff)
    else:
        _bisect(sub[:, :pos], oi + i0, oj + j0, boxes, eff)
        _bisect(sub[:, pos:], oi + i0, oj + j0 + pos, boxes, eff)


def _signature_cut(sub: np.ndarray):
    """Hole in a signature if one exists, else the strongest inflection."""
    for ax in (0, 1):
        s = sub.sum(axis=1 - ax)
        zeros = np.flatnonzero(s == 0)
        if zeros.size:
            k = int(zeros[np.argmin(np.abs(zeros - len(s) / 2))])
            return (ax, max(k, 1))
    best = None
    best_jump = -1.0
    for ax in (0, 1):
        s = sub.sum(axis=1 - ax).astype(float)
        if len(s) < 4:
            continue
        lap = s[2:] - 2 * s[1:-1] + s[:-2]  # lap[k] sits at cell k+1
        jump = np.abs(np.diff(lap))
        change = lap[:-1] * lap[1:] < 0
        for k in np.flatnonzero(change):
            if jump[k] > best_jump:
                best_jump = float(jump[k])
                best = (ax, int(k) + 2)
    return best


def constrained_cluster(mask: np.ndarray, allowed: np.ndarray,
                        efficiency: float = 0.7) -> list[tuple]:
    """Cluster flags into rectangles lying entirely inside ``allowed``.

    Plain clustering can return a bounding box that spills outside the
    allowed region even though every flagged cell is inside it; such boxes
    are bisected until each piece is clean.  Requires mask ⊆ allowed.
    """
    m = np.asarray(mask, dtype=bool)
    a = np.asarray(allowed, dtype=bool)
    if np.any(m & ~a):
        raise AmrError("flagged cell outside the allowed region")
    one_d = m.ndim == 1
    if one_d:
        m = m[:, None]
        a = a[:, None]
    out: list[tuple] = []
    stack = list(_as_windows(cluster_flags(m, efficiency)))
    while stack:
        i0, i1, j0, j1 = stack.pop()
        sub_m = m[i0:i1, j0:j1]
        if not sub_m.any():
            continue
        # trim to the flagged bounding box
        si = np.flatnonzero(sub_m.any(axis=1))
        sj = np.flatnonzero(sub_m.any(axis=0))
        i0n, i1n = i0 + int(si[0]), i0 + int(si[-1]) + 1
        j0n, j1n = j0 + int(sj[0]), j0 + int(sj[-1]) + 1
        if a[i0n:i1n, j0n:j1n].all():
            out.append((i0n, i1n, j0n, j1n))
            continue
        # split the longest axis and retry each half
        if i1n - i0n >= j1n - j0n:
            mid = (i0n + i1n) // 2
            stack.append((i0n, mid, j0n, j1n))
            stack.append((mid, i1n, j0n, j1n))
        else:
            mid = (j0n + j1n) // 2
            stack.append((i0n, i1n, j0n, mid))
            stack.append((i0n, i1n, mid, j1n))
    out.sort()
    if one_d:
        return [(i0, i1) for (i0, i1, _j0, _j1) in out]
    return out


def _as_windows(boxes):
    for b in boxes:
        if len(b) == 2:
            yield (b[0], b[1], 0, 1)
        else:
            yield b


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)),
                    0.0)


class PatchHierarchy:
    """Nested refinement levels over one domain, advanced with subcycling.

    ``flagger(hier, l)`` returns the boolean flag mask on level l's interior
    grid (evaluated within its coverage) used to build level l+1.
    """

    def __init__(self, domain: Domain, base_geom: LevelGeometry,
                 bathy: Bathymetry, nlevels: int, ratios, cfg: SolverConfig,
                 flagger=None, kind: str = FORWARD, buffer_width: int = 2,
                 regrid_interval: int = 2, efficiency: float = 0.7,
                 regions=()):
        if nlevels < 1 or len(ratios) != nlevels - 1:
            raise AmrError("need one refinement ratio per level pair")
        if any(int(r) < 2 for r in ratios):
            raise AmrError("refinement ratios must be integers >= 2")
        self.domain = domain
        self.cfg = cfg
        self.kind = kind
        self.flagger = flagger
        self.nlevels = nlevels
        self.ratios = [int(r) for r in ratios]
        self.buffer_width = buffer_width
        self.regrid_interval = regrid_interval
        self.efficiency = efficiency
        self.regions = tuple(regions)

        self.geoms = [base_geom]
        for r in self.ratios:
            self.geoms.append(self.geoms[-1].refined(r))

        self.q: list[np.ndarray] = []
        self.hbar: list[np.ndarray] = []
        self.coverage: list[np.ndarray] = []
        self.boxes: list[list[tuple]] = []
        g = GHOST
        for l, geom in enumerate(self.geoms):
            if domain.dim == 1:
                ishape = (geom.nx,)
                b_avg = cell_average_bathymetry(bathy, geom.x_edges())
            else:
                ishape = (geom.nx, geom.ny)
                b_avg = cell_average_bathymetry(bathy, geom.x_edges(),
                                                geom.y_edges())
            shape = tuple(n + 2 * g for n in ishape)
            h = np.zeros(shape)
            sl = tuple(slice(g, -g) for _ in ishape)
            h[sl] = depth_profile(b_avg)
            fill_hbar_ghost(h, domain)
            self.hbar.append(h)
            self.q.append(np.zeros((domain.ncomp,) + shape))
            self.coverage.append(np.zeros(ishape, dtype=bool))
            self.boxes.append([])
        self.coverage[0][...] = True
        self.boxes[0] = [self._whole_box()]

        self.t = 0.0
        self.coarse_steps = 0
        self.cell_steps = [0] * nlevels
        self.last_flags: list = [None] * nlevels
        self.flag_log: list = []    # (t, level, FlagField)
        self.layout_log: list = []  # (t, [(level, box), ...])

    # ----- small helpers ----------------------------------------------------

    def _whole_box(self):
        g0 = self.geoms[0]
        if self.domain.dim == 1:
            return (0, g0.nx)
        return (0, g0.nx, 0, g0.ny)

    def _interior(self, arr: np.ndarray) -> np.ndarray:
        sl = (slice(None),) + (slice(GHOST, -GHOST),) * (arr.ndim - 1)
        return arr[sl]

    def hbar_interior(self, l: int) -> np.ndarray:
        sl = (slice(GHOST, -GHOST),) * self.hbar[l].ndim
        return self.hbar[l][sl]

    def q_interior(self, l: int) -> np.ndarray:
        return self._interior(self.q[l])

    def set_state(self, q_interior: np.ndarray) -> None:
        """Install the initial condition on the base level (interior array)."""
        self.q_interior(0)[...] = q_interior
        self.q[0][:, self.hbar[0] == 0.0] = 0.0

    def cum_ratio(self, l: int) -> int:
        out = 1
        for r in self.ratios[:l]:
            out *= r
        return out

    def finest_covering_level(self, x: float, y: float = 0.0) -> int:
        """Finest level whose coverage contains the interpolation stencil."""
        for l in reversed(range(self.nlevels)):
            geom = self.geoms[l]
            fx = (x - self.domain.x_lo) / geom.dx - 0.5
            i = int(np.clip(np.floor(fx), 0, geom.nx - 2))
            if self.domain.dim == 1:
                if self.coverage[l][i] and self.coverage[l][i + 1]:
                    return l
            else:
                fy = (y - self.domain.y_lo) / geom.dy - 0.5
                j = int(np.clip(np.floor(fy), 0, geom.ny - 2))
                if (self.coverage[l][i, j] and self.coverage[l][i + 1, j]
                        and self.coverage[l][i, j + 1]
                        and self.coverage[l][i + 1, j + 1]):
                    return l
        return 0

    # ----- inter-level transfer ---------------------------------------------

    def _prolong_cells(self, l: int, cells: np.ndarray,
                       qp_full: np.ndarray) -> None:
        """Fill level-l cells (interior mask) from the ghosted parent array
        with limited-slope interpolation (exact for linear fields)."""
        if not cells.any():
            return
        r = self.ratios[l - 1]
        g = GHOST
        qc = self.q[l]
        hp = self.hbar[l - 1]
        hc = self.hbar[l]
        if self.domain.dim == 1:
            ic = np.flatnonzero(cells)
            ip = ic // r
            xi = (ic % r + 0.5) / r - 0.5
            P = qp_full[:, ip + g]
            dm = P - qp_full[:, ip + g - 1]
            dp = qp_full[:, ip + g + 1] - P
            val = P + xi * _minmod(dm, dp)
            dead = (hp[ip + g] == 0.0) | (hc[ic + g] == 0.0)
            val[:, dead] = 0.0
            qc[:, ic + g] = val
        else:
            ic, jc = np.nonzero(cells)
            ip, jp = ic // r, jc // r
            xi = (ic % r + 0.5) / r - 0.5
            yj = (jc % r + 0.5) / r - 0.5
            P = qp_full[:, ip + g, jp + g]
            dmx = P - qp_full[:, ip + g - 1, jp + g]
            dpx = qp_full[:, ip + g + 1, jp + g] - P
            dmy = P - qp_full[:, ip + g, jp + g - 1]
            dpy = qp_full[:, ip + g, jp + g + 1] - P
            val = P + xi * _minmod(dmx, dpx) + yj * _minmod(dmy, dpy)
            dead = (hp[ip + g, jp + g] == 0.0) | (hc[ic + g, jc + g] == 0.0)
            val[:, dead] = 0.0
            qc[:, ic + g, jc + g] = val

    def _restrict(self, lf: int) -> None:
        """Average the fine level onto the parent cells it fully covers."""
        lc = lf - 1
        r = self.ratios[lc]
        qf = self.q_interior(lf)
        qc = self.q_interior(lc)
        if self.domain.dim == 1:
            nxc = self.geoms[lc].nx
            avg = qf.reshape(qf.shape[0], nxc, r).mean(axis=2)
            pcov = self.coverage[lf].reshape(nxc, r).all(axis=1)
        else:
            nxc, nyc = self.geoms[lc].nx, self.geoms[lc].ny
            avg = qf.reshape(qf.shape[0], nxc, r, nyc, r).mean(axis=(2, 4))
            pcov = self.coverage[lf].reshape(nxc, r, nyc, r).all(axis=(1, 3))
        pcov = pcov & (self.hbar_interior(lc) > 0)
        qc[:, pcov] = avg[:, pcov]

    def _fill_from_parent(self, l: int, t: float, ctx) -> None:
        """Refresh uncovered cells near the coverage from the parent level,
        linearly interpolated in time across the parent step."""
        q_old, q_new, ta, tb = ctx
        theta = 0.0 if tb <= ta else min(max((t - ta) / (tb - ta), 0.0), 1.0)
        qp = (1.0 - theta) * q_old + theta * q_new
        needed = dilate(self.coverage[l], GHOST) & ~self.coverage[l]
        self._prolong_cells(l, needed, qp)

    # ----- regridding -------------------------------------------------------

    def _region_mask(self, l_child_spec: int, geom: LevelGeometry,
                     forced: bool) -> np.ndarray:
        """Cells of a level-(l_child_spec) candidate forced into (or barred
        from) existence by the configured regions.  Levels number from 1."""
        if self.domain.dim == 1:
            shape = (geom.nx,)
            X = geom.x_centers()
            Y = np.zeros_like(X)
        else:
            shape = (geom.nx, geom.ny)
            X, Y = np.meshgrid(geom.x_centers(), geom.y_centers(),
                               indexing="ij")
        out = np.zeros(shape, dtype=bool)
        for reg in self.regions:
            inside = ((X >= reg.x_min) & (X <= reg.x_max)
                      & (Y >= reg.y_min) & (Y <= reg.y_max))
            if forced and reg.min_level >= l_child_spec:
                out |= inside
            if not forced and reg.max_level < l_child_spec:
                out |= inside
        return out

    def regrid(self) -> None:
        """Rebuild levels 2..L from flags on the level below each."""
        layout = [(0, b) for b in self.boxes[0]]
        for l in range(self.nlevels - 1):
            geom = self.geoms[l]
            r = self.ratios[l]
            if self.flagger is not None and self.coverage[l].any():
                ff = self.flagger(self, l)
                raw = ff.mask & self.coverage[l] & (self.hbar_interior(l) > 0)
            else:
                ff = None
                raw = np.zeros_like(self.coverage[l])
            mask = dilate(raw, self.buffer_width)
            mask |= self._region_mask(l + 2, geom, forced=True)
            # proper nesting: stay buffer_width inside the parent coverage
            allowed = (erode(self.coverage[l], self.buffer_width,
                             boundary=True)
                       & ~self._region_mask(l + 2, geom, forced=False))
            mask &= allowed
            boxes_c = constrained_cluster(mask, allowed, self.efficiency)
            self.last_flags[l] = mask
            if ff is not None:
                self.flag_log.append((self.t, l + 1, ff))

            lf = l + 1
            new_cov = np.zeros_like(self.coverage[lf])
            boxes_f = []
            for b in boxes_c:
                if self.domain.dim == 1:
                    i0, i1 = b
                    bf = (i0 * r, i1 * r)
                    new_cov[bf[0]:bf[1]] = True
                else:
                    i0, i1, j0, j1 = b
                    bf = (i0 * r, i1 * r, j0 * r, j1 * r)
                    new_cov[bf[0]:bf[1], bf[2]:bf[3]] = True
                boxes_f.append(bf)

            fresh = new_cov & ~self.coverage[lf]
            qp = self.q[l].copy()
            fill_ghost(qp, self.domain)
            self._prolong_cells(lf, fresh, qp)
            self.q_interior(lf)[:, ~new_cov] = 0.0
            self.coverage[lf] = new_cov
            self.boxes[lf] = boxes_f
            layout.extend((lf, b) for b in boxes_f)
        self.layout_log.append((self.t, layout))
        self.check_invariants()

    def check_invariants(self) -> None:
        """Assert nesting, non-overlap, alignment, and clustering coverage."""
        for l in range(1, self.nlevels):
            r = self.ratios[l - 1]
            geom = self.geoms[l]
            paint = np.zeros_like(self.coverage[l], dtype=int)
            for b in self.boxes[l]:
                if self.domain.dim == 1:
                    i0, i1 = b
                    assert 0 <= i0 < i1 <= geom.nx, "box outside domain"
                    assert i0 % r == 0 and i1 % r == 0, "box not parent-aligned"
                    paint[i0:i1] += 1
                else:
                    i0, i1, j0, j1 = b
                    assert 0 <= i0 < i1 <= geom.nx and 0 <= j0 < j1 <= geom.ny
                    assert (i0 % r == 0 and i1 % r == 0
                            and j0 % r == 0 and j1 % r == 0)
                    paint[i0:i1, j0:j1] += 1
            assert np.max(paint, initial=0) <= 1, "overlapping patches"
            assert np.array_equal(paint > 0, self.coverage[l])
            # nesting with buffer margin inside the parent coverage
            if self.domain.dim == 1:
                proj = self.coverage[l].reshape(-1, r).any(axis=1)
            else:
                nxc, nyc = self.geoms[l - 1].nx, self.geoms[l - 1].ny
                proj = self.coverage[l].reshape(nxc, r, nyc, r).any(axis=(1, 3))
            ok = erode(self.coverage[l - 1], self.buffer_width, boundary=True)
            assert not np.any(proj & ~ok), "nesting violated"
            # clustering covers every flagged cell
            flags = self.last_flags[l - 1]
            if flags is not None:
                assert not np.any(flags & ~proj), "flagged cell uncovered"

    # ----- time advancement -------------------------------------------------

    def stable_coarse_dt(self) -> float:
        dt = np.inf
        for l in range(self.nlevels):
            dtl = stable_dt_from_depth(self.hbar[l], self.domain.dim,
                                       self.geoms[l].dx, self.geoms[l].dy,
                                       self.cfg)
            dt = min(dt, dtl * self.cum_ratio(l))
        return dt

    def _step_level_once(self, l: int, dt: float) -> None:
        q = self.q[l]
        qold = q.copy()
        g = GHOST
        geom = self.geoms[l]
        for b in self.boxes[l]:
            if self.domain.dim == 1:
                i0, i1 = b
                win = (slice(None), slice(i0, i1 + 2 * g))
                ncells = i1 - i0
            else:
                i0, i1, j0, j1 = b
                win = (slice(None), slice(i0, i1 + 2 * g),
                       slice(j0, j1 + 2 * g))
                ncells = (i1 - i0) * (j1 - j0)
            qw = qold[win].copy()
            hw = self.hbar[l][win[1:]]
            cfl = _step_arrays(qw, hw, self.domain.dim, geom.dx, geom.dy,
                               dt, self.kind, self.cfg)
            if cfl > self.cfg.cfl_max * (1 + 1e-12):
                raise CFLViolation(f"CFL {cfl:.3f} on level {l + 1}")
            inner = tuple(slice(s.start + g, s.stop - g) for s in win[1:])
            q[(slice(None),) + inner] = qw[(slice(None),)
                                           + (slice(g, -g),) * self.domain.dim]
            self.cell_steps[l] += ncells

    def _advance_level(self, l: int, t0: float, dt: float, ctx,
                       gauge_map=None) -> None:
        if ctx is not None:
            self._fill_from_parent(l, t0, ctx)
        fill_ghost(self.q[l], self.domain)
        q_before = self.q[l].copy()
        self._step_level_once(l, dt)
        if l + 1 < self.nlevels and self.boxes[l + 1]:
            r = self.ratios[l]
            q_after = self.q[l].copy()
            fill_ghost(q_after, self.domain)
            child_ctx = (q_before, q_after, t0, t0 + dt)
            for k in range(r):
                self._advance_level(l + 1, t0 + k * dt / r, dt / r,
                                    child_ctx, gauge_map)
            self._restrict(l + 1)
        if gauge_map:
            for gauge in gauge_map.get(l, ()):
                record_gauges(self.q[l], self.geoms[l], [gauge], t0 + dt)

    def advance_to(self, t_end: float, gauges=()) -> None:
        """Take coarse steps to t_end with periodic regridding and gauges."""
        dt_cap = np.inf
        while self.t < t_end - 1e-9:
            if self.coarse_steps % self.regrid_interval == 0:
                self.regrid()
            gauge_map: dict[int, list] = {}
            for gauge in gauges:
                lev = self.finest_covering_level(gauge.x, gauge.y)
                gauge_map.setdefault(lev, []).append(gauge)
            dt = min(self.stable_coarse_dt(), dt_cap, t_end - self.t)
            backup = [q.copy() for q in self.q]
            try:
                self._advance_level(0, self.t, dt, None, gauge_map)
            except CFLViolation:
                for q, b in zip(self.q, backup):
                    q[...] = b
                dt_cap = dt * 0.5
                continue
            self.t += dt
            self.coarse_steps += 1
