"""Bathymetry grids: ASCII raster I/O, bilinear evaluation, exact cell averaging.

The bottom elevation B is stored on a uniform grid of nodes and interpreted as
the piecewise-bilinear interpolant through those nodes (piecewise-linear in 1D).
Cell averages are exact integrals of that interpolant, so they are consistent
between refinement levels: a parent cell average equals the mean of its
children's averages whenever the children split at the same coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BathymetryError(Exception):
    """Raised for malformed raster files or out-of-coverage evaluation."""


@dataclass(frozen=True)
class Bathymetry:
    """Gridded bottom elevation (meters, negative below sea level).

    ``values[j, i]`` is the elevation at node ``(x0 + i*dx, y0 + j*dy)``,
    stored south row first.  A grid with a single row is one-dimensional:
    the y coordinate is ignored everywhere.
    """

    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray  # shape (nrows, ncols)
    nodata: float = -99999.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise BathymetryError(f"bad grid shape {v.shape}")
        if self.dx <= 0 or (v.shape[0] > 1 and self.dy <= 0):
            raise BathymetryError("cell size must be positive")
        finite = v[v != self.nodata]
        if not np.all(np.isfinite(finite)):
            raise BathymetryError("non-finite bathymetry value")

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def is_1d(self) -> bool:
        return self.nrows == 1

    @property
    def x_max(self) -> float:
        return self.x0 + (self.ncols - 1) * self.dx

    @property
    def y_max(self) -> float:
        return self.y0 + (self.nrows - 1) * self.dy

    def _check_coverage(self, xlo, xhi, ylo=None, yhi=None):
        eps = 1e-9 * max(self.dx, 1.0)
        if xlo < self.x0 - eps or xhi > self.x_max + eps:
            raise BathymetryError(
                f"x range [{xlo}, {xhi}] outside coverage [{self.x0}, {self.x_max}]")
        if not self.is_1d and ylo is not None:
            epsy = 1e-9 * max(self.dy, 1.0)
            if ylo < self.y0 - epsy or yhi > self.y_max + epsy:
                raise BathymetryError(
                    f"y range [{ylo}, {yhi}] outside coverage [{self.y0}, {self.y_max}]")

    def evaluate(self, x, y=0.0):
        """Piecewise-(bi)linear point value.  Errors outside coverage or on nodata."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._check_coverage(float(np.min(x)), float(np.max(x)),
                             float(np.min(y)), float(np.max(y)))
        fx = np.clip((x - self.x0) / self.dx, 0.0, self.ncols - 1 - 1e-12)
        i = fx.astype(int)
        tx = fx - i
        if self.is_1d:
            v0 = self.values[0, i]
            v1 = self.values[0, i + 1]
            if np.any(v0 == self.nodata) or np.any(v1 == self.nodata):
                raise BathymetryError("nodata value inside evaluated region")
            return v0 * (1 - tx) + v1 * tx
        fy = np.clip((y - self.y0) / self.dy, 0.0, self.nrows - 1 - 1e-12)
        j = fy.astype(int)
        ty = fy - j
        corners = (self.values[j, i], self.values[j, i + 1],
                   self.values[j + 1, i], self.values[j + 1, i + 1])
        if any(np.any(cv == self.nodata) for cv in corners):
            raise BathymetryError("nodata value inside evaluated region")
        c00, c10, c01, c11 = corners
        return (c00 * (1 - tx) * (1 - ty) + c10 * tx * (1 - ty)
                + c01 * (1 - tx) * ty + c11 * tx * ty)

    def _hat_weights(self, edges: np.ndarray, axis_x: bool) -> np.ndarray:
        """Integrals of each nodal hat function over the intervals given by edges.

        Returns W with shape (len(edges)-1, nnodes); row k gives the exact
        integral of the piecewise-linear basis over [edges[k], edges[k+1]],
        so that W @ nodal_values = per-interval integrals of the interpolant.
        """
        if axis_x:
            n, h, lo = self.ncols, self.dx, self.x0
        else:
            n, h, lo = self.nrows, self.dy, self.y0
        nodes = lo + h * np.arange(n)
        ncell = len(edges) - 1
        W = np.zeros((ncell, n))
        for k in range(ncell):
            a, b = edges[k], edges[k + 1]
            # split [a, b] at interior node coordinates
            pts = [a] + [p for p in nodes if a < p < b] + [b]
            for s in range(len(pts) - 1):
                pa, pb = pts[s], pts[s + 1]
                if pb <= pa:
                    continue
                mid = 0.5 * (pa + pb)
                iseg = min(int((mid - lo) / h), n - 2)
                t_a = (pa - nodes[iseg]) / h
                t_b = (pb - nodes[iseg]) / h
                seg = pb - pa
                # trapezoid is exact for the linear basis on this segment
                W[k, iseg] += seg * 0.5 * ((1 - t_a) + (1 - t_b))
                W[k, iseg + 1] += seg * 0.5 * (t_a + t_b)
        return W


def cell_average_bathymetry(b: Bathymetry, x_edges, y_edges=None) -> np.ndarray:
    """Exact cell averages of the bilinear interpolant on a rectangular grid.

    ``x_edges`` (and ``y_edges`` in 2D) are the cell edge coordinates.  Returns
    an array of shape (nx,) in 1D or (nx, ny) in 2D.
    """
    x_edges = np.asarray(x_edges, dtype=float)
    if b.is_1d or y_edges is None:
        b._check_coverage(x_edges[0], x_edges[-1])
        if np.any(b.values == b.nodata):
            raise BathymetryError("nodata value inside averaged region")
        Wx = b._hat_weights(x_edges, axis_x=True)
        widths = np.diff(x_edges)
        if b.is_1d:
            return (Wx @ b.values[0]) / widths
        # 2D data averaged over the full y coverage is not meaningful; require 1D
        raise BathymetryError("y_edges required for 2D bathymetry")
    y_edges = np.asarray(y_edges, dtype=float)
    b._check_coverage(x_edges[0], x_edges[-1], y_edges[0], y_edges[-1])
    if np.any(b.values == b.nodata):
        raise BathymetryError("nodata value inside averaged region")
    Wx = b._hat_weights(x_edges, axis_x=True)
    Wy = b._hat_weights(y_edges, axis_x=False)
    area = np.outer(np.diff(x_edges), np.diff(y_edges))
    # values indexed [j(y), i(x)] -> integral[i, k] = Wx values^T Wy^T
    return (Wx @ b.values.T @ Wy.T) / area


def depth_profile(b_avg: np.ndarray, mean_surface: float = 0.0) -> np.ndarray:
    """Mean depth field h = max(mean_surface - B, 0); zero entries are dry."""
    return np.maximum(mean_surface - np.asarray(b_avg, dtype=float), 0.0)


_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                "nodata_value")


def load_bathymetry(path) -> Bathymetry:
    """Parse an ASCII raster file (north row first) into a Bathymetry."""
    with open(path) as f:
        lines = f.read().splitlines()
    header = {}
    idx = 0
    for idx, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in _HEADER_KEYS:
            key = parts[0].lower()
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise BathymetryError(
                    f"{path}:{idx + 1}: non-numeric header value {parts[1]!r}")
        else:
            break
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise BathymetryError(f"{path}: missing header fields {missing}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    rows = []
    body = lines[idx:]
    if len([ln for ln in body if ln.strip()]) != nrows:
        raise BathymetryError(
            f"{path}: expected {nrows} data rows, found "
            f"{len([ln for ln in body if ln.strip()])}")
    for r, line in enumerate(body):
        if not line.strip():
            continue
        toks = line.split()
        if len(toks) != ncols:
            raise BathymetryError(
                f"{path}:{idx + r + 1}: row has {len(toks)} values, expected {ncols}")
        try:
            rows.append([float(t) for t in toks])
        except ValueError as e:
            raise BathymetryError(f"{path}:{idx + r + 1}: {e}")
    values = np.array(rows[::-1])  # normalize to south row first
    cs = header["cellsize"]
    return Bathymetry(
        x0=header["xllcorner"] + 0.5 * cs,
        y0=header["yllcorner"] + 0.5 * cs,
        dx=cs, dy=cs, values=values, nodata=header["nodata_value"])


def write_bathymetry(b: Bathymetry, path) -> None:
    """Inverse of load_bathymetry; finite values round-trip bit-identically."""
    if not b.is_1d and b.dy != b.dx:
        raise BathymetryError("raster format requires square cells")
    with open(path, "w") as f:
        f.write(f"ncols {b.ncols}\n")
        f.write(f"nrows {b.nrows}\n")
        f.write(f"xllcorner {b.x0 - 0.5 * b.dx!r}\n")
        f.write(f"yllcorner {b.y0 - 0.5 * b.dx!r}\n")
        f.write(f"cellsize {b.dx!r}\n")
        f.write(f"nodata_value {b.nodata!r}\n")
        for row in b.values[::-1]:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def step_shelf_1d(shelf_depth: float = 200.0, ocean_depth: float = 4000.0,
                  shelf_edge: float = 50e3, x_lo: float = -10e3,
                  x_hi: float = 410e3, spacing: float = 500.0) -> Bathymetry:
    """Piecewise-constant step: B = -shelf_depth inshore of shelf_edge,
    -ocean_depth beyond, smeared over one node spacing."""
    n = int(round((x_hi - x_lo) / spacing)) + 1
    x = x_lo + spacing * np.arange(n)
    vals = np.where(x < shelf_edge, -shelf_depth, -ocean_depth)
    return Bathymetry(x0=x_lo, y0=0.0, dx=spacing, dy=spacing,
                      values=vals[None, :].astype(float))


def radial_shelf_2d(center=(60e3, 200e3), radius: float = 80e3,
                    shelf_depth: float = 200.0, ocean_depth: float = 4000.0,
                    x_lo: float = -10e3, x_hi: float = 410e3,
                    y_lo: float = -10e3, y_hi: float = 410e3,
                    spacing: float = 2000.0) -> Bathymetry:
    """Circular shallow shelf around ``center``, deep ocean elsewhere."""
    nx = int(round((x_hi - x_lo) / spacing)) + 1
    ny = int(round((y_hi - y_lo) / spacing)) + 1
    x = x_lo + spacing * np.arange(nx)
    y = y_lo + spacing * np.arange(ny)
    X, Y = np.meshgrid(x, y)  # shape (ny, nx)
    r = np.hypot(X - center[0], Y - center[1])
    vals = np.where(r <= radius, -shelf_depth, -ocean_depth)
    return Bathymetry(x0=x_lo, y0=y_lo, dx=spacing, dy=spacing,
                      values=vals.astype(float))
