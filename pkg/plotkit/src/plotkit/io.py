"""Parsers for the solver's ASCII output formats.

These duplicate the format knowledge on purpose: this package talks to the
solver only through its published files, never through its internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FormatError(Exception):
    """Raised when an input file does not match its documented format."""


@dataclass(frozen=True)
class XtData:
    """One space-time history: rows are output times, columns are cells."""

    times: np.ndarray
    x_lo: float
    x_hi: float
    values: np.ndarray  # shape (ntime, nx)

    @property
    def nx(self) -> int:
        return self.values.shape[1]


def read_xt(path) -> XtData:
    """Read an x-t field or mask file (header lines start with '#')."""
    times, rows = [], []
    x_lo = x_hi = None
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            if line.startswith("#"):
                toks = line.split()
                if "x_lo" in toks:
                    x_lo = float(toks[toks.index("x_lo") + 1])
                    x_hi = float(toks[toks.index("x_hi") + 1])
                continue
            vals = line.split()
            if not vals:
                continue
            try:
                times.append(float(vals[0]))
                rows.append([float(v) for v in vals[1:]])
            except ValueError as e:
                raise FormatError(f"{path}:{ln}: {e}")
    if not rows or x_lo is None:
        raise FormatError(f"{path}: missing header or data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: ragged rows (widths {sorted(widths)})")
    return XtData(np.array(times), x_lo, x_hi, np.array(rows))


@dataclass(frozen=True)
class GaugeSeries:
    times: np.ndarray
    eta: np.ndarray
    label: str


def read_gauge(path, label: str | None = None) -> GaugeSeries:
    """Read a gauge CSV ('time,eta,mu[,gamma]' header plus data rows)."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise FormatError(f"{path}: empty gauge series")
    header = lines[0].split(",")
    if header[:2] != ["time", "eta"]:
        raise FormatError(f"{path}: unexpected header {lines[0]!r}")
    try:
        data = np.array([[float(v) for v in ln.split(",")]
                         for ln in lines[1:]])
    except ValueError as e:
        raise FormatError(f"{path}: {e}")
    return GaugeSeries(data[:, 0], data[:, 1], label or str(path))


@dataclass(frozen=True)
class PatchBox:
    time: float
    level: int
    box: tuple  # (i0, i1) or (i0, i1, j0, j1), cell indices at that level


def read_patch_log(path) -> list[PatchBox]:
    """Read the patch layout log: 'time level i0 i1 [j0 j1]' per line."""
    out = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            if line.startswith("#") or not line.strip():
                continue
            toks = line.split()
            if len(toks) not in (4, 6):
                raise FormatError(f"{path}:{ln}: expected 4 or 6 fields")
            try:
                t = float(toks[0])
                level = int(toks[1])
                box = tuple(int(v) for v in toks[2:])
            except ValueError as e:
                raise FormatError(f"{path}:{ln}: {e}")
            if level < 1:
                raise FormatError(f"{path}:{ln}: unknown level id {level}")
            out.append(PatchBox(t, level, box))
    return out


def read_flag_map(path) -> np.ndarray:
    """Read a 0/1 flag map grid (one '# ...' header line, then rows)."""
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            if line.startswith("#") or not line.strip():
                continue
            try:
                rows.append([int(v) for v in line.split()])
            except ValueError as e:
                raise FormatError(f"{path}:{ln}: {e}")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows)
