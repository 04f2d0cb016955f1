"""Domains, structured patches, and cell-centered state fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

GHOST = 2  # stencil width of the second-order wave-propagation scheme


class BoundaryKind(Enum):
    WALL = "wall"
    EXTRAPOLATION = "extrapolation"


@dataclass(frozen=True)
class Domain:
    """Rectangular computational domain (1D interval when dim == 1)."""

    dim: int
    x_lo: float
    x_hi: float
    y_lo: float = 0.0
    y_hi: float = 0.0
    bc_x_lo: BoundaryKind = BoundaryKind.WALL
    bc_x_hi: BoundaryKind = BoundaryKind.WALL
    bc_y_lo: BoundaryKind = BoundaryKind.WALL
    bc_y_hi: BoundaryKind = BoundaryKind.WALL

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.x_hi <= self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if self.dim == 2 and self.y_hi <= self.y_lo:
            raise ValueError("y_hi must exceed y_lo")

    @property
    def ncomp(self) -> int:
        return 2 if self.dim == 1 else 3


@dataclass
class StateField:
    """Cell-centered unknowns: q[0] = eta, q[1] = mu, and q[2] = gamma in 2D.

    Arrays include a ghost frame of width GHOST on every side.
    """

    q: np.ndarray

    @property
    def ncomp(self) -> int:
        return self.q.shape[0]

    def interior(self) -> np.ndarray:
        sl = (slice(None),) + (slice(GHOST, -GHOST),) * (self.q.ndim - 1)
        return self.q[sl]

    def copy(self) -> "StateField":
        return StateField(self.q.copy())


@dataclass
class Patch:
    """Uniform rectangular patch at one refinement level.

    ``box`` holds global integer cell coordinates at this level:
    (i0, i1) in 1D or (i0, i1, j0, j1) in 2D, upper ends exclusive.
    ``state.q`` and ``hbar`` carry the GHOST-cell frame.
    """

    level: int
    box: tuple
    dx: float
    dy: float
    state: StateField
    hbar: np.ndarray

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if self.state.q.shape[1:] != self.hbar.shape:
            raise ValueError("state and hbar shapes differ")
        if np.any(self.hbar < 0):
            raise ValueError("negative mean depth")

    @property
    def dim(self) -> int:
        return self.state.q.ndim - 1

    @property
    def dry(self) -> np.ndarray:
        return self.hbar == 0.0


@dataclass(frozen=True)
class LevelGeometry:
    """Cell layout of one refinement level covering the whole domain."""

    domain: Domain
    nx: int
    ny: int = 1

    @property
    def dx(self) -> float:
        return (self.domain.x_hi - self.domain.x_lo) / self.nx

    @property
    def dy(self) -> float:
        if self.domain.dim == 1:
            return self.dx
        return (self.domain.y_hi - self.domain.y_lo) / self.ny

    def x_centers(self) -> np.ndarray:
        return self.domain.x_lo + self.dx * (np.arange(self.nx) + 0.5)

    def y_centers(self) -> np.ndarray:
        return self.domain.y_lo + self.dy * (np.arange(self.ny) + 0.5)

    def x_edges(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        i1 = self.nx if i1 is None else i1
        return self.domain.x_lo + self.dx * np.arange(i0, i1 + 1)

    def y_edges(self, j0: int = 0, j1: int | None = None) -> np.ndarray:
        j1 = self.ny if j1 is None else j1
        return self.domain.y_lo + self.dy * np.arange(j0, j1 + 1)

    def refined(self, ratio: int) -> "LevelGeometry":
        return LevelGeometry(self.domain, self.nx * ratio,
                             self.ny * ratio if self.domain.dim == 2 else 1)
