"""Box coordinate conversion between normalized corners and grid-cell indices.

Boxes are stored either as normalized corner coordinates (fractions of
image width/height) or as a pair of grid-cell indices over an n x m grid,
with cells numbered row-major from the top-left.
"""
from __future__ import annotations

from dataclasses import dataclass


class BoxDomainError(ValueError):
    """Raised for boxes or indices that violate their domain constraints."""


@dataclass(frozen=True)
class GridSpec:
    """An n-column by m-row discretization grid."""

    n: int = 20
    m: int = 20

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise BoxDomainError(f"grid must be at least 1x1, got {self.n}x{self.m}")

    @property
    def cells(self) -> int:
        return self.n * self.m


@dataclass(frozen=True)
class NormBox:
    """Axis-aligned box with corners as fractions of image size."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (0.0 <= self.x1 <= self.x2 <= 1.0):
            raise BoxDomainError(f"require 0 <= x1 <= x2 <= 1, got x1={self.x1}, x2={self.x2}")
        if not (0.0 <= self.y1 <= self.y2 <= 1.0):
            raise BoxDomainError(f"require 0 <= y1 <= y2 <= 1, got y1={self.y1}, y2={self.y2}")

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class GridBox:
    """Top-left / bottom-right cell index pair on a GridSpec."""

    idx_l: int
    idx_r: int

    def validate(self, grid: GridSpec) -> None:
        for idx in (self.idx_l, self.idx_r):
            if not (0 <= idx < grid.cells):
                raise BoxDomainError(f"cell index {idx} out of range for {grid.n}x{grid.m} grid")
        rl, cl = divmod(self.idx_l, grid.n)
        rr, cr = divmod(self.idx_r, grid.n)
        if rl > rr or cl > cr:
            raise BoxDomainError(
                f"corner cells out of order: ({rl},{cl}) vs ({rr},{cr})"
            )


def _cell_of(x: float, y: float, grid: GridSpec) -> int:
    col = min(max(int(x * grid.n), 0), grid.n - 1)
    row = min(max(int(y * grid.m), 0), grid.m - 1)
    return row * grid.n + col


def discretize(box: NormBox, grid: GridSpec = GridSpec()) -> GridBox:
    """Map a normalized box to its grid-index pair.

    Cell assignment is floor of coordinate * grid size, clamped into range
    so x=1.0 / y=1.0 land in the last cell.
    """
    gb = GridBox(
        idx_l=_cell_of(box.x1, box.y1, grid),
        idx_r=_cell_of(box.x2, box.y2, grid),
    )
    gb.validate(grid)
    return gb


def remap(gb: GridBox, grid: GridSpec = GridSpec()) -> NormBox:
    """Map a grid-index pair back to normalized corners at cell centers."""
    gb.validate(grid)
    x1 = (gb.idx_l % grid.n + 0.5) / grid.n
    y1 = (gb.idx_l // grid.n + 0.5) / grid.m
    x2 = (gb.idx_r % grid.n + 0.5) / grid.n
    y2 = (gb.idx_r // grid.n + 0.5) / grid.m
    return NormBox(x1, y1, x2, y2)
