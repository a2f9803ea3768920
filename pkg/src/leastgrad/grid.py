"""Cell-centred rectangular grids, staggered forward differences and boundary faces.

Fields are plain numpy arrays indexed ``[i, j]`` with ``i`` along x and ``j``
along y:

* scalar fields have shape ``(nx, ny)``;
* vector fields have shape ``(2, nx, ny)``; component ``k`` of cell ``(i, j)``
  lives on the face shared with the ``+e_k`` neighbour.

Only cells with ``mask == True`` belong to the domain.  Faces between two
domain cells are interior faces; faces between a domain cell and an exterior
cell (or the edge of the array) are boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator

import numpy as np
from scipy import ndimage

# Face directions in enumeration order: -x, +x, -y, +y.
DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class GridError(ValueError):
    """Raised for grids that cannot represent a domain."""


@dataclass(frozen=True)
class BoundaryFace:
    cell: tuple[int, int]
    normal: tuple[int, int]
    measure: float


@dataclass(frozen=True, eq=False)
class BoundaryFaces:
    """Vectorised list of boundary faces.

    ``i``, ``j`` index the owning (interior) cell, ``normal`` is the outward
    unit normal (integer, axis aligned) and every face has measure ``h``.
    """

    i: np.ndarray
    j: np.ndarray
    normal: np.ndarray
    h: float

    def __len__(self) -> int:
        return int(self.i.size)

    def __iter__(self) -> Iterator[BoundaryFace]:
        for k in range(len(self)):
            yield BoundaryFace(
                (int(self.i[k]), int(self.j[k])),
                (int(self.normal[k, 0]), int(self.normal[k, 1])),
                self.h,
            )

    def __getitem__(self, k: int) -> BoundaryFace:
        return BoundaryFace(
            (int(self.i[k]), int(self.j[k])),
            (int(self.normal[k, 0]), int(self.normal[k, 1])),
            self.h,
        )

    @property
    def measure(self) -> np.ndarray:
        return np.full(len(self), self.h)

    def centers(self, grid: "Grid") -> np.ndarray:
        """Face midpoints, shape ``(nfaces, 2)``."""
        x = grid.origin[0] + (self.i + 0.5 + 0.5 * self.normal[:, 0]) * grid.h
        y = grid.origin[1] + (self.j + 0.5 + 0.5 * self.normal[:, 1]) * grid.h
        return np.stack([x, y], axis=1)

    @property
    def axis(self) -> np.ndarray:
        """0 for faces normal to x, 1 for faces normal to y."""
        return (self.normal[:, 1] != 0).astype(int)


@dataclass(frozen=True, eq=False)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    mask: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise GridError(f"need nx, ny >= 2, got {self.nx}x{self.ny}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise GridError(f"spacing must be positive, got {self.h}")
        if self.mask is None:
            mask = np.ones((self.nx, self.ny), dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.nx, self.ny):
                raise GridError(f"mask shape {mask.shape} != {(self.nx, self.ny)}")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if not mask.any():
            raise GridError("mask has no interior cell")
        _, ncomp = ndimage.label(mask)
        if ncomp != 1:
            raise GridError(f"interior cells must be edge-connected, found {ncomp} components")

    # -- constructors -----------------------------------------------------

    @classmethod
    def box(cls, nx: int, ny: int | None = None, h: float | None = None,
            origin: tuple[float, float] = (0.0, 0.0)) -> "Grid":
        """Full-mask grid; ``h`` defaults to ``1/nx`` (unit width)."""
        ny = nx if ny is None else ny
        h = 1.0 / nx if h is None else h
        return cls(nx, ny, h, origin)

    @classmethod
    def from_levelset(cls, nx: int, ny: int, h: float, origin: tuple[float, float],
                      inside: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Grid":
        """Mask = cells whose centre satisfies ``inside(x, y) > 0``."""
        tmp = cls(nx, ny, h, origin)
        x, y = tmp.centers
        mask = np.asarray(inside(x, y)) > 0
        return cls(nx, ny, h, origin, mask)

    @classmethod
    def disk(cls, n: int, radius: float, center: tuple[float, float] = (0.5, 0.5),
             width: float = 1.0, origin: tuple[float, float] = (0.0, 0.0)) -> "Grid":
        cx, cy = center
        return cls.from_levelset(
            n, n, width / n, origin,
            lambda x, y: radius**2 - (x - cx) ** 2 - (y - cy) ** 2,
        )

    @classmethod
    def annulus(cls, n: int, r_in: float = 1.0, r_out: float = 2.0) -> "Grid":
        """Annulus centred at the origin on ``[-r_out, r_out]^2`` with ``n`` cells per side."""
        h = 2.0 * r_out / n

        def inside(x, y):
            r = np.hypot(x, y)
            return np.minimum(r - r_in, r_out - r)

        return cls.from_levelset(n, n, h, (-r_out, -r_out), inside)

    def with_mask(self, mask: np.ndarray) -> "Grid":
        return Grid(self.nx, self.ny, self.h, self.origin, mask)

    # -- geometry ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates ``(x, y)``, each of shape ``(nx, ny)``."""
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def face_mask(self) -> np.ndarray:
        """Boolean ``(2, nx, ny)``: True where the +e_k face is interior."""
        m = self.mask
        fm = np.zeros((2, self.nx, self.ny), dtype=bool)
        fm[0, :-1, :] = m[:-1, :] & m[1:, :]
        fm[1, :, :-1] = m[:, :-1] & m[:, 1:]
        fm.setflags(write=False)
        return fm

    @cached_property
    def _boundary(self) -> BoundaryFaces:
        padded = np.pad(self.mask, 1, constant_values=False)
        ii, jj = np.nonzero(self.mask)  # row-major order
        rows = []
        for d, (di, dj) in enumerate(DIRECTIONS):
            outside = ~padded[ii + 1 + di, jj + 1 + dj]
            rows.append(np.where(outside, d, -1))
        dirs = np.stack(rows, axis=1)  # (ncells, 4), row-major then direction
        cell_idx, slot = np.nonzero(dirs >= 0)
        d = dirs[cell_idx, slot]
        normal = np.asarray(DIRECTIONS, dtype=int)[d]
        return BoundaryFaces(ii[cell_idx], jj[cell_idx], normal, self.h)

    def boundary_faces(self) -> BoundaryFaces:
        return self._boundary

    def cell_area(self) -> float:
        return self.h * self.h

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete L2 pairing ``h^2 sum u v`` (scalar or vector fields)."""
        return float(self.h * self.h * np.sum(u * v))

    def masked(self, u: np.ndarray) -> np.ndarray:
        return np.where(self.mask, u, 0.0)


def gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Forward differences on interior faces, zero on faces that leave the domain."""
    u = np.asarray(u, dtype=float)
    g = np.zeros((2,) + u.shape)
    g[0, :-1, :] = u[1:, :] - u[:-1, :]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    g *= grid.face_mask
    g /= grid.h
    return g


def divergence(grid: Grid, p: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient` for the ``h^2``-weighted pairings."""
    q = np.where(grid.face_mask, p, 0.0)
    d = np.zeros(q.shape[1:])
    d += q[0]
    d[1:, :] -= q[0, :-1, :]
    d += q[1]
    d[:, 1:] -= q[1, :, :-1]
    return d / grid.h
