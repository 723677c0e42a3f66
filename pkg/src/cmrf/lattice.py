"""Equispaced lattices on the unit interval / unit square.

All fields are flat float64 vectors. In 2D the storage order is row-major,
so pixel ``(i, j)`` lives at linear index ``i * ny + j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Lattice:
    """Node counts per axis; the domain is always ``[0, 1]`` per axis."""

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"lattice must be 1D or 2D, got shape {shape}")
        if any(n < 2 for n in shape):
            raise ValueError(f"need at least 2 nodes per axis, got {shape}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def line(cls, n: int) -> "Lattice":
        return cls((n,))

    @classmethod
    def grid(cls, nx: int, ny: int | None = None) -> "Lattice":
        return cls((nx, nx if ny is None else ny))

    @property
    def dims(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / (n - 1) for n in self.shape)

    @property
    def h(self) -> float:
        """Node spacing of the first axis (all axes for square lattices)."""
        return self.spacing[0]

    def axis_coords(self, axis: int = 0) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.shape[axis])

    def coords(self) -> np.ndarray:
        """Physical coordinates, shape ``(size,)`` in 1D or ``(size, 2)`` in 2D."""
        if self.dims == 1:
            return self.axis_coords(0)
        x, y = np.meshgrid(self.axis_coords(0), self.axis_coords(1), indexing="ij")
        return np.column_stack([x.ravel(), y.ravel()])

    def index(self, i: int, j: int | None = None) -> int:
        if self.dims == 1:
            if not 0 <= i < self.shape[0]:
                raise IndexError(f"node {i} outside lattice {self.shape}")
            return int(i)
        nx, ny = self.shape
        if not (0 <= i < nx and 0 <= j < ny):
            raise IndexError(f"pixel ({i}, {j}) outside lattice {self.shape}")
        return int(i * ny + j)

    def unravel(self, k: int) -> tuple[int, ...]:
        if not 0 <= k < self.size:
            raise IndexError(f"linear index {k} outside lattice of size {self.size}")
        if self.dims == 1:
            return (int(k),)
        return divmod(int(k), self.shape[1])

    def is_boundary(self, i: int, j: int | None = None) -> bool:
        if self.dims == 1:
            return i == 0 or i == self.shape[0] - 1
        nx, ny = self.shape
        return i in (0, nx - 1) or j in (0, ny - 1)

    def boundary_indices(self) -> np.ndarray:
        """Sorted linear indices of boundary nodes (the two endpoints in 1D)."""
        if self.dims == 1:
            return np.array([0, self.shape[0] - 1], dtype=np.int64)
        nx, ny = self.shape
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return np.flatnonzero(mask.ravel()).astype(np.int64)

    def interior_indices(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.boundary_indices()] = False
        return np.flatnonzero(mask).astype(np.int64)

    def nearest_interior_neighbor(self, i: int, j: int | None = None) -> tuple[int, ...]:
        """Closest interior node of a boundary node.

        Corners map to the diagonal neighbour, edge nodes to the inward normal
        neighbour.
        """
        if self.dims == 1:
            n = self.shape[0]
            if n < 3:
                raise ValueError("a 1D lattice needs >= 3 nodes to have an interior")
            if i == 0:
                return (1,)
            if i == n - 1:
                return (n - 2,)
            raise ValueError(f"node {i} is interior")
        nx, ny = self.shape
        if nx < 3 or ny < 3:
            raise ValueError(f"lattice {self.shape} has no interior nodes")
        if not (0 <= i < nx and 0 <= j < ny):
            raise IndexError(f"pixel ({i}, {j}) outside lattice {self.shape}")
        if not self.is_boundary(i, j):
            raise ValueError(f"pixel ({i}, {j}) is interior")
        ii = 1 if i == 0 else nx - 2 if i == nx - 1 else i
        jj = 1 if j == 0 else ny - 2 if j == ny - 1 else j
        return (ii, jj)

    def nearest_interior_map(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary linear indices and their nearest interior linear indices."""
        b = self.boundary_indices()
        nn = np.array([self.index(*self.nearest_interior_neighbor(*self.unravel(k))) for k in b],
                      dtype=np.int64)
        return b, nn

    def as_grid(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return cls(tuple(d["shape"]))


def check_field(lattice: Lattice, u) -> np.ndarray:
    """Return ``u`` as a float64 vector, validating length and finiteness."""
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.shape[0] != lattice.size:
        raise ValueError(f"field has {u.shape[0]} values, lattice needs {lattice.size}")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u
