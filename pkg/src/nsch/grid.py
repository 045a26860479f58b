"""Staggered (MAC) grid on an axis-aligned box and its discrete operators.

Scalars live at cell centres; the k-th velocity component lives on the faces
normal to axis k. Face arrays include the boundary faces, which are pinned to
zero for the no-slip condition. Cell arrays use ``ij`` ordering, so the first
array axis is x.

The operators are built so that, for a cell field ``f`` and a face field ``v``
with zero boundary values,

    sum(div(v) * f) * cell_volume == -sum(v * grad(f)) * cell_volume

holds to round-off (summation by parts). ``laplacian_neumann`` is literally
``divergence(gradient(f))``, which makes its row and column sums vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

NEUMANN_ZERO = "neumann_zero"
NO_BC = "none"
DIRICHLET_ZERO = "dirichlet_zero"


class GridMismatchError(ValueError):
    """Raised when fields defined on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid in one or two dimensions."""

    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(n) for n in np.atleast_1d(self.cells))
        lengths = tuple(float(x) for x in np.atleast_1d(self.lengths))
        if len(cells) not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {len(cells)}")
        if len(lengths) != len(cells):
            raise ValueError("cells and lengths must have one entry per axis")
        if any(n < 2 for n in cells):
            raise ValueError(f"need at least 2 cells per axis, got {cells}")
        if any(not np.isfinite(x) or x <= 0 for x in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)

    def face_size(self, axis: int) -> int:
        return int(np.prod(self.face_shape(axis)))

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of cell-centre coordinates (``ij`` indexing)."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_centers(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis``, boundary faces included."""
        axes = []
        for k, (n, h) in enumerate(zip(self.cells, self.spacing)):
            if k == axis:
                axes.append(np.arange(n + 1) * h)
            else:
                axes.append((np.arange(n) + 0.5) * h)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def interior_face_mask(self, axis: int) -> np.ndarray:
        mask = np.ones(self.face_shape(axis), dtype=bool)
        idx = [slice(None)] * self.dim
        idx[axis] = 0
        mask[tuple(idx)] = False
        idx[axis] = -1
        mask[tuple(idx)] = False
        return mask

    # ------------------------------------------------------------------
    # sparse operators (flattened, C order)

    @cached_property
    def _gradient_blocks(self) -> tuple[sp.csr_matrix, ...]:
        blocks = []
        for axis in range(self.dim):
            n = self.cells[axis]
            h = self.spacing[axis]
            # (n+1) x n difference with zero boundary rows (mirror ghost cells)
            d = sp.lil_matrix((n + 1, n))
            for i in range(1, n):
                d[i, i - 1] = -1.0 / h
                d[i, i] = 1.0 / h
            blocks.append(_embed(d.tocsr(), axis, self.cells))
        return tuple(blocks)

    @cached_property
    def _divergence_blocks(self) -> tuple[sp.csr_matrix, ...]:
        blocks = []
        for axis in range(self.dim):
            n = self.cells[axis]
            h = self.spacing[axis]
            d = sp.diags([-np.ones(n) / h, np.ones(n) / h], [0, 1], shape=(n, n + 1))
            blocks.append(_embed(d.tocsr(), axis, self.cells, faces=True))
        return tuple(blocks)

    def gradient_matrix(self, axis: int) -> sp.csr_matrix:
        return self._gradient_blocks[axis]

    def divergence_matrix(self, axis: int) -> sp.csr_matrix:
        return self._divergence_blocks[axis]

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        lap = None
        for axis in range(self.dim):
            term = self.divergence_matrix(axis) @ self.gradient_matrix(axis)
            lap = term if lap is None else lap + term
        return lap.tocsr()

    @cached_property
    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the Neumann Laplacian in the DCT-II basis (all <= 0)."""
        parts = []
        for n, h in zip(self.cells, self.spacing):
            k = np.arange(n)
            parts.append(-(2.0 / h * np.sin(np.pi * k / (2 * n))) ** 2)
        grids = np.meshgrid(*parts, indexing="ij")
        return sum(grids)

    # ------------------------------------------------------------------
    # array-level operators used inside the time stepper

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        out = []
        for axis, h in enumerate(self.spacing):
            g = np.zeros(self.face_shape(axis))
            inner = [slice(None)] * self.dim
            inner[axis] = slice(1, -1)
            g[tuple(inner)] = np.diff(f, axis=axis) / h
            out.append(g)
        return tuple(out)

    def div(self, v) -> np.ndarray:
        out = np.zeros(self.cells)
        for axis, h in enumerate(self.spacing):
            out += np.diff(v[axis], axis=axis) / h
        return out

    def lap(self, f: np.ndarray) -> np.ndarray:
        return self.div(self.grad(f))

    def face_average(self, f: np.ndarray, axis: int) -> np.ndarray:
        """Arithmetic mean of the two neighbouring cells; boundary faces copy
        the adjacent cell."""
        pad = [(0, 0)] * self.dim
        pad[axis] = (1, 1)
        fp = np.pad(f, pad, mode="edge")
        lo = [slice(None)] * self.dim
        hi = [slice(None)] * self.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        return 0.5 * (fp[tuple(lo)] + fp[tuple(hi)])

    def cell_average(self, v: np.ndarray, axis: int) -> np.ndarray:
        """Face field to cell centres by averaging the two faces of each cell."""
        lo = [slice(None)] * self.dim
        hi = [slice(None)] * self.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        return 0.5 * (v[tuple(lo)] + v[tuple(hi)])

    def integrate(self, f: np.ndarray) -> float:
        """Midpoint rule over cells."""
        return float(np.sum(f) * self.cell_volume)

    def integrate_faces(self, g: np.ndarray) -> float:
        return float(np.sum(g) * self.cell_volume)


def _embed(block: sp.csr_matrix, axis: int, cells: tuple[int, ...], faces: bool = False):
    """Kronecker-embed a 1D operator acting along ``axis`` into the full grid.

    For ``faces=False`` the block maps cells to faces of ``axis``; with
    ``faces=True`` it maps faces of ``axis`` to cells. Other axes carry
    identities sized by the cell counts.
    """
    mats = []
    for k, n in enumerate(cells):
        mats.append(block if k == axis else sp.identity(n, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


# ----------------------------------------------------------------------
# field values

@dataclass(frozen=True)
class ScalarField:
    """Cell-centred values on a grid, tagged with their boundary condition."""

    grid: Grid
    values: np.ndarray
    bc_tag: str = NEUMANN_ZERO

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.cells)
        if not np.all(np.isfinite(vals)):
            raise ValueError("ScalarField values must be finite")
        if self.bc_tag not in (NEUMANN_ZERO, NO_BC):
            raise ValueError(f"unknown scalar bc_tag {self.bc_tag!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class VectorField:
    """One face-normal component per axis; boundary faces hold the wall value."""

    grid: Grid
    components: tuple[np.ndarray, ...]
    bc_tag: str = DIRICHLET_ZERO

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("need one component per axis")
        comps = []
        for axis, comp in enumerate(self.components):
            arr = np.array(comp, dtype=float).reshape(self.grid.face_shape(axis))
            if not np.all(np.isfinite(arr)):
                raise ValueError("VectorField values must be finite")
            if self.bc_tag == DIRICHLET_ZERO:
                boundary = ~self.grid.interior_face_mask(axis)
                if np.any(arr[boundary] != 0.0):
                    raise ValueError("dirichlet_zero field has nonzero boundary faces")
            arr.setflags(write=False)
            comps.append(arr)
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, tuple(np.zeros(grid.face_shape(k)) for k in range(grid.dim)))


def _check_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatchError(f"fields live on different grids: {a} vs {b}")


def gradient(f: ScalarField, grid: Grid | None = None) -> VectorField:
    """Face-centred central difference; boundary faces are zero (mirror ghosts)."""
    if grid is not None:
        _check_grid(grid, f.grid)
    return VectorField(f.grid, f.grid.grad(f.values))


def divergence(v: VectorField, grid: Grid | None = None) -> ScalarField:
    if grid is not None:
        _check_grid(grid, v.grid)
    return ScalarField(v.grid, v.grid.div(v.components), bc_tag=NO_BC)


def laplacian_neumann(f: ScalarField) -> ScalarField:
    if f.bc_tag != NEUMANN_ZERO:
        raise ValueError(f"laplacian_neumann needs a neumann_zero field, got {f.bc_tag!r}")
    return ScalarField(f.grid, f.grid.lap(f.values), bc_tag=NO_BC)


def inner_cells(f: ScalarField, g: ScalarField) -> float:
    _check_grid(f.grid, g.grid)
    return f.grid.integrate(f.values * g.values)


def inner_faces(v: VectorField, w: VectorField) -> float:
    _check_grid(v.grid, w.grid)
    return sum(v.grid.integrate_faces(a * b) for a, b in zip(v.components, w.components))
