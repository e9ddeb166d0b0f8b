"""Uniform axiparallel meshes and multi-component cell-average fields.

Storage order is component-major with the x-index fastest: a field with m
components on an (I, J, K) mesh is a C-contiguous float64 array of shape
(m, K, J, I).  The raw dump format and the CSV cell ordering follow the
same convention.  Unused dimensions are collapsed to extent 1 with spacing
1.0 so 1-D, 2-D and 3-D share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

RAW_MAGIC = "stochfv-grid v1"

# Boundary tags. An axis is either periodic on both sides or carries an
# independent tag per side (low, high).
PERIODIC = "periodic"
NEUMANN_COPY = "neumann"


@dataclass(frozen=True)
class DirichletFunction:
    """Boundary tag that fills ghost cells from a prescribed state.

    ``fn(x, y, z, t)`` is evaluated at ghost-cell centers and must return an
    array of shape (components,) + x.shape.
    """

    fn: Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


BoundaryTag = object  # PERIODIC | NEUMANN_COPY | DirichletFunction


def _normalize_axis_boundary(tag) -> tuple[BoundaryTag, BoundaryTag]:
    if isinstance(tag, tuple):
        lo, hi = tag
    else:
        lo = hi = tag
    for side in (lo, hi):
        if side not in (PERIODIC, NEUMANN_COPY) and not isinstance(side, DirichletFunction):
            raise ConfigurationError(f"unknown boundary tag {side!r}")
    if (lo == PERIODIC) != (hi == PERIODIC):
        raise ConfigurationError("periodic boundaries must pair on both sides of an axis")
    return lo, hi


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform axiparallel cell grid.

    The cell center of index (i, j, k) is origin + ((i+1/2)dx, (j+1/2)dy,
    (k+1/2)dz); the cell volume is dx*dy*dz with unused factors equal 1.
    Immutable after construction and shareable across workers.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boundary: tuple = dc_field(default=(PERIODIC, PERIODIC, PERIODIC))

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(n) < 1 for n in self.dims):
            raise ValueError(f"all extents must be >= 1, got {self.dims}")
        if any(not (s > 0) for s in self.spacing):
            raise ValueError(f"all spacings must be > 0, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(
            self, "boundary",
            tuple(_normalize_axis_boundary(b) for b in self.boundary),
        )

    @property
    def n_cells(self) -> int:
        I, J, K = self.dims
        return I * J * K

    @property
    def cell_volume(self) -> float:
        dx, dy, dz = self.spacing
        return dx * dy * dz

    @property
    def active_axes(self) -> tuple[int, ...]:
        """Axes with extent > 1, as indices 0=x, 1=y, 2=z."""
        return tuple(a for a in range(3) if self.dims[a] > 1)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate arrays of shape (K, J, I) for x, y and z."""
        x = self.axis_centers(0)
        y = self.axis_centers(1)
        z = self.axis_centers(2)
        Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
        return X, Y, Z

    def is_periodic(self) -> bool:
        return all(b == (PERIODIC, PERIODIC) for b in self.boundary)


@dataclass
class Field:
    """Cell averages of an m-component quantity at one time instant.

    ``data`` has shape (components, K, J, I) in storage order. The field is
    exclusively owned by one worker at a time.
    """

    mesh: StructuredMesh
    data: np.ndarray

    def __post_init__(self):
        I, J, K = self.mesh.dims
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 4 or self.data.shape[1:] != (K, J, I):
            raise ValueError(
                f"field data shape {self.data.shape} does not match mesh dims {(K, J, I)}"
            )

    @property
    def components(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, mesh: StructuredMesh, components: int) -> "Field":
        I, J, K = mesh.dims
        return cls(mesh, np.zeros((components, K, J, I)))

    @classmethod
    def from_function(cls, mesh: StructuredMesh, fn, components: int | None = None) -> "Field":
        """Evaluate ``fn(x, y, z)`` at cell centers; fn returns (m,)+grid shape."""
        X, Y, Z = mesh.cell_centers()
        vals = np.asarray(fn(X, Y, Z), dtype=np.float64)
        if vals.ndim == 3:
            vals = vals[None]
        if components is not None and vals.shape[0] != components:
            raise ValueError(f"function returned {vals.shape[0]} components, expected {components}")
        return cls(mesh, vals)

    def copy(self) -> "Field":
        return Field(self.mesh, self.data.copy())


def _check_component(f: Field, component: int):
    if not 0 <= component < f.components:
        raise ValueError(f"component {component} out of range [0, {f.components})")


def l1_norm(f: Field, component: int = 0) -> float:
    """Cell-volume-weighted L1 norm of one component: |C| * sum |f|."""
    _check_component(f, component)
    return float(f.mesh.cell_volume * np.sum(np.abs(f.data[component])))


def l2_norm(f: Field, component: int = 0) -> float:
    """Cell-volume-weighted L2 norm of one component: sqrt(|C| * sum f^2)."""
    _check_component(f, component)
    return float(np.sqrt(f.mesh.cell_volume * np.sum(np.square(f.data[component]))))


def apply_boundary(f: Field, ghost_width: int, t: float = 0.0) -> np.ndarray:
    """Materialize a padded array with ghost layers filled from boundary tags.

    Only axes with extent > 1 are padded.  Periodic wraps indices,
    NEUMANN_COPY copies the nearest interior cell, DirichletFunction
    evaluates the supplied state function at ghost-cell centers and time t.
    Interior data is copied bit-identically.
    """
    return pad_array(f.data, f.mesh, ghost_width, t)


def pad_array(data: np.ndarray, mesh: StructuredMesh, ghost_width: int,
              t: float = 0.0, out: np.ndarray | None = None) -> np.ndarray:
    if ghost_width < 1:
        raise ValueError("ghost_width must be >= 1")
    g = ghost_width
    I, J, K = mesh.dims
    active = mesh.active_axes
    if any(mesh.dims[a] < g for a in active):
        raise ValueError(f"ghost_width {g} exceeds an active extent of {mesh.dims}")
    # data axes: (component, z, y, x) -> spatial axis a maps to array axis 3-a
    shape = list(data.shape)
    for a in active:
        shape[3 - a] += 2 * g
    if out is None:
        out = np.empty(shape, dtype=np.float64)
    elif list(out.shape) != shape:
        raise ValueError(f"padded buffer shape {out.shape} does not match {shape}")
    inner = [slice(None)] * 4
    for a in active:
        inner[3 - a] = slice(g, -g)
    out[tuple(inner)] = data

    # Fill axis by axis; corners take the value of the last axis filled,
    # which is sufficient for the unsplit stencils used here.
    for a in active:
        ax = 3 - a
        lo_tag, hi_tag = mesh.boundary[a]
        n = mesh.dims[a]
        filled = [slice(None)] * 4
        for side, tag in ((0, lo_tag), (1, hi_tag)):
            ghost = list(filled)
            ghost[ax] = slice(0, g) if side == 0 else slice(shape[ax] - g, shape[ax])
            src = list(filled)
            if tag == PERIODIC:
                src[ax] = slice(n, n + g) if side == 0 else slice(g, 2 * g)
                out[tuple(ghost)] = out[tuple(src)]
            elif tag == NEUMANN_COPY:
                src[ax] = slice(g, g + 1) if side == 0 else slice(shape[ax] - g - 1, shape[ax] - g)
                out[tuple(ghost)] = out[tuple(src)]
            else:  # DirichletFunction
                coords = _ghost_centers(mesh, a, side, g)
                vals = np.asarray(tag.fn(coords[0], coords[1], coords[2], t), dtype=np.float64)
                out[tuple(ghost)] = vals
    return out


@lru_cache(maxsize=64)
def _ghost_centers(mesh: StructuredMesh, axis: int, side: int, g: int):
    """Cell-center coordinate arrays for one ghost slab, shaped like the slab."""
    coords1d = []
    for a in range(3):
        if a == axis:
            n = mesh.dims[a]
            if side == 0:
                idx = np.arange(-g, 0)
            else:
                idx = np.arange(n, n + g)
        else:
            if mesh.dims[a] > 1:
                idx = np.arange(-g, mesh.dims[a] + g) if a in mesh.active_axes else np.arange(mesh.dims[a])
            else:
                idx = np.arange(mesh.dims[a])
        coords1d.append(mesh.origin[a] + (idx + 0.5) * mesh.spacing[a])
    Z, Y, X = np.meshgrid(coords1d[2], coords1d[1], coords1d[0], indexing="ij")
    return X, Y, Z


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def write_raw(path, f: Field) -> None:
    """Raw dump: ASCII header then little-endian float64 in storage order."""
    I, J, K = f.mesh.dims
    with open(path, "wb") as fh:
        fh.write(f"{RAW_MAGIC} {I} {J} {K} {f.components}\n".encode("ascii"))
        fh.write(f.data.astype("<f8", copy=False).tobytes())


def read_raw(path) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Read a raw dump; returns (data (m,K,J,I), dims (I,J,K))."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        parts = header.split()
        if " ".join(parts[:2]) != RAW_MAGIC:
            raise ConfigurationError(f"not a {RAW_MAGIC} file: {path}")
        I, J, K, m = (int(p) for p in parts[2:6])
        payload = fh.read()
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if data.size != m * I * J * K:
        raise ConfigurationError(f"raw payload size mismatch in {path}")
    return data.reshape(m, K, J, I), (I, J, K)


def write_csv(path, f: Field) -> None:
    """CSV dump: header x,y,z,c0,..., one row per cell center, 17 significant
    digits (round-trip exact for float64)."""
    I, J, K = f.mesh.dims
    m = f.components
    X, Y, Z = f.mesh.cell_centers()
    cols = [X.ravel(), Y.ravel(), Z.ravel()]
    cols += [f.data[c].ravel() for c in range(m)]
    header = "x,y,z," + ",".join(f"c{c}" for c in range(m))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_csv(path) -> np.ndarray:
    """Read a CSV dump back; returns the raw (rows, columns) float array."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
