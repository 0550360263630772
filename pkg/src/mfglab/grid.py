"""
Uniform tensor grid on the truncated box [-L, L]^N and the discrete calculus
used by every solver in the package.

Fields are plain numpy arrays: a scalar field has shape ``grid.shape`` and a
vector field has shape ``(N,) + grid.shape``.  Two gradient flavours exist:

* ``gradient`` -- node-valued, second-order central differences with
  second-order one-sided stencils at the walls.
* ``face_gradient`` / ``divergence`` -- the staggered pair.  ``divergence`` is
  the negative adjoint of ``face_gradient`` with respect to the trapezoidal
  node weights and the face weights, so discrete integration by parts is exact
  and ``divergence(face_gradient(f)) == laplacian(f)`` (Neumann mirror walls).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

Array = NDArray[np.float64]


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``nodes`` points per axis on ``[-half_width, half_width]^dim``."""

    dim: int
    half_width: float
    nodes: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.nodes < 8:
            raise ValueError(f"nodes per axis must be >= 8, got {self.nodes}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.nodes - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes**self.dim

    @cached_property
    def axis(self) -> Array:
        return np.linspace(-self.half_width, self.half_width, self.nodes)

    @cached_property
    def coords(self) -> tuple[Array, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> Array:
        return np.sqrt(sum(x**2 for x in self.coords))

    @cached_property
    def weights(self) -> Array:
        """Trapezoidal quadrature weights (tensor product)."""
        w1 = np.full(self.nodes, self.h)
        w1[[0, -1]] *= 0.5
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    @property
    def center_index(self) -> tuple[int, ...]:
        return (self.nodes // 2,) * self.dim

    def face_weights(self, axis: int) -> Array:
        """Weights of the faces normal to ``axis``: h along the axis, trapezoid across."""
        w1 = np.full(self.nodes, self.h)
        w1[[0, -1]] *= 0.5
        parts = [np.full(self.nodes - 1, self.h) if d == axis else w1 for d in range(self.dim)]
        w = parts[0]
        for p in parts[1:]:
            w = np.multiply.outer(w, p)
        return w

    # -- quadrature ---------------------------------------------------------

    def integrate(self, f: Array) -> float:
        return float(np.sum(self.weights * f))

    def lp_norm(self, f: Array, p: float) -> float:
        if p == np.inf:
            return float(np.max(np.abs(f)))
        if p < 1:
            raise ValueError(f"Lp norm needs p >= 1, got {p}")
        return self.integrate(np.abs(f) ** p) ** (1.0 / p)

    def mean(self, f: Array) -> float:
        return self.integrate(f) / (2.0 * self.half_width) ** self.dim

    # -- node calculus -------------------------------------------------------

    def gradient(self, f: Array) -> Array:
        if self.dim == 1:
            return np.gradient(f, self.h, edge_order=2)[None, ...]
        return np.stack(np.gradient(f, self.h, edge_order=2))

    def laplacian(self, f: Array) -> Array:
        """(2N+1)-point Laplacian with homogeneous Neumann mirror walls."""
        out = np.zeros_like(f)
        for d in range(self.dim):
            g = np.moveaxis(f, d, 0)
            padded = np.concatenate([g[1:2], g, g[-2:-1]], axis=0)
            out += np.moveaxis(padded[2:] - 2.0 * g + padded[:-2], 0, d)
        return out / self.h**2

    # -- staggered calculus --------------------------------------------------

    def face_gradient(self, f: Array) -> list[Array]:
        """Forward differences on the faces normal to each axis."""
        return [np.diff(f, axis=d) / self.h for d in range(self.dim)]

    def divergence(self, flux: list[Array]) -> Array:
        """Negative adjoint of ``face_gradient``; ``flux[d]`` lives on faces normal to axis d."""
        out = np.zeros(self.shape)
        for d, F in enumerate(flux):
            wF = self.face_weights(d) * F
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            out[tuple(lo)] += wF
            out[tuple(hi)] -= wF
        return out / (self.h * self.weights)

    def face_integrate(self, flux: list[Array]) -> float:
        return float(sum(np.sum(self.face_weights(d) * F) for d, F in enumerate(flux)))

    def dirichlet_pairing(self, u: Array, v: Array) -> float:
        """Staggered approximation of the integral of grad u . grad v."""
        return self.face_integrate(
            [gu * gv for gu, gv in zip(self.face_gradient(u), self.face_gradient(v))]
        )

    # -- misc ----------------------------------------------------------------

    def outer_shell(self, fraction: float = 0.1) -> NDArray[np.bool_]:
        """Nodes whose sup-norm position lies in the outer ``fraction`` of the box."""
        sup = np.max(np.abs(np.stack(self.coords)), axis=0)
        return sup > (1.0 - fraction) * self.half_width

    def mass_leak(self, m: Array, fraction: float = 0.1) -> float:
        total = self.integrate(m)
        if total == 0:
            return 0.0
        return self.integrate(np.where(self.outer_shell(fraction), m, 0.0)) / total

    def operators(self) -> "FaceOperators":
        return _face_operators(self)


@dataclass(frozen=True)
class FaceOperators:
    """Sparse maps between node values and face values, one entry per axis.

    ``lo[d]``/``hi[d]`` select the lower/upper node of each face, ``diff[d]`` is
    ``hi - lo`` (not divided by h), ``tangential[d][e]`` averages the node-centred
    difference along axis ``e`` onto the faces normal to ``d`` (zero on mirror walls),
    ``scatter_lo[d]``/``scatter_hi[d]`` add face values back to nodes with the
    mirror doubling at the walls.
    """

    lo: list[sp.csr_matrix]
    hi: list[sp.csr_matrix]
    diff: list[sp.csr_matrix]
    tangential: list[dict[int, sp.csr_matrix]]
    scatter_lo: list[sp.csr_matrix]
    scatter_hi: list[sp.csr_matrix]


@lru_cache(maxsize=16)
def _face_operators(grid: Grid) -> FaceOperators:
    n, N = grid.nodes, grid.dim
    idx = np.arange(grid.size).reshape(grid.shape)
    central = []
    for e in range(N):
        # node-centred difference along e, zero on the walls (mirror)
        g = np.moveaxis(idx, e, 0)
        rows = g[1:-1].ravel()
        plus = g[2:].ravel()
        minus = g[:-2].ravel()
        C = sp.csr_matrix(
            (
                np.concatenate([np.full(rows.size, 0.5 / grid.h), np.full(rows.size, -0.5 / grid.h)]),
                (np.concatenate([rows, rows]), np.concatenate([plus, minus])),
            ),
            shape=(grid.size, grid.size),
        )
        central.append(C)

    lo_ops, hi_ops, diff_ops, tan_ops, sc_lo, sc_hi = [], [], [], [], [], []
    for d in range(N):
        sl_lo = [slice(None)] * N
        sl_hi = [slice(None)] * N
        sl_lo[d] = slice(0, -1)
        sl_hi[d] = slice(1, None)
        lo = idx[tuple(sl_lo)].ravel()
        hi = idx[tuple(sl_hi)].ravel()
        nf = lo.size
        faces = np.arange(nf)
        S_lo = sp.csr_matrix((np.ones(nf), (faces, lo)), shape=(nf, grid.size))
        S_hi = sp.csr_matrix((np.ones(nf), (faces, hi)), shape=(nf, grid.size))
        lo_ops.append(S_lo)
        hi_ops.append(S_hi)
        diff_ops.append((S_hi - S_lo).tocsr())
        tan_ops.append({e: (0.5 * (S_lo + S_hi) @ central[e]).tocsr() for e in range(N) if e != d})

        pos = np.moveaxis(np.indices(grid.shape)[d], d, 0)
        pos_lo = np.moveaxis(pos[:-1], 0, d).ravel()
        pos_hi = np.moveaxis(pos[1:], 0, d).ravel()
        mult_lo = np.where(pos_lo == 0, 2.0, 1.0)
        mult_hi = np.where(pos_hi == n - 1, 2.0, 1.0)
        sc_lo.append(sp.csr_matrix((mult_lo, (lo, faces)), shape=(grid.size, nf)))
        sc_hi.append(sp.csr_matrix((mult_hi, (hi, faces)), shape=(grid.size, nf)))
    return FaceOperators(lo_ops, hi_ops, diff_ops, tan_ops, sc_lo, sc_hi)


def face_gradient_vectors(grid: Grid, u: Array) -> list[Array]:
    """Full gradient vector on the faces of each axis, shape ``(N, n_faces)`` per axis.

    Component ``d`` of the faces normal to ``d`` is the forward difference;
    the other components average node-centred differences (mirror walls).
    """
    ops = grid.operators()
    flat = u.ravel()
    out = []
    for d in range(grid.dim):
        comps = []
        for e in range(grid.dim):
            if e == d:
                comps.append(ops.diff[d] @ flat / grid.h)
            else:
                comps.append(ops.tangential[d][e] @ flat)
        out.append(np.stack(comps))
    return out


# -- serialization -----------------------------------------------------------


def write_field_csv(path: str | Path, grid: Grid, values: Array) -> None:
    """One row per node (lexicographic order): x1..xN,value at 17 significant digits."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    cols = [c.ravel() for c in grid.coords] + [values.ravel()]
    header = [f"x{d + 1}" for d in range(grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*cols):
            writer.writerow([format(float(v), ".17g") for v in row])


def read_field_csv(path: str | Path) -> tuple[Grid, Array]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    dim = len(header) - 1
    nodes = round(len(data) ** (1.0 / dim))
    if nodes**dim != len(data):
        raise ValueError(f"{path}: {len(data)} rows is not a full {dim}-D tensor grid")
    grid = Grid(dim, float(np.max(data[:, 0])), nodes)
    return grid, data[:, -1].reshape(grid.shape)
