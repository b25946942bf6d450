"""Bilinear finite elements for the Darcy pressure equation on the unit square.

Solves -div(kappa grad p) = f on [0,1]^2 with Dirichlet data on selected
faces and prescribed co-normal flux g = kappa dp/dn (n the outward normal)
on the others.  Meshes are uniform quadrilateral grids; the diffusion
coefficient enters the stiffness through one value per cell, sampled at the
cell midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

FACES = ("left", "right", "bottom", "top")

# Element stiffness of the unit-coefficient Laplacian on a square bilinear
# element, nodes ordered counterclockwise from the lower-left corner.  The
# h^2 factors cancel in 2-D, so this matrix is mesh-size independent.
_K_REF = np.array(
    [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ]
) / 6.0


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of [0,1]^2 with ``cells_per_side``^2 square cells."""

    cells_per_side: int

    def __post_init__(self):
        if int(self.cells_per_side) != self.cells_per_side or self.cells_per_side < 1:
            raise ValueError("cells_per_side must be a positive integer")

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_side

    @property
    def nodes_per_side(self) -> int:
        return self.cells_per_side + 1

    @property
    def n_nodes(self) -> int:
        return self.nodes_per_side ** 2

    @property
    def n_cells(self) -> int:
        return self.cells_per_side ** 2

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, 2), row-major in (x2, x1)."""
        side = np.linspace(0.0, 1.0, self.nodes_per_side)
        x1, x2 = np.meshgrid(side, side, indexing="xy")
        return np.column_stack([x1.ravel(), x2.ravel()])

    @cached_property
    def cells(self) -> np.ndarray:
        """Cell connectivity, shape (n_cells, 4), counterclockwise corners."""
        ne = self.cells_per_side
        nps = self.nodes_per_side
        i, j = np.meshgrid(np.arange(ne), np.arange(ne), indexing="xy")
        i = i.ravel()
        j = j.ravel()
        lower_left = j * nps + i
        return np.column_stack(
            [lower_left, lower_left + 1, lower_left + nps + 1, lower_left + nps]
        )

    @cached_property
    def cell_midpoints(self) -> np.ndarray:
        corners = self.nodes[self.cells]
        return corners.mean(axis=1)

    @cached_property
    def _assembly_indices(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.repeat(self.cells, 4, axis=1).ravel()
        cols = np.tile(self.cells, (1, 4)).ravel()
        return rows, cols

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Product trapezoid weights over the nodes; they sum to 1 exactly."""
        w1 = np.full(self.nodes_per_side, self.h)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        return np.outer(w1, w1).ravel()

    def face_nodes(self, face: str) -> np.ndarray:
        """Node indices on one boundary face, ordered along the face."""
        ne = self.cells_per_side
        nps = self.nodes_per_side
        k = np.arange(nps)
        if face == "left":
            return k * nps
        if face == "right":
            return k * nps + ne
        if face == "bottom":
            return k
        if face == "top":
            return ne * nps + k
        raise ValueError(f"unknown face {face!r}")

    def interpolation_matrix(self, points: np.ndarray) -> sp.csr_matrix:
        """Sparse bilinear interpolation from nodal values to ``points``.

        Each row holds the four corner weights of the containing cell; the
        weights are non-negative and sum to one.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (k, 2)")
        if np.any(pts < -1e-12) or np.any(pts > 1.0 + 1e-12):
            raise ValueError("interpolation points must lie inside [0,1]^2")
        ne = self.cells_per_side
        h = self.h
        ij = np.clip(np.floor(pts / h).astype(int), 0, ne - 1)
        local = pts / h - ij
        xi = local[:, 0]
        eta = local[:, 1]
        corner = ij[:, 1] * self.nodes_per_side + ij[:, 0]
        cols = np.column_stack(
            [corner, corner + 1, corner + self.nodes_per_side + 1, corner + self.nodes_per_side]
        )
        weights = np.column_stack(
            [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
        )
        rows = np.repeat(np.arange(pts.shape[0]), 4)
        return sp.csr_matrix(
            (weights.ravel(), (rows, cols.ravel())), shape=(pts.shape[0], self.n_nodes)
        )


@dataclass(frozen=True)
class PermeabilityField:
    """Positive diffusion coefficient, stored nodally and per cell midpoint."""

    nodal: np.ndarray
    cell: np.ndarray

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "PermeabilityField":
        return cls(
            nodal=np.full(mesh.n_nodes, float(value)),
            cell=np.full(mesh.n_cells, float(value)),
        )

    @classmethod
    def from_nodal(cls, mesh: Mesh, nodal: np.ndarray) -> "PermeabilityField":
        nodal = np.asarray(nodal, dtype=float)
        if nodal.shape != (mesh.n_nodes,):
            raise ValueError("nodal values must have one entry per mesh node")
        return cls(nodal=nodal, cell=nodal[mesh.cells].mean(axis=1))


def benchmark_bottom_flux(points: np.ndarray) -> np.ndarray:
    # co-normal flux kappa dp/dn at x2 = 0; outward normal is -e2
    return -points[:, 0]


def benchmark_top_flux(points: np.ndarray) -> np.ndarray:
    # co-normal flux kappa dp/dn at x2 = 1; outward normal is +e2
    return 1.0 - points[:, 0]


@dataclass(frozen=True)
class BoundaryConditions:
    """Dirichlet values and co-normal flux data keyed by face name.

    Dirichlet entries may be floats or callables of the face points.  Flux
    entries prescribe g = kappa dp/dn directly (already signed with the
    outward normal), entering the weak form as a boundary load that does not
    depend on the diffusion coefficient.
    """

    dirichlet: Mapping[str, float | Callable]
    flux: Mapping[str, float | Callable] = field(default_factory=dict)

    def __post_init__(self):
        for name, table in (("dirichlet", self.dirichlet), ("flux", self.flux)):
            for face in table:
                if face not in FACES:
                    raise ValueError(f"{name} face must be one of {FACES}, got {face!r}")
        if not self.dirichlet:
            raise ValueError("at least one Dirichlet face is required")

    @classmethod
    def benchmark(cls) -> "BoundaryConditions":
        """Flow-cell setup: p=1 at x1=0, p=0 at x1=1, prescribed flux above/below."""
        return cls(
            dirichlet={"left": 1.0, "right": 0.0},
            flux={"bottom": benchmark_bottom_flux, "top": benchmark_top_flux},
        )


def benchmark_source(mesh: Mesh) -> np.ndarray:
    """Nodal values of the benchmark source 100 sin(pi x1) sin(pi x2)."""
    x = mesh.nodes
    return 100.0 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _eval_face_data(data, points: np.ndarray) -> np.ndarray:
    if callable(data):
        values = np.asarray(data(points), dtype=float)
        if values.shape != (points.shape[0],):
            raise ValueError("face data callable must return one value per point")
        return values
    return np.full(points.shape[0], float(data))


def stiffness_matrix(mesh: Mesh, cell_values: np.ndarray) -> sp.csr_matrix:
    cell_values = np.asarray(cell_values, dtype=float)
    if cell_values.shape != (mesh.n_cells,):
        raise ValueError("cell_values must have one entry per cell")
    data = cell_values[:, None, None] * _K_REF
    rows, cols = mesh._assembly_indices
    K = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return K.tocsr()


def load_vector(mesh: Mesh, source_nodal: np.ndarray, bcs: BoundaryConditions) -> np.ndarray:
    source_nodal = np.asarray(source_nodal, dtype=float)
    if source_nodal.shape != (mesh.n_nodes,):
        raise ValueError("source must be given as nodal values")
    b = np.zeros(mesh.n_nodes)
    # one-point quadrature of the bilinear interpolant of the source
    s_mid = source_nodal[mesh.cells].mean(axis=1)
    np.add.at(b, mesh.cells.ravel(), np.repeat(s_mid * (mesh.h ** 2) / 4.0, 4))
    # boundary loads from prescribed co-normal flux, one-point edge quadrature
    for face, data in bcs.flux.items():
        nodes = mesh.face_nodes(face)
        mids = 0.5 * (mesh.nodes[nodes[:-1]] + mesh.nodes[nodes[1:]])
        g = _eval_face_data(data, mids) * (mesh.h / 2.0)
        np.add.at(b, nodes[:-1], g)
        np.add.at(b, nodes[1:], g)
    return b


def dirichlet_data(mesh: Mesh, bcs: BoundaryConditions) -> tuple[np.ndarray, np.ndarray]:
    """Constrained node indices and values; later faces override at corners."""
    values: dict[int, float] = {}
    for face in FACES:
        if face not in bcs.dirichlet:
            continue
        nodes = mesh.face_nodes(face)
        vals = _eval_face_data(bcs.dirichlet[face], mesh.nodes[nodes])
        for node, val in zip(nodes, vals):
            values[int(node)] = float(val)
    fixed = np.array(sorted(values), dtype=int)
    return fixed, np.array([values[i] for i in fixed])


@dataclass
class FactorizedSystem:
    """Dirichlet-reduced stiffness factorization for repeated solves."""

    n_nodes: int
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    _lu: spla.SuperLU
    _k_free_fixed: sp.csr_matrix

    def solve_load(self, b: np.ndarray) -> np.ndarray:
        """Solve for the pressure given a full-size load vector."""
        rhs = b[self.free] - self._k_free_fixed @ self.fixed_values
        p = np.zeros(self.n_nodes)
        p[self.free] = self._lu.solve(rhs)
        p[self.fixed] = self.fixed_values
        return p

    def solve_rhs(self, full_rhs: np.ndarray) -> np.ndarray:
        """Solve K x = rhs with homogeneous Dirichlet rows, full-size in/out."""
        rhs = np.asarray(full_rhs, dtype=float)
        squeeze = rhs.ndim == 1
        rhs = rhs.reshape(self.n_nodes, -1)
        x = np.zeros_like(rhs)
        x[self.free] = self._lu.solve(np.ascontiguousarray(rhs[self.free]))
        return x[:, 0] if squeeze else x


def factorize(mesh: Mesh, cell_values: np.ndarray, bcs: BoundaryConditions) -> FactorizedSystem:
    cell_values = np.asarray(cell_values, dtype=float)
    if not np.all(np.isfinite(cell_values)) or np.any(cell_values <= 0.0):
        raise ValueError("diffusion coefficient must be finite and strictly positive")
    K = stiffness_matrix(mesh, cell_values)
    fixed, fixed_values = dirichlet_data(mesh, bcs)
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    k_ff = K[free][:, free].tocsc()
    lu = spla.splu(k_ff)
    return FactorizedSystem(
        n_nodes=mesh.n_nodes,
        free=free,
        fixed=fixed,
        fixed_values=fixed_values,
        _lu=lu,
        _k_free_fixed=K[free][:, fixed].tocsr(),
    )


def assemble_and_solve(
    mesh: Mesh,
    kappa: PermeabilityField,
    source_nodal: np.ndarray,
    bcs: BoundaryConditions,
) -> np.ndarray:
    """Assemble and solve the Darcy system; returns the nodal pressure."""
    system = factorize(mesh, kappa.cell, bcs)
    return system.solve_load(load_vector(mesh, source_nodal, bcs))


@dataclass(frozen=True)
class ObservationOperator:
    """Pointwise observation of the pressure via bilinear interpolation."""

    points: np.ndarray
    matrix: sp.csr_matrix

    @classmethod
    def build(cls, mesh: Mesh, points: np.ndarray) -> "ObservationOperator":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points=pts, matrix=mesh.interpolation_matrix(pts))

    @property
    def n_observations(self) -> int:
        return self.points.shape[0]


def observe(pressure: np.ndarray, obs: ObservationOperator) -> np.ndarray:
    pressure = np.asarray(pressure, dtype=float)
    if pressure.shape[0] != obs.matrix.shape[1]:
        raise ValueError("pressure vector does not match the observation operator")
    return obs.matrix @ pressure
