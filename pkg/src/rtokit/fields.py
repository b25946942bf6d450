"""Permeability parameterizations: radial-basis weights and KL modes.

Both map an unknown vector u to a strictly positive field kappa(x) on the
mesh and expose the cell-midpoint values and their derivatives needed by the
stiffness sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .fem import Mesh, PermeabilityField

RBF_WIDTH = 0.1


def default_rbf_centers() -> np.ndarray:
    """3x3 grid of kernel centers at {0.25, 0.5, 0.75}^2, row-major."""
    side = np.array([0.25, 0.5, 0.75])
    x1, x2 = np.meshgrid(side, side, indexing="xy")
    return np.column_stack([x1.ravel(), x2.ravel()])


def rbf_kernel(points: np.ndarray, centers: np.ndarray, width: float = RBF_WIDTH) -> np.ndarray:
    """Gaussian kernel matrix exp(-|x - c|^2 / (2 width^2)), shape (k, n_centers)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts[:, None, :] - np.asarray(centers, dtype=float)[None, :, :]
    return np.exp(-np.sum(diff * diff, axis=2) / (2.0 * width ** 2))


def rbf_combination(
    points: np.ndarray,
    weights: np.ndarray,
    centers: np.ndarray | None = None,
    width: float = RBF_WIDTH,
) -> np.ndarray:
    """Direct weighted kernel sum; weights enter linearly (may be zero)."""
    if centers is None:
        centers = default_rbf_centers()
    return rbf_kernel(points, centers, width) @ np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class RbfWeights:
    """kappa(x) = sum_i exp(u_i) k_i(x) with Gaussian kernels k_i."""

    mesh: Mesh
    centers: np.ndarray
    width: float = RBF_WIDTH

    def __post_init__(self):
        if not self.width > 0.0:
            raise ValueError("kernel width must be strictly positive")

    @classmethod
    def default(cls, mesh: Mesh) -> "RbfWeights":
        return cls(mesh=mesh, centers=default_rbf_centers())

    @property
    def n_params(self) -> int:
        return self.centers.shape[0]

    @cached_property
    def _kernel_cells(self) -> np.ndarray:
        return rbf_kernel(self.mesh.cell_midpoints, self.centers, self.width)

    @cached_property
    def _kernel_nodes(self) -> np.ndarray:
        return rbf_kernel(self.mesh.nodes, self.centers, self.width)

    def _weights(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} log-weights, got shape {u.shape}")
        return np.exp(u)

    def cell_kappa(self, u: np.ndarray) -> np.ndarray:
        return self._kernel_cells @ self._weights(u)

    def cell_kappa_grad(self, u: np.ndarray) -> np.ndarray:
        return self._kernel_cells * self._weights(u)[None, :]

    def cell_kappa_grad_dot(self, u: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return self._kernel_cells @ (self._weights(u)[:, None] * directions)

    def nodal_kappa(self, u: np.ndarray) -> np.ndarray:
        return self._kernel_nodes @ self._weights(u)

    def field(self, u: np.ndarray) -> PermeabilityField:
        return PermeabilityField(nodal=self.nodal_kappa(u), cell=self.cell_kappa(u))

    def kappa_parameters(self, u: np.ndarray) -> np.ndarray:
        """Natural positive parameters of the field (the kernel weights)."""
        return self._weights(u)


def rbf_field(
    log_weights: np.ndarray,
    mesh: Mesh,
    centers: np.ndarray | None = None,
    width: float = RBF_WIDTH,
) -> PermeabilityField:
    param = RbfWeights(mesh=mesh, centers=default_rbf_centers() if centers is None else centers, width=width)
    return param.field(log_weights)


def squared_exponential_kernel(
    x: np.ndarray, y: np.ndarray, variance: float, length: float
) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return variance * np.exp(-np.sum(diff * diff, axis=2) / (2.0 * length ** 2))


@dataclass(frozen=True)
class KlBasis:
    """Leading Nystrom eigenpairs of a squared-exponential covariance.

    Eigenfunctions are nodal vectors, orthonormal under the trapezoid
    quadrature weights of the mesh; eigenvalues are non-increasing.
    """

    mesh: Mesh
    variance: float
    length: float
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]


def kl_decompose(mesh: Mesh, variance: float, length: float, n_modes: int) -> KlBasis:
    """Discretize the covariance operator on the mesh nodes and truncate.

    The symmetric quadrature-weighted kernel W^(1/2) C W^(1/2) is
    diagonalized densely; eigenfunctions are rescaled by W^(-1/2) so that
    sum_k w_k phi_i(x_k) phi_j(x_k) = delta_ij.
    """
    if variance < 0.0:
        raise ValueError("variance must be non-negative")
    if length <= 0.0:
        raise ValueError("length scale must be positive")
    n_nodes = mesh.n_nodes
    if not 1 <= n_modes <= n_nodes:
        raise ValueError(f"n_modes must be in [1, {n_nodes}]")
    if variance == 0.0:
        return KlBasis(
            mesh=mesh,
            variance=0.0,
            length=length,
            eigenvalues=np.zeros(n_modes),
            eigenfunctions=np.zeros((n_nodes, n_modes)),
        )
    w = mesh.quadrature_weights
    sqrt_w = np.sqrt(w)
    C = squared_exponential_kernel(mesh.nodes, mesh.nodes, variance, length)
    B = sqrt_w[:, None] * C * sqrt_w[None, :]
    B = 0.5 * (B + B.T)
    vals, vecs = scipy.linalg.eigh(B, subset_by_index=[n_nodes - n_modes, n_nodes - 1])
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    return KlBasis(
        mesh=mesh,
        variance=variance,
        length=length,
        eigenvalues=vals,
        eigenfunctions=vecs / sqrt_w[:, None],
    )


@dataclass(frozen=True)
class KlModes:
    """log kappa(x) = sum_i u_i sqrt(lambda_i) phi_i(x) on the mesh nodes."""

    basis: KlBasis

    @property
    def mesh(self) -> Mesh:
        return self.basis.mesh

    @property
    def n_params(self) -> int:
        return self.basis.n_modes

    @cached_property
    def _scaled_nodes(self) -> np.ndarray:
        return self.basis.eigenfunctions * np.sqrt(self.basis.eigenvalues)[None, :]

    @cached_property
    def _scaled_cells(self) -> np.ndarray:
        # log-field interpolated to cell midpoints: mean of the four corners
        return self._scaled_nodes[self.mesh.cells].mean(axis=1)

    def _check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} mode coefficients, got shape {u.shape}")
        return u

    def cell_kappa(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self._scaled_cells @ self._check(u))

    def cell_kappa_grad(self, u: np.ndarray) -> np.ndarray:
        return self.cell_kappa(u)[:, None] * self._scaled_cells

    def cell_kappa_grad_dot(self, u: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return self.cell_kappa(u)[:, None] * (self._scaled_cells @ directions)

    def nodal_kappa(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self._scaled_nodes @ self._check(u))

    def field(self, u: np.ndarray) -> PermeabilityField:
        return PermeabilityField(nodal=self.nodal_kappa(u), cell=self.cell_kappa(u))

    def kappa_parameters(self, u: np.ndarray) -> np.ndarray:
        """Mode coefficients are the natural parameters for this map."""
        return self._check(u)


def kl_field(modes: np.ndarray, basis: KlBasis) -> PermeabilityField:
    return KlModes(basis=basis).field(modes)
