"""Spatial discretizations of ``-div(sigma grad)`` on the periodic box.

Two diagonalized forms are provided.  :class:`FourierOperator` handles
constant conductivities with either the continuum symbol ``xi . sigma xi``
(spectral accuracy) or the symbol of the finite-difference stencil.
:class:`EigenOperator` diagonalizes the conservative finite-difference
matrix of a variable conductivity with a dense symmetric eigensolver.
Both expose ``mu`` (nonnegative eigenvalues), ``forward`` and ``inverse``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conductivity import ConductivityField
from .grid import Grid


def _difference_matrices(grid: Grid, sign: int) -> list[sp.csr_matrix]:
    """One-sided periodic differences along each axis (forward for +1)."""
    N, h = grid.spec.Nx, grid.dx
    eye = sp.identity(N, format="csr")
    shift = sp.diags([np.ones(N - 1), [1.0]], [1, -(N - 1)], shape=(N, N), format="csr")
    d1 = (shift - eye) / h if sign > 0 else (eye - shift.T) / h
    if grid.n == 1:
        return [d1.tocsr()]
    return [sp.kron(d1, eye, format="csr"), sp.kron(eye, d1, format="csr")]


def stiffness_matrix(sigma: ConductivityField) -> sp.csr_matrix:
    """Symmetric positive semidefinite matrix of ``-div(sigma grad)``.

    The operator is ``1/2 * sum_pm (D^pm)^T S^pm D^pm`` where ``D^pm`` stacks
    forward/backward differences along every axis and ``S^pm`` holds sigma
    sampled at the cell centres ``x +- h/2``.  In one dimension this is the
    classical three-point flux form with half-node conductivities.
    """
    grid = sigma.grid
    n, h = grid.n, grid.dx
    xs = grid.coords().reshape(-1, n)
    total = None
    for sign in (1, -1):
        D = _difference_matrices(grid, sign)
        S = sigma.at(xs + sign * 0.5 * h).reshape(-1, n, n)
        term = None
        for i, j in itertools.product(range(n), repeat=2):
            piece = D[i].T @ sp.diags(S[:, i, j]) @ D[j]
            term = piece if term is None else term + piece
        total = term if total is None else total + term
    A = 0.5 * total
    A = 0.5 * (A + A.T)
    return A.tocsr()


@dataclass(eq=False)
class FourierOperator:
    """Constant-coefficient operator diagonalized by the spatial FFT."""

    grid: Grid
    matrix: np.ndarray
    symbol: str = "continuum"
    mu: np.ndarray = field(init=False, repr=False)
    kind: str = field(default="fourier", init=False)

    def __post_init__(self):
        g = self.grid
        ks = np.meshgrid(*g.wavenumbers(), indexing="ij")
        m = np.atleast_2d(self.matrix)
        if self.symbol == "continuum":
            mu = sum(m[i, j] * ks[i] * ks[j] for i in range(g.n) for j in range(g.n))
        elif self.symbol == "fd":
            h = g.dx
            fwd = [(np.exp(1j * k * h) - 1.0) / h for k in ks]
            bwd = [(1.0 - np.exp(-1j * k * h)) / h for k in ks]
            mu = 0.5 * sum(m[i, j] * (np.conj(fwd[i]) * fwd[j] + np.conj(bwd[i]) * bwd[j])
                           for i in range(g.n) for j in range(g.n)).real
        else:
            raise ValueError(f"unknown symbol '{self.symbol}'")
        self.mu = np.maximum(np.asarray(mu, float).ravel(), 0.0)

    @property
    def size(self) -> int:
        return self.mu.size

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Modal coefficients; the spatial axes of ``a`` are trailing."""
        n = self.grid.n
        axes = tuple(range(-n, 0))
        c = np.fft.fftn(a, axes=axes, norm="ortho")
        return c.reshape(c.shape[: c.ndim - n] + (-1,))

    def inverse(self, c: np.ndarray, real: bool = True) -> np.ndarray:
        n = self.grid.n
        c = c.reshape(c.shape[:-1] + self.grid.spatial_shape)
        a = np.fft.ifftn(c, axes=tuple(range(-n, 0)), norm="ortho")
        return a.real if real else a

    def unique_mu(self, decimals: int = 12):
        key = np.round(self.mu, decimals)
        _, first, inv = np.unique(key, return_index=True, return_inverse=True)
        return self.mu[first], inv.ravel()


@dataclass(eq=False)
class EigenOperator:
    """Finite-difference operator of a variable conductivity, dense eigenbasis."""

    sigma: ConductivityField
    mu: np.ndarray = field(init=False, repr=False)
    vectors: np.ndarray = field(init=False, repr=False)
    kind: str = field(default="eigen", init=False)

    def __post_init__(self):
        A = stiffness_matrix(self.sigma).toarray()
        mu, V = np.linalg.eigh(A)
        self.mu = np.maximum(mu, 0.0)
        self.vectors = V

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    @property
    def size(self) -> int:
        return self.mu.size

    def forward(self, a: np.ndarray) -> np.ndarray:
        n = self.grid.n
        flat = a.reshape(a.shape[: a.ndim - n] + (-1,))
        return flat @ self.vectors

    def inverse(self, c: np.ndarray, real: bool = True) -> np.ndarray:
        out = c @ self.vectors.T
        if real and np.iscomplexobj(out):
            out = out.real
        return out.reshape(out.shape[:-1] + self.grid.spatial_shape)

    def unique_mu(self, decimals: int = 12):
        key = np.round(self.mu, decimals)
        _, first, inv = np.unique(key, return_index=True, return_inverse=True)
        return self.mu[first], inv.ravel()


def discrete_operator(sigma: ConductivityField):
    """Finite-difference operator in its cheapest diagonal form."""
    if sigma.is_constant:
        return FourierOperator(sigma.grid, sigma.constant_matrix(), symbol="fd")
    return EigenOperator(sigma)


def continuum_operator(sigma: ConductivityField) -> FourierOperator:
    """Spectral operator with the exact symbol; constant conductivity only."""
    if not sigma.is_constant:
        raise ValueError("the continuum symbol needs a constant conductivity")
    return FourierOperator(sigma.grid, sigma.constant_matrix(), symbol="continuum")
