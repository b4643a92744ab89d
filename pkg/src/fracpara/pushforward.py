"""Diffeomorphisms of the domain and the induced change of conductivity.

For ``Phi`` with Jacobian ``J`` the transformed coefficients are

    (Phi_* sigma)(Phi(x)) = J(x) sigma(x) J(x)^T / det J(x)
    (Phi_* c)(Phi(x))     = c(x) / det J(x)

so that ``v o Phi^(-1)`` solves the transformed local heat equation whenever
``v`` solves the original one.  When ``Phi`` is the identity near the
boundary the two problems share their Cauchy data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conductivity import ConductivityField
from .dnmap import DNMatrix, assemble_dn_matrix, solve_local
from .grid import DomainMasks, Grid, GridError, SpaceTimeField


@dataclass(eq=False)
class DiffeoMap:
    """A smooth map of R^n with its Jacobian.

    Parameters
    ----------
    name : str
    n : int
    phi : callable
        ``(..., n) -> (..., n)``.
    jacobian : callable
        ``(..., n) -> (..., n, n)`` with ``J[..., i, j] = d phi_i / d x_j``.
    params : dict
        Family parameters, recorded in outputs.
    """

    name: str
    n: int
    phi: Callable
    jacobian: Callable
    params: dict

    def __call__(self, x):
        return self.phi(np.asarray(x, float))

    def det(self, x) -> np.ndarray:
        return np.linalg.det(self.jacobian(np.asarray(x, float)))

    def inverse(self, z, tol: float = 1e-8, max_iter: int = 50) -> np.ndarray:
        """Newton iteration for ``phi(x) = z`` started at ``x = z``."""
        z = np.asarray(z, float)
        x = z.copy()
        for _ in range(max_iter):
            r = self.phi(x) - z
            err = np.max(np.abs(r), initial=0.0)
            if err < tol:
                return x
            x = x - np.linalg.solve(self.jacobian(x), r[..., None])[..., 0]
        if np.max(np.abs(self.phi(x) - z), initial=0.0) >= tol:
            raise RuntimeError(f"inverse of '{self.name}' did not converge to {tol:g}")
        return x

    def check_injective(self, grid: Grid) -> float:
        """Smallest Jacobian determinant on the lattice; must be positive."""
        dmin = float(np.min(self.det(grid.coords())))
        if dmin <= 0:
            raise GridError(f"'{self.name}' is not orientation preserving (det J = {dmin:.3g})")
        return dmin


def _profile(r):
    """``(1 - r^2)^3`` on the unit ball and its derivative in ``r``."""
    inside = np.abs(r) < 1
    q = np.where(inside, 1.0 - r * r, 0.0)
    return q ** 3, np.where(inside, -6.0 * r * q ** 2, 0.0)


def cubic_bump_1d(center: float = 0.0, width: float = 0.7, strength: float = 0.3) -> DiffeoMap:
    """``x + strength * width * r (1 - r^2)^3`` with ``r = (x - center) / width``.

    Fixes every point with ``|x - center| >= width``; injective for
    ``strength < 1``.
    """
    if not 0 <= strength < 1:
        raise ValueError("strength must lie in [0, 1)")

    def phi(x):
        r = (x[..., 0] - center) / width
        p, _ = _profile(r)
        return (x[..., 0] + strength * width * r * p)[..., None]

    def jac(x):
        r = (x[..., 0] - center) / width
        p, dp = _profile(r)
        return (1.0 + strength * (p + r * dp))[..., None, None]

    return DiffeoMap("cubic_bump_1d", 1, phi, jac, dict(center=center, width=width, strength=strength))


def radial_bump_2d(center=(0.0, 0.0), radius: float = 0.7, strength: float = 0.3) -> DiffeoMap:
    """``c + (x - c)(1 + strength * psi(|x - c| / radius))`` with ``psi = (1 - rho^2)^3``."""
    if not 0 <= strength < 0.5:
        raise ValueError("strength must lie in [0, 0.5) for injectivity")
    c = np.asarray(center, float)

    def phi(x):
        d = x - c
        rho = np.linalg.norm(d, axis=-1) / radius
        p, _ = _profile(rho)
        return c + d * (1.0 + strength * p)[..., None]

    def jac(x):
        d = x - c
        dist = np.linalg.norm(d, axis=-1)
        rho = dist / radius
        p, dp = _profile(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(dist[..., None] > 0, d / dist[..., None], 0.0)
        # d/dx [d * g(rho)] = g I + d (grad g)^T with grad g = g'(rho) unit / radius
        scale = 1.0 + strength * p
        outer = d[..., :, None] * (strength * dp / radius)[..., None, None] * unit[..., None, :]
        return scale[..., None, None] * np.eye(2) + outer

    return DiffeoMap("radial_bump_2d", 2, phi, jac, dict(center=list(c), radius=radius, strength=strength))


def shift_bump(center, width: float = 0.6, strength: float = 0.4, axis: int = 0) -> DiffeoMap:
    """``x + strength * width * (1 - r^2)^3 e_axis``; centred on a boundary point it moves the boundary."""
    c = np.atleast_1d(np.asarray(center, float))
    n = c.size

    def phi(x):
        r = np.linalg.norm(x - c, axis=-1) / width
        p, _ = _profile(r)
        out = np.array(x, float)
        out[..., axis] += strength * width * p
        return out

    def jac(x):
        d = x - c
        dist = np.linalg.norm(d, axis=-1)
        r = dist / width
        _, dp = _profile(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(dist[..., None] > 0, d / dist[..., None], 0.0)
        J = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
        J[..., axis, :] += strength * dp[..., None] * unit
        return J

    return DiffeoMap("shift_bump", n, phi, jac, dict(center=list(c), width=width, strength=strength, axis=axis))


def diffeo_family(name: str, **params) -> DiffeoMap:
    """Look up a family by name."""
    table = {"cubic_bump_1d": cubic_bump_1d, "radial_bump_2d": radial_bump_2d, "shift_bump": shift_bump}
    if name not in table:
        raise ValueError(f"unknown diffeomorphism family '{name}'")
    return table[name](**params)


def pushforward_sigma(sigma: ConductivityField, diffeo: DiffeoMap) -> ConductivityField:
    """``J sigma J^T / det J`` composed with the inverse map, evaluable off the lattice."""
    if diffeo.n != sigma.grid.n:
        raise GridError("map and conductivity live in different dimensions")

    def func(z):
        z = np.asarray(z, float)
        x = diffeo.inverse(z)
        J = diffeo.jacobian(x)
        det = np.linalg.det(J)
        S = sigma.at(x)
        return J @ S @ np.swapaxes(J, -1, -2) / det[..., None, None]

    return ConductivityField.from_function(sigma.grid, func, f"{sigma.name}|push:{diffeo.name}")


def pushforward_density(grid: Grid, diffeo: DiffeoMap, density: Callable | None = None) -> np.ndarray:
    """Nodal values of ``(c / det J) o Phi^(-1)``; ``density`` defaults to 1."""
    z = grid.coords()
    x = diffeo.inverse(z)
    base = np.ones(z.shape[:-1]) if density is None else np.asarray(density(x), float)
    return base / diffeo.det(x)


def solve_transformed(sigma: ConductivityField, diffeo: DiffeoMap, g: np.ndarray, masks: DomainMasks,
                      substeps: int = 8) -> SpaceTimeField:
    """Local solve of ``(Phi_* 1) dv/dt = div(Phi_* sigma grad v)`` with ring data ``g``."""
    grid = sigma.grid
    return solve_local(pushforward_sigma(sigma, diffeo), g, masks,
                       capacity=pushforward_density(grid, diffeo), substeps=substeps)


def boundary_displacement(diffeo: DiffeoMap, masks: DomainMasks) -> float:
    """Largest ``|Phi(x) - x|`` over the boundary ring and the exterior of the domain."""
    grid = masks.grid
    outside = ~masks.omega
    pts = grid.coords()[outside]
    return float(np.max(np.abs(diffeo(pts) - pts), initial=0.0))


def blockwise_discrepancy(reference: DNMatrix, other: DNMatrix, floor: float = 1e-6) -> float:
    """Largest relative discrepancy over (response node, data node) blocks.

    Blocks whose reference norm is below ``floor`` times the largest block
    norm carry no coupling and are skipped.  Unlike the global Frobenius
    ratio this is not dominated by the same-node couplings, whose norm
    grows under refinement while cross couplings stay bounded; the floor
    must therefore stay far below the cross/same ratio (about 1e-2 at
    fine 1D grids).
    """
    rn = reference.rows[:, 0]
    cn = reference.cols[:, 0]
    worst, norms = 0.0, {}
    for a in np.unique(rn):
        for b in np.unique(cn):
            blk = np.ix_(rn == a, cn == b)
            norms[a, b] = (np.linalg.norm(reference.entries[blk]), np.linalg.norm(other.entries[blk] - reference.entries[blk]))
    top = max(v[0] for v in norms.values())
    for ref_norm, diff in norms.values():
        if ref_norm >= floor * top:
            worst = max(worst, diff / ref_norm)
    return float(worst)


@dataclass
class InvarianceResult:
    """Discrepancies between the two local DN matrices.

    ``discrepancy`` is the global relative Frobenius norm of the
    difference and ``blockwise`` the worst relative discrepancy over node
    pairs (see :func:`blockwise_discrepancy`).
    """

    discrepancy: float
    blockwise: float
    boundary_displacement: float
    original: DNMatrix
    transformed: DNMatrix

    def as_dict(self) -> dict:
        return {"discrepancy": self.discrepancy, "blockwise": self.blockwise,
                "boundary_displacement": self.boundary_displacement}


def check_cauchy_invariance(sigma: ConductivityField, diffeo: DiffeoMap, masks: DomainMasks,
                            nt: int | None = None, substeps: int = 8) -> InvarianceResult:
    """Compare the local DN maps of ``(sigma, 1)`` and ``(Phi_* sigma, Phi_* 1)``."""
    grid = sigma.grid
    diffeo.check_injective(grid)
    original = assemble_dn_matrix("local", sigma, masks, nt=nt, substeps=substeps)
    pushed = pushforward_sigma(sigma, diffeo)
    capacity = pushforward_density(grid, diffeo)
    transformed = assemble_dn_matrix("local", pushed, masks, nt=nt, capacity=capacity, substeps=substeps)
    diff = np.linalg.norm(transformed.entries - original.entries) / np.linalg.norm(original.entries)
    return InvarianceResult(float(diff), blockwise_discrepancy(original, transformed),
                            boundary_displacement(diffeo, masks), original, transformed)
