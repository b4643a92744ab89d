"""Symmetric positive-definite conductivity fields and named smooth families."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, GridError


def smooth_bump(r):
    """C-infinity bump ``exp(1 - 1/(1 - r**2))`` for ``|r| < 1``, zero outside."""
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Matrix field ``sigma(x)`` sampled at the spatial nodes.

    Parameters
    ----------
    grid : Grid
    values : ndarray, shape ``(*spatial_shape, n, n)``
    func : callable, optional
        Closed-form evaluator ``points[..., n] -> matrices[..., n, n]`` used
        for off-node (staggered) samples.  Without it staggered samples
        are averages of neighbouring nodes.
    name : str
        Label recorded in diagnostics.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    func: Callable | None = field(default=None, repr=False)
    name: str = "custom"

    def __post_init__(self):
        vals = np.array(self.values, float)
        n = self.grid.n
        if vals.shape != self.grid.spatial_shape + (n, n):
            raise GridError("conductivity values must have shape (*spatial, n, n)")
        if not np.allclose(vals, np.swapaxes(vals, -1, -2), atol=1e-12):
            raise GridError("conductivity must be symmetric at every node")
        vals = 0.5 * (vals + np.swapaxes(vals, -1, -2))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.lam <= 0:
            raise GridError("conductivity is not positive definite")

    @property
    def lam(self) -> float:
        """Ellipticity constant: spectrum of every sigma(x) lies in [lam, 1/lam]."""
        ev = np.linalg.eigvalsh(self.values)
        lo, hi = ev.min(), ev.max()
        if lo <= 0:
            return float(lo)
        return float(min(lo, 1.0 / hi))

    @property
    def is_constant(self) -> bool:
        flat = self.values.reshape(-1, self.grid.n, self.grid.n)
        return bool(np.allclose(flat, flat[0], rtol=0, atol=1e-14))

    @property
    def is_identity(self) -> bool:
        return self.is_constant and bool(np.allclose(self.values.reshape(-1, self.grid.n, self.grid.n)[0],
                                                     np.eye(self.grid.n), rtol=0, atol=1e-14))

    def constant_matrix(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("conductivity is not constant")
        return self.values.reshape(-1, self.grid.n, self.grid.n)[0].copy()

    def digest(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.values).tobytes())
        h.update(self.grid.spec.digest().encode())
        return h.hexdigest()[:16]

    def identity_outside(self, mask: np.ndarray) -> bool:
        """True when sigma equals the identity at every node outside ``mask``."""
        eye = np.eye(self.grid.n)
        return bool(np.allclose(self.values[~mask], eye, atol=1e-12))

    def at(self, points) -> np.ndarray:
        """Evaluate at arbitrary points; node values are clamped beyond the box."""
        points = np.asarray(points, float)
        if self.func is not None:
            return np.asarray(self.func(points), float)
        from scipy.interpolate import RegularGridInterpolator

        g = self.grid
        ax = np.append(g.x, g.spec.L)
        vals = np.concatenate([self.values, np.take(self.values, [0], axis=0)], axis=0)
        if g.n == 2:
            vals = np.concatenate([vals, np.take(vals, [0], axis=1)], axis=1)
        interp = RegularGridInterpolator([ax] * g.n, vals, bounds_error=False, fill_value=None)
        clipped = np.clip(points, -g.spec.L, g.spec.L)
        return interp(clipped.reshape(-1, g.n)).reshape(points.shape[:-1] + (g.n, g.n))

    # constructors -----------------------------------------------------

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, name: str = "custom") -> "ConductivityField":
        return cls(grid, func(grid.coords()), func, name)

    @classmethod
    def identity(cls, grid: Grid) -> "ConductivityField":
        return cls.constant(grid, np.eye(grid.n), name="identity")

    @classmethod
    def constant(cls, grid: Grid, matrix, name: str = "constant") -> "ConductivityField":
        m = np.atleast_2d(np.asarray(matrix, float))
        if m.shape != (grid.n, grid.n):
            raise GridError(f"constant conductivity must be {grid.n}x{grid.n}")

        def func(p):
            return np.broadcast_to(m, np.shape(p)[:-1] + m.shape).copy()

        return cls.from_function(grid, func, name)

    @classmethod
    def family(cls, grid: Grid, name: str, **params) -> "ConductivityField":
        """Named smooth families.

        ``anisotropic_bump``
            ``I + amplitude * bump(|x - center| / radius) * M`` with a fixed
            symmetric direction matrix ``M``; equals the identity outside
            the ball of the given radius.
        ``isotropic_bump``
            ``(1 + amplitude * bump) * I``.
        """
        n = grid.n
        center = np.asarray(params.get("center", np.zeros(n)), float).reshape(n)
        radius = float(params.get("radius", 0.8))
        amp = float(params.get("amplitude", 0.5))
        if name == "anisotropic_bump":
            direction = np.asarray(params.get("direction", [[1.0]] if n == 1 else [[1.0, 0.4], [0.4, 0.3]]), float)
        elif name == "isotropic_bump":
            direction = np.eye(n)
        else:
            raise GridError(f"unknown conductivity family '{name}'")
        if direction.shape != (n, n):
            raise GridError("family direction matrix has the wrong shape")

        def func(p):
            p = np.asarray(p, float)
            r = np.linalg.norm(p - center, axis=-1) / radius
            b = amp * smooth_bump(r)
            return np.eye(n) + b[..., None, None] * direction

        return cls.from_function(grid, func, name)
