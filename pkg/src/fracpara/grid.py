"""Space-time lattices, field containers, y-weighted quadrature and transforms."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridError(ValueError):
    """Raised when a grid or mask specification is inconsistent."""


@dataclass(frozen=True)
class GridSpec:
    """Parameters of the space-time box and of the graded extension grid.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 or 2.
    L : float
        Half-width of the spatial box ``[-L, L]**n``.
    Nx : int
        Points per spatial axis (periodic lattice, right end excluded).
    T : float
        Half-width of the time window ``(-T, T)``.
    Nt : int
        Number of time points.
    Ymax : float, optional
        Cap of the extension variable. Defaults to ``10 * sqrt(2 T)``.
    Ny : int
        Number of extension intervals; the y-grid has ``Ny + 1`` nodes.
    grade : float
        Grading exponent, ``y_j = Ymax * (j / Ny) ** grade``.
    """

    n: int
    L: float
    Nx: int
    T: float
    Nt: int
    Ymax: float | None = None
    Ny: int = 32
    grade: float = 2.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GridError(f"spatial dimension must be 1 or 2, got n={self.n}")
        if not (self.L > 0 and self.T > 0):
            raise GridError("box half-widths L and T must be positive")
        for name in ("Nx", "Nt", "Ny"):
            if int(getattr(self, name)) < 4:
                raise GridError(f"{name} must be at least 4")
        if self.grade < 1:
            raise GridError("grading exponent must be >= 1")
        if self.Ymax is None:
            object.__setattr__(self, "Ymax", 10.0 * np.sqrt(2.0 * self.T))
        elif self.Ymax <= 0:
            raise GridError("Ymax must be positive")

    def refined(self, factor: int) -> "GridSpec":
        """Return the spec with all point counts multiplied by ``factor``."""
        return GridSpec(self.n, self.L, self.Nx * factor, self.T, self.Nt * factor,
                        self.Ymax, self.Ny * factor, self.grade)

    def as_dict(self) -> dict:
        return {"n": self.n, "L": self.L, "Nx": self.Nx, "T": self.T, "Nt": self.Nt,
                "Ymax": float(self.Ymax), "Ny": self.Ny, "grade": self.grade}

    def digest(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic (t, x) lattice plus a graded y lattice."""

    spec: GridSpec
    x: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def dx(self) -> float:
        return 2.0 * self.spec.L / self.spec.Nx

    @property
    def dt(self) -> float:
        return 2.0 * self.spec.T / self.spec.Nt

    @property
    def spatial_shape(self) -> tuple:
        return (self.spec.Nx,) * self.spec.n

    @property
    def shape(self) -> tuple:
        return (self.spec.Nt,) + self.spatial_shape

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.spec.n

    @property
    def n_nodes(self) -> int:
        return self.spec.Nx ** self.spec.n

    def coords(self) -> np.ndarray:
        """Spatial node coordinates, shape ``(*spatial_shape, n)``."""
        axes = np.meshgrid(*([self.x] * self.n), indexing="ij")
        return np.stack(axes, axis=-1)

    def times(self, nt: int | None = None) -> np.ndarray:
        """Time nodes, optionally continuing the lattice past ``T``."""
        nt = self.spec.Nt if nt is None else nt
        return -self.spec.T + self.dt * np.arange(nt)

    def index_of(self, coord) -> np.ndarray:
        """Nearest lattice index of spatial coordinate(s)."""
        return np.rint((np.asarray(coord, float) + self.spec.L) / self.dx).astype(int)

    def coordinate_of(self, index) -> np.ndarray:
        return -self.spec.L + self.dx * np.asarray(index, float)

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers of the spatial FFT along each axis."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.spec.Nx, d=self.dx)
        return [k] * self.n

    def frequencies(self, nt: int | None = None) -> np.ndarray:
        """Angular time frequencies of the temporal FFT."""
        nt = self.spec.Nt if nt is None else nt
        return 2.0 * np.pi * np.fft.fftfreq(nt, d=self.dt)


def build_grid(spec: GridSpec) -> Grid:
    """Materialize the lattices described by ``spec``.

    Examples
    --------
    >>> g = build_grid(GridSpec(n=1, L=1.0, Nx=8, T=1.0, Nt=8, Ymax=1.0, Ny=4))
    >>> g.x[:3]
    array([-1.  , -0.75, -0.5 ])
    >>> g.y
    array([0.    , 0.0625, 0.25  , 0.5625, 1.    ])
    """
    x = -spec.L + (2.0 * spec.L / spec.Nx) * np.arange(spec.Nx)
    t = -spec.T + (2.0 * spec.T / spec.Nt) * np.arange(spec.Nt)
    y = graded_nodes(spec.Ymax, spec.Ny, spec.grade)
    return Grid(spec, x, t, y)


def graded_nodes(ymax: float, ny: int, grade: float) -> np.ndarray:
    """Power-law graded nodes on ``[0, ymax]`` clustered at zero."""
    return ymax * (np.arange(ny + 1) / ny) ** grade


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Samples ``u(t, x)`` on the lattice, shape ``(nt, *spatial_shape)``.

    ``nt`` may exceed ``grid.spec.Nt``: the lattice then continues with the
    same step beyond ``T``.  Causal fields vanish on the first time slice
    (``t = -T``) and are treated as zero before it; non-causal fields are
    treated as periodic in time.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    causal: bool = True

    def __post_init__(self):
        vals = np.array(self.values)
        if vals.shape[1:] != self.grid.spatial_shape:
            raise GridError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if self.causal:
            vals[0] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.grid.times(self.nt)

    def with_values(self, values) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, values, self.causal)

    def truncated(self, nt: int | None = None) -> "SpaceTimeField":
        nt = self.grid.spec.Nt if nt is None else nt
        return SpaceTimeField(self.grid, self.values[:nt], self.causal)

    def padded(self, nt: int) -> "SpaceTimeField":
        """Continue a causal field by zeros up to ``nt`` time slices."""
        extra = nt - self.nt
        if extra <= 0:
            return self.truncated(nt)
        pad = np.zeros((extra,) + self.values.shape[1:], self.values.dtype)
        return SpaceTimeField(self.grid, np.concatenate([self.values, pad]), self.causal)

    def norm(self) -> float:
        """Lattice L2 norm including the cell measure."""
        w = self.grid.dt * self.grid.cell_volume
        return float(np.sqrt(w * np.sum(np.abs(self.values) ** 2)))

    @classmethod
    def zeros(cls, grid: Grid, nt: int | None = None, causal: bool = True) -> "SpaceTimeField":
        nt = grid.spec.Nt if nt is None else nt
        return cls(grid, np.zeros((nt,) + grid.spatial_shape), causal)

    @classmethod
    def from_function(cls, grid: Grid, func, causal: bool = True, nt: int | None = None):
        """Sample ``func(t, x)``; ``x`` has a trailing axis of length ``n``."""
        t = grid.times(nt)
        xs = grid.coords()
        tt = t.reshape((-1,) + (1,) * (grid.n + 1))
        vals = func(tt[..., 0], xs[None, ...])
        return cls(grid, np.broadcast_to(vals, (t.size,) + grid.spatial_shape), causal)


@dataclass(frozen=True, eq=False)
class ExtensionField:
    """Samples ``U(t, x, y)``; the last axis runs over the y-nodes ``y``."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    s: float
    y: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        y = self.grid.y if self.y is None else np.asarray(self.y, float)
        vals = np.asarray(self.values)
        if vals.shape[-1] != y.size or vals.shape[1:-1] != self.grid.spatial_shape:
            raise GridError("extension field shape does not match its grid")
        if y[0] != 0.0:
            raise GridError("the first y-node must be the trace plane y = 0")
        if not np.all(np.isfinite(vals)):
            raise GridError("extension field contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "y", y)

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    def trace(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, self.values[..., 0], causal=True)

    def slice_y(self, j: int) -> np.ndarray:
        return self.values[..., j]


def _box_mask(grid: Grid, box: Sequence[Sequence[float]]) -> np.ndarray:
    if len(box) != grid.n:
        raise GridError(f"box needs {grid.n} intervals, got {len(box)}")
    xs = grid.coords()
    mask = np.ones(grid.spatial_shape, bool)
    for axis, (lo, hi) in enumerate(box):
        if not lo < hi:
            raise GridError(f"empty interval ({lo}, {hi}) on axis {axis}")
        mask &= (xs[..., axis] > lo + 1e-12) & (xs[..., axis] < hi - 1e-12)
    return mask


@dataclass(frozen=True, eq=False)
class DomainMasks:
    """Masks of the domain and of the exterior observation set.

    Attributes
    ----------
    omega, w_set : ndarray of bool
        Node masks of the open box domain and of the exterior data set.
    boundary : ndarray of int, shape (K, n)
        Lattice indices of the discrete boundary ring (nodes outside the
        domain within one cell of it), in lexicographic order.
    normals : ndarray, shape (K, n)
        Outward unit normals; corners carry the diagonal direction.
    """

    grid: Grid
    omega: np.ndarray = field(repr=False)
    w_set: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    omega_box: tuple = ()
    w_box: tuple = ()

    @classmethod
    def from_boxes(cls, grid: Grid, omega_box, w_box) -> "DomainMasks":
        omega = _box_mask(grid, omega_box)
        w_set = _box_mask(grid, w_box)
        if not omega.any() or not w_set.any():
            raise GridError("domain and exterior set must each contain lattice nodes")
        if (omega & w_set).any():
            raise GridError("domain and exterior set overlap")
        oi = np.argwhere(omega)
        wi = np.argwhere(w_set)
        sep = np.min(np.max(np.abs(oi[:, None, :] - wi[None, :, :]), axis=-1))
        if sep < 2:
            raise GridError(f"exterior set lies {sep} cell(s) from the domain; need >= 2")
        lo, hi = oi.min(axis=0), oi.max(axis=0)
        if np.any(hi - lo < 2):
            raise GridError("domain must be at least three nodes wide on every axis")
        if np.any(lo < 3) or np.any(hi > grid.spec.Nx - 4):
            raise GridError("domain must stay three cells away from the box edge")
        boundary, normals = [], []
        ranges = [range(a - 1, b + 2) for a, b in zip(lo, hi)]
        for idx in np.ndindex(*[len(r) for r in ranges]):
            node = np.array([r[i] for r, i in zip(ranges, idx)])
            if omega[tuple(node)]:
                continue
            nrm = np.where(node < lo, -1.0, np.where(node > hi, 1.0, 0.0))
            boundary.append(node)
            normals.append(nrm / np.linalg.norm(nrm))
        return cls(grid, omega, w_set, np.array(boundary), np.array(normals),
                   tuple(map(tuple, omega_box)), tuple(map(tuple, w_box)))

    @property
    def omega_index(self) -> np.ndarray:
        """Flat node indices of the domain (row-major)."""
        return np.flatnonzero(self.omega.ravel())

    @property
    def w_index(self) -> np.ndarray:
        return np.flatnonzero(self.w_set.ravel())

    @property
    def boundary_index(self) -> np.ndarray:
        return np.ravel_multi_index(tuple(self.boundary.T), self.grid.spatial_shape)

    @property
    def closure(self) -> np.ndarray:
        """Mask of the domain together with its boundary ring."""
        m = self.omega.copy()
        m[tuple(self.boundary.T)] = True
        return m


def _cell_moments(y: np.ndarray, exponent: float):
    """Integrals of ``y**e`` against the two hat functions of every cell."""
    a, b = y[:-1], y[1:]
    e = exponent
    i0 = (b ** (e + 1) - a ** (e + 1)) / (e + 1)
    i1 = (b ** (e + 2) - a ** (e + 2)) / (e + 2)
    h = b - a
    left = (b * i0 - i1) / h
    right = (i1 - a * i0) / h
    return left, right


def _tail_estimate(f: np.ndarray, y: np.ndarray, exponent: float, floor: float = 1e-13) -> np.ndarray:
    """Power-law extrapolation of ``int_{Ymax}^inf y**e f dy`` from the last two nodes.

    End samples below ``floor`` times the largest sample count as rounding
    noise and contribute no tail.
    """
    f1, f0 = np.abs(f[..., -1]), np.abs(f[..., -2])
    noise = floor * (np.max(np.abs(f)) if np.size(f) else 0.0)
    f1 = np.where(np.maximum(f1, f0) <= noise, 0.0, f1)
    y1, y0 = y[-1], y[-2]
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.log(f1 / f0) / np.log(y1 / y0)
        rate = -(exponent + slope) - 1.0
        tail = np.where(rate > 0, f1 * y1 ** (exponent + 1) / rate, np.inf)
    return np.where(f1 == 0, 0.0, np.where(np.isfinite(slope), tail, np.where(f1 < f0, 0.0, np.inf)))


def weighted_y_integral(f, y, exponent: float, warn: bool = True):
    """Integrate ``y**exponent * f(y)`` over ``[0, y[-1]]``.

    The rule is exact whenever ``f`` is piecewise linear on the nodes,
    which keeps the integrable endpoint singularity of the weight under
    control on graded grids.

    Parameters
    ----------
    f : array_like
        Samples with the y-nodes on the last axis.
    y : array_like
        Increasing nodes starting at 0.
    exponent : float
        Weight exponent, must exceed -1.
    warn : bool
        Emit a warning when the estimated tail beyond the last node exceeds
        1 % of the integral.

    Returns
    -------
    value, tail : ndarray
        The quadrature value and the estimated remainder beyond ``y[-1]``.
    """
    if exponent <= -1:
        raise ValueError("weight exponent must be > -1 for integrability at y = 0")
    f = np.asarray(f)
    y = np.asarray(y, float)
    left, right = _cell_moments(y, exponent)
    value = f[..., :-1] @ left + f[..., 1:] @ right
    tail = _tail_estimate(f, y, exponent)
    if warn:
        big = np.abs(tail) > 0.01 * np.maximum(np.abs(value), 1e-300)
        # ignore entries that are negligible relative to the largest one
        scale = np.max(np.abs(value)) if np.size(value) else 0.0
        big &= np.abs(value) > 1e-6 * scale
        if np.any(big):
            warnings.warn("y-integral tail estimate exceeds 1% of the integral", RuntimeWarning,
                          stacklevel=2)
    return value, tail


def weighted_y_cumulative(f, y, exponent: float) -> np.ndarray:
    """``int_{y_j}^{y[-1]} mu**exponent f(mu) dmu`` for every node ``y_j``.

    Uses the same piecewise-linear product rule as :func:`weighted_y_integral`,
    accumulated from the top node downward.
    """
    f = np.asarray(f)
    left, right = _cell_moments(np.asarray(y, float), exponent)
    cells = f[..., :-1] * left + f[..., 1:] * right
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    out[..., :-1] = np.cumsum(cells[..., ::-1], axis=-1)[..., ::-1]
    return out


def fourier_forward(u: SpaceTimeField) -> np.ndarray:
    """Unitary space-time DFT of a field (periodic box convention)."""
    return np.fft.fftn(u.values, norm="ortho")


def fourier_inverse(spectrum: np.ndarray, grid: Grid, real: bool = True,
                    causal: bool = False) -> SpaceTimeField:
    """Inverse of :func:`fourier_forward`."""
    vals = np.fft.ifftn(spectrum, norm="ortho")
    if real:
        vals = vals.real
    return SpaceTimeField(grid, vals, causal=causal)
