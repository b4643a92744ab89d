"""Local and exterior-data (nonlocal) forward solvers and their DN maps.

The nonlocal operator on the lattice is the causal Toeplitz operator of
:func:`fracpara.fracop.apply_balakrishnan`; because it is block lower
triangular in time, the constrained problem ``A_s u = 0`` in the domain,
``u = f`` outside, is solved exactly by forward substitution in time.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conductivity import ConductivityField
from .fracop import balakrishnan_weights, modal_causal_convolution
from .grid import DomainMasks, Grid, GridError, SpaceTimeField
from .heat_kernel import HeatKernel, build_discrete
from .spatial import stiffness_matrix
from .tauquad import DEFAULT_QUADRATURE, TauQuadrature

log = logging.getLogger(__name__)


def discrete_kernel(sigma: ConductivityField) -> HeatKernel:
    """Finite-difference heat kernel without tables (propagation only)."""
    return build_discrete(sigma, [])


# ----------------------------------------------------------------------
# nonlocal problem


@dataclass(eq=False)
class NonlocalOperator:
    """``(d/dt - div(sigma grad))^s`` on the lattice as causal modal Toeplitz weights."""

    kernel: HeatKernel
    s: float
    nt: int
    quad: TauQuadrature = DEFAULT_QUADRATURE
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = balakrishnan_weights(self.grid, self.s, self.kernel, self.nt, self.quad)

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    @property
    def op(self):
        return self.kernel.operator

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to ``(..., nt, *spatial)`` arrays (leading batch axes allowed)."""
        op = self.op
        c = op.forward(values)
        lead = c.shape[:-2]
        c2 = c.reshape((-1,) + c.shape[-2:])
        out = np.stack([modal_causal_convolution(self.weights, ci) for ci in c2])
        out = out.reshape(lead + out.shape[1:])
        return op.inverse(out, real=not np.iscomplexobj(values))

    def dense(self) -> np.ndarray:
        """Dense lattice matrix (rows and columns ordered time-major)."""
        g = self.grid
        N = g.n_nodes
        size = self.nt * N
        eye = np.eye(size).reshape((size, self.nt) + g.spatial_shape)
        cols = self.apply(eye).reshape(size, size)
        return cols.T

    def solve(self, f: np.ndarray, masks: DomainMasks) -> np.ndarray:
        """Forward substitution in time for ``A u = 0`` in the domain, ``u = f`` outside.

        ``f`` has shape ``(..., nt, *spatial)``; entries inside the domain are ignored.
        """
        g = self.grid
        op = self.op
        f = np.asarray(f, float)
        lead = f.shape[: f.ndim - g.n - 1]
        F = f.reshape((-1, self.nt, g.n_nodes))
        B = F.shape[0]
        om = masks.omega_index
        ext = np.ones(g.n_nodes, bool)
        ext[om] = False
        k0 = self.weights[0]
        # restricted block of the instantaneous term
        unit = np.zeros((om.size, g.n_nodes))
        unit[np.arange(om.size), om] = 1.0
        unit = unit.reshape((om.size,) + g.spatial_shape)
        block = op.inverse(op.forward(unit) * k0, real=True).reshape(om.size, -1)[:, om].T
        lu = la.lu_factor(block)
        U = np.zeros((B, self.nt, g.n_nodes))
        U[:, :, ext] = F[:, :, ext]
        U[:, 0] = 0.0
        coeffs = np.zeros((B, self.nt, op.size), complex if op.kind == "fourier" else float)
        for j in range(1, self.nt):
            known = U[:, j].reshape((B,) + g.spatial_shape)
            acc = k0 * op.forward(known)
            for m in range(1, j + 1):
                acc = acc + self.weights[m] * coeffs[:, j - m]
            resid = op.inverse(acc, real=True).reshape(B, -1)[:, om]
            U[:, j, om] = la.lu_solve(lu, -resid.T).T
            coeffs[:, j] = op.forward(U[:, j].reshape((B,) + g.spatial_shape))
        return U.reshape(lead + (self.nt,) + g.spatial_shape)


def _check_exterior(f: SpaceTimeField, masks: DomainMasks):
    outside = ~masks.w_set
    if np.max(np.abs(f.values[:, outside]), initial=0.0) > 0:
        raise GridError("exterior datum must vanish outside the observation set")


def solve_nonlocal(sigma: ConductivityField, s: float, f: SpaceTimeField, masks: DomainMasks,
                   kernel: HeatKernel | None = None, operator: NonlocalOperator | None = None) -> SpaceTimeField:
    """Solve ``H^s u = 0`` in the domain cylinder with ``u = f`` outside and ``u = 0`` at ``t = -T``.

    Parameters
    ----------
    sigma : ConductivityField
    s : float
    f : SpaceTimeField
        Causal datum supported in the observation set.
    masks : DomainMasks
    kernel : HeatKernel, optional
        Spatial propagator; defaults to the finite-difference kernel of ``sigma``.
    """
    _check_exterior(f, masks)
    if operator is None:
        kernel = discrete_kernel(sigma) if kernel is None else kernel
        operator = NonlocalOperator(kernel, s, f.nt)
    u = operator.solve(f.values, masks)
    out = SpaceTimeField(f.grid, u, causal=True)
    fn = f.norm()
    if fn > 0:
        log.info("nonlocal solve: ||u|| / ||f|| = %.6g", out.norm() / fn)
    return out


def nonlocal_dn(sigma: ConductivityField, s: float, f: SpaceTimeField, masks: DomainMasks,
                kernel: HeatKernel | None = None, operator: NonlocalOperator | None = None) -> np.ndarray:
    """``H^s u_f`` restricted to the observation set, shape ``(nt, |W|)``."""
    if operator is None:
        kernel = discrete_kernel(sigma) if kernel is None else kernel
        operator = NonlocalOperator(kernel, s, f.nt)
    u = solve_nonlocal(sigma, s, f, masks, operator=operator)
    hu = operator.apply(u.values)
    return hu.reshape(hu.shape[0], -1)[:, masks.w_index]


# ----------------------------------------------------------------------
# local problem


def _interp_causal(g: np.ndarray, j: int, theta: float) -> np.ndarray:
    """Quadratic interpolation through slices j-2, j-1, j at time t_{j-1} + theta dt."""
    if j < 2:
        return (1 - theta) * g[j - 1] + theta * g[j]
    p = theta + 1.0
    return (p - 1) * (p - 2) / 2 * g[j - 2] - p * (p - 2) * g[j - 1] + p * (p - 1) / 2 * g[j]


def _local_march(sigma: ConductivityField, g: np.ndarray, masks: DomainMasks,
                 capacity: np.ndarray | None, substeps: int) -> np.ndarray:
    """BDF2 march for a batch of boundary data ``g`` of shape (B, nt, K); returns (B, nt, N)."""
    grid = sigma.grid
    B, nt, _ = g.shape
    A = stiffness_matrix(sigma)
    om = masks.omega_index
    bd = masks.boundary_index
    A_oo = A[om][:, om].tocsc()
    A_ob = A[om][:, bd].tocsr()
    other = np.setdiff1d(np.arange(grid.n_nodes), np.concatenate([om, bd]))
    if A[om][:, other].nnz:
        raise GridError("stencil reaches past the boundary ring")
    cap = np.ones(om.size) if capacity is None else np.asarray(capacity, float).ravel()[om]
    C = sp.diags(cap)
    h = grid.dt / substeps
    lu1 = spla.splu((C / h + A_oo).tocsc())
    lu2 = spla.splu((1.5 * C / h + A_oo).tocsc())
    V = np.zeros((B, nt, grid.n_nodes))
    V[:, :, bd] = g
    gt = np.moveaxis(g, 0, -1)  # (nt, K, B)
    cur = np.zeros((om.size, B))
    prev = None
    for j in range(1, nt):
        for k in range(1, substeps + 1):
            gk = _interp_causal(gt, j, k / substeps)
            if prev is None:
                new = lu1.solve(cap[:, None] * cur / h - A_ob @ gk)
            else:
                new = lu2.solve(cap[:, None] * (2.0 * cur - 0.5 * prev) / h - A_ob @ gk)
            prev, cur = cur, new
        V[:, j, om] = cur.T
    return V


def solve_local(sigma: ConductivityField, g: np.ndarray, masks: DomainMasks,
                capacity: np.ndarray | None = None, substeps: int = 8) -> SpaceTimeField:
    """Solve ``c dv/dt = div(sigma grad v)`` in the domain with Dirichlet data on the boundary ring.

    Parameters
    ----------
    sigma : ConductivityField
    g : ndarray, shape (nt, K)
        Values at the ordered boundary nodes; must vanish at ``t = -T``.
    masks : DomainMasks
    capacity : ndarray, optional
        Nodal capacity ``c`` (default 1).
    substeps : int
        BDF2 sub-steps per lattice step; data between lattice times use
        causal quadratic interpolation.

    Returns
    -------
    SpaceTimeField
        ``v`` inside the domain, ``g`` on the ring and zero elsewhere.
    """
    grid = sigma.grid
    g = np.asarray(g, float)
    if np.max(np.abs(g[0]), initial=0.0) > 1e-12 * max(np.max(np.abs(g)), 1.0):
        raise GridError("boundary data must vanish at the initial time")
    V = _local_march(sigma, g[None], masks, capacity, substeps)[0]
    return SpaceTimeField(grid, V.reshape((g.shape[0],) + grid.spatial_shape), causal=True)


def boundary_flux(v: np.ndarray, sigma: ConductivityField, masks: DomainMasks) -> np.ndarray:
    """``sigma grad v . nu`` at the boundary ring, shape ``(nt, K)``.

    Normal components use one-sided second-order differences pointing into
    the domain; tangential components use centred differences along the ring.
    """
    grid = sigma.grid
    n, h = grid.n, grid.dx
    vals = np.asarray(v).reshape((-1,) + grid.spatial_shape)
    out = np.zeros((vals.shape[0], len(masks.boundary)))
    for k, (node, nu) in enumerate(zip(masks.boundary, masks.normals)):
        grad = np.zeros((vals.shape[0], n))
        for ax in range(n):
            e = np.zeros(n, int)
            e[ax] = 1
            if nu[ax] != 0:
                d = int(np.sign(nu[ax]))
                p0 = vals[(slice(None),) + tuple(node)]
                p1 = vals[(slice(None),) + tuple(node - d * e)]
                p2 = vals[(slice(None),) + tuple(node - 2 * d * e)]
                grad[:, ax] = d * (3 * p0 - 4 * p1 + p2) / (2 * h)
            else:
                pp = vals[(slice(None),) + tuple(node + e)]
                pm = vals[(slice(None),) + tuple(node - e)]
                grad[:, ax] = (pp - pm) / (2 * h)
        sig = sigma.values[tuple(node)]
        out[:, k] = grad @ (sig @ nu)
    return out


def local_dn(sigma: ConductivityField, g: np.ndarray, masks: DomainMasks,
             capacity: np.ndarray | None = None, substeps: int = 8) -> np.ndarray:
    """Boundary flux of the local solution with Dirichlet data ``g``."""
    v = solve_local(sigma, g, masks, capacity, substeps)
    return boundary_flux(v.values, sigma, masks)


# ----------------------------------------------------------------------
# Cauchy data transfer


@dataclass
class CauchyPair:
    """Trace and flux of ``v`` on the boundary ring, plus the fields behind them."""

    trace: np.ndarray
    flux: np.ndarray
    v: SpaceTimeField
    u: SpaceTimeField

    def to_csv(self, path, grid: Grid, masks: DomainMasks):
        t = grid.times(self.trace.shape[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "x", "trace", "flux"])
            for j, tj in enumerate(t):
                for k, node in enumerate(masks.boundary):
                    xs = ";".join(f"{c:.6g}" for c in grid.coordinate_of(node))
                    w.writerow([f"{tj:.10g}", k, xs, f"{self.trace[j, k]:.12e}", f"{self.flux[j, k]:.12e}"])


def transfer_map(sigma: ConductivityField, s: float, f: SpaceTimeField, masks: DomainMasks,
                 kernel: HeatKernel | None = None) -> CauchyPair:
    """Exterior datum -> Cauchy data of ``v`` on the boundary ring.

    Chains the nonlocal solve, the kernel extension, the weighted y-integral
    and the boundary trace/flux evaluation.
    """
    from .extension import extend_kernel
    from .reduction import compute_v

    kernel = discrete_kernel(sigma) if kernel is None else kernel
    operator = NonlocalOperator(kernel, s, f.nt)
    u = solve_nonlocal(sigma, s, f, masks, operator=operator)
    ext = extend_kernel(u, s, kernel)
    v = compute_v(ext, s)
    flat = v.values.reshape(v.nt, -1)
    trace = flat[:, masks.boundary_index]
    flux = boundary_flux(v.values, sigma, masks)
    return CauchyPair(trace, flux, v, u)


# ----------------------------------------------------------------------
# DN matrices


@dataclass(eq=False)
class DNMatrix:
    """Dense DN map between (node, time) index sets.

    ``rows`` and ``cols`` are integer arrays of shape ``(R, 2)`` and
    ``(C, 2)`` holding (node position in its set, time index).  For a
    column, the time index is the first slice where the basis element is
    nonzero.
    """

    kind: str
    rows: np.ndarray
    cols: np.ndarray
    entries: np.ndarray
    meta: dict = field(default_factory=dict)

    def causal_violation(self) -> float:
        """Largest entry coupling a response time before the data time."""
        mask = self.rows[:, 1][:, None] < self.cols[:, 1][None, :]
        return float(np.max(np.abs(self.entries[mask]), initial=0.0))

    def save(self, path):
        path = Path(path)
        header = json.dumps({"kind": self.kind, **self.meta}, sort_keys=True)
        np.savez_compressed(path, entries=self.entries, rows=self.rows, cols=self.cols,
                            header=np.array(header))

    @classmethod
    def load(cls, path) -> "DNMatrix":
        with np.load(path) as data:
            meta = json.loads(str(data["header"]))
            kind = meta.pop("kind")
            return cls(kind, data["rows"], data["cols"], data["entries"], meta)


def time_mollifier(nt: int, j: int) -> np.ndarray:
    """Binomial (1/4, 1/2, 1/4) profile starting at slice ``j``."""
    prof = np.zeros(nt)
    for k, c in enumerate((0.25, 0.5, 0.25)):
        if j + k < nt:
            prof[j + k] = c
    return prof


_DN_CACHE: dict = {}


def _scenario_hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(str(p).encode())
    return h.hexdigest()[:16]


def assemble_dn_matrix(kind: str, sigma: ConductivityField, masks: DomainMasks, s: float | None = None,
                       nt: int | None = None, capacity: np.ndarray | None = None,
                       kernel: HeatKernel | None = None, substeps: int = 8) -> DNMatrix:
    """Assemble a DN map column by column on mollified node-time impulses.

    ``local``: data are boundary-ring impulses; responses are boundary fluxes.
    ``nonlocal``: data are impulses on the observation set (spatially
    mollified with the binomial stencil restricted to the set); responses are
    ``H^s u`` on the observation set.  Results are cached per scenario hash.
    """
    grid = sigma.grid
    nt = grid.spec.Nt if nt is None else nt
    cap_key = "none" if capacity is None else hashlib.sha256(np.ascontiguousarray(capacity).tobytes()).hexdigest()[:12]
    key = _scenario_hash(kind, sigma.digest(), s, nt, cap_key, masks.omega_box, masks.w_box, substeps,
                         None if kernel is None else kernel.digest())
    if key in _DN_CACHE:
        return _DN_CACHE[key]
    starts = np.arange(1, nt - 2)  # keep the full mollifier inside the window and off t = -T
    if kind == "local":
        K = len(masks.boundary)
        cols = np.array([(k, j) for k in range(K) for j in starts])
        data = np.zeros((len(cols), nt, K))
        for c, (k, j) in enumerate(cols):
            data[c, :, k] = time_mollifier(nt, j)
        V = _local_march(sigma, data, masks, capacity, substeps)
        entries = boundary_flux(V, sigma, masks).reshape(len(cols), -1).T
        rows = np.array([(k, j) for j in range(nt) for k in range(K)])
    elif kind == "nonlocal":
        if s is None:
            raise ValueError("nonlocal DN map needs the order s")
        kernel = discrete_kernel(sigma) if kernel is None else kernel
        operator = NonlocalOperator(kernel, s, nt)
        widx = masks.w_index
        cols = np.array([(k, j) for k in range(widx.size) for j in starts])
        data = np.zeros((len(cols), nt) + grid.spatial_shape)
        for c, (k, j) in enumerate(cols):
            spot = np.zeros(grid.spatial_shape)
            spot.ravel()[widx[k]] = 1.0
            for ax in range(grid.n):
                spot = 0.25 * np.roll(spot, -1, axis=ax) + 0.5 * spot + 0.25 * np.roll(spot, 1, axis=ax)
            spot *= masks.w_set
            data[c] = time_mollifier(nt, j).reshape((nt,) + (1,) * grid.n) * spot
        u = operator.solve(data, masks)
        hu = operator.apply(u).reshape(len(cols), nt, -1)[:, :, widx]
        entries = hu.reshape(len(cols), -1).T
        rows = np.array([(k, j) for j in range(nt) for k in range(widx.size)])
    else:
        raise ValueError(f"unknown DN kind '{kind}'")
    meta = {"sigma": sigma.digest(), "grid": grid.spec.digest(), "s": s, "nt": nt,
            "basis": "binomial-impulse", "scenario": key}
    dn = DNMatrix(kind, rows, cols, entries, meta)
    _DN_CACHE[key] = dn
    return dn
