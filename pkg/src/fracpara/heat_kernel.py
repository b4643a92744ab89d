"""Heat kernels of ``d/dtau - div(sigma grad)``: closed form, discrete tables, bounds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conductivity import ConductivityField
from .grid import Grid, GridError
from .spatial import continuum_operator, discrete_operator, stiffness_matrix


def eval_exact(x, z, tau, sigma=None, n: int = 1):
    """Fundamental solution of ``d/dtau - div(sigma grad)`` for constant ``sigma``.

    Parameters
    ----------
    x, z : array_like
        Points with a trailing axis of length ``n`` (or scalars when n = 1).
    tau : float or array_like
        Positive elapsed time.
    sigma : array_like, optional
        Constant SPD matrix; identity by default.

    Examples
    --------
    >>> round(float(eval_exact(0.0, 0.0, 1 / (4 * np.pi))), 12)
    1.0
    >>> round(float(eval_exact(2.0, 0.0, 1.0, sigma=[[4.0]])), 5)
    0.10985
    """
    tau = np.asarray(tau, float)
    if np.any(tau <= 0):
        raise ValueError("heat kernel needs tau > 0")
    sig = np.eye(n) if sigma is None else np.atleast_2d(np.asarray(sigma, float))
    d = np.asarray(x, float) - np.asarray(z, float)
    if n == 1 and (d.ndim == 0 or d.shape[-1] != 1):
        d = d[..., None]
    inv = np.linalg.inv(sig)
    quad = np.einsum("...i,ij,...j->...", d, inv, d)
    return (4 * np.pi * tau) ** (-n / 2) / np.sqrt(np.linalg.det(sig)) * np.exp(-quad / (4 * tau))


def periodized_exact(grid: Grid, z, tau: float, sigma=None, images: int = 3) -> np.ndarray:
    """Exact kernel from source ``z`` summed over periodic images of the box."""
    n = grid.n
    xs = grid.coords()
    z = np.asarray(z, float).reshape(n)
    period = 2 * grid.spec.L
    total = np.zeros(grid.spatial_shape)
    rng = range(-images, images + 1)
    for shift in np.array(np.meshgrid(*([list(rng)] * n), indexing="ij")).reshape(n, -1).T:
        total += eval_exact(xs, z + period * shift, tau, sigma, n)
    return total


@dataclass(eq=False)
class HeatKernel:
    """Heat kernel on the periodic box in a diagonal (modal) representation.

    Attributes
    ----------
    kind : str
        ``exact-identity``, ``exact-constant-SPD`` or ``discrete``.
    sigma : ConductivityField
    operator : FourierOperator or EigenOperator
        Diagonal form of ``-div(sigma grad)``; ``exp(-tau mu)`` propagates.
    table : dict
        Optional dense kernel densities ``p(x_i, z_j, tau)`` keyed by tau.
    """

    kind: str
    sigma: ConductivityField
    operator: object = field(repr=False)
    table: dict = field(default_factory=dict, repr=False)
    asymmetry: dict = field(default_factory=dict, repr=False)
    method: str = "spectral"

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    @property
    def taus(self) -> list[float]:
        return sorted(self.table)

    def propagate(self, a: np.ndarray, tau: float) -> np.ndarray:
        """Apply the spatial semigroup ``exp(tau div(sigma grad))`` to trailing spatial axes."""
        op = self.operator
        c = op.forward(a)
        c = c * np.exp(-tau * op.mu)
        return op.inverse(c, real=not np.iscomplexobj(a))

    def density(self, tau: float) -> np.ndarray:
        """Dense matrix ``p(x_i, z_j, tau)`` (rows: x, columns: z)."""
        if tau in self.table:
            return self.table[tau]
        g = self.grid
        N = g.n_nodes
        eye = np.eye(N).reshape((N,) + g.spatial_shape)
        P = self.propagate(eye, tau).reshape(N, N).T / g.cell_volume
        return 0.5 * (P + P.T)

    def mass(self, tau: float) -> np.ndarray:
        """Row sums ``sum_j p(x_i, z_j, tau) |cell|``."""
        return self.density(tau).sum(axis=1) * self.grid.cell_volume

    def digest(self) -> str:
        return self.sigma.digest() + ":" + self.kind


def exact_kernel(sigma: ConductivityField) -> HeatKernel:
    """Spectral kernel with the exact symbol (constant conductivity)."""
    kind = "exact-identity" if sigma.is_identity else "exact-constant-SPD"
    return HeatKernel(kind, sigma, continuum_operator(sigma))


def _implicit_table(sigma: ConductivityField, taus, substep: float | None):
    """Backward-Euler stepping from delta data; returns densities per tau."""
    g = sigma.grid
    A = stiffness_matrix(sigma)
    N = A.shape[0]
    mu_max = float(spla.eigsh(A, k=1, which="LA", return_eigenvectors=False)[0])
    if substep is None:
        # per-step error |exp(-h mu) - 1/(1 + h mu)| <= (h mu)^2 / 2 < 1e-3 at the Nyquist mode
        substep = np.sqrt(2e-3) / mu_max
    out = {}
    current = np.eye(N) / g.cell_volume
    t_now = 0.0
    lu_cache = {}
    for tau in sorted(taus):
        span = tau - t_now
        if span > 0:
            steps = max(1, int(np.ceil(span / substep)))
            h = span / steps
            key = round(h, 15)
            if key not in lu_cache:
                lu_cache[key] = spla.splu((sp.identity(N, format="csc") + h * A).tocsc())
            lu = lu_cache[key]
            for _ in range(steps):
                current = lu.solve(current)
            t_now = tau
        out[tau] = current.copy()
    return out


def build_discrete(sigma: ConductivityField, taus, method: str = "expm",
                   substep: float | None = None) -> HeatKernel:
    """Tabulate the finite-difference heat kernel for the given times.

    Parameters
    ----------
    sigma : ConductivityField
        Must satisfy the ellipticity bound ``lam > 0``.
    taus : sequence of float
        Times to tabulate.
    method : {"expm", "implicit"}
        ``expm`` evaluates the matrix exponential of the stencil exactly
        through its eigen-decomposition; ``implicit`` marches backward-Euler
        sub-steps from delta initial data.

    Returns
    -------
    HeatKernel
        ``kind == "discrete"``; tables are symmetrized and the raw
        asymmetry is recorded per tau.
    """
    if sigma.lam <= 0:
        raise GridError("conductivity violates ellipticity")
    g = sigma.grid
    op = discrete_operator(sigma)
    taus = [float(t) for t in taus]
    mu_max = float(np.max(op.mu))
    if any(t * mu_max < 1.0 for t in taus if t > 0):
        warnings.warn("some tau values are below the grid's diffusive resolution", RuntimeWarning,
                      stacklevel=2)
    kernel = HeatKernel("discrete", sigma, op, method=method)
    if method == "implicit":
        raw = _implicit_table(sigma, taus, substep)
    elif method == "expm":
        raw = {}
        N = g.n_nodes
        eye = np.eye(N).reshape((N,) + g.spatial_shape)
        for tau in taus:
            raw[tau] = kernel.propagate(eye, tau).reshape(N, N).T / g.cell_volume
    else:
        raise ValueError(f"unknown method '{method}'")
    for tau, P in raw.items():
        scale = np.max(np.abs(P))
        kernel.asymmetry[tau] = float(np.max(np.abs(P - P.T)) / scale)
        kernel.table[tau] = 0.5 * (P + P.T)
    return kernel


def _periodic_offsets(grid: Grid) -> np.ndarray:
    """Minimal-image displacement vectors between all node pairs, shape (N, N, n)."""
    xs = grid.coords().reshape(-1, grid.n)
    d = xs[:, None, :] - xs[None, :, :]
    period = 2 * grid.spec.L
    return d - period * np.rint(d / period)


def _fit_envelope(q: np.ndarray, ell: np.ndarray, upper: bool):
    """LP fit of ``log C - c q`` touching ``ell`` from above (upper) or below."""
    # variables (logC, c); minimize mean gap between envelope and data
    mq = q.mean()
    if upper:
        # logC - c q >= ell  ->  -logC + c q <= -ell ; minimize logC - c mean(q)
        res = optimize.linprog(c=[1.0, -mq], A_ub=np.column_stack([-np.ones_like(q), q]), b_ub=-ell,
                               bounds=[(None, None), (1e-8, None)], method="highs")
    else:
        # logC - c q <= ell ; maximize logC - c mean(q)
        res = optimize.linprog(c=[-1.0, mq], A_ub=np.column_stack([np.ones_like(q), -q]), b_ub=ell,
                               bounds=[(None, None), (1e-8, None)], method="highs")
    if not res.success:
        return np.nan, np.nan
    return float(np.exp(res.x[0])), float(res.x[1])


@dataclass
class GaussianBounds:
    """Fitted sandwich constants and their violation counts."""

    C1: float
    c1: float
    C2: float
    c2: float
    C_grad: float
    c_grad: float
    violations: int
    grad_violations: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_gaussian_bounds(kernel: HeatKernel, rel_floor: float = 1e-12,
                          max_radius: float | None = None) -> GaussianBounds:
    """Fit ``C1 G(c1) <= p <= C2 G(c2)`` and ``|grad p| <= C tau^{-(n+1)/2} exp(-c r^2/tau)``.

    Here ``G(c) = (4 pi tau)^{-n/2} exp(-c r^2 / (4 tau))`` and ``r`` is the
    minimal-image distance on the periodic box.  Points where the kernel
    falls below ``rel_floor`` times its maximum are excluded (they carry
    only round-off), as are pairs farther apart than ``max_radius``
    (default: half the box).
    """
    g = kernel.grid
    n = g.n
    if len(kernel.table) < 3:
        raise ValueError("need the kernel tabulated on at least three tau values")
    off = _periodic_offsets(g)
    r2 = np.sum(off ** 2, axis=-1)
    rmax = g.spec.L / 2 if max_radius is None else max_radius
    keep_r = r2 <= rmax ** 2
    qs, ells, gq, gl = [], [], [], []
    for tau in kernel.taus:
        P = kernel.table[tau]
        keep = keep_r & (P > rel_floor * P.max())
        q = r2[keep] / (4 * tau)
        qs.append(q)
        ells.append(np.log(P[keep]) + 0.5 * n * np.log(4 * np.pi * tau))
        # gradient in x by centred differences on the periodic lattice
        Pg = P.reshape(g.spatial_shape + (-1,))
        grad2 = 0.0
        for ax in range(n):
            grad2 = grad2 + ((np.roll(Pg, -1, axis=ax) - np.roll(Pg, 1, axis=ax)) / (2 * g.dx)) ** 2
        G = np.sqrt(grad2).reshape(P.shape)
        gkeep = keep_r & (G > rel_floor * G.max())
        gq.append(r2[gkeep] / tau)
        gl.append(np.log(G[gkeep]) + 0.5 * (n + 1) * np.log(tau))
    q = np.concatenate(qs)
    ell = np.concatenate(ells)
    C1, c1 = _fit_envelope(q, ell, upper=False)
    C2, c2 = _fit_envelope(q, ell, upper=True)
    q_g = np.concatenate(gq)
    ell_g = np.concatenate(gl)
    Cg, cg = _fit_envelope(q_g, ell_g, upper=True)
    slack = 1e-9
    low = np.log(C1) - c1 * q
    high = np.log(C2) - c2 * q
    viol = int(np.sum(ell < low - slack) + np.sum(ell > high + slack))
    gviol = int(np.sum(ell_g > np.log(Cg) - cg * q_g + slack))
    return GaussianBounds(C1, c1, C2, c2, Cg, cg, viol, gviol)


def tail_integral_fb(b: float, A: float) -> float:
    """Adaptive quadrature of ``int_0^inf tau^{-(b+1)} exp(-A/(4 tau)) dtau``.

    The integral equals ``Gamma(b) 4**b A**(-b)``; this routine computes it
    numerically so that the scaling law can be checked independently.
    """
    if b <= 0 or A <= 0:
        raise ValueError("need b > 0 and A > 0")
    split = A / 4.0

    def f(tau):
        return tau ** (-(b + 1)) * np.exp(-A / (4 * tau))

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=500)
    head, _ = integrate.quad(f, 0.0, split, **opts)
    tail, _ = integrate.quad(f, split, np.inf, **opts)
    return head + tail


def fb_closed_form(b: float, A: float) -> float:
    """``Gamma(b) 4**b A**(-b)`` (substitution ``r = A/(4 tau)``)."""
    return float(special.gamma(b) * 4.0 ** b * A ** (-b))
