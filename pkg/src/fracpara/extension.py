"""The weighted extension problem in one extra variable ``y > 0``.

The extension ``U(t, x, y)`` of a causal field ``u`` solves::

    y^(1-2s) dU/dt = div_{x,y}( y^(1-2s) diag(sigma, 1) grad_{x,y} U ),   U(., ., 0) = u

:func:`extend_kernel` evaluates the explicit kernel representation,
:func:`extend_pde` time-steps the degenerate PDE directly, and
:func:`conjugate_transform` maps solutions of order ``1-s`` to order ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .conductivity import ConductivityField
from .fracop import frac_constants, modal_causal_convolution
from .grid import ExtensionField, GridError, SpaceTimeField, graded_nodes, weighted_y_cumulative
from .heat_kernel import HeatKernel
from .spatial import discrete_operator
from .tauquad import DEFAULT_QUADRATURE, TauQuadrature, cached_causal_weights


def _to_nodal(op, modal: np.ndarray, real: bool) -> np.ndarray:
    """(Ny, nt, M) modal array -> (nt, *spatial, Ny) nodal array."""
    nodal = op.inverse(modal, real=real)
    return np.moveaxis(nodal, 0, -1)


def extend_kernel(u: SpaceTimeField, s: float, kernel: HeatKernel, ys=None, nt: int | None = None,
                  quad: TauQuadrature = DEFAULT_QUADRATURE) -> ExtensionField:
    """Extension by the heat-kernel representation.

    ``U = c_s y^(2s) int int exp(-y^2/(4 tau)) p(x, z, tau) u(t - tau, z) tau^(-1-s) dz dtau``
    evaluated as ``u + c_s y^(2s) sum_m I_m(y, mu) u_{j-m}`` per spatial mode,
    where the weights ``I_m`` carry the ``-u`` deviation exactly (the kernel
    integrates to one in ``tau``).

    Parameters
    ----------
    u : SpaceTimeField
        Causal boundary datum.
    s : float
    kernel : HeatKernel
    ys : array_like, optional
        y-nodes starting at 0; defaults to the grid's graded lattice.
    nt : int, optional
        Continue the time lattice past ``T`` (``u`` is zero there).
    """
    if not u.causal:
        raise GridError("the kernel extension needs a causal datum")
    const = frac_constants(s)
    grid = u.grid
    ys = grid.y if ys is None else np.asarray(ys, float)
    if nt is not None and nt != u.nt:
        u = u.padded(nt)
    op = kernel.operator
    coeffs = op.forward(u.values)
    mu_u, inv = op.unique_mu()
    pos = ys[1:]
    W = cached_causal_weights(grid.dt, s, mu_u, u.nt, tuple(pos), quad)
    D = const.c * pos[:, None, None] ** (2 * s) * W
    dev = modal_causal_convolution(D[:, :, inv], coeffs)
    modal = np.concatenate([coeffs[None], coeffs[None] + dev], axis=0)
    vals = _to_nodal(op, modal, real=not np.iscomplexobj(u.values))
    vals[..., 0] = u.values
    return ExtensionField(grid, vals, s, ys)


def _thomas_factor(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray):
    """Forward-elimination factors of tridiagonal systems batched over the last axis."""
    n = diag.shape[0]
    cp = np.zeros_like(diag)
    den = np.zeros_like(diag)
    den[0] = diag[0]
    cp[0] = upper[0] / den[0]
    for i in range(1, n):
        den[i] = diag[i] - lower[i] * cp[i - 1]
        cp[i] = (upper[i] / den[i]) if i < n - 1 else 0.0
    return lower, cp, den


def _thomas_solve(factors, rhs: np.ndarray) -> np.ndarray:
    lower, cp, den = factors
    n = rhs.shape[0]
    d = np.empty_like(rhs)
    d[0] = rhs[0] / den[0]
    for i in range(1, n):
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den[i]
    x = np.empty_like(rhs)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - cp[i] * x[i + 1]
    return x


def _weighted_fv(ys: np.ndarray, s: float):
    """Lumped masses and exact harmonic conductances of the weight ``y^(1-2s)``."""
    e = 1.0 - 2.0 * s
    half = np.concatenate([[0.0], 0.5 * (ys[1:] + ys[:-1]), [ys[-1]]])
    mass = (half[1:] ** (e + 1) - half[:-1] ** (e + 1)) / (e + 1)
    cond = 2.0 * s / (ys[1:] ** (2 * s) - ys[:-1] ** (2 * s))
    return mass, cond


def extend_pde(u: SpaceTimeField, s: float, sigma: ConductivityField | None = None,
               kernel: HeatKernel | None = None, ys=None, substeps: int = 4,
               scheme: str = "bdf2") -> ExtensionField:
    """Extension by implicit time stepping of the degenerate PDE.

    The x-part is diagonalized by the spatial operator (one tridiagonal
    y-system per mode); in y a conservative finite-volume scheme uses the
    exact harmonic conductance ``2 s / (y_{j+1}^(2s) - y_j^(2s))`` of the
    weight between neighbouring nodes and lumped weighted masses.  The top
    node carries a homogeneous Neumann condition.

    Parameters
    ----------
    scheme : {"bdf2", "euler"}
        ``euler`` (backward Euler with linear data interpolation) preserves
        the discrete maximum principle; ``bdf2`` is second order.
    """
    if not u.causal:
        raise GridError("the PDE extension needs a causal datum")
    grid = u.grid
    if kernel is not None:
        op = kernel.operator
    else:
        op = discrete_operator(sigma if sigma is not None else ConductivityField.identity(grid))
    ys = grid.y if ys is None else np.asarray(ys, float)
    mass_all, cond = _weighted_fv(ys, s)
    mass = mass_all[1:]
    n_y = ys.size - 1
    coeffs = op.forward(u.values)  # (nt, M)
    M = coeffs.shape[1]
    mu = op.mu
    h = grid.dt / substeps
    # stiffness in y for unknowns 1..n_y (node 0 is Dirichlet)
    s_diag = np.zeros(n_y)
    s_diag += cond
    s_diag[:-1] += cond[1:]
    s_off = -cond[1:]
    lower = np.concatenate([[0.0], s_off])
    upper = np.concatenate([s_off, [0.0]])

    def factor(alpha):
        diag = (alpha / h + 0.0) * mass[:, None] + s_diag[:, None] + mass[:, None] * mu[None, :]
        lo = np.broadcast_to(lower[:, None], diag.shape).copy()
        up = np.broadcast_to(upper[:, None], diag.shape).copy()
        return _thomas_factor(lo, diag, up)

    if scheme == "bdf2":
        fac_start, fac = factor(1.0), factor(1.5)
    elif scheme == "euler":
        fac_start = fac = factor(1.0)
    else:
        raise ValueError(f"unknown scheme '{scheme}'")

    def boundary(j, theta):
        # causal interpolation inside (t_{j-1}, t_j]
        if scheme == "euler" or j < 2:
            return (1 - theta) * coeffs[j - 1] + theta * coeffs[j]
        p = theta + 1.0  # position relative to t_{j-2}
        return ((p - 1) * (p - 2) / 2 * coeffs[j - 2] - p * (p - 2) * coeffs[j - 1]
                + p * (p - 1) / 2 * coeffs[j])

    dtype = np.result_type(coeffs, float)
    U = np.zeros((n_y, M), dtype)
    U_prev = None
    out = np.zeros((u.nt, n_y + 1, M), dtype)
    out[:, 0] = coeffs
    first = True
    for j in range(1, u.nt):
        for k in range(1, substeps + 1):
            g = boundary(j, k / substeps)
            if scheme == "bdf2" and not first:
                rhs = mass[:, None] * (2.0 * U - 0.5 * U_prev) / h
                factors = fac
            else:
                rhs = mass[:, None] * U / h
                factors = fac_start
            rhs[0] += cond[0] * g
            new = _thomas_solve(factors, rhs)
            U_prev, U = U, new
            first = False
        out[j, 1:] = U
    modal = np.moveaxis(out, 1, 0)  # (Ny+1, nt, M)
    vals = _to_nodal(op, modal, real=not np.iscomplexobj(u.values))
    vals[..., 0] = u.values
    return ExtensionField(grid, vals, s, ys)


def y_derivative(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nonuniform three-point derivative along the last axis.

    Interior nodes use the exact centred stencil for unequal spacing; the
    end nodes use one-sided second-order stencils.
    """
    f = values
    h0 = y[1:-1] - y[:-2]
    h1 = y[2:] - y[1:-1]
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[..., 1:-1] = (-(h1 / (h0 * (h0 + h1))) * f[..., :-2] + ((h1 - h0) / (h0 * h1)) * f[..., 1:-1]
                      + (h0 / (h1 * (h0 + h1))) * f[..., 2:])
    a, b = y[1] - y[0], y[2] - y[1]
    out[..., 0] = (-(2 * a + b) / (a * (a + b)) * f[..., 0] + (a + b) / (a * b) * f[..., 1]
                   - a / (b * (a + b)) * f[..., 2])
    a, b = y[-1] - y[-2], y[-2] - y[-3]
    out[..., -1] = ((2 * a + b) / (a * (a + b)) * f[..., -1] - (a + b) / (a * b) * f[..., -2]
                    + a / (b * (a + b)) * f[..., -3])
    return out


def conjugate_transform(u1: ExtensionField, s: float) -> ExtensionField:
    """``u2 = -y^(2s-1) dU1/dy``.

    ``u1`` solves the problem with weight ``y^(2s-1)`` (order ``1-s``); the
    output solves the weight ``y^(1-2s)`` problem of order ``s``.  With
    ``z = y^(2-2s)`` the transform reads ``u2 = -(2-2s) dU1/dz``; near the
    trace ``U1`` is close to affine in ``z``, so differentiating in ``z``
    avoids the singular ``y``-derivative and gives the ``y = 0`` value
    directly.
    """
    z = u1.y ** (2.0 - 2.0 * s)
    vals = -(2.0 - 2.0 * s) * y_derivative(u1.values, z)
    return ExtensionField(u1.grid, vals, s, u1.y)


def inverse_conjugate(u2: ExtensionField, s: float) -> ExtensionField:
    """``U1(y) = int_y^Ymax mu^(1-2s) u2(mu) dmu`` (decay at the cap assumed)."""
    vals = weighted_y_cumulative(u2.values, u2.y, 1.0 - 2.0 * s)
    return ExtensionField(u2.grid, vals, 1.0 - s, u2.y)


def weighted_pde_residual(field: ExtensionField, exponent: float, kernel: HeatKernel,
                          y_window=None, t_window=None) -> float:
    """Relative residual of ``y^e dU/dt = div(y^e diag(sigma,1) grad U)``.

    Evaluated at interior nodes in the given y- and t-windows (default y
    window ``[Ymax/12, Ymax/2]``, away from the singular weight and the cap) with centred
    time differences, the spectral x-operator of ``kernel`` and nested
    nonuniform differences in y; normalized by the size of ``dU/dt`` there.
    """
    grid = field.grid
    y = field.y
    vals = field.values
    dt = grid.dt
    ut = (vals[2:] - vals[:-2]) / (2 * dt)
    inner = vals[1:-1]
    op = kernel.operator
    ax = np.moveaxis(inner, -1, 0)  # (Ny, nt-2, *spatial)
    lap = np.moveaxis(op.inverse(op.forward(ax) * op.mu, real=not np.iscomplexobj(ax)), 0, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = np.where(y > 0, y ** exponent, 0.0) * y_derivative(inner, y)
        div_y = np.where(y > 0, y ** (-exponent), 0.0) * y_derivative(flux, y)
    resid = ut + lap - div_y
    ylo, yhi = (y[-1] / 12.0, 0.5 * y[-1]) if y_window is None else y_window
    ymask = (y >= ylo) & (y <= yhi)
    tmask = np.ones(inner.shape[0], bool)
    if t_window is not None:
        tt = grid.times(vals.shape[0])[1:-1]
        tmask = (tt >= t_window[0]) & (tt <= t_window[1])
    r = resid[tmask][..., ymask]
    ref = ut[tmask][..., ymask]
    return float(np.linalg.norm(r) / np.linalg.norm(ref))


# ----------------------------------------------------------------------
# decay in y


def poisson_extension_integrated(u: SpaceTimeField, s: float, ys, points=None):
    """Time integral over all ``t`` of the kernel extension (identity conductivity).

    Integrating the kernel representation in ``t`` and then in ``tau`` with
    ``int_0^inf tau^-(b+1) exp(-A/(4 tau)) dtau = Gamma(b) 4^b A^-b``,
    ``b = n/2 + s``, leaves the elliptic Poisson-type kernel
    ``C y^(2s) / (y^2 + |x - z|^2)^(n/2 + s)`` acting on ``int u dt``;
    the datum is zero-extended outside the box.

    Returns
    -------
    U, grad : ndarray
        ``U`` of shape ``(P, Ny)`` at the evaluation points and the norm of
        its full ``(x, y)`` gradient.
    """
    grid = u.grid
    n = grid.n
    const = frac_constants(s)
    b = n / 2 + s
    C = const.c * (4 * np.pi) ** (-n / 2) * special.gamma(b) * 4.0 ** b
    U0 = u.values.sum(axis=0) * grid.dt
    src = grid.coords().reshape(-1, n)
    wts = U0.ravel() * grid.cell_volume
    keep = wts != 0
    src, wts = src[keep], wts[keep]
    pts = grid.coords().reshape(-1, n) if points is None else np.asarray(points, float).reshape(-1, n)
    ys = np.asarray(ys, float)
    d = pts[:, None, :] - src[None, :, :]
    r2 = np.sum(d ** 2, axis=-1)  # (P, S)
    U = np.empty((pts.shape[0], ys.size))
    G = np.empty_like(U)
    for j, y in enumerate(ys):
        den = y * y + r2
        K = C * y ** (2 * s) * den ** (-b)
        U[:, j] = K @ wts
        gx = (-(2 * b) * K / den)[:, :, None] * d
        gradx = np.einsum("psn,s->pn", gx, wts)
        gy = (K * (2 * s / y - 2 * b * y / den)) @ wts
        G[:, j] = np.sqrt(np.sum(gradx ** 2, axis=-1) + gy ** 2)
    return U, G


@dataclass
class DecayFit:
    y: np.ndarray
    norms: np.ndarray
    slope: float
    window: tuple

    def as_dict(self) -> dict:
        return {"slope": self.slope, "window": list(self.window),
                "y": self.y.tolist(), "norms": self.norms.tolist()}


def decay_profile(y, norms, support_diameter: float, ymax: float | None = None) -> DecayFit:
    """Least-squares log-log slope of ``norms(y)`` over ``[2 diam, ymax/2]``."""
    y = np.asarray(y, float)
    norms = np.asarray(norms, float)
    ymax = y[-1] if ymax is None else ymax
    window = (2.0 * support_diameter, 0.5 * ymax)
    m = (y >= window[0]) & (y <= window[1]) & (norms > 0)
    if m.sum() < 2:
        raise ValueError("decay fit window is empty; increase Ymax")
    slope = float(np.polyfit(np.log(y[m]), np.log(norms[m]), 1)[0])
    return DecayFit(y[m], norms[m], slope, window)


def tail_power_w(U: np.ndarray, ys: np.ndarray, s: float) -> np.ndarray:
    """``int_y^inf mu^(1-2s) U(mu) dmu`` with a power-law tail beyond the last node."""
    body = weighted_y_cumulative(U, ys, 1.0 - 2.0 * s)
    e = 1.0 - 2.0 * s
    slope = np.log(U[..., -1] / U[..., -2]) / np.log(ys[-1] / ys[-2])
    rate = -(e + slope) - 1.0
    if np.any(rate <= 0):
        raise ValueError("extension does not decay fast enough for a finite y-integral")
    tail = U[..., -1] * ys[-1] ** (e + 1) / rate
    return body + tail[..., None]


def default_decay_grid(ymax: float = 64.0, ny: int = 96, grade: float = 1.5) -> np.ndarray:
    return graded_nodes(ymax, ny, grade)
