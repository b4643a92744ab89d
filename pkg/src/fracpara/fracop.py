"""Three evaluations of the fractional heat operator ``H^s = (d/dt - div(sigma grad))^s``.

* :func:`apply_balakrishnan` integrates the semigroup deviation
  ``P_tau u - u`` against ``tau**(-1-s)``.
* :func:`apply_symbol` multiplies space-time Fourier modes by
  ``(|xi|^2 + i rho)^s`` (principal branch).
* :func:`apply_extension_trace` reads off the weighted Neumann trace of the
  extension field.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special

from .conductivity import ConductivityField
from .grid import Grid, SpaceTimeField
from .heat_kernel import HeatKernel
from .tauquad import DEFAULT_QUADRATURE, TauQuadrature, cached_causal_weights, periodic_integral


@dataclass(frozen=True)
class FracConstants:
    """Normalizing constants of order ``s``.

    Attributes
    ----------
    s : float
    d : float
        ``2**(2s-1) Gamma(s) / Gamma(1-s)``; relates the extension's weighted
        Neumann trace to the operator.
    c : float
        ``1 / (2**(2s) Gamma(s))``; prefactor of the extension kernel.
    """

    s: float
    d: float
    c: float


def frac_constants(s: float) -> FracConstants:
    """Constants evaluated in 40-digit arithmetic and rounded once.

    Examples
    --------
    >>> frac_constants(0.5).d
    1.0
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"order must lie in (0, 1), got {s}")
    with mpmath.workdps(40):
        ms = mpmath.mpf(s)
        d = mpmath.power(2, 2 * ms - 1) * mpmath.gamma(ms) / mpmath.gamma(1 - ms)
        c = 1 / (mpmath.power(2, 2 * ms) * mpmath.gamma(ms))
    return FracConstants(float(s), float(d), float(c))


def _check_order(s: float):
    if not 0.0 < s < 1.0:
        raise ValueError(f"order must lie in (0, 1), got {s}")


def modal_causal_convolution(weights: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``out_j = sum_{m <= j} weights_m * coeffs_{j-m}`` along the first axis.

    ``weights`` has shape ``(..., nt, M)`` (leading batch axes allowed) and
    ``coeffs`` shape ``(nt, M)``.  Summation order is fixed.
    """
    nt = coeffs.shape[0]
    out = np.zeros(weights.shape[:-2] + coeffs.shape, dtype=np.result_type(weights, coeffs))
    for m in range(nt):
        out[..., m:, :] += weights[..., m, None, :] * coeffs[: nt - m]
    return out


def balakrishnan_weights(grid: Grid, s: float, kernel: HeatKernel, nt: int,
                         quad: TauQuadrature = DEFAULT_QUADRATURE) -> np.ndarray:
    """Causal Toeplitz weights of ``H^s`` per lattice offset and spatial mode, shape (nt, M)."""
    mu_u, inv = kernel.operator.unique_mu()
    I = cached_causal_weights(grid.dt, s, mu_u, nt, (0.0,), quad)[0]
    return (-s / special.gamma(1.0 - s)) * I[:, inv]


def apply_balakrishnan(u: SpaceTimeField, s: float, kernel: HeatKernel,
                       quad: TauQuadrature = DEFAULT_QUADRATURE) -> SpaceTimeField:
    """``-(s / Gamma(1-s)) int_0^inf (P_tau u - u) tau^(-1-s) dtau``.

    Causal fields use piecewise-cubic history interpolation, which turns the
    integral into exact causal Toeplitz weights per spatial mode.
    Time-periodic fields shift each time frequency exactly so that only the
    tau-quadrature error remains.

    Parameters
    ----------
    u : SpaceTimeField
    s : float
        Order in (0, 1).
    kernel : HeatKernel
        Spatial propagator (exact or discrete).
    quad : TauQuadrature
        Node layout of the tau-integral.
    """
    _check_order(s)
    grid = u.grid
    op = kernel.operator
    coeffs = op.forward(u.values)
    if u.causal:
        w = balakrishnan_weights(grid, s, kernel, u.nt, quad)
        out = modal_causal_convolution(w, coeffs)
    else:
        mu_u, inv = op.unique_mu()
        rho = 2 * np.pi * np.fft.fftfreq(u.nt, d=grid.dt)
        mult = (-s / special.gamma(1.0 - s)) * periodic_integral(mu_u, rho, u.nt * grid.dt, s, quad, grid.dt)
        spec = np.fft.fft(coeffs, axis=0) * mult[inv].T
        out = np.fft.ifft(spec, axis=0)
    vals = op.inverse(out, real=not np.iscomplexobj(u.values))
    return SpaceTimeField(grid, vals, u.causal)


def space_time_symbol(grid: Grid, nt: int, s: float, damping: float = 0.0) -> np.ndarray:
    """``(|xi|^2 + damping + i rho)^s`` on the FFT lattice, shape (nt, *spatial)."""
    rho = 2 * np.pi * np.fft.fftfreq(nt, d=grid.dt)
    k2 = sum(k ** 2 for k in np.meshgrid(*grid.wavenumbers(), indexing="ij"))
    z = k2[None, ...] + damping + 1j * rho.reshape((-1,) + (1,) * grid.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(z, s)
    out[z == 0] = 0.0
    return out


def apply_symbol(u: SpaceTimeField, s: float, sigma: ConductivityField | None = None,
                 damping: float | None = None, pad: int = 2) -> SpaceTimeField:
    """Multiply space-time Fourier modes by ``(|xi|^2 + i rho)^s``.

    Time-periodic fields use the plain periodic symbol.  Causal fields are
    zero-padded to ``pad`` times their length and conjugated with
    ``exp(-damping (t + T))``, which evaluates the causal operator through
    ``exp(a t) (|xi|^2 + a + i rho)^s exp(-a t)``; the default damping
    suppresses wrap-around from the padded period by ``exp(-20)``.

    Raises
    ------
    ValueError
        If ``sigma`` is given and is not the identity.
    """
    _check_order(s)
    if sigma is not None and not sigma.is_identity:
        raise ValueError("the symbol route needs sigma = identity")
    grid = u.grid
    if not u.causal:
        spec = np.fft.fftn(u.values) * space_time_symbol(grid, u.nt, s)
        out = np.fft.ifftn(spec)
        return SpaceTimeField(grid, out if np.iscomplexobj(u.values) else out.real, causal=False)
    nt = u.nt * max(int(pad), 1)
    period = nt * grid.dt
    a = 20.0 / period if damping is None else float(damping)
    shape = (-1,) + (1,) * grid.n
    elapsed = (grid.dt * np.arange(nt)).reshape(shape)
    vals = np.zeros((nt,) + grid.spatial_shape, dtype=np.result_type(u.values, float))
    vals[: u.nt] = u.values
    spec = np.fft.fftn(vals * np.exp(-a * elapsed)) * space_time_symbol(grid, nt, s, a)
    out = np.fft.ifftn(spec) * np.exp(a * elapsed)
    out = out[: u.nt]
    return SpaceTimeField(grid, out if np.iscomplexobj(u.values) else out.real, causal=True)


class TraceFitError(RuntimeError):
    """The near-trace fit does not explain the extension samples."""


def trace_coefficient(ext, s: float, tol: float = 0.05) -> np.ndarray:
    """Least-squares ``a`` in ``U(y) - U(0) ~ a y^(2s) + b y^2`` on the three smallest positive nodes."""
    y = ext.y[1:4]
    design = np.column_stack([y ** (2 * s), y ** 2])
    dev = ext.values[..., 1:4] - ext.values[..., :1]
    pinv = np.linalg.pinv(design)
    coef = dev @ pinv.T
    a = coef[..., 0]
    resid = dev - coef @ design.T
    lead = np.sqrt(np.sum(np.abs(a) ** 2) * np.sum(y ** (4 * s)))
    rnorm = np.sqrt(np.sum(np.abs(resid) ** 2))
    if lead > 0 and rnorm > tol * lead:
        raise TraceFitError(f"trace fit residual {rnorm / lead:.3g} exceeds {tol:.0%} of the leading term")
    return a


def apply_extension_trace(u: SpaceTimeField, s: float, kernel: HeatKernel, method: str = "kernel",
                          trace_nodes=None, sigma: ConductivityField | None = None,
                          quad: TauQuadrature = DEFAULT_QUADRATURE, **pde_options) -> SpaceTimeField:
    """Weighted Neumann trace ``-d_s lim_{y->0} y^(1-2s) dU/dy`` of the extension.

    The limit is extracted by fitting ``U - u ~ a y^(2s) + b y^2`` on the three
    smallest positive y-nodes; since ``y^(1-2s) d/dy (a y^(2s)) = 2 s a`` the
    result is ``-d_s 2 s a``.

    Parameters
    ----------
    method : {"kernel", "pde"}
        Extension solver.
    trace_nodes : array_like, optional
        y-nodes (starting with 0) for the kernel route; default: the first
        four nodes of the grid's y-lattice.
    """
    from .extension import extend_kernel, extend_pde

    _check_order(s)
    const = frac_constants(s)
    if not np.any(u.values):
        return u.with_values(np.zeros_like(u.values))
    if method == "kernel":
        ys = u.grid.y[:4] if trace_nodes is None else np.asarray(trace_nodes, float)
        ext = extend_kernel(u, s, kernel, ys=ys, quad=quad)
    elif method == "pde":
        sig = kernel.sigma if sigma is None else sigma
        ext = extend_pde(u, s, sig, kernel=kernel, **pde_options)
    else:
        raise ValueError(f"unknown method '{method}'")
    a = trace_coefficient(ext, s)
    vals = -const.d * 2.0 * s * a
    return SpaceTimeField(u.grid, vals, u.causal)


def semigroup_property_check(u: SpaceTimeField, s1: float, s2: float, route: str = "symbol",
                             kernel: HeatKernel | None = None) -> float:
    """``||H^{s2}(H^{s1} u) - H^{s1+s2} u|| / ||u||``.

    ``s1 + s2 = 1`` is compared with the plain heat operator symbol.
    With ``route="balakrishnan"`` the two inner applications use the
    quadrature route and the reference remains the symbol.
    """
    if s1 <= 0 or s2 <= 0 or s1 + s2 > 1 + 1e-15:
        raise ValueError("need positive orders with s1 + s2 <= 1")
    if route == "symbol":
        composed = apply_symbol(apply_symbol(u, s1), s2)
    elif route == "balakrishnan":
        if kernel is None:
            raise ValueError("the quadrature route needs a kernel")
        composed = apply_balakrishnan(apply_balakrishnan(u, s1, kernel), s2, kernel)
    else:
        raise ValueError(f"unknown route '{route}'")
    total = s1 + s2
    if abs(total - 1.0) < 1e-15:
        reference = heat_operator_symbol(u)
    else:
        reference = apply_symbol(u, total)
    return float(np.linalg.norm(composed.values - reference.values) / np.linalg.norm(u.values))


def heat_operator_symbol(u: SpaceTimeField) -> SpaceTimeField:
    """``(d/dt - Laplacian) u`` through the symbol ``|xi|^2 + i rho`` (periodic)."""
    grid = u.grid
    rho = 2 * np.pi * np.fft.fftfreq(u.nt, d=grid.dt)
    k2 = sum(k ** 2 for k in np.meshgrid(*grid.wavenumbers(), indexing="ij"))
    sym = k2[None, ...] + 1j * rho.reshape((-1,) + (1,) * grid.n)
    out = np.fft.ifftn(np.fft.fftn(u.values) * sym)
    return SpaceTimeField(grid, out if np.iscomplexobj(u.values) else out.real, causal=u.causal)
