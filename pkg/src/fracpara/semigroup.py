"""The evolutive semigroup: heat propagation in space combined with a time shift."""

from __future__ import annotations

import warnings

import numpy as np

from .grid import SpaceTimeField
from .heat_kernel import HeatKernel


def _causal_shift_weights(tau: float, dt: float, order: str):
    """Lattice offsets and weights reproducing ``u(t_j - tau)`` from ``u(t_{j-m})``."""
    q = tau / dt
    k = int(np.floor(q))
    p = q - k
    if p < 1e-14:
        return np.array([k]), np.array([1.0])
    if order == "linear":
        return np.array([k, k + 1]), np.array([1.0 - p, p])
    if k == 0:
        offs = np.arange(4)
        w = np.array([-(p - 1) * (p - 2) * (p - 3) / 6, p * (p - 2) * (p - 3) / 2,
                      -p * (p - 1) * (p - 3) / 2, p * (p - 1) * (p - 2) / 6])
    else:
        offs = np.arange(k - 1, k + 3)
        w = np.array([-p * (p - 1) * (p - 2) / 6, (p + 1) * (p - 1) * (p - 2) / 2,
                      -(p + 1) * p * (p - 2) / 2, (p + 1) * p * (p - 1) / 6])
    return offs, w


def time_shift(values: np.ndarray, tau: float, dt: float, causal: bool,
               interp: str = "linear") -> np.ndarray:
    """Samples of ``u(t - tau)`` on the lattice.

    Causal fields are zero before the first slice and use only samples at
    or before each output time.  Periodic fields may use ``"spectral"``
    (exact for every lattice frequency) or wrap-around interpolation.
    """
    nt = values.shape[0]
    if not causal and interp == "spectral":
        rho = 2 * np.pi * np.fft.fftfreq(nt, d=dt)
        shape = (-1,) + (1,) * (values.ndim - 1)
        out = np.fft.ifft(np.fft.fft(values, axis=0) * np.exp(-1j * rho * tau).reshape(shape), axis=0)
        return out if np.iscomplexobj(values) else out.real
    if interp == "spectral":
        raise ValueError("spectral time shifts need a time-periodic field")
    offs, w = _causal_shift_weights(tau, dt, interp)
    out = np.zeros_like(values, dtype=np.result_type(values, float))
    for m, c in zip(offs, w):
        if causal:
            if m < nt:
                out[m:] += c * values[: nt - m]
        else:
            out += c * np.roll(values, m, axis=0)
    return out


def apply_semigroup(u: SpaceTimeField, tau: float, kernel: HeatKernel,
                    interp: str | None = None) -> SpaceTimeField:
    """``P_tau u(t, x) = int p(x, z, tau) u(t - tau, z) dz``.

    Parameters
    ----------
    u : SpaceTimeField
    tau : float
        Nonnegative shift.
    kernel : HeatKernel
        Supplies the spatial propagation.
    interp : {"linear", "cubic", "spectral"}, optional
        Time interpolation; defaults to linear for causal fields and to the
        exact spectral shift for time-periodic ones.

    Examples
    --------
    ``tau = 0`` returns the input unchanged.
    """
    if tau < 0:
        raise ValueError("semigroup parameter must be nonnegative")
    if tau == 0:
        return u
    grid = u.grid
    if interp is None:
        interp = "linear" if u.causal else "spectral"
    if u.causal and tau >= u.nt * grid.dt:
        warnings.warn("shift exceeds the time window; output vanishes by causal support",
                      RuntimeWarning, stacklevel=2)
        return u.with_values(np.zeros_like(u.values))
    shifted = time_shift(u.values, tau, grid.dt, u.causal, interp)
    return u.with_values(kernel.propagate(shifted, tau))
