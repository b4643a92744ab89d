"""Quadrature in the semigroup time ``tau`` against ``tau**(-1-s)``.

Two situations occur.

* Causal lattice fields: the history ``u(t_j - tau)`` is replaced by its
  piecewise-cubic Lagrange interpolant in ``tau`` (points never reach past
  ``t_j``), so every integral collapses to Toeplitz weights over lattice
  offsets ``m`` for each spatial eigenvalue ``mu``::

      I_m(mu) = int_0^inf g(tau) tau^(-1-s) [exp(-mu tau) l_m(tau) - delta_m0] dtau

  with ``g = 1`` (fractional power) or ``g = exp(-y^2 / (4 tau))``
  (extension kernel).  The first lattice interval is split dyadically and
  closed by a Gauss-Jacobi rule for the ``tau**(-s)`` endpoint behaviour;
  the remaining intervals use Gauss-Legendre rules; the ``-delta_m0`` part
  beyond the first interval is integrated in closed form.

* Time-periodic fields: the shift acts exactly on each time frequency, so
  only the scalar integral ``int_0^inf (exp(-z tau) - 1) tau^(-1-s) dtau``
  with ``z = mu + i rho`` remains.  The tail beyond one period is folded
  onto ``[0, period)`` (the shift is periodic there) and summed with an
  Euler-Maclaurin remainder.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TauQuadrature:
    """Node layout.

    Parameters
    ----------
    gl_order : int
        Gauss-Legendre points per lattice interval (and per dyadic piece).
    dyadic_levels : int
        Number of halvings of the first lattice interval.
    jacobi_order : int
        Gauss-Jacobi points on the innermost piece ``[0, dt 2**-levels]``.
    fold_terms : int
        Periods summed explicitly before the Euler-Maclaurin remainder.
    """

    gl_order: int = 16
    dyadic_levels: int = 48
    jacobi_order: int = 12
    fold_terms: int = 64

    def as_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULT_QUADRATURE = TauQuadrature()


@lru_cache(maxsize=32)
def _legendre(n: int):
    x, w = special.roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=32)
def _jacobi(n: int, s: float):
    x, w = special.roots_jacobi(n, 0.0, -s)
    return 0.5 * (x + 1.0), w * 0.5 ** (1.0 - s)


def _first_interval_nodes(dt: float, quad: TauQuadrature):
    """Dyadic Gauss-Legendre nodes covering ``[dt 2**-levels, dt]``."""
    p, w = _legendre(quad.gl_order)
    lv = np.arange(quad.dyadic_levels)
    a = dt * 0.5 ** (lv + 1)
    h = a  # piece [a, 2a]
    tau = (a[:, None] + h[:, None] * p[None, :]).ravel()
    wt = (h[:, None] * w[None, :]).ravel()
    return tau, wt


def _cubic_first(p):
    """Cardinal functions on offsets 0..3 evaluated for p in [0, 1].

    Returns (l0 - 1)/p, l1/p, l2/p, l3/p (each divided by p to stay finite at 0).
    """
    return (-(p * p - 6 * p + 11) / 6.0,
            (p - 2) * (p - 3) / 2.0,
            -(p - 1) * (p - 3) / 2.0,
            (p - 1) * (p - 2) / 6.0)


def _cubic_inner(p):
    """Cardinal functions on offsets k-1..k+2 for tau = (k + p) dt, p in [0, 1]."""
    return (-p * (p - 1) * (p - 2) / 6.0,
            (p + 1) * (p - 1) * (p - 2) / 2.0,
            -(p + 1) * p * (p - 2) / 2.0,
            (p + 1) * p * (p - 1) / 6.0)


def _expm1_over(x):
    """``expm1(-x)/x`` with the limit -1 at x = 0."""
    x = np.asarray(x, float)
    out = np.full(x.shape, -1.0)
    nz = x != 0
    out[nz] = np.expm1(-x[nz]) / x[nz]
    return out


def causal_weights(dt: float, s: float, mu, n_offsets: int, ys=(0.0,),
                   quad: TauQuadrature = DEFAULT_QUADRATURE) -> np.ndarray:
    """Toeplitz weights ``I_m(mu)`` for each requested ``y``.

    Parameters
    ----------
    dt : float
        Lattice step.
    s : float
        Order in (0, 1).
    mu : array_like, shape (M,)
        Nonnegative spatial eigenvalues.
    n_offsets : int
        Number of lattice offsets kept (history length).
    ys : sequence of float
        Extension heights; ``y = 0`` selects ``g = 1``.

    Returns
    -------
    ndarray, shape (len(ys), n_offsets, M)
    """
    mu = np.atleast_1d(np.asarray(mu, float))
    ys = np.atleast_1d(np.asarray(ys, float))
    M = mu.size
    out = np.zeros((ys.size, n_offsets, M))

    # first lattice interval, cubic through offsets 0..3
    tau, wt = _first_interval_nodes(dt, quad)
    p = tau / dt
    first = _cubic_first(p)
    mt = np.outer(tau, mu)
    E = np.exp(-mt)
    X = mt * _expm1_over(mt)  # expm1(-mu tau)
    l0 = 1.0 + p * first[0]
    base = wt * tau ** (-1.0 - s)
    for iy, y in enumerate(ys):
        g = np.exp(-y * y / (4.0 * tau)) if y > 0 else np.ones_like(tau)
        bw = base * g
        out[iy, 0] += (bw * l0) @ X + np.sum(bw * p * first[0])
        for q in range(1, 4):
            if q < n_offsets:
                out[iy, q] += (bw * p * first[q]) @ E
    # innermost piece [0, a] with the tau**(-s) Gauss-Jacobi rule (only y = 0 matters)
    a = dt * 0.5 ** quad.dyadic_levels
    xj, wj = _jacobi(quad.jacobi_order, float(s))
    tj = a * xj
    wj = wj * a ** (1.0 - s)
    pj = tj / dt
    fj = _cubic_first(pj)
    mtj = np.outer(tj, mu)
    Ej = np.exp(-mtj)
    l0j = 1.0 + pj * fj[0]
    for iy, y in enumerate(ys):
        if y > 0 and y * y / (4.0 * a) > 40.0:
            continue
        g = np.exp(-y * y / (4.0 * tj)) if y > 0 else np.ones_like(tj)
        # (exp(-mu t) l0 - 1)/t = mu * expm1(-mu t)/(mu t) * l0 + (l0 - 1)/t
        F0 = (mu[None, :] * _expm1_over(mtj)) * l0j[:, None] + (fj[0] / dt)[:, None]
        out[iy, 0] += (wj * g) @ F0
        for q in range(1, 4):
            if q < n_offsets:
                out[iy, q] += (wj * g * fj[q] / dt) @ Ej
    # closed-form -int_dt^inf g tau^(-1-s)
    for iy, y in enumerate(ys):
        if y > 0:
            out[iy, 0] -= (4.0 / (y * y)) ** s * special.gamma(s) * special.gammainc(s, y * y / (4.0 * dt))
        else:
            out[iy, 0] -= dt ** (-s) / s
    # lattice intervals k = 1..K with cubic cardinals on offsets k-1..k+2
    K = n_offsets
    pl, wl = _legendre(quad.gl_order)
    k = np.arange(1, K + 1)
    tk = (k[:, None] + pl[None, :]) * dt  # (K, q)
    wk = np.broadcast_to(dt * wl, tk.shape)
    card = _cubic_inner(pl)
    Ek = np.exp(-tk[:, :, None] * mu[None, None, :])  # (K, q, M)
    basek = wk * tk ** (-1.0 - s)
    for iy, y in enumerate(ys):
        g = np.exp(-y * y / (4.0 * tk)) if y > 0 else 1.0
        bw = basek * g
        for c in range(4):
            contrib = np.einsum("kq,kqm->km", bw * card[c][None, :], Ek)
            off = k - 1 + c
            ok = off < n_offsets
            out[iy, off[ok]] += contrib[ok]
    return out


_WEIGHT_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 16


def cached_causal_weights(dt: float, s: float, mu, n_offsets: int, ys=(0.0,),
                          quad: TauQuadrature = DEFAULT_QUADRATURE) -> np.ndarray:
    """Memoized :func:`causal_weights` (weights are reused across many solves)."""
    mu = np.ascontiguousarray(np.atleast_1d(np.asarray(mu, float)))
    ys = np.ascontiguousarray(np.atleast_1d(np.asarray(ys, float)))
    h = hashlib.sha256(mu.tobytes() + ys.tobytes()).hexdigest()
    key = (float(dt), float(s), int(n_offsets), h, quad)
    if key in _WEIGHT_CACHE:
        _WEIGHT_CACHE.move_to_end(key)
        return _WEIGHT_CACHE[key]
    w = causal_weights(dt, s, mu, n_offsets, ys, quad)
    w.setflags(write=False)
    _WEIGHT_CACHE[key] = w
    if len(_WEIGHT_CACHE) > _CACHE_SIZE:
        _WEIGHT_CACHE.popitem(last=False)
    return w


def _fold_tail(mu: np.ndarray, tau: np.ndarray, period: float, s: float, terms: int) -> np.ndarray:
    """``sum_{p>=1} exp(-mu (tau + p P)) (tau + p P)^(-1-s)`` for all (tau, mu)."""
    out = np.zeros((tau.size, mu.size))
    for p in range(1, terms):
        u = tau[:, None] + p * period
        out += np.exp(-u * mu[None, :]) * u ** (-1.0 - s)
    # Euler-Maclaurin remainder starting at p = terms
    a = tau[:, None] + terms * period
    f_a = np.exp(-a * mu[None, :]) * a ** (-1.0 - s)
    dfa = period * f_a * (-mu[None, :] - (1.0 + s) / a)
    with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
        x = a * mu[None, :]
        # int_a^inf exp(-mu u) u^(-1-s) du = mu^s Gamma(-s, mu a)
        upper = special.gammaincc(1.0 - s, x) * special.gamma(1.0 - s)
        gneg = (np.exp(-x) * x ** (-s) - upper) / s
        integral = np.where(mu[None, :] > 0, mu[None, :] ** s * gneg, a ** (-s) / s)
    integral = np.where(np.isfinite(integral), integral, 0.0) / period
    return out + integral + 0.5 * f_a - dfa / 12.0


def periodic_integral(mu, rho, period: float, s: float,
                      quad: TauQuadrature = DEFAULT_QUADRATURE, dt: float | None = None) -> np.ndarray:
    """``int_0^inf (exp(-(mu + i rho) tau) - 1) tau^(-1-s) dtau`` by quadrature.

    ``rho`` must be a multiple of ``2 pi / period``.  ``dt`` sets the length
    of the Gauss-Legendre panels on ``[dt, period]`` (default ``period/64``).

    Returns
    -------
    ndarray, shape (M, R), complex
    """
    mu = np.atleast_1d(np.asarray(mu, float))
    rho = np.atleast_1d(np.asarray(rho, float))
    dt = period / 64 if dt is None else dt
    npanel = int(round(period / dt))
    dt = period / npanel
    # panels [dt, period]
    pl, wl = _legendre(quad.gl_order)
    k = np.arange(1, npanel)
    tk = ((k[:, None] + pl[None, :]) * dt).ravel()
    wk = np.broadcast_to(dt * wl, (k.size, pl.size)).ravel()
    tau1, w1 = _first_interval_nodes(dt, quad)
    a = dt * 0.5 ** quad.dyadic_levels
    xj, wj = _jacobi(quad.jacobi_order, float(s))
    tj = a * xj
    wj = wj * a ** (1.0 - s)

    result = np.zeros((mu.size, rho.size), complex)
    # (exp(-mu t) e^{-i rho t} - 1) = expm1(-mu t) e^{-i rho t} + (e^{-i rho t} - 1)
    for tau, wt in ((tau1, w1), (tk, wk)):
        phase = np.exp(-1j * np.outer(tau, rho))
        dphase = -2j * np.sin(0.5 * np.outer(tau, rho)) * np.exp(-0.5j * np.outer(tau, rho))
        mt = np.outer(tau, mu)
        xm = mt * _expm1_over(mt)
        bw = wt * tau ** (-1.0 - s)
        result += (bw[:, None] * xm).T @ phase
        result += (bw @ dphase)[None, :]
    # innermost Gauss-Jacobi piece
    mt = np.outer(tj, mu)
    phase = np.exp(-1j * np.outer(tj, rho))
    dq = -2j * np.sin(0.5 * np.outer(tj, rho)) / tj[:, None] * np.exp(-0.5j * np.outer(tj, rho))
    result += (wj[:, None] * mu[None, :] * _expm1_over(mt)).T @ phase
    result += (wj @ dq)[None, :]
    # folded tail beyond one period, and the closed-form -int_P^inf tau^(-1-s)
    for tau, wt in ((tau1, w1), (tk, wk), (tj, wj * tj ** s)):
        # the Jacobi weights already carry tau^-s; undo it since the tail is regular
        tail = _fold_tail(mu, tau, period, s, quad.fold_terms)
        phase = np.exp(-1j * np.outer(tau, rho))
        result += (wt[:, None] * tail).T @ phase
    result -= period ** (-s) / s
    return result
