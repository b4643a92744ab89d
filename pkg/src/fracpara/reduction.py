"""From the extension back to a local equation: ``w``, ``v`` and their checks.

``w(t, x, y) = int_y^inf mu^(1-2s) U(t, x, mu) dmu`` and ``v = w(., ., 0)``.
When ``u`` solves the exterior-data problem, ``v`` satisfies the local
heat equation inside the domain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .conductivity import ConductivityField, smooth_bump
from .fracop import apply_symbol, frac_constants
from .spatial import stiffness_matrix
from .grid import DomainMasks, ExtensionField, SpaceTimeField, _tail_estimate, weighted_y_cumulative

# Test-function family for the weak residual.  Centres and radii are
# fractions of the space-time bounding box of the domain; changing them
# changes the reported numbers, so the family carries a version tag.
TEST_FAMILY_VERSION = "tensor-bump-v1"
TEST_CENTRES = (0.35, 0.5, 0.65)
TEST_RADII = (0.3, 0.22, 0.15)


def compute_w(utilde: ExtensionField, s: float, tol: float = 0.01) -> ExtensionField:
    """Weighted tail integral of the extension, accumulated from the top node down.

    Raises
    ------
    ValueError
        If the estimated remainder beyond the cap exceeds ``tol`` times
        the integral anywhere the integral is non-negligible.
    """
    e = 1.0 - 2.0 * s
    vals = weighted_y_cumulative(utilde.values, utilde.y, e)
    tail = _tail_estimate(utilde.values, utilde.y, e)
    total = np.abs(vals[..., 0])
    scale = total.max() if total.size else 0.0
    bad = (np.abs(tail) > tol * total) & (total > 1e-8 * scale)
    if np.any(bad):
        raise ValueError("extension has not decayed at the y-cap; increase Ymax")
    return ExtensionField(utilde.grid, vals, 1.0 - s, utilde.y)


def compute_v(utilde: ExtensionField, s: float) -> SpaceTimeField:
    """``v(t, x) = int_0^Ymax y^(1-2s) U(t, x, y) dy``."""
    w = compute_w(utilde, s)
    return SpaceTimeField(utilde.grid, w.values[..., 0], causal=True)


@dataclass
class KeyEquationResult:
    """Weak-form residuals over the fixed test family."""

    max_residual: float
    residuals: list = field(default_factory=list)
    version: str = TEST_FAMILY_VERSION

    def as_dict(self) -> dict:
        return {"max_residual": self.max_residual, "residuals": self.residuals, "family": self.version}


def _test_function(t, xs, centre, radii):
    """Tensor bump and its time derivative on the lattice, shape (nt, N)."""
    def bump_and_slope(z, c, r):
        q = (z - c) / r
        b = smooth_bump(q)
        with np.errstate(divide="ignore", invalid="ignore"):
            db = np.where(np.abs(q) < 1, b * (-2 * q / (1 - q * q) ** 2), 0.0) / r
        return b, db

    bt, dbt = bump_and_slope(t, centre[0], radii[0])
    space = np.prod([bump_and_slope(xs[..., i], centre[i + 1], radii[i + 1])[0]
                     for i in range(xs.shape[-1])], axis=0)
    return bt[:, None] * space.reshape(1, -1), dbt[:, None] * space.reshape(1, -1)


def check_key_equation(v: SpaceTimeField, sigma: ConductivityField, masks: DomainMasks) -> KeyEquationResult:
    """Max over the test family of ``|int (v phi_t - sigma grad v . grad phi)| / (||v|| ||phi||)``.

    Integrals run over the domain cylinder on the lattice.  The time
    derivative falls on ``phi`` exactly; the energy term uses the same
    half-node flux form as the discrete operator, ``h^n phi^T A v`` with
    ``A`` the stiffness matrix of ``sigma``.
    """
    grid = v.grid
    vals = v.values[: grid.spec.Nt]
    t = grid.times(vals.shape[0])
    xs = grid.coords().reshape(-1, grid.n)
    om = masks.omega.ravel()
    idx = np.argwhere(masks.omega)
    lo = grid.coordinate_of(idx.min(axis=0) - 1)
    hi = grid.coordinate_of(idx.max(axis=0) + 1)
    box_lo = np.concatenate([[-grid.spec.T], lo])
    box_hi = np.concatenate([[grid.spec.T], hi])
    span = box_hi - box_lo
    measure = grid.dt * grid.cell_volume
    flat = vals.reshape(vals.shape[0], -1)
    vnorm = np.sqrt(measure * np.sum(np.abs(flat[:, om]) ** 2))
    if vnorm == 0:
        return KeyEquationResult(0.0, [0.0] * (len(TEST_CENTRES) * len(TEST_RADII)))
    energy = (stiffness_matrix(sigma) @ flat.T).T
    out = []
    for k, c in enumerate(TEST_CENTRES):
        # distinct fractions per coordinate so the centres are not collinear in 2D
        frac = np.array([c] + [c if i % 2 == 0 else 1.0 - c for i in range(grid.n)])
        centre = box_lo + frac * span
        for r in TEST_RADII:
            radii = r * span
            phi, phi_t = _test_function(t, xs, centre, radii)
            phi = phi * om[None, :]
            phi_t = phi_t * om[None, :]
            integral = measure * np.sum(flat * phi_t - energy * phi)
            pnorm = np.sqrt(measure * np.sum(phi ** 2))
            out.append(float(abs(integral) / (vnorm * pnorm)))
    return KeyEquationResult(max(out), out)


def smooth_taper(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    """1 before ``start``, 0 after ``stop``, C-infinity in between."""
    q = np.clip((t - start) / (stop - start), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(q < 1, np.exp(-1.0 / np.where(q < 1, 1 - q, 1.0)), 0.0)
        b = np.where(q > 0, np.exp(-1.0 / np.where(q > 0, q, 1.0)), 0.0)
    return np.where(q <= 0, 1.0, np.where(q >= 1, 0.0, a / (a + b)))


def check_one_minus_s_relation(v: SpaceTimeField, u: SpaceTimeField, s: float, sign: float = 1.0,
                               sigma: ConductivityField | None = None) -> float:
    """``||H^(1-s) v + sign * d_(1-s) u|| / ||u||`` on the original time window.

    ``v`` may extend past ``T`` (recommended: the operator is causal but the
    discrete symbol route sees the end of the record); it is tapered
    smoothly to zero over its extra slices before the symbol is applied.
    The comparison uses only the first ``Nt`` slices.

    Parameters
    ----------
    sign : float
        ``+1`` evaluates ``H^(1-s) v + d_(1-s) u``; ``-1`` evaluates
        ``H^(1-s) v - d_(1-s) u``.
    """
    if sigma is not None and not sigma.is_identity:
        raise ValueError("the symbol route needs sigma = identity")
    grid = u.grid
    nt = grid.spec.Nt
    if not np.any(u.values):
        return 0.0
    const = frac_constants(1.0 - s)
    vals = np.array(v.values)
    if v.nt > nt:
        tt = grid.times(v.nt)
        taper = smooth_taper(tt, tt[nt - 1], tt[-1])
        vals = vals * taper.reshape((-1,) + (1,) * grid.n)
    elif v.nt < nt:
        warnings.warn("v is shorter than the time window", RuntimeWarning, stacklevel=2)
    hv = apply_symbol(SpaceTimeField(grid, vals, causal=True), 1.0 - s).values[:nt]
    uu = u.values[:nt]
    return float(np.linalg.norm(hv + sign * const.d * uu) / np.linalg.norm(uu))


def outline_identity_residual(utilde: ExtensionField, hs_u: SpaceTimeField, s: float,
                              mask: np.ndarray | None = None, sign: float = -1.0) -> float:
    """Compare ``int_0^inf d/dy(y^(1-2s) dU/dy) dy`` with ``sign * H^s u / d_s``.

    The y-integral telescopes to ``-lim_{y->0} y^(1-2s) dU/dy``, read off by
    the same near-trace fit as the trace route.  Since the trace route gives
    ``H^s u = -d_s lim y^(1-2s) dU/dy``, the integral equals ``+H^s u / d_s``;
    ``sign=-1`` (the default) tests the form with the opposite sign, which
    leaves a relative discrepancy near 2.  Returns the relative L2
    discrepancy over ``mask`` (spatial) and the original time window.
    """
    from .fracop import trace_coefficient

    const = frac_constants(s)
    nt = utilde.grid.spec.Nt
    a = trace_coefficient(utilde, s)[:nt]
    lhs = -2.0 * s * a
    rhs = sign * hs_u.values[:nt] / const.d
    if mask is not None:
        lhs = lhs[:, mask]
        rhs = rhs[:, mask]
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
