import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracpara import (ConductivityField, SpaceTimeField, apply_balakrishnan, apply_extension_trace, apply_symbol,
                      exact_kernel, frac_constants, semigroup_property_check)
from fracpara.fracop import TraceFitError, trace_coefficient

from conftest import gaussian_datum

orders = st.floats(0.02, 0.98)


@given(orders)
def test_constants_reflection(s):
    assert frac_constants(s).d * frac_constants(1 - s).d == pytest.approx(1.0, abs=1e-13)


@given(orders)
def test_constants_against_mpmath(s):
    c = frac_constants(s)
    assert c.c == pytest.approx(float(1 / (2 ** (2 * mpmath.mpf(s)) * mpmath.gamma(s))), rel=1e-14)
    assert c.d == pytest.approx(2 ** (2 * s - 1) * math.gamma(s) / math.gamma(1 - s), rel=1e-12)


def test_half_order_constants():
    c = frac_constants(0.5)
    assert c.d == 1.0
    assert abs(c.c - 1 / (2 * math.sqrt(math.pi))) < 1e-15
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            frac_constants(bad)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_fourier_modes_are_eigenfunctions(grid1d, identity1d, s):
    k = exact_kernel(identity1d)
    for kx, kt in [(1, 0), (0, 3), (5, -7), (31, 31)]:
        xi, rho = np.pi * kx / 4, np.pi * kt
        u = SpaceTimeField.from_function(grid1d, lambda t, x: np.exp(1j * (xi * x[..., 0] + rho * t)), causal=False)
        lam = (xi ** 2 + 1j * rho) ** s
        out = apply_balakrishnan(u, s, k).values
        assert np.abs(out - lam * u.values).max() <= 1e-3 * abs(lam)
        np.testing.assert_allclose(apply_symbol(u, s).values, lam * u.values, atol=1e-10)


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_three_routes_agree(grid1d, identity1d, s):
    u = gaussian_datum(grid1d)
    k = exact_kernel(identity1d)
    ref = apply_symbol(u, s).values
    from fracpara.grid import graded_nodes
    for out in (apply_balakrishnan(u, s, k).values,
                apply_extension_trace(u, s, k, trace_nodes=graded_nodes(2.0, 64, 3.0)[:4]).values):
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-2


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), s=st.sampled_from([0.3, 0.6]))
def test_balakrishnan_linear(grid1d, identity1d, a, b, s):
    k = exact_kernel(identity1d)
    u = gaussian_datum(grid1d)
    w = gaussian_datum(grid1d, width=0.4, spread=1.0)
    lhs = apply_balakrishnan(u.with_values(a * u.values + b * w.values), s, k).values
    rhs = a * apply_balakrishnan(u, s, k).values + b * apply_balakrishnan(w, s, k).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)))


@given(j0=st.integers(8, 56), seed=st.integers(0, 2 ** 16))
def test_balakrishnan_causal(grid1d, identity1d, j0, seed):
    k = exact_kernel(identity1d)
    u = gaussian_datum(grid1d)
    pert = np.zeros(grid1d.shape)
    pert[j0 + 1:] = np.random.default_rng(seed).standard_normal((grid1d.spec.Nt - j0 - 1, grid1d.spec.Nx))
    a = apply_balakrishnan(u, 0.5, k).values
    b = apply_balakrishnan(u.with_values(u.values + pert), 0.5, k).values
    assert np.max(np.abs(a[: j0 + 1] - b[: j0 + 1])) == 0.0


def test_semigroup_property(grid1d):
    u = SpaceTimeField.from_function(grid1d, lambda t, x: np.exp(-(t / 0.25) ** 2 - x[..., 0] ** 2), causal=False)
    # the unpaired Nyquist frequency makes real parts lose a little between the two applications
    assert semigroup_property_check(u, 0.3, 0.4) < 1e-6
    assert semigroup_property_check(u, 0.5, 0.5) < 1e-6
    with pytest.raises(ValueError):
        semigroup_property_check(u, 0.7, 0.6)


def test_symbol_rejects_variable_sigma(grid1d):
    sigma = ConductivityField.family(grid1d, "isotropic_bump")
    with pytest.raises(ValueError):
        apply_symbol(gaussian_datum(grid1d), 0.5, sigma)


def test_trace_fit_detects_bad_samples(grid1d):
    from fracpara import ExtensionField

    y = np.array([0.0, 0.1, 0.2, 0.3])
    good = 1.0 + 0.5 * y ** 1.0 + 0.1 * y ** 2
    vals = np.broadcast_to(good, grid1d.shape + (4,))
    ext = ExtensionField(grid1d, vals, 0.5, y)
    np.testing.assert_allclose(trace_coefficient(ext, 0.5), 0.5)
    noisy = good + np.array([0.0, 0.02, -0.03, 0.02])
    with pytest.raises(TraceFitError):
        trace_coefficient(ExtensionField(grid1d, np.broadcast_to(noisy, grid1d.shape + (4,)), 0.5, y), 0.5)
