import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fracpara import (ConductivityField, GridSpec, SpaceTimeField, apply_semigroup, build_discrete, build_grid,
                      check_gaussian_bounds, eval_exact, exact_kernel, tail_integral_fb)
from fracpara.heat_kernel import fb_closed_form, periodized_exact


def test_exact_kernel_normalization_oracle():
    assert eval_exact(0.0, 0.0, 1 / (4 * np.pi)) == pytest.approx(1.0)
    mass, _ = integrate.quad(lambda x: eval_exact(x, 0.3, 0.7, sigma=[[2.0]]), -np.inf, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        eval_exact(0.0, 0.0, 0.0)


def test_exact_kernel_solves_heat_equation():
    sig = np.array([[1.5, 0.3], [0.3, 0.8]])
    x = np.array([0.4, -0.2])
    tau, h = 0.6, 1e-4
    p = lambda xx, tt: eval_exact(xx, np.zeros(2), tt, sig, n=2)
    dt = (p(x, tau + h) - p(x, tau - h)) / (2 * h)
    div = 0.0
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            dij = (p(x + ei + ej, tau) - p(x + ei - ej, tau) - p(x - ei + ej, tau) + p(x - ei - ej, tau)) / (4 * h * h)
            div += sig[i, j] * dij
    assert dt == pytest.approx(div, rel=1e-5)


@pytest.mark.parametrize("b", [0.3, 0.5, 1.0, 1.7])
def test_fb_quadrature_matches_closed_form(b):
    for A in (0.5, 1.0, 2.0, 4.0):
        assert tail_integral_fb(b, A) == pytest.approx(fb_closed_form(b, A), rel=1e-10)
    with pytest.raises(ValueError):
        tail_integral_fb(-1.0, 1.0)


def test_discrete_kernel_hygiene(grid1d, identity1d):
    taus = (0.25, 0.5)
    k = build_discrete(identity1d, taus)
    for tau in taus:
        np.testing.assert_allclose(k.mass(tau), 1.0, atol=1e-10)
        assert k.asymmetry[tau] <= 1e-12
        z = grid1d.x[32]
        exact = periodized_exact(grid1d, [z], tau)
        num = k.table[tau][:, 32]
        assert np.abs(num - exact).sum() / exact.sum() < 1e-2


def test_discrete_kernel_anisotropic_positive_and_symmetric(small2d):
    sigma = ConductivityField.family(small2d, "anisotropic_bump", radius=1.0, amplitude=0.5)
    k = build_discrete(sigma, (0.1, 0.2, 0.4))
    for tau in k.taus:
        P = k.table[tau]
        np.testing.assert_allclose(P, P.T, atol=1e-10)
        np.testing.assert_allclose(k.mass(tau), 1.0, atol=1e-8)
    b = check_gaussian_bounds(k)
    assert b.violations == 0 and b.c1 >= b.c2 > 0


def test_implicit_method_approaches_expm(grid1d, identity1d):
    a = build_discrete(identity1d, (0.25,))
    b = build_discrete(identity1d, (0.25,), method="implicit")
    rel = np.abs(a.table[0.25] - b.table[0.25]).sum() / np.abs(a.table[0.25]).sum()
    assert rel < 2e-2


def test_semigroup_shift_and_propagation(grid1d, identity1d):
    k = exact_kernel(identity1d)
    u = SpaceTimeField.from_function(grid1d, lambda t, x: np.exp(-(t / 0.3) ** 2 - x[..., 0] ** 2), causal=False)
    assert apply_semigroup(u, 0.0, k) is u
    with pytest.raises(ValueError):
        apply_semigroup(u, -0.1, k)
    tau = 0.125  # four time steps: the spectral shift is exact
    out = apply_semigroup(u, tau, k).values
    t, x = grid1d.t, grid1d.x
    spread = 1 + 4 * tau
    shifted = (t - tau + 1.0) % 2.0 - 1.0  # time-periodic field
    images = sum(np.exp(-(x + 8.0 * m) ** 2 / spread) for m in (-1, 0, 1))  # space-periodic box
    ref = np.exp(-(shifted[:, None] / 0.3) ** 2) * images[None] / np.sqrt(spread)
    np.testing.assert_allclose(out, ref, atol=1e-6)


@given(tau1=st.floats(0.05, 0.5), tau2=st.floats(0.05, 0.5))
def test_exact_kernel_chapman_kolmogorov(tau1, tau2):
    g = build_grid(GridSpec(n=1, L=4.0, Nx=64, T=1.0, Nt=8))
    k = exact_kernel(ConductivityField.identity(g))
    a = np.exp(-g.x ** 2)
    np.testing.assert_allclose(k.propagate(k.propagate(a, tau1), tau2), k.propagate(a, tau1 + tau2), atol=1e-12)


def test_kernel_archive(tmp_path, identity1d):
    from fracpara.io import grid_from_header, read_archive, save_kernel

    k = build_discrete(identity1d, (0.25, 0.5))
    header, arrays = read_archive(save_kernel(tmp_path / "kernel", k))
    assert header["type"] == "heat-kernel" and header["taus"] == [0.25, 0.5]
    assert header["sigma"] == identity1d.digest()
    np.testing.assert_array_equal(arrays["tau_1"], k.table[0.5])
    assert grid_from_header(header).spec == identity1d.grid.spec
