import numpy as np
import pytest

from fracpara import (ConductivityField, ExtensionField, SpaceTimeField, apply_balakrishnan, check_key_equation,
                      check_one_minus_s_relation, compute_v, compute_w, exact_kernel)
from fracpara.checks import _pipeline
from fracpara.reduction import outline_identity_residual, smooth_taper


@pytest.fixture(scope="module")
def pipeline1d(scenario1d):
    g = scenario1d.grid(0)
    sigma = ConductivityField.identity(g)
    masks = scenario1d.masks(g)
    f = scenario1d.bumps(g)[0]
    kernel = exact_kernel(sigma)
    u, ext, v = _pipeline(sigma, 0.5, f, masks, kernel=kernel, extra_nt=2 * g.spec.Nt)
    return g, sigma, masks, kernel, u, ext, v


def test_w_is_tail_integral(grid1d):
    y = grid1d.y
    prof = np.exp(-y)
    vals = np.broadcast_to(prof, grid1d.shape + (y.size,))
    w = compute_w(ExtensionField(grid1d, vals, 0.5, y), 0.5)
    # hat-function rule on the coarse top cells of the graded lattice
    np.testing.assert_allclose(w.values[..., 0], 1.0 - np.exp(-y[-1]), rtol=2e-3)
    assert w.s == 0.5
    assert not w.values[..., -1].any()


def test_w_rejects_undecayed_extension(grid1d):
    y = grid1d.y
    vals = np.broadcast_to(1.0 / (1 + y), grid1d.shape + (y.size,))
    with pytest.raises(ValueError):
        compute_w(ExtensionField(grid1d, vals, 0.5, y), 0.5)


def test_key_equation_passes_and_control_fails(scenario1d):
    g = scenario1d.grid(0)
    sigma = scenario1d.sigma(g)
    masks = scenario1d.masks(g)
    u, ext, v = _pipeline(sigma, 0.5, scenario1d.bumps(g)[0], masks)
    key = check_key_equation(v, sigma, masks)
    ctrl = check_key_equation(u, sigma, masks)
    assert key.max_residual < 5e-2
    assert ctrl.max_residual > 10 * key.max_residual
    assert len(key.residuals) == 9
    assert check_key_equation(SpaceTimeField.zeros(g), sigma, masks).max_residual == 0.0


def test_key_equation_exact_for_discrete_heat_solution(scenario1d):
    """A lattice solution of the semi-discrete heat equation leaves only the time error."""
    from fracpara import solve_local
    g = scenario1d.grid(0)
    sigma = scenario1d.sigma(g)
    masks = scenario1d.masks(g)
    ramp = np.sin(np.pi * np.clip((g.t + 1) / 1.5, 0, 1)) ** 2
    v = solve_local(sigma, np.outer(ramp, [1.0, -0.5]), masks, substeps=16)
    assert check_key_equation(v, sigma, masks).max_residual < 5e-3


def test_corrected_sign_relation_holds(pipeline1d):
    g, sigma, masks, kernel, u, ext, v = pipeline1d
    assert check_one_minus_s_relation(v, u, 0.5, sign=-1.0) < 5e-2
    assert check_one_minus_s_relation(v, u, 0.5, sign=1.0) > 1.5
    with pytest.raises(ValueError):
        check_one_minus_s_relation(v, u, 0.5, sigma=ConductivityField.family(g, "isotropic_bump"))


def test_outline_identity_sign(pipeline1d):
    g, sigma, masks, kernel, u, ext, v = pipeline1d
    hs = apply_balakrishnan(u, 0.5, kernel)
    assert outline_identity_residual(ext, hs, 0.5, sign=1.0) < 1e-3
    assert outline_identity_residual(ext, hs, 0.5, sign=-1.0) > 1.5


def test_v_is_causal(pipeline1d):
    g, sigma, masks, kernel, u, ext, v = pipeline1d
    assert v.causal and not v.values[0].any()
    assert v.nt == 2 * g.spec.Nt


def test_smooth_taper():
    t = np.linspace(0, 3, 301)
    w = smooth_taper(t, 1.0, 2.0)
    assert (w[t <= 1] == 1).all() and (w[t >= 2] == 0).all()
    assert np.all(np.diff(w) <= 0)
