import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fracpara import ConductivityField, GridError, check_cauchy_invariance, diffeo_family, pushforward_sigma
from fracpara.pushforward import (blockwise_discrepancy, boundary_displacement, cubic_bump_1d, pushforward_density,
                                  radial_bump_2d, shift_bump)

points2 = st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2)


@given(x=st.floats(-2, 2), c=st.floats(-0.5, 0.5), w=st.floats(0.3, 1.0), a=st.floats(0.0, 0.9))
def test_cubic_bump_inverse_roundtrip(x, c, w, a):
    phi = cubic_bump_1d(c, w, a)
    z = phi(np.array([x]))
    np.testing.assert_allclose(phi.inverse(z), [x], atol=1e-7)
    assert phi.det(np.array([x])) > 0


@given(p=points2, r=st.floats(0.4, 1.0), a=st.floats(0.0, 0.45))
def test_radial_bump_inverse_and_jacobian(p, r, a):
    phi = radial_bump_2d((0.1, -0.2), r, a)
    x = np.array(p)
    np.testing.assert_allclose(phi.inverse(phi(x)), x, atol=1e-7)
    h = 1e-6
    fd = np.stack([(phi(x + h * e) - phi(x - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    np.testing.assert_allclose(phi.jacobian(x), fd, atol=1e-6)


@given(p=points2, a=st.floats(0.0, 0.45))
def test_shift_bump_jacobian(p, a):
    phi = shift_bump([0.5, 0.0], 0.6, a)
    x = np.array(p)
    h = 1e-6
    fd = np.stack([(phi(x + h * e) - phi(x - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    np.testing.assert_allclose(phi.jacobian(x), fd, atol=1e-6)


@given(amp=st.floats(0.0, 0.9), a=st.floats(0.0, 0.45))
def test_pushforward_sigma_is_spd(small2d, amp, a):
    sigma = ConductivityField.family(small2d, "anisotropic_bump", radius=1.0, amplitude=amp)
    pushed = pushforward_sigma(sigma, radial_bump_2d((0, 0), 0.8, a))
    ev = np.linalg.eigvalsh(pushed.values)
    assert ev.min() > 0
    np.testing.assert_allclose(pushed.values, np.swapaxes(pushed.values, -1, -2), atol=1e-12)


def test_pushforward_identity_away_from_support(small2d):
    sigma = ConductivityField.family(small2d, "anisotropic_bump", radius=0.8, amplitude=0.5)
    phi = radial_bump_2d((0, 0), 0.7, 0.3)
    pushed = pushforward_sigma(sigma, phi)
    far = np.linalg.norm(small2d.coords(), axis=-1) > 1.0
    np.testing.assert_allclose(pushed.values[far], sigma.values[far], atol=1e-12)
    cap = pushforward_density(small2d, phi)
    np.testing.assert_allclose(cap[far], 1.0)


def test_pushforward_of_constant_in_1d(grid1d):
    """In 1D the rule reduces to ``sigma J`` at the preimage."""
    sigma = ConductivityField.identity(grid1d)
    phi = cubic_bump_1d(0.0, 0.7, 0.3)
    pushed = pushforward_sigma(sigma, phi)
    x = phi.inverse(grid1d.coords())
    np.testing.assert_allclose(pushed.values[:, 0, 0], phi.jacobian(x)[:, 0, 0], atol=1e-10)


def test_non_injective_map_rejected(grid1d):
    with pytest.raises(ValueError):
        cubic_bump_1d(0.0, 0.7, 1.2)
    with pytest.raises(ValueError):
        diffeo_family("nope")
    bad = shift_bump([0.0], width=0.2, strength=0.9)
    with pytest.raises(GridError):
        bad.check_injective(grid1d)


def test_invariance_and_control(scenario1d):
    g = scenario1d.grid(0)
    sigma = scenario1d.sigma(g)
    masks = scenario1d.masks(g)
    good = check_cauchy_invariance(sigma, cubic_bump_1d(0.0, 0.7, 0.3), masks)
    assert good.boundary_displacement == 0.0
    assert good.blockwise < 5e-2
    bad = check_cauchy_invariance(sigma, shift_bump([1.0], 0.6, 0.4), masks)
    assert bad.boundary_displacement > 0.1
    assert bad.blockwise > 0.1


def test_blockwise_discrepancy_of_identical_maps(scenario1d):
    from fracpara import assemble_dn_matrix
    g = scenario1d.grid(0)
    dn = assemble_dn_matrix("local", scenario1d.sigma(g), scenario1d.masks(g))
    assert blockwise_discrepancy(dn, dn) == 0.0
