import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracpara import DomainMasks, ExtensionField, GridError, GridSpec, SpaceTimeField, build_grid
from fracpara.grid import graded_nodes, weighted_y_cumulative, weighted_y_integral


def test_lattice_layout():
    g = build_grid(GridSpec(n=1, L=1.0, Nx=8, T=1.0, Nt=8, Ymax=1.0, Ny=4))
    np.testing.assert_allclose(g.x[:3], [-1.0, -0.75, -0.5])
    np.testing.assert_allclose(g.y, [0.0, 0.0625, 0.25, 0.5625, 1.0])
    assert g.dx == pytest.approx(0.25)
    assert g.shape == (8, 8)


def test_default_cap_and_refinement():
    spec = GridSpec(n=2, L=2.0, Nx=8, T=0.5, Nt=8)
    assert spec.Ymax == pytest.approx(10.0)
    fine = spec.refined(2)
    assert (fine.Nx, fine.Nt, fine.Ny) == (16, 16, 64)
    assert fine.Ymax == spec.Ymax


@pytest.mark.parametrize("kwargs", [
    dict(n=3, L=1.0, Nx=8, T=1.0, Nt=8),
    dict(n=1, L=-1.0, Nx=8, T=1.0, Nt=8),
    dict(n=1, L=1.0, Nx=2, T=1.0, Nt=8),
    dict(n=1, L=1.0, Nx=8, T=1.0, Nt=8, grade=0.5),
    dict(n=1, L=1.0, Nx=8, T=1.0, Nt=8, Ymax=-2.0),
])
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(GridError):
        GridSpec(**kwargs)


@given(n=st.sampled_from([1, 2]), nx=st.integers(4, 40), nt=st.integers(4, 40),
       L=st.floats(0.1, 10.0), T=st.floats(0.1, 10.0))
def test_grid_spacing_and_digest(n, nx, nt, L, T):
    spec = GridSpec(n=n, L=L, Nx=nx, T=T, Nt=nt)
    g = build_grid(spec)
    assert g.spatial_shape == (nx,) * n
    np.testing.assert_allclose(np.diff(g.x), 2 * L / nx)
    np.testing.assert_allclose(np.diff(g.t), 2 * T / nt)
    assert spec.digest() == GridSpec(**spec.as_dict()).digest()


def test_causal_field_first_slice_zero(grid1d):
    u = SpaceTimeField(grid1d, np.ones(grid1d.shape))
    assert not u.values[0].any()
    assert SpaceTimeField(grid1d, np.ones(grid1d.shape), causal=False).values[0].all()
    with pytest.raises(GridError):
        SpaceTimeField(grid1d, np.ones((4, 3)))
    assert u.padded(80).nt == 80 and not u.padded(80).values[64:].any()


def test_extension_field_validation(grid1d):
    vals = np.zeros(grid1d.shape + (grid1d.y.size,))
    ExtensionField(grid1d, vals, 0.5)
    with pytest.raises(GridError):
        ExtensionField(grid1d, vals[..., 1:], 0.5, grid1d.y[1:])
    bad = vals.copy()
    bad[1, 1, 1] = np.nan
    with pytest.raises(GridError):
        ExtensionField(grid1d, bad, 0.5)


def test_masks_and_boundary_ring(grid1d, small2d):
    m = DomainMasks.from_boxes(grid1d, [[-1, 1]], [[1.75, 3]])
    assert m.omega.sum() == 15
    assert len(m.boundary) == 2
    np.testing.assert_allclose(m.normals.ravel(), [-1.0, 1.0])
    m2 = DomainMasks.from_boxes(small2d, [[-1, 1], [-1, 1]], [[1.5, 2.6], [-0.5, 0.5]])
    k = len(np.unique(np.argwhere(m2.omega)[:, 0]))
    assert len(m2.boundary) == 4 * (k + 1)
    assert np.allclose(np.linalg.norm(m2.normals, axis=1), 1.0)
    assert not (m2.closure & m2.w_set).any()


@pytest.mark.parametrize("omega,w", [
    ([[-1, 1]], [[0.5, 3]]),          # overlap
    ([[-1, 1]], [[0.95, 3]]),         # too close
    ([[-3.9, 1]], [[2, 3]]),          # domain at the box edge
    ([[-1, 1], [0, 1]], [[2, 3]]),    # wrong dimension
    ([[1, -1]], [[2, 3]]),            # empty interval
])
def test_mask_errors(grid1d, omega, w):
    with pytest.raises(GridError):
        DomainMasks.from_boxes(grid1d, omega, w)


@given(e=st.floats(-0.95, 0.95), a=st.floats(-2, 2), b=st.floats(-2, 2),
       ny=st.integers(4, 40), grade=st.floats(1.0, 3.0))
def test_weighted_integral_exact_for_affine(e, a, b, ny, grade):
    y = graded_nodes(2.0, ny, grade)
    f = a + b * y
    val, _ = weighted_y_integral(f, y, e, warn=False)
    exact = a * 2.0 ** (e + 1) / (e + 1) + b * 2.0 ** (e + 2) / (e + 2)
    assert val == pytest.approx(exact, rel=1e-10, abs=1e-12)
    cum = weighted_y_cumulative(f, y, e)
    assert cum[0] == pytest.approx(val, rel=1e-10, abs=1e-12)
    assert cum[-1] == 0.0


def test_weighted_integral_tail_and_weight_checks():
    y = graded_nodes(10.0, 400, 1.0)
    with pytest.raises(ValueError):
        weighted_y_integral(np.ones_like(y), y, -1.0)
    f = (1 + y) ** -3.0
    val, tail = weighted_y_integral(f, y, 0.0, warn=False)
    exact_total = 0.5
    assert val + tail == pytest.approx(exact_total, rel=2e-3)
    with pytest.warns(RuntimeWarning):
        weighted_y_integral((1 + y) ** -1.2, y, 0.0)
