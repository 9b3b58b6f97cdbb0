import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexopt import ConfigurationError, build_mesh, prescribed_2d, prescribed_3d, validate_degree_sets
from flexopt.degrees import DEGREES_2D, DEGREES_3D, prescribed_field


def _top_disp(field, mesh):
    u = field.full()
    top = mesh.interface_top
    return np.stack([u[mesh.ndim * top + k] for k in range(mesh.ndim)], axis=1)


def _bottom_disp(field, mesh):
    u = field.full()
    bot = mesh.interface_bottom
    return np.stack([u[mesh.ndim * bot + k] for k in range(mesh.ndim)], axis=1)


@pytest.mark.parametrize("degree,expected", [("tx", (1.0, 0.0)), ("ty", (0.0, 1.0))])
def test_translations(degree, expected):
    m = build_mesh(6, 4)
    f = prescribed_2d(degree, m)
    assert np.all(_top_disp(f, m) == expected)
    assert np.all(_bottom_disp(f, m) == 0.0)


def test_rz_profile():
    m = build_mesh(8, 5)
    f = prescribed_2d("rz", m)
    d = _top_disp(f, m)
    x = m.coords[m.interface_top, 0]
    assert np.all(d[:, 0] == 1.0)
    assert d[x == 0, 1] == pytest.approx(1.0)
    assert d[x == 8, 1] == pytest.approx(-1.0)
    assert d[x == 4, 1] == pytest.approx(0.0, abs=1e-15)
    # affine in x
    assert np.allclose(np.diff(d[np.argsort(x), 1], 2), 0.0)


def test_rz_centered_on_rectangle():
    m = build_mesh(8, 4)
    d = _top_disp(prescribed_2d("rz", m, rz_mode="centered"), m)
    assert np.allclose(d[:, 0], 0.5)
    assert np.allclose(prescribed_2d("rz", build_mesh(5, 5), rz_mode="centered").values,
                       prescribed_2d("rz", build_mesh(5, 5)).values)


def test_support_only_on_interfaces():
    m = build_mesh(5, 3)
    for deg in DEGREES_2D:
        f = prescribed_2d(deg, m)
        u = f.full()
        mask = np.ones(m.n_dofs, bool)
        mask[f.indices] = False
        assert np.all(u[mask] == 0.0)
        assert np.all(np.isfinite(f.values))


def test_tz_3d():
    m = build_mesh(2, 3, 2)
    d = _top_disp(prescribed_3d("tz", m), m)
    assert np.all(d == (0.0, 0.0, 1.0))


def test_rz_3d_on_axis_node():
    m = build_mesh(2, 2, 2)
    d = _top_disp(prescribed_3d("rz", m), m)
    r = m.coords[m.interface_top]
    on_axis = np.all(r[:, :2] == 1.0, axis=1)
    assert on_axis.sum() == 1
    assert np.all(d[on_axis] == 0.0)


def test_rx_cross_product_by_hand():
    # theta = (1,0,0); u = theta x (r - c) = (0, -(z - cz), y - cy)
    m = build_mesh(2, 4, 2)
    r = m.coords[m.interface_top]
    d = _top_disp(prescribed_3d("rx", m), m)
    node = np.flatnonzero((r[:, 1] == 3.0) & (r[:, 0] == 0.0))[0]  # y = cy + 1
    assert d[node, 2] == pytest.approx(1.0)
    assert d[node, 1] == pytest.approx(-(r[node, 2] - 1.0))
    assert d[node, 0] == 0.0


def test_unknown_degree():
    with pytest.raises(ValueError):
        prescribed_2d("tz", build_mesh(2, 2))
    with pytest.raises(ValueError):
        prescribed_3d("qq", build_mesh(2, 2, 2))
    with pytest.raises(ValueError):
        prescribed_2d("rz", build_mesh(2, 2), rz_mode="sideways")


def test_validate_ok():
    s = validate_degree_sets(["ty"], ["tx"])
    assert s.doc == ("ty",) and s.dof == ("tx",)
    assert s.active == ("ty", "tx")
    assert validate_degree_sets("tx,ty", "rz").doc == ("tx", "ty")


@pytest.mark.parametrize("doc,dof,needle", [
    (["tx"], ["tx"], "tx"),
    ([], ["tx"], "doc"),
    (["tx"], [], "dof"),
    (["ty", "ty"], ["tx"], "ty"),
    (["tq"], ["tx"], "tq"),
])
def test_validate_errors(doc, dof, needle):
    with pytest.raises(ConfigurationError, match=needle):
        validate_degree_sets(doc, dof)


def test_validate_3d_ids():
    validate_degree_sets(["tx", "ty", "tz", "rz"], ["rx", "ry"], ndim=3)
    with pytest.raises(ConfigurationError):
        validate_degree_sets(["tz"], ["tx"], ndim=2)


def _pairwise_distances(p):
    return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4), st.sampled_from(DEGREES_3D),
       st.floats(1e-8, 1e-4))
def test_rigid_motion_3d(nx, ny, nz, degree, t):
    # small motions preserve node distances to first order in t
    m = build_mesh(nx, ny, nz)
    r = m.coords[m.interface_top]
    d = _top_disp(prescribed_3d(degree, m), m)
    change = _pairwise_distances(r + t * d) - _pairwise_distances(r)
    tol = 10 * t * t * max(1.0, np.abs(d).max() ** 2) + 1e-12
    assert np.abs(change).max() <= tol
    if degree[0] == "t":
        assert np.abs(change).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 6))
def test_2d_fields_linear(nx, ny):
    m = build_mesh(nx, ny)
    for deg in DEGREES_2D:
        f = prescribed_field(deg, m)
        assert np.array_equal(f.scaled(3.0).values, 3.0 * f.values)
        d = _top_disp(f, m)
        x = m.coords[m.interface_top, 0]
        A = np.stack([np.ones_like(x), x], axis=1)
        for k in range(2):
            coef, *_ = np.linalg.lstsq(A, d[:, k], rcond=None)
            assert np.allclose(A @ coef, d[:, k], atol=1e-12)
