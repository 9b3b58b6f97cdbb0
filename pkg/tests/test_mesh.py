import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexopt import build_mesh, element_dof_map, interface_sets
from flexopt.mesh import interface_dofs


def test_single_element():
    m = build_mesh(1, 1)
    assert (m.n_nodes, m.n_elements, m.n_dofs) == (4, 1, 8)
    assert sorted(element_dof_map(m, 0)) == list(range(8))


def test_two_elements_share_an_edge():
    m = build_mesh(2, 1)
    assert (m.n_nodes, m.n_elements) == (6, 2)
    assert len(set(m.connectivity[0]) & set(m.connectivity[1])) == 2
    assert len(set(element_dof_map(m, 0)) & set(element_dof_map(m, 1))) == 4


def test_200x200_counts():
    m = build_mesh(200, 200)
    assert m.n_elements == 40000
    assert m.n_dofs == 2 * 201 ** 2 == 80802


def test_center_element_of_3x3():
    # element (ix=1, iy=1) is e=4; its nodes (1,1),(2,1),(2,2),(1,2) are 5, 9, 10, 6
    m = build_mesh(3, 3)
    assert list(m.connectivity[4]) == [5, 9, 10, 6]
    assert list(element_dof_map(m, 4)) == [10, 11, 18, 19, 20, 21, 12, 13]


def test_interface_sizes():
    assert [len(s) for s in interface_sets(build_mesh(1, 1))] == [2, 2]
    assert len(interface_sets(build_mesh(4, 3))[1]) == 5
    assert len(interface_sets(build_mesh(2, 2, 2))[1]) == 9


def test_interface_dofs_cover_both_faces():
    m = build_mesh(3, 2)
    dofs = interface_dofs(m)
    assert dofs.size == 2 * 2 * 4
    assert np.all(np.diff(dofs) > 0)


def test_element_index_out_of_range():
    with pytest.raises(ValueError):
        element_dof_map(build_mesh(2, 2), 4)


@pytest.mark.parametrize("dims", [(0, 3), (3, -1), (2, 2, 0), (1.5, 2)])
def test_invalid_dims(dims):
    with pytest.raises(ValueError):
        build_mesh(*dims)


def test_to_grid_matches_numbering():
    m = build_mesh(3, 2)
    grid = m.to_grid(np.arange(6))
    assert grid[2, 1] == 2 * 2 + 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.one_of(st.none(), st.integers(1, 4)))
def test_mesh_invariants(nelx, nely, nelz):
    m = build_mesh(nelx, nely, nelz)
    nn = 4 if nelz is None else 8
    assert m.connectivity.shape == (m.n_elements, nn)
    # distinct corners, all in range
    assert all(len(set(row)) == nn for row in m.connectivity)
    assert m.connectivity.max() < m.n_nodes
    # every displacement component is touched by some element
    assert np.array_equal(np.unique(m.edof), np.arange(m.n_dofs))
    bottom, top = interface_sets(m)
    assert not set(bottom) & set(top)
    expected_top = nelx + 1 if nelz is None else (nelx + 1) * (nely + 1)
    assert len(top) == expected_top
    again = build_mesh(nelx, nely, nelz)
    assert np.array_equal(again.interface_top, m.interface_top)
    assert np.array_equal(again.interface_bottom, m.interface_bottom)
