import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biot_schwarz.mesh import (all_vertex_patches, build_hierarchy, build_uniform_mesh,
                               parent_cell, refine, vertex_patches)


def test_single_cell_mesh():
    m = build_uniform_mesh(1)
    assert m.n_cells == 1
    assert m.n_interior_faces == 0
    assert m.n_boundary_faces == 4
    vert, horiz = m.interior_faces()
    assert vert.plus.size == horiz.plus.size == 0


def test_four_by_four_counts():
    m = build_uniform_mesh(4)
    vert, horiz = m.interior_faces()
    assert m.n_cells == 16
    assert vert.plus.size + horiz.plus.size == 24
    assert sum(f.plus.size for f in m.boundary_faces().values()) == 16
    assert sum(p.is_interior for p in all_vertex_patches(m)) == 9


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_rejects_invalid_sizes(bad):
    with pytest.raises(ValueError):
        build_uniform_mesh(bad)


@given(st.integers(1, 40))
def test_h_times_n_is_one(n):
    m = build_uniform_mesh(n)
    assert m.h * m.n_per_side == 1.0
    assert refine(m).h == m.h / 2


@given(st.integers(1, 12))
def test_every_interior_face_has_two_cells_and_boundary_one(n):
    m = build_uniform_mesh(n)
    count = np.zeros(m.n_cells, dtype=int)
    for f in m.interior_faces():
        assert np.all(f.plus >= 0) and np.all(f.minus >= 0)
        assert np.all(f.plus != f.minus)
        np.add.at(count, f.plus, 1)
        np.add.at(count, f.minus, 1)
    for f in m.boundary_faces().values():
        assert np.all(f.minus == -1)
        np.add.at(count, f.plus, 1)
    assert np.all(count == 4)


@given(st.integers(1, 12))
def test_signed_face_measures_sum_to_zero_per_cell(n):
    """Outward normals times face length add up to zero on every cell."""
    m = build_uniform_mesh(n)
    total = np.zeros((m.n_cells, 2))
    for f in m.interior_faces():
        np.add.at(total, f.plus, f.normal * m.h)
        np.add.at(total, f.minus, -f.normal * m.h)
    for f in m.boundary_faces().values():
        np.add.at(total, f.plus, f.normal * m.h)
    np.testing.assert_allclose(total, 0.0, atol=1e-15)


def test_interior_normals_point_from_plus_to_minus():
    m = build_uniform_mesh(5)
    centers = m.cell_origins() + m.h / 2
    for f in m.interior_faces():
        d = centers[f.minus] - centers[f.plus]
        np.testing.assert_allclose(d / m.h, f.normal)


def test_refine_single_cell():
    child = refine(build_uniform_mesh(1))
    assert child.n_per_side == 2 and child.n_cells == 4
    assert child.parent.n_per_side == 1


def test_double_refinement_nests():
    coarse = build_uniform_mesh(2)
    mid = refine(coarse)
    fine = refine(mid)
    assert fine.n_per_side == 8
    ancestor = parent_cell(mid)[parent_cell(fine)]
    assert np.all(np.bincount(ancestor, minlength=coarse.n_cells) == 16)


@given(st.integers(1, 10))
def test_fine_cells_lie_inside_their_parent(n):
    fine = refine(build_uniform_mesh(n))
    par = parent_cell(fine)
    lo = fine.parent.cell_origins()[par]
    o = fine.cell_origins()
    assert np.all(o >= lo - 1e-15)
    assert np.all(o + fine.h <= lo + fine.parent.h + 1e-15)


def test_parent_cell_requires_parent():
    with pytest.raises(ValueError):
        parent_cell(build_uniform_mesh(3))


def test_hierarchy_is_coarsest_first():
    ms = build_hierarchy(2, 4)
    assert [m.n for m in ms] == [2, 4, 8, 16]
    assert ms[-1].hierarchy() == ms
    assert all(f.parent is c for c, f in zip(ms, ms[1:]))


def test_single_patch_on_two_by_two():
    (p,) = vertex_patches(build_uniform_mesh(2))
    assert sorted(p.cells) == [0, 1, 2, 3]
    assert p.is_interior


def test_nine_patches_on_four_by_four():
    m = build_uniform_mesh(4)
    ps = vertex_patches(m)
    assert len(ps) == 9
    assert all(len(p.cells) == 4 for p in ps)
    corner = int(m.cell_index(0, 0))
    assert sum(corner in p.cells for p in ps) == 1


def test_patches_need_an_interior_vertex():
    with pytest.raises(ValueError):
        vertex_patches(build_uniform_mesh(1))


def test_patch_order_is_lexicographic_x_major():
    m = build_uniform_mesh(5)
    ids = [p.vertex_id for p in vertex_patches(m)]
    assert ids == sorted(ids)
    vx, vy = np.divmod(np.array(ids), m.n + 1)
    assert list(zip(vx, vy)) == sorted(zip(vx, vy))


def test_boundary_patches_are_flagged():
    ps = all_vertex_patches(build_uniform_mesh(3))
    sizes = sorted({len(p.cells) for p in ps})
    assert sizes == [1, 2, 4]
    assert all(p.is_interior == (len(p.cells) == 4) for p in ps)


@settings(max_examples=20)
@given(st.integers(2, 14))
def test_patches_cover_every_cell_at_most_four_times(n):
    m = build_uniform_mesh(n)
    count = np.zeros(m.n_cells, dtype=int)
    for p in vertex_patches(m):
        count[list(p.cells)] += 1
    assert count.min() >= 1 and count.max() <= 4


@settings(max_examples=10)
@given(st.integers(3, 10))
def test_every_interior_face_is_inside_some_patch(n):
    m = build_uniform_mesh(n)
    pairs = set()
    for p in vertex_patches(m):
        c = set(p.cells)
        pairs |= {(a, b) for a in c for b in c}
    for f in m.interior_faces():
        assert all((int(a), int(b)) in pairs for a, b in zip(f.plus, f.minus))
