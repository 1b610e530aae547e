import numpy as np
import pytest

from sdvm.errors import ConfigurationError
from sdvm.mesh import SlabMesh, TensorCellGrid, TimePartition, build_uniform, refine_once


def test_single_cell_diameter():
    mesh = build_uniform(T=1.0, M=1, nx=1, nv=1,
                         x_bounds=(0.0, 1.0), v_bounds=(-1.0, 1.0))
    assert mesh.n_slabs == 1
    assert mesh.grid.n_cells == 1
    assert mesh.h == pytest.approx(np.sqrt(1 + 1 + 4 + 4))
    assert mesh.h_field == pytest.approx(np.sqrt(2))


def test_uniform_split():
    mesh = build_uniform(T=1.0, M=2, nx=2, nv=2)
    assert np.allclose(mesh.time.breakpoints, [0.0, 0.5, 1.0])
    t0, t1 = mesh.time.slab(2)
    assert (t0, t1) == (0.5, 1.0)


def test_refine_twice_halves_h_twice():
    mesh = build_uniform(T=1.0, M=1, nx=1, nv=1, v_bounds=(-1.0, 1.0))
    fine = refine_once(refine_once(mesh))
    assert fine.time.n_slabs == 4
    assert fine.grid.x_nodes.size - 1 == 4
    # oracle: recompute the diameter of one fine element from the formula
    dt, dx, dv = 0.25, 0.25, 0.5
    assert fine.h == pytest.approx(np.sqrt(dt**2 + dx**2 + 2 * dv**2))
    assert fine.h == pytest.approx(mesh.h / 4)


def test_refinement_ratio_is_half():
    mesh = build_uniform(T=2.0, M=3, nx=5, nv=4, x_bounds=(0.0, 3.0),
                         v_bounds=(-2.0, 2.0))
    fine = refine_once(mesh)
    assert fine.h / mesh.h == pytest.approx(0.5)
    assert fine.h_field / mesh.h_field == pytest.approx(0.5)


def test_refinement_is_nesting():
    mesh = build_uniform(T=1.0, M=2, nx=3, nv=2)
    fine = refine_once(mesh)
    for coarse_arr, fine_arr in [
            (mesh.time.breakpoints, fine.time.breakpoints),
            (mesh.grid.x_nodes, fine.grid.x_nodes),
            (mesh.grid.v1_nodes, fine.grid.v1_nodes)]:
        for val in coarse_arr:
            assert np.any(np.isclose(fine_arr, val))


def test_slabs_tile_time_interval():
    mesh = build_uniform(T=1.5, M=6, nx=2, nv=2)
    lengths = mesh.time.slab_lengths()
    assert lengths.sum() == pytest.approx(1.5)
    assert np.all(lengths > 0)


def test_cells_tile_box():
    mesh = build_uniform(T=1.0, M=1, nx=4, nv=3, x_bounds=(0.0, 2.0),
                         v_bounds=(-1.0, 1.0))
    vol = (np.diff(mesh.grid.x_nodes)[:, None, None]
           * np.diff(mesh.grid.v1_nodes)[None, :, None]
           * np.diff(mesh.grid.v2_nodes)[None, None, :]).sum()
    assert vol == pytest.approx(2.0 * 2.0 * 2.0)


@pytest.mark.parametrize("kwargs", [
    dict(T=-1.0, M=1, nx=1, nv=1),
    dict(T=1.0, M=0, nx=1, nv=1),
    dict(T=1.0, M=1, nx=0, nv=1),
    dict(T=1.0, M=1, nx=1, nv=1, x_bounds=(1.0, 0.0)),
    dict(T=1.0, M=1, nx=1, nv=1, v_bounds=(2.0, 2.0)),
])
def test_invalid_configurations_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        build_uniform(**kwargs)


def test_time_partition_validation():
    with pytest.raises(ConfigurationError):
        TimePartition(np.array([0.1, 0.5, 1.0]))
    with pytest.raises(ConfigurationError):
        TimePartition(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ConfigurationError):
        TensorCellGrid(np.array([0.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
