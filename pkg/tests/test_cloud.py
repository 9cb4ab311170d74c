import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cloud_of
from oracles import neighbors_scan, voxel_cells
from tablegrasp import PointCloud, SpatialIndex, radius_neighbors, voxel_downsample


def test_rejects_length_mismatch():
    with pytest.raises(ValueError, match="colors"):
        PointCloud(np.zeros((5, 3)), colors=np.zeros((4, 3)))


def test_rejects_non_unit_normals():
    with pytest.raises(ValueError, match="unit"):
        PointCloud(np.zeros((1, 3)), normals=[[0, 0, 2.0]])


def test_rejects_bad_labels_and_nan():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), gt_instance=[0, -2])
    with pytest.raises(ValueError, match="non-finite"):
        PointCloud([[0, 0, np.nan]])


def test_arrays_are_read_only():
    c = cloud_of([[0, 0, 0]])
    with pytest.raises(ValueError):
        c.positions[0, 0] = 1.0


def test_gt_objects_groups_labels():
    c = cloud_of(np.zeros((5, 3)), gt_instance=[-1, 1, 0, 1, -1])
    objs = c.gt_objects()
    assert list(objs) == [0, 1]
    assert objs[1].tolist() == [1, 3]


# radius queries

def test_colinear_neighbors():
    index = SpatialIndex(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]))
    assert radius_neighbors(index, 1, 1.0).tolist() == [0, 2]
    assert radius_neighbors(index, 1, 0.5).tolist() == []


def test_query_out_of_range():
    with pytest.raises(IndexError):
        SpatialIndex(np.zeros((2, 3))).radius_neighbors(2, 1.0)


def test_neighbors_match_linear_scan(rng):
    pts = rng.uniform(0, 1, (1000, 3))
    index = SpatialIndex(pts)
    plain = pts.tolist()
    for i in rng.choice(1000, 50, replace=False):
        r = float(rng.uniform(0.02, 0.15))
        assert index.radius_neighbors(int(i), r).tolist() == neighbors_scan(plain, int(i), r)


def test_boundary_distance_is_inclusive():
    # 0.1 + 0.2 is not exactly representable; the exact re-filter decides
    pts = np.array([[0.0, 0, 0], [0.3, 0, 0], [0.1 + 0.2, 0, 0]])
    index = SpatialIndex(pts)
    assert index.radius_neighbors(0, 0.3).tolist() == neighbors_scan(pts.tolist(), 0, 0.3)


def test_count_and_pairs_agree(rng):
    pts = rng.uniform(0, 0.2, (300, 3))
    index = SpatialIndex(pts)
    r = 0.03
    counts = index.count_neighbors(r)
    i, j = index.pairs(r)
    assert np.all(i < j)
    assert np.array_equal(np.bincount(np.concatenate([i, j]), minlength=300), counts)


@given(
    arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)),
           elements=st.floats(-1, 1, allow_nan=False)),
    st.floats(1e-3, 1.5),
)
def test_neighbors_are_symmetric(pts, r):
    index = SpatialIndex(pts)
    hoods = [set(index.radius_neighbors(i, r).tolist()) for i in range(len(pts))]
    for i, h in enumerate(hoods):
        assert i not in h
        for j in h:
            assert i in hoods[j]


def test_workers_do_not_change_results(rng):
    pts = rng.uniform(0, 0.3, (2000, 3))
    a, b = SpatialIndex(pts, workers=1), SpatialIndex(pts, workers=4)
    assert np.array_equal(a.count_neighbors(0.02), b.count_neighbors(0.02))
    assert all(np.array_equal(x, y) for x, y in zip(a.pairs(0.02), b.pairs(0.02)))


# voxel grid

def test_voxel_merges_same_cell():
    out = voxel_downsample(cloud_of([[0, 0, 0], [0.001, 0, 0]]), 0.005)
    assert len(out) == 1
    assert np.allclose(out.positions[0], [0.0005, 0, 0], atol=1e-15)


def test_voxel_keeps_distinct_cells():
    pts = [[0, 0, 0], [0.01, 0, 0]]
    out = voxel_downsample(cloud_of(pts), 0.005)
    assert out.positions.tolist() == pts


def test_voxel_boundary_goes_to_upper_cell():
    out = voxel_downsample(cloud_of([[0.0049, 0, 0], [0.005, 0, 0]]), 0.005)
    assert len(out) == 2


def test_voxel_count_matches_hash_grid(rng):
    pts = rng.uniform(0, 1, (10_000, 3))
    out = voxel_downsample(cloud_of(pts), 0.005)
    assert len(out) == len(voxel_cells(pts.tolist(), 0.005))


def test_voxel_attributes(rng):
    pts = [[0.001, 0, 0], [0.002, 0, 0], [0.003, 0, 0]]
    c = cloud_of(
        pts,
        colors=[[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        normals=[[0, 0, 1], [0, 0, 1], [1, 0, 0]],
        gt_instance=[3, 1, 1],
        gt_semantic=[2, 2, 1],
    )
    out = voxel_downsample(c, 0.005)
    assert np.allclose(out.colors[0], [1 / 3] * 3)
    assert np.allclose(out.normals[0], np.array([1, 0, 2]) / np.sqrt(5))
    assert out.gt_instance.tolist() == [1]
    assert out.gt_semantic.tolist() == [2]


def test_voxel_label_tie_goes_to_smaller():
    c = cloud_of([[0.001, 0, 0], [0.002, 0, 0]], gt_instance=[4, 2])
    assert voxel_downsample(c, 0.005).gt_instance.tolist() == [2]


def test_voxel_cancelling_normals_fall_back():
    c = cloud_of([[0.001, 0, 0], [0.002, 0, 0]], normals=[[0, 0, 1], [0, 0, -1]])
    assert voxel_downsample(c, 0.005).normals.tolist() == [[0, 0, 1]]


@given(st.integers(0, 2**31 - 1), st.integers(1, 300))
def test_voxel_idempotent_on_single_point_cells(seed, n):
    rng = np.random.default_rng(seed)
    c = cloud_of(rng.uniform(-0.2, 0.2, (n, 3)), normals=_unit(rng, n))
    once = voxel_downsample(c, 0.01)
    twice = voxel_downsample(once, 0.01)
    assert np.array_equal(once.positions, twice.positions)
    assert np.allclose(once.normals, twice.normals, atol=1e-12)


def _unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_voxel_rejects_nonpositive():
    with pytest.raises(ValueError):
        voxel_downsample(cloud_of([[0, 0, 0]]), 0)
