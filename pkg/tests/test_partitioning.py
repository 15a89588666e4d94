import json

import numpy as np
import pytest

from condense.errors import DomainError
from condense.partitioning import (Partition, PartitionConfig, bin_partition,
                                   build_partition, choose_K, kmeans_centers,
                                   partition_to_json, sp_centers,
                                   voronoi_partition)
from condense.support_points import SpConfig, empirical_energy_objective


def assert_cover_and_disjoint(p: Partition, n_rows: int):
    seen = np.concatenate([c for c in p.cells]) if p.K else np.array([], dtype=int)
    assert seen.size == n_rows
    assert np.array_equal(np.sort(seen), np.arange(n_rows))
    assert p.sizes.sum() == n_rows


def test_choose_K_examples():
    assert choose_K(1) == 1
    assert choose_K(100) == 16
    assert choose_K(100_000) == 1000


def test_bin_single_cell():
    X = np.random.default_rng(0).uniform(size=(20, 2))
    p = bin_partition(X, 1)
    assert p.K == 1
    assert p.cells[0].size == 20


def test_bin_1d_equal_width_split():
    p = bin_partition(np.array([[0.0], [0.4], [0.6], [1.0]]), 2)
    assert p.K == 2
    assert set(p.cells[0]) == {0, 1}
    assert set(p.cells[1]) == {2, 3}


def test_bin_2d_kappa_from_root():
    X = np.random.default_rng(1).uniform(size=(300, 2))
    p = bin_partition(X, 16)
    assert p.K == 16
    assert p.descriptors["kappas"] == [4, 4]
    assert_cover_and_disjoint(p, 300)


def test_bin_consistency_bounds():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 3))
    p = bin_partition(X, 27)
    for k in range(p.K):
        rows = p.cells[k]
        if rows.size == 0:
            continue
        # decode the per-dim interval from the mixed-radix cell index
        idx = k
        for q in reversed(range(3)):
            kq = p.descriptors["kappas"][q]
            iq = idx % kq
            idx //= kq
            edges = p.descriptors["edges"][q]
            assert np.all(X[rows, q] >= edges[iq] - 1e-12)
            assert np.all(X[rows, q] <= edges[iq + 1] + 1e-12)


def test_bin_constant_dimension_warns():
    X = np.column_stack([np.zeros(10), np.arange(10.0)])
    p = bin_partition(X, 9)
    assert any("zero range" in w for w in p.warnings)
    assert p.descriptors["kappas"][0] == 1
    assert_cover_and_disjoint(p, 10)


def test_kmeans_single_center_is_mean():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 2))
    centers = kmeans_centers(X, 1, seed=0)
    np.testing.assert_allclose(centers[0], X.mean(axis=0), rtol=1e-12)


def test_kmeans_k_equals_n():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(8, 2))
    centers = kmeans_centers(X, 8, seed=1)
    np.testing.assert_allclose(centers, X, atol=1e-12)


def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(400, 2)) * 0.3
    b = rng.normal(size=(400, 2)) * 0.3 + 5.0
    X = np.vstack([a, b])
    centers = kmeans_centers(X, 2, seed=2)
    got = centers[np.argsort(centers[:, 0])]
    np.testing.assert_allclose(got[0], a.mean(axis=0), atol=0.1)
    np.testing.assert_allclose(got[1], b.mean(axis=0), atol=0.1)


def test_kmeans_errors_and_determinism():
    X = np.random.default_rng(6).normal(size=(5, 2))
    with pytest.raises(DomainError):
        kmeans_centers(X, 6, seed=0)
    np.testing.assert_array_equal(kmeans_centers(X, 2, seed=3),
                                  kmeans_centers(X, 2, seed=3))


def test_sp_centers_symmetric_and_degenerate():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(1500, 2))
    X = np.vstack([X, -X])
    c = sp_centers(X, 1, SpConfig(seed=4, init="random_subsample"))
    np.testing.assert_allclose(c[0], [0, 0], atol=1e-2)
    rep = np.tile([2.0, 3.0], (6, 1))
    np.testing.assert_array_equal(sp_centers(rep, 2, SpConfig(seed=0)),
                                  np.tile([2.0, 3.0], (2, 1)))


def test_sp_centers_beat_kmeans_on_energy_objective():
    rng = np.random.default_rng(8)
    X = rng.standard_t(df=3, size=(3000, 2))
    sp = sp_centers(X, 12, SpConfig(seed=5, init="random_subsample", tol=1e-7))
    km = kmeans_centers(X, 12, seed=5)
    assert (empirical_energy_objective(sp, X)
            <= empirical_energy_objective(km, X) + 1e-9)


def test_voronoi_single_and_two_centers():
    X = np.array([[0.1], [0.9]])
    p1 = voronoi_partition(X, np.array([[0.5]]))
    assert p1.K == 1 and p1.cells[0].size == 2
    p2 = voronoi_partition(X, np.array([[0.0], [1.0]]))
    assert set(p2.cells[0]) == {0} and set(p2.cells[1]) == {1}


def test_voronoi_tie_goes_to_lowest_center_index():
    X = np.array([[0.5, 0.0]])
    centers = np.array([[0.0, 0.0], [1.0, 0.0]])
    p = voronoi_partition(X, centers)
    assert p.cell_of[0] == 0


def test_voronoi_nearest_invariant():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(100, 2))
    centers = rng.normal(size=(7, 2))
    p = voronoi_partition(X, centers)
    d = np.linalg.norm(X[:, None, :] - centers[None, :, :], axis=2)
    for r in range(100):
        assert d[r, p.cell_of[r]] <= d[r].min() + 1e-12
    assert_cover_and_disjoint(p, 100)


def test_voronoi_dimension_mismatch():
    with pytest.raises(DomainError):
        voronoi_partition(np.zeros((3, 2)), np.zeros((2, 3)))


def test_build_partition_dispatch_and_seed_determinism():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(200, 2))
    for strategy in ("bins", "voronoi_kmeans", "voronoi_sp"):
        cfg = PartitionConfig(strategy=strategy, seed=11)
        a = build_partition(X, cfg, 5)
        b = build_partition(X, cfg, 5)
        np.testing.assert_array_equal(a.cell_of, b.cell_of)
        assert_cover_and_disjoint(a, 200)


def test_partition_json_roundtrip_fields():
    X = np.random.default_rng(11).uniform(size=(40, 2))
    doc = json.loads(partition_to_json(bin_partition(X, 4)))
    assert doc["kind"] == "bins"
    assert doc["K"] == 4
    assert sum(doc["sizes"]) == 40
    doc2 = json.loads(partition_to_json(voronoi_partition(X, X[:3])))
    assert doc2["kind"] == "voronoi"
    assert len(doc2["centers"]) == 3
