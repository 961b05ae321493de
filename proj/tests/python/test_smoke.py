import math

import numpy as np
import pytest

import rstd


def brute_force_tt(cores):
    """Chain of (I,r1), (r1,H,r2), (r2,W,r3), (r3,O) cores."""
    a, b, c, d = cores
    return np.einsum("ia,ahb,bwc,co->ihwo", a, b, c, d)


def test_tt_shapes_and_count():
    topo = rstd.build_topology("TT", (4, 3, 3, 4), [2, 2, 2])
    assert topo.core_shapes == [[4, 2], [2, 3, 2], [2, 3, 2], [2, 4]]
    assert topo.param_count == 40


def test_reconstruct_matches_einsum():
    rng = np.random.default_rng(0)
    topo = rstd.build_topology("TT", (3, 2, 2, 4), [2, 3, 2])
    cores = [rng.standard_normal(s) for s in topo.core_shapes]
    np.testing.assert_allclose(rstd.reconstruct(topo, cores), brute_force_tt(cores), rtol=1e-12, atol=1e-12)


def test_tr_reconstruct_matches_einsum():
    rng = np.random.default_rng(1)
    topo = rstd.build_topology("TR", (2, 3, 3, 2), [2, 2, 3, 2])
    cores = [rng.standard_normal(s) for s in topo.core_shapes]
    # core0 (I, r01, r03), core1 (r01, H, r12), core2 (r12, W, r23), core3 (r03, r23, O)
    want = np.einsum("iad,ahb,bwc,dco->ihwo", *cores)
    np.testing.assert_allclose(rstd.reconstruct(topo, cores), want, rtol=1e-12, atol=1e-12)


def test_reconstruct_gradient_is_adjoint():
    rng = np.random.default_rng(2)
    topo = rstd.build_topology("TT", (2, 2, 2, 2), [2, 2, 2])
    cores = [rng.standard_normal(s) for s in topo.core_shapes]
    up = rng.standard_normal(topo.mode_dims)
    grads = rstd.reconstruct_gradient(topo, cores, up)
    h = 1e-6
    for i, core in enumerate(cores):
        for idx in np.ndindex(core.shape):
            plus = [c.copy() for c in cores]
            minus = [c.copy() for c in cores]
            plus[i][idx] += h
            minus[i][idx] -= h
            num = (np.sum(up * rstd.reconstruct(topo, plus)) - np.sum(up * rstd.reconstruct(topo, minus))) / (2 * h)
            assert grads[i][idx] == pytest.approx(num, rel=1e-6, abs=1e-8)


def test_contract_matrix_vector():
    out = rstd.contract(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 1.0]), [1], [0])
    np.testing.assert_array_equal(out, [3.0, 7.0])


def test_shuffle_convention():
    p = rstd.Permutation([2, 0, 3, 1])
    out = rstd.shuffle(p, np.array([10.0, 11.0, 12.0, 13.0]))
    np.testing.assert_array_equal(out, [11.0, 13.0, 10.0, 12.0])
    np.testing.assert_array_equal(rstd.unshuffle(p, out), [10.0, 11.0, 12.0, 13.0])


def test_permutation_seeded_and_validated(tmp_path):
    p = rstd.Permutation.from_seed(100, 7)
    assert sorted(p.forward) == list(range(100))
    assert p == rstd.Permutation.from_seed(100, 7)
    p.save(str(tmp_path / "p.rspm"))
    assert rstd.Permutation.load(str(tmp_path / "p.rspm")) == p
    with pytest.raises(rstd.RstdError):
        rstd.Permutation([0, 0, 1])


def test_conv2d_matches_numpy():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 5, 5))
    k = rng.standard_normal((3, 3, 3, 4))
    y = rstd.conv2d(x, k, padding=1)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    want = np.zeros((2, 4, 5, 5))
    for i in range(5):
        for j in range(5):
            want[:, :, i, j] = np.einsum("nchw,chwo->no", xp[:, :, i : i + 3, j : j + 3], k)
    np.testing.assert_allclose(y, want, rtol=1e-12, atol=1e-12)
    assert rstd.conv2d(np.ones((1, 1, 32, 32)), np.ones((1, 3, 3, 1)), stride=2, padding=1).shape == (1, 1, 16, 16)


def test_rank1_split_forward_and_proportional_channels():
    rng = np.random.default_rng(4)
    topo = rstd.build_topology("TR", (3, 3, 3, 5), [1, 1, 1, 1])
    cores = [rng.standard_normal(s) for s in topo.core_shapes]
    x = rng.standard_normal((1, 3, 6, 6))
    direct = rstd.conv2d(x, rstd.reconstruct(topo, cores), padding=1)
    split = rstd.rank1_tr_split_forward(topo, cores, x, padding=1)
    np.testing.assert_allclose(split, direct, atol=1e-10)
    flat = direct[0].reshape(5, -1)
    assert np.linalg.matrix_rank(flat, tol=1e-9) == 1


def test_tt_svd_exact():
    rng = np.random.default_rng(5)
    w = rng.standard_normal((3, 3, 2, 4))
    topo, cores = rstd.tt_svd(w)
    np.testing.assert_allclose(rstd.reconstruct(topo, cores), w, atol=1e-12)


def test_table1_accounting():
    nc, nu, rc = rstd.table1_param_counts(256, "TR", 1)
    assert nu == 3552010
    assert 0.003 <= rc <= 0.006
    assert rc == pytest.approx(nc / nu)
    dense = rstd.table1_param_counts(256)
    assert dense[0] == dense[1] == 3552010
    assert rstd.compression_ratio(1, 4) == 0.25


def test_errors_are_value_errors():
    with pytest.raises(ValueError, match="ranks"):
        rstd.build_topology("TR", (2, 2, 2, 2), [1, 1, 1])
    with pytest.raises(ValueError):
        rstd.build_topology("nope", (2, 2, 2, 2), [1, 1, 1])


def test_he_initialization_variance():
    topo = rstd.build_topology("TT", (16, 3, 3, 16), [4, 4, 4])
    var = np.mean([np.mean(rstd.reconstruct(topo, rstd.init_cores(topo, 2 / 144, s)) ** 2) for s in range(30)])
    assert var == pytest.approx(2 / 144, rel=0.2)
    assert not math.isnan(var)
