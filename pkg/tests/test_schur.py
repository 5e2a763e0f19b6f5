import numpy as np
import pytest

from cobundle import schur as schur_mod
from cobundle.bal_io import BalProblem
from cobundle.coobs import BlockJacobian, build_index, build_jacobian
from cobundle.linalg import cholesky_solve
from cobundle.schur import (SingularPointBlock, back_substitute, convert_precision, dense_normal_equation,
                            dense_oracle, diag_scaling, schur_eliminate, upper_slot)
from cobundle.verify import rel_frobenius

from .conftest import linearized


def handmade(vis, jc=None, jp=None, e=None, rng=None):
    """Index plus explicit blocks for a visibility pattern (blocks default to random)."""
    pt, cam = np.nonzero(vis)
    a, b = vis.shape
    problem = BalProblem(np.zeros((b, 9)), np.zeros((a, 3)), cam, pt, np.zeros((len(pt), 2)))
    index = build_index(problem)
    o = len(pt)
    rng = rng or np.random.default_rng(0)
    blocks = BlockJacobian(
        rng.normal(size=(o, 2)) if e is None else np.broadcast_to(e, (o, 2)).copy(),
        rng.normal(size=(o, 2, 6)) if jc is None else np.broadcast_to(jc, (o, 2, 6)).copy(),
        rng.normal(size=(o, 2, 3)) if jp is None else np.broadcast_to(jp, (o, 2, 3)).copy(),
        np.zeros(o, dtype=bool))
    return index, blocks


def scalar_loop_schur(blocks, index, mu, D):
    """Plain triple loop over points and all ordered camera pairs, no packing."""
    a, b = index.num_points, index.num_cameras
    S = np.zeros((6 * b, 6 * b))
    r = np.zeros(6 * b)
    for j in range(b):
        for k in range(6):
            S[6 * j + k, 6 * j + k] = mu * D[3 * a + 6 * j + k] ** 2
    for i in range(a):
        U = np.diag(mu * D[3 * i:3 * i + 3] ** 2)
        g = np.zeros(3)
        W = {}
        for s in range(index.offsets[i], index.offsets[i + 1]):
            j = index.cameras[s]
            U += blocks.jp[s].T @ blocks.jp[s]
            g += blocks.jp[s].T @ blocks.residuals[s]
            W[j] = blocks.jc[s].T @ blocks.jp[s]
            S[6 * j:6 * j + 6, 6 * j:6 * j + 6] += blocks.jc[s].T @ blocks.jc[s]
            r[6 * j:6 * j + 6] += blocks.jc[s].T @ blocks.residuals[s]
        if not W:
            continue
        inv = np.linalg.inv(U)
        for j1, W1 in W.items():
            r[6 * j1:6 * j1 + 6] -= W1 @ inv @ g
            for j2, W2 in W.items():
                S[6 * j1:6 * j1 + 6, 6 * j2:6 * j2 + 6] -= W1 @ inv @ W2.T
    return S, r


def test_upper_slot_enumerates_row_major():
    b = 6
    expected = list(zip(*np.triu_indices(b, 1)))
    for n, (j1, j2) in enumerate(expected):
        assert upper_slot(j1, j2, b) == n


def test_damping_only_path():
    index, blocks = handmade(np.ones((1, 1)), jc=np.zeros((2, 6)), jp=np.zeros((2, 3)), e=np.zeros(2))
    S, aux = schur_eliminate(blocks, index, 1.0, np.ones(9))
    np.testing.assert_array_equal(S.diag[0], np.eye(6))
    np.testing.assert_array_equal(S.r, np.zeros(6))
    np.testing.assert_array_equal(aux.U[0], np.eye(3))


def test_matches_dense_oracle(rng):
    for seed in range(10):
        a, b = int(rng.integers(1, 200)), int(rng.integers(1, 9))
        _, index, blocks, D = linearized(b, a, seed, visibility=rng.uniform(0.2, 0.9))
        mu = float(rng.uniform(1e-4, 1.0))
        S, _ = schur_eliminate(blocks, index, mu, D)
        S_ref, r_ref = dense_oracle(blocks, index, mu, D)
        assert rel_frobenius(S.dense(), S_ref) <= 1e-10
        assert rel_frobenius(S.r, r_ref) <= 1e-10


def test_matches_scalar_loop_on_random_blocks(rng):
    vis = rng.random((25, 5)) < 0.5
    vis[:, 0] |= ~vis.any(axis=1)
    index, blocks = handmade(vis, rng=rng)
    D = rng.uniform(0.5, 2.0, size=3 * 25 + 30)
    S, _ = schur_eliminate(blocks, index, 0.3, D)
    S_ref, r_ref = scalar_loop_schur(blocks, index, 0.3, D)
    np.testing.assert_allclose(S.dense(), S_ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(S.r, r_ref, rtol=1e-12, atol=1e-12)


def test_one_point_two_cameras_three_ways(rng):
    index, blocks = handmade(np.ones((1, 2)), rng=rng)
    D = rng.uniform(0.5, 2.0, size=15)
    S, _ = schur_eliminate(blocks, index, 0.7, D)
    S_dense, r_dense = dense_oracle(blocks, index, 0.7, D)
    S_loop, r_loop = scalar_loop_schur(blocks, index, 0.7, D)
    np.testing.assert_allclose(S_dense, S_loop, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(r_dense, r_loop, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(S.dense(), S_loop, rtol=1e-12, atol=1e-12)


def test_identity_like_blocks_analytic():
    jp = np.zeros((2, 3))
    jp[:, :2] = np.eye(2)
    jc = np.zeros((2, 6))
    jc[:, :2] = np.eye(2)
    index, blocks = handmade(np.ones((1, 2)), jc=jc, jp=jp, e=np.zeros(2))
    S, aux = schur_eliminate(blocks, index, 1.0, np.ones(15))
    # U = I + 2 diag(1,1,0) = diag(3,3,1);  W_j U^-1 W_j^T = diag(1/3,1/3,0,0,0,0)
    np.testing.assert_allclose(aux.U[0], np.diag([3.0, 3.0, 1.0]))
    expected_diag = np.diag([5 / 3, 5 / 3, 1, 1, 1, 1])
    np.testing.assert_allclose(S.diag[0], expected_diag, rtol=1e-15)
    np.testing.assert_allclose(S.diag[1], expected_diag, rtol=1e-15)
    np.testing.assert_allclose(S.block(0, 1), -np.diag([1 / 3, 1 / 3, 0, 0, 0, 0]), atol=1e-16)


def test_zero_camera_jacobian_no_damping_gives_zero():
    index, blocks = handmade(np.ones((2, 2)), jc=np.zeros((2, 6)))
    S_ref, r_ref = dense_oracle(blocks, index, 0.0, np.ones(18))
    np.testing.assert_array_equal(S_ref, 0)
    np.testing.assert_array_equal(r_ref, 0)
    S, _ = schur_eliminate(blocks, index, 0.0, np.ones(18))
    np.testing.assert_array_equal(S.dense(), 0)


def test_off_diagonal_fill_follows_co_observations():
    vis = np.array([[1, 0, 0], [1, 1, 0], [0, 0, 1]])
    index, blocks = handmade(vis)
    S, _ = schur_eliminate(blocks, index, 0.1, np.ones(9 + 18))
    assert np.abs(S.block(0, 1)).max() > 0
    np.testing.assert_array_equal(S.block(0, 2), 0)
    np.testing.assert_array_equal(S.block(1, 2), 0)


def test_symmetric_and_positive_definite(small_system):
    _, index, blocks, D = small_system
    S, _ = schur_eliminate(blocks, index, 1e-3, D)
    dense = S.dense()
    np.testing.assert_array_equal(dense, dense.T)
    cholesky_solve(S, S.r)   # raises if not positive definite


def test_back_substitute_zero_camera_step(small_system):
    _, index, blocks, D = small_system
    _, aux = schur_eliminate(blocks, index, 0.1, D)
    dp = back_substitute(aux, np.zeros(6 * index.num_cameras), index)
    np.testing.assert_allclose(dp.reshape(-1, 3), np.einsum("aij,aj->ai", aux.inv, aux.gp))


def test_back_substitute_zero_everything():
    index, blocks = handmade(np.ones((3, 2)), e=np.zeros(2))
    _, aux = schur_eliminate(blocks, index, 0.1, np.ones(21))
    np.testing.assert_array_equal(back_substitute(aux, np.zeros(12), index), 0)


def test_stacked_solution_solves_normal_equation(rng):
    for seed in range(5):
        _, index, blocks, D = linearized(int(rng.integers(2, 6)), int(rng.integers(10, 60)), seed, min_co=2)
        mu = 0.05
        S, aux = schur_eliminate(blocks, index, mu, D)
        dc = cholesky_solve(S, S.r)
        dp = back_substitute(aux, dc, index)
        A, g = dense_normal_equation(blocks, index, mu, D)
        delta = np.concatenate([dp, dc])
        assert np.linalg.norm(A @ delta - g) / np.linalg.norm(g) <= 1e-8


def test_convert_precision():
    blocks = BlockJacobian(np.full((1, 2), 0.1), np.full((1, 2, 6), 0.1), np.full((1, 2, 3), 0.1),
                           np.zeros(1, dtype=bool))
    same = convert_precision(blocks, "binary64")
    np.testing.assert_array_equal(same.jc, blocks.jc)
    single = convert_precision(blocks, "binary32")
    assert single.jc.dtype == np.float32
    assert float(single.jc[0, 0, 0]) == 0.100000001490116119384765625


def test_single_precision_runs_in_single(small_system):
    _, index, blocks, D = small_system
    S32, aux32 = schur_eliminate(convert_precision(blocks, "binary32"), index, 0.1, D)
    assert S32.diag.dtype == np.float32 and aux32.inv.dtype == np.float32
    S64, _ = schur_eliminate(blocks, index, 0.1, D)
    assert abs(S32.frobenius_norm() - S64.frobenius_norm()) / S64.frobenius_norm() <= 1e-5


def test_frobenius_norm_counts_both_triangles(small_system):
    _, index, blocks, D = small_system
    S, _ = schur_eliminate(blocks, index, 0.1, D)
    assert S.frobenius_norm() == pytest.approx(np.linalg.norm(S.dense()), rel=1e-14)


def test_deterministic_under_observation_shuffle(rng):
    problem, index, blocks, D = linearized(6, 120, 3, visibility=0.5)
    S1, _ = schur_eliminate(blocks, index, 0.2, D)
    for _ in range(2):
        perm = rng.permutation(problem.num_observations)
        shuffled = BalProblem(problem.cameras, problem.points, problem.camera_index[perm],
                              problem.point_index[perm], problem.observations[perm])
        idx2 = build_index(shuffled)
        b2 = build_jacobian(shuffled, idx2)
        S2, _ = schur_eliminate(b2, idx2, 0.2, diag_scaling(b2, idx2))
        np.testing.assert_array_equal(S1.diag, S2.diag)
        np.testing.assert_array_equal(S1.upper, S2.upper)
        np.testing.assert_array_equal(S1.r, S2.r)


def test_parallel_mode_matches_sequential(monkeypatch):
    _, index, blocks, D = linearized(8, 300, 5, visibility=0.7)
    S1, _ = schur_eliminate(blocks, index, 0.2, D, threads=1)
    monkeypatch.setattr(schur_mod, "PAIR_CHUNK", 64)
    S2, _ = schur_eliminate(blocks, index, 0.2, D, threads=4)
    assert rel_frobenius(S2.dense(), S1.dense()) <= 1e-12
    assert rel_frobenius(S2.r, S1.r) <= 1e-12


def test_operation_count():
    a, b = 30, 5
    index, blocks = handmade(np.ones((a, b)))
    counter = {}
    schur_eliminate(blocks, index, 0.1, np.ones(3 * a + 6 * b), counter=counter)
    assert counter["full_pair_iterations"] == a * b * b
    assert counter["pair_updates"] == a * b * (b + 1) // 2

    vis = np.random.default_rng(1).random((a, b)) < 0.4
    vis[:, 0] |= ~vis.any(axis=1)
    index, blocks = handmade(vis)
    counter = {}
    schur_eliminate(blocks, index, 0.1, np.ones(3 * a + 6 * b), counter=counter)
    co = vis.sum(axis=1)
    assert counter["full_pair_iterations"] == int(np.sum(co ** 2)) < a * b * b
    assert counter["pair_updates"] == int(np.sum(co * (co + 1) // 2))


def test_singular_point_block_reported():
    vis = np.ones((3, 2))
    index, blocks = handmade(vis)
    blocks.jp[index.offsets[1]:index.offsets[2]] = 0.0
    with pytest.raises(SingularPointBlock) as err:
        schur_eliminate(blocks, index, 0.0, np.ones(21))
    assert err.value.point == 1


def test_negative_damping_rejected(small_system):
    _, index, blocks, D = small_system
    with pytest.raises(ValueError):
        schur_eliminate(blocks, index, -1.0, D)
