"""Incomplete Cholesky and the substitution kernels.

The 2x2 and diagonal factorizations are worked out by hand; larger cases
are checked through the residual-on-pattern property and against the
sequential kernels, which themselves reduce to hand arithmetic.
"""

import math

import numpy as np
import pytest

from trilab import (BarrierCounter, CooMatrix, IcBreakdownError, Permutation,
                    WorkerPool, apply_ic_preconditioner, build_blocks,
                    build_hbmc, build_sell_factor, check_er_condition,
                    color_blocks, coo_to_csr, csr_transpose,
                    extend_with_dummies, factor_equivalence_check,
                    gen_laplacian_5pt, gen_random_spd, greedy_color_nodes,
                    ic0_factorize, ic_residual_on_pattern, permute_system,
                    sell_to_csr, sub_backward_bmc, sub_backward_hbmc,
                    sub_backward_mc, sub_backward_seq, sub_forward_bmc,
                    sub_forward_hbmc, sub_forward_mc, sub_forward_seq)

from conftest import max_rel, path_matrix


def dense2csr(d):
    d = np.asarray(d, dtype=float)
    r, c = np.nonzero(d)
    return coo_to_csr(CooMatrix(d.shape[0], r, c, d[r, c]))


# ------------------------------------------------------------ factorization

def test_ic_2x2_hand_values():
    a = dense2csr([[4.0, -1.0], [-1.0, 4.0]])
    f = ic0_factorize(a)
    assert f.d[0] == 2.0
    assert f.d[1] == pytest.approx(math.sqrt(3.75), rel=0, abs=0)
    # strict lower part holds the single off-diagonal of L
    assert f.L.vals[f.L.row_ptr[1]] == -0.5
    assert np.array_equal(f.inv_diag, 1.0 / f.d)


def test_ic_diagonal_matrix_is_sqrt():
    a = dense2csr(np.diag([4.0, 9.0, 16.0]))
    f = ic0_factorize(a)
    assert f.d.tolist() == [2.0, 3.0, 4.0]
    assert f.L.nnz == 0


def test_ic_exact_on_tridiagonal():
    # zero-fill pattern of a tridiagonal matrix holds the exact factor
    a = path_matrix(8)
    f = ic0_factorize(a)
    full = np.linalg.cholesky(a.to_dense())
    mine = np.zeros((8, 8))
    low = f.L
    for i in range(8):
        mine[i, low.col_idx[low.row_ptr[i]:low.row_ptr[i + 1]]] = \
            low.vals[low.row_ptr[i]:low.row_ptr[i + 1]]
    np.fill_diagonal(mine, f.d)
    assert np.allclose(mine, full, rtol=1e-14, atol=0)
    rel, ok = ic_residual_on_pattern(a, f)
    assert ok and rel < 1e-15


def test_ic_residual_on_pattern_grid():
    a, _ = gen_laplacian_5pt(8, 8)
    f = ic0_factorize(a)
    rel, ok = ic_residual_on_pattern(a, f)
    assert ok
    assert rel < 1e-14


def test_ic_residual_on_pattern_random():
    a = gen_random_spd(300, density=0.02, seed=21)
    rel, ok = ic_residual_on_pattern(a, ic0_factorize(a))
    assert ok and rel < 1e-13


def test_ic_breakdown_reports_row_and_pivot():
    a = dense2csr([[1.0, 2.0], [2.0, 1.0]])  # indefinite
    with pytest.raises(IcBreakdownError) as e:
        ic0_factorize(a)
    assert e.value.row == 1
    assert e.value.pivot == pytest.approx(-3.0)


def test_ic_shift_scales_diagonal():
    a = dense2csr(np.diag([4.0, 9.0]))
    f = ic0_factorize(a, shift=0.3)
    assert np.allclose(f.d, np.sqrt(1.3 * np.array([4.0, 9.0])), rtol=1e-15)


def test_ic_shift_rescues_breakdown():
    # indefinite without shift; a large shift pushes pivots positive
    a = dense2csr([[1.0, 2.0], [2.0, 1.0]])
    f = ic0_factorize(a, shift=4.0)
    assert np.all(f.d > 0)
    with pytest.raises(ValueError):
        ic0_factorize(a, shift=-0.1)


def test_ic_rejects_missing_diagonal_and_asymmetry():
    coo = CooMatrix(2, np.array([0, 0, 1]), np.array([0, 1, 0]),
                    np.array([2.0, 1.0, 1.0]))
    a = coo_to_csr(coo, ensure_diagonal=False)
    with pytest.raises(ValueError, match="diagonal"):
        ic0_factorize(a)
    coo2 = CooMatrix(2, np.array([0, 0, 1]), np.array([0, 1, 1]),
                     np.array([2.0, 1.0, 2.0]))
    b = coo_to_csr(coo2, ensure_diagonal=False)
    with pytest.raises(ValueError, match="symmetr"):
        ic0_factorize(b)


def test_factor_pattern_matches_lower_triangle():
    a, _ = gen_laplacian_5pt(6, 6)
    f = ic0_factorize(a)
    # L pattern == strict lower pattern of A (zero fill)
    d = np.tril(a.to_dense(), -1)
    r, c = np.nonzero(d)
    low = coo_to_csr(CooMatrix(a.n, r, c, d[r, c]), ensure_diagonal=False)
    assert np.array_equal(f.L.row_ptr, low.row_ptr)
    assert np.array_equal(f.L.col_idx, low.col_idx)
    # U is the structural transpose of L
    t = csr_transpose(f.L)
    assert np.array_equal(f.U.row_ptr, t.row_ptr)
    assert np.array_equal(f.U.col_idx, t.col_idx)
    assert np.array_equal(f.U.vals, t.vals)


# ---------------------------------------------------- factor / order commute

def grid_hbmc(nx, ny, bs, w):
    a, b = gen_laplacian_5pt(nx, ny)
    hl = build_hbmc(color_blocks(a, build_blocks(a, bs)), w)
    a_ext, b_ext = extend_with_dummies(a, b, hl)
    return a, b, hl, a_ext, b_ext


def test_factor_equivalence_identity():
    a, _ = gen_laplacian_5pt(5, 5)
    ok, dev = factor_equivalence_check(a, Permutation.identity(a.n))
    assert ok and dev == 0.0


def test_factor_equivalence_hbmc_interleave():
    a, b, hl, a_ext, b_ext = grid_hbmc(6, 6, 4, 4)
    a_bc, _ = permute_system(a_ext, b_ext, hl.padded_perm)
    assert check_er_condition(a_bc, hl.perm).holds
    ok, dev = factor_equivalence_check(a_bc, hl.perm)
    assert ok
    assert dev <= 1e-12


def test_factor_equivalence_rejects_order_breaking_perm():
    a = path_matrix(6)
    q = np.arange(6)
    q[0], q[1] = 1, 0  # adjacent coupled swap
    ok, dev = factor_equivalence_check(a, Permutation(q))
    assert not ok and dev == float("inf")


# ------------------------------------------------------ sequential kernels

def test_forward_backward_scalar_hand_case():
    a = dense2csr([[4.0]])
    f = ic0_factorize(a)
    y = sub_forward_seq(f, np.array([8.0]))
    assert y[0] == 4.0
    z = sub_backward_seq(f, y)
    assert z[0] == 2.0


def test_forward_backward_2x2_hand_case():
    a = dense2csr([[4.0, -1.0], [-1.0, 4.0]])
    f = ic0_factorize(a)
    y = sub_forward_seq(f, np.array([2.0, 1.0]))
    assert y[0] == 1.0
    assert y[1] == pytest.approx(1.5 / math.sqrt(3.75), rel=1e-16)
    z = sub_backward_seq(f, y)
    # solves L L^T z = r: verify against dense
    ldense = np.array([[2.0, 0.0], [-0.5, math.sqrt(3.75)]])
    ref = np.linalg.solve(ldense @ ldense.T, np.array([2.0, 1.0]))
    assert max_rel(z, ref) < 1e-15


def test_seq_apply_solves_llt(rng):
    a, _ = gen_laplacian_5pt(6, 6)
    f = ic0_factorize(a)
    r = rng.standard_normal(a.n)
    z = sub_backward_seq(f, sub_forward_seq(f, r))
    low = f.L
    ld = np.zeros((a.n, a.n))
    for i in range(a.n):
        ld[i, low.col_idx[low.row_ptr[i]:low.row_ptr[i + 1]]] = \
            low.vals[low.row_ptr[i]:low.row_ptr[i + 1]]
    np.fill_diagonal(ld, f.d)  # strict lower holds actual L entries
    ref = np.linalg.solve(ld @ ld.T, r)
    assert max_rel(z, ref) < 1e-13


# ------------------------------------------------------- parallel kernels

@pytest.mark.parametrize("threads", [1, 2, 4, 8])
def test_mc_kernels_match_seq(threads, rng):
    a, _ = gen_laplacian_5pt(8, 8)
    col = greedy_color_nodes(a)
    ap, _ = permute_system(a, np.zeros(a.n), col.perm)
    f = ic0_factorize(ap, layout_tag="mc")
    r = rng.standard_normal(a.n)
    with WorkerPool(threads) as pool:
        y = sub_forward_mc(f, col, r, pool)
        z = sub_backward_mc(f, col, y, pool)
    assert max_rel(y, sub_forward_seq(f, r)) <= 1e-14
    assert max_rel(z, sub_backward_seq(f, sub_forward_seq(f, r))) <= 1e-14


@pytest.mark.parametrize("threads", [1, 2, 4, 8])
def test_bmc_kernels_match_seq(threads, rng):
    a = gen_random_spd(200, density=0.02, seed=31)
    layout = color_blocks(a, build_blocks(a, 8))
    ap, _ = permute_system(a, np.zeros(a.n), layout.perm)
    f = ic0_factorize(ap, layout_tag="bmc")
    r = rng.standard_normal(a.n)
    with WorkerPool(threads) as pool:
        y = sub_forward_bmc(f, layout, r, pool)
        z = sub_backward_bmc(f, layout, y, pool)
    assert max_rel(y, sub_forward_seq(f, r)) <= 1e-14
    assert max_rel(z, sub_backward_seq(f, sub_forward_seq(f, r))) <= 1e-14


def hbmc_artifacts(nx, ny, bs, w):
    a, b = gen_laplacian_5pt(nx, ny)
    hl = build_hbmc(color_blocks(a, build_blocks(a, bs)), w)
    a_ext, b_ext = extend_with_dummies(a, b, hl)
    af, _ = permute_system(a_ext, b_ext, hl.composed_perm)
    f = ic0_factorize(af, layout_tag="hbmc")
    sf = build_sell_factor(f, hl)
    return f, sf, hl


@pytest.mark.parametrize("threads", [1, 2, 4, 8])
def test_hbmc_kernels_bitwise_identical_to_seq(threads, rng):
    f, sf, hl = hbmc_artifacts(8, 8, 4, 4)
    r = rng.standard_normal(hl.n_pad)
    with WorkerPool(threads) as pool:
        y = sub_forward_hbmc(sf, hl, r, pool)
        z = sub_backward_hbmc(sf, hl, y, pool)
    yref = sub_forward_seq(f, r)
    zref = sub_backward_seq(f, yref)
    assert np.array_equal(y, yref)
    assert np.array_equal(z, zref)


def test_hbmc_kernels_thread_count_invariant(rng):
    f, sf, hl = hbmc_artifacts(7, 9, 4, 2)
    r = rng.standard_normal(hl.n_pad)
    outs = []
    for t in (1, 2, 4, 8):
        with WorkerPool(t) as pool:
            outs.append(sub_backward_hbmc(
                sf, hl, sub_forward_hbmc(sf, hl, r, pool), pool))
    for z in outs[1:]:
        assert np.array_equal(z, outs[0])


def test_sell_factor_round_trips_csr():
    f, sf, hl = hbmc_artifacts(6, 6, 4, 4)
    back = sell_to_csr(sf.lower)
    assert np.array_equal(back.row_ptr, f.L.row_ptr)
    assert np.array_equal(back.col_idx, f.L.col_idx)
    assert np.array_equal(back.vals, f.L.vals)
    upper = sell_to_csr(sf.upper)
    assert np.array_equal(upper.vals, f.U.vals)


def test_hbmc_rejects_unpadded_input():
    f, sf, hl = hbmc_artifacts(5, 5, 4, 4)
    assert hl.n_dummy > 0
    with pytest.raises(ValueError):
        sub_forward_hbmc(sf, hl, np.zeros(hl.n))


def test_tag_mismatch_rejected():
    a, _ = gen_laplacian_5pt(4, 4)
    f = ic0_factorize(a)  # natural tag
    col = greedy_color_nodes(a)
    with pytest.raises(ValueError):
        sub_forward_mc(f, col, np.zeros(a.n))


# ------------------------------------------------------------ barrier count

def test_barrier_counts_equal_colors_minus_one(rng):
    a, _ = gen_laplacian_5pt(8, 8)
    col = greedy_color_nodes(a)
    ap, _ = permute_system(a, np.zeros(a.n), col.perm)
    f = ic0_factorize(ap, layout_tag="mc")
    r = rng.standard_normal(a.n)
    with WorkerPool(4) as pool:
        bc = BarrierCounter()
        sub_forward_mc(f, col, r, pool, counter=bc)
        assert bc.count == col.n_c - 1
        assert bc.phase_order == list(range(col.n_c))
        bc2 = BarrierCounter()
        sub_backward_mc(f, col, r, pool, counter=bc2)
        assert bc2.count == col.n_c - 1
        assert bc2.phase_order == list(range(col.n_c))[::-1]


def test_barrier_total_accumulates_across_invocations(rng):
    f, sf, hl = hbmc_artifacts(8, 8, 4, 4)
    r = rng.standard_normal(hl.n_pad)
    bc = BarrierCounter()
    with WorkerPool(2) as pool:
        for _ in range(3):
            sub_forward_hbmc(sf, hl, r, pool, counter=bc)
            sub_backward_hbmc(sf, hl, r, pool, counter=bc)
    assert bc.invocations == 6
    assert bc.total == 6 * (hl.n_c - 1)


def test_barrier_count_independent_of_threads(rng):
    a = gen_random_spd(150, density=0.03, seed=41)
    layout = color_blocks(a, build_blocks(a, 8))
    ap, _ = permute_system(a, np.zeros(a.n), layout.perm)
    f = ic0_factorize(ap, layout_tag="bmc")
    r = rng.standard_normal(a.n)
    counts = []
    for t in (1, 3, 8):
        with WorkerPool(t) as pool:
            bc = BarrierCounter()
            sub_forward_bmc(f, layout, r, pool, counter=bc)
            counts.append(bc.count)
    assert counts == [layout.n_c - 1] * 3


# ------------------------------------------------------------- dispatcher

def test_apply_dispatch_matches_direct_calls(rng):
    a, _ = gen_laplacian_5pt(6, 6)
    col = greedy_color_nodes(a)
    ap, _ = permute_system(a, np.zeros(a.n), col.perm)
    f = ic0_factorize(ap, layout_tag="mc")
    r = rng.standard_normal(a.n)
    with WorkerPool(2) as pool:
        za = apply_ic_preconditioner("mc", f, col, r, pool)
    zb = sub_backward_seq(f, sub_forward_seq(f, r))
    assert max_rel(za, zb) <= 1e-14


def test_apply_preserves_spd_probe(rng):
    # preconditioner application must keep r^T z > 0 for nonzero r
    a, _ = gen_laplacian_5pt(6, 6)
    f = ic0_factorize(a)
    for _ in range(10):
        r = rng.standard_normal(a.n)
        z = apply_ic_preconditioner("seq", f, None, r)
        assert float(r @ z) > 0


def test_apply_zero_maps_to_zero():
    a, _ = gen_laplacian_5pt(4, 4)
    f = ic0_factorize(a)
    z = apply_ic_preconditioner("seq", f, None, np.zeros(a.n))
    assert np.all(z == 0)
