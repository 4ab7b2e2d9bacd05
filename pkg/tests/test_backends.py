"""Compiled and pure-numpy kernel paths must agree."""

import numpy as np
import pytest

from trilab import (available_backends, build_blocks, build_hbmc,
                    build_sell_factor, color_blocks, csr_to_sell,
                    default_backend, extend_with_dummies, gen_laplacian_5pt,
                    gen_random_spd, get_kernels, greedy_color_nodes,
                    ic0_factorize, pcg, permute_system, spmv)
from trilab.solver import CgConfig

from conftest import max_rel


def both():
    names = available_backends()
    if "numba" not in names:
        pytest.skip("compiled backend unavailable")
    return get_kernels("numba"), get_kernels("numpy")


def test_available_backends_contains_numpy():
    names = available_backends()
    assert "numpy" in names


def test_get_kernels_rejects_unknown():
    with pytest.raises(ValueError):
        get_kernels("fortran")


def test_env_selects_default(monkeypatch):
    monkeypatch.setenv("TRILAB_BACKEND", "numpy")
    assert default_backend() == "numpy"
    assert get_kernels().NAME == "numpy"
    monkeypatch.setenv("TRILAB_BACKEND", "bogus")
    with pytest.raises(ValueError):
        default_backend()
    monkeypatch.delenv("TRILAB_BACKEND", raising=False)
    assert default_backend() in available_backends()


def test_spmv_agreement(rng):
    kb, kp = both()
    a = gen_random_spd(150, density=0.03, seed=51)
    x = rng.standard_normal(a.n)
    ya = spmv(a, x, kernels=kb)
    yb = spmv(a, x, kernels=kp)
    assert max_rel(yb, ya) < 1e-13
    s = csr_to_sell(a, 4)
    assert max_rel(spmv(s, x, kernels=kp), spmv(s, x, kernels=kb)) < 1e-13


def test_construction_kernels_identical():
    kb, kp = both()
    a = gen_random_spd(120, density=0.04, seed=52)
    ca = greedy_color_nodes(a, kernels=kb)
    cb = greedy_color_nodes(a, kernels=kp)
    assert np.array_equal(ca.color_of, cb.color_of)
    ba = build_blocks(a, 4, kernels=kb)
    bb = build_blocks(a, 4, kernels=kp)
    assert np.array_equal(ba.block_of, bb.block_of)
    la = color_blocks(a, ba, kernels=kb)
    lb = color_blocks(a, bb, kernels=kp)
    assert np.array_equal(la.color_of_block, lb.color_of_block)


def test_factorization_bit_identical():
    kb, kp = both()
    a, _ = gen_laplacian_5pt(8, 8)
    fa = ic0_factorize(a, kernels=kb)
    fb = ic0_factorize(a, kernels=kp)
    assert np.array_equal(fa.L.vals, fb.L.vals)
    assert np.array_equal(fa.d, fb.d)


def test_substitution_bit_identical(rng):
    kb, kp = both()
    a, b = gen_laplacian_5pt(7, 7)
    hl = build_hbmc(color_blocks(a, build_blocks(a, 4)), 4)
    a_ext, b_ext = extend_with_dummies(a, b, hl)
    af, _ = permute_system(a_ext, b_ext, hl.composed_perm)
    r = rng.standard_normal(hl.n_pad)
    outs = []
    for k in (kb, kp):
        f = ic0_factorize(af, layout_tag="hbmc", kernels=k)
        sf = build_sell_factor(f, hl)
        from trilab import sub_backward_hbmc, sub_forward_hbmc
        y = sub_forward_hbmc(sf, hl, r, kernels=k)
        outs.append(sub_backward_hbmc(sf, hl, y, kernels=k))
    assert np.array_equal(outs[0], outs[1])


def test_full_solve_agreement():
    kb, kp = both()
    a, b = gen_laplacian_5pt(10, 10)
    xa, ra = pcg(a, b, CgConfig(ordering="hbmc", b_s=4, w=4), kernels=kb)
    xb, rb = pcg(a, b, CgConfig(ordering="hbmc", b_s=4, w=4), kernels=kp)
    assert ra.iterations == rb.iterations
    assert max_rel(xb, xa) < 1e-12
