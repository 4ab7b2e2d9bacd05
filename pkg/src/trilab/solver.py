"""Preconditioned conjugate gradient over the interchangeable orderings.

The driver permutes the system into the requested ordering, factorizes
there, then iterates plain PCG with the matching substitution kernels.
Padding rows introduced by the hierarchical layout carry rhs 0 and stay
exactly 0 through every iterate; inner products and norms are restricted to
real unknowns anyway, so reported residuals never see them.  x0 = 0 always;
convergence is ||r_j||_2 / ||b||_2 < tol on the recursive residual.  All
reductions are single numpy dots, so a run is reproducible at a fixed
thread count (and the hbmc kernels are bit-identical across thread counts).
"""

import time
from dataclasses import dataclass

import numpy as np

from .matrix import CsrMatrix, csr_to_sell, permute_system, spmv
from .ordering import (build_blocks, build_hbmc, color_blocks,
                       extend_with_dummies, greedy_color_nodes)
from .precond import (BarrierCounter, WorkerPool, apply_ic_preconditioner,
                      build_sell_factor, ic0_factorize)

ORDERINGS = ("natural", "mc", "bmc", "hbmc")


class CgBreakdownError(ArithmeticError):
    """p·Ap was not positive; the system is not SPD."""

    def __init__(self, iteration, value):
        self.iteration = int(iteration)
        self.value = float(value)
        super().__init__(f"p.Ap = {value:.6g} <= 0 at iteration {iteration}")


@dataclass
class CgConfig:
    tol: float = 1e-7
    max_iters: int = 50000
    ordering: str = "natural"
    b_s: int = 4
    w: int = 4
    shift: float = 0.0
    threads: int = 1
    spmv_format: str = "crs"

    def validate(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if self.b_s < 1 or self.w < 1:
            raise ValueError("b_s and w must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.spmv_format not in ("crs", "sell"):
            raise ValueError("spmv_format must be 'crs' or 'sell'")


@dataclass
class SolveReport:
    matrix: str
    ordering: str
    b_s: int
    w: int
    n_c: int
    iterations: int
    converged: bool
    time_setup_s: float
    time_solve_s: float
    residual_history: list
    barrier_total: int = 0
    n_dummy: int = 0

    def to_json_dict(self):
        return {
            "matrix": self.matrix,
            "ordering": self.ordering,
            "b_s": self.b_s,
            "w": self.w,
            "n_c": self.n_c,
            "iterations": self.iterations,
            "converged": self.converged,
            "time_setup_s": self.time_setup_s,
            "time_solve_s": self.time_solve_s,
            "residual_history": list(self.residual_history),
            "barrier_total": self.barrier_total,
            "n_dummy": self.n_dummy,
        }


@dataclass
class _Setup:
    kind: str
    a_sys: CsrMatrix
    b_sys: np.ndarray
    factor: object
    layout: object
    spmv_mat: object
    old_positions: np.ndarray  # final position of each original unknown, or None
    real_idx: np.ndarray       # positions of real unknowns, or None when all real
    n_c: int
    n_dummy: int


def _prepare(a, b, cfg, kernels):
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape[0] != a.n:
        raise ValueError("rhs length mismatch")
    if cfg.ordering == "natural":
        f = ic0_factorize(a, shift=cfg.shift, layout_tag="natural", kernels=kernels)
        return _Setup("seq", a, b, f, None, a, None, None, 1, 0)
    if cfg.ordering == "mc":
        col = greedy_color_nodes(a, kernels)
        a_o, b_o = permute_system(a, b, col.perm)
        f = ic0_factorize(a_o, shift=cfg.shift, layout_tag="mc", kernels=kernels)
        return _Setup("mc", a_o, b_o, f, col, a_o, col.perm.new_of_old,
                      None, col.n_c, 0)
    if cfg.ordering == "bmc":
        lay = color_blocks(a, build_blocks(a, cfg.b_s, kernels), kernels)
        a_o, b_o = permute_system(a, b, lay.perm)
        f = ic0_factorize(a_o, shift=cfg.shift, layout_tag="bmc", kernels=kernels)
        return _Setup("bmc", a_o, b_o, f, lay, a_o, lay.perm.new_of_old,
                      None, lay.n_c, 0)
    # hbmc
    lay = color_blocks(a, build_blocks(a, cfg.b_s, kernels), kernels)
    hl = build_hbmc(lay, cfg.w)
    a_ext, b_ext = extend_with_dummies(a, b, hl)
    a_o, b_o = permute_system(a_ext, b_ext, hl.composed_perm)
    f = ic0_factorize(a_o, shift=cfg.shift, layout_tag="hbmc", kernels=kernels)
    sf = build_sell_factor(f, hl)
    real = hl.real_positions if hl.n_dummy else None
    return _Setup("hbmc", a_o, b_o, sf, hl, a_o,
                  hl.composed_perm.new_of_old[:a.n], real, hl.n_c, hl.n_dummy)


def pcg(a: CsrMatrix, b, cfg: CgConfig, matrix_name="", kernels=None):
    """Solve A x = b; returns (x in the original ordering, SolveReport)."""
    cfg.validate()
    t0 = time.perf_counter()
    setup = _prepare(a, b, cfg, kernels)
    if cfg.spmv_format == "sell":
        setup.spmv_mat = csr_to_sell(setup.a_sys, cfg.w)
    pool = WorkerPool(cfg.threads)
    counter = BarrierCounter()
    real = setup.real_idx

    def rdot(u, v):
        if real is None:
            return float(u @ v)
        return float(u[real] @ v[real])

    t_setup = time.perf_counter() - t0
    t1 = time.perf_counter()
    try:
        n_sys = setup.a_sys.n
        x = np.zeros(n_sys)
        r = setup.b_sys.copy()
        bnorm = np.sqrt(rdot(r, r))
        history = [1.0]
        iterations = 0
        converged = False
        if bnorm == 0.0:
            converged = True
            history = [0.0]
        else:
            z = apply_ic_preconditioner(setup.kind, setup.factor, setup.layout,
                                        r, pool, counter, kernels)
            p = z.copy()
            rz = rdot(r, z)
            for j in range(1, cfg.max_iters + 1):
                ap = spmv(setup.spmv_mat, p, kernels)
                pap = rdot(p, ap)
                if pap <= 0.0:
                    raise CgBreakdownError(j, pap)
                alpha = rz / pap
                x += alpha * p
                r -= alpha * ap
                rel = np.sqrt(rdot(r, r)) / bnorm
                history.append(float(rel))
                iterations = j
                if rel < cfg.tol:
                    converged = True
                    break
                z = apply_ic_preconditioner(setup.kind, setup.factor,
                                            setup.layout, r, pool, counter,
                                            kernels)
                rz_new = rdot(r, z)
                beta = rz_new / rz
                rz = rz_new
                p = z + beta * p
    finally:
        pool.close()
    t_solve = time.perf_counter() - t1
    if setup.old_positions is not None:
        x_out = x[setup.old_positions]
    else:
        x_out = x
    report = SolveReport(matrix_name, cfg.ordering, cfg.b_s, cfg.w,
                         setup.n_c, iterations, converged, t_setup, t_solve,
                         history, counter.total, setup.n_dummy)
    return x_out, report


def compare_convergence(a, b, cfg_a, cfg_b, matrix_name="", kernels=None):
    """Run two configurations and align their residual histories.

    max_history_gap is the largest pointwise relative difference over the
    common prefix excluding the final two entries (where one run has already
    dived below tol); max_history_gap_full covers the whole common prefix.
    """
    _, rep_a = pcg(a, b, cfg_a, matrix_name, kernels)
    _, rep_b = pcg(a, b, cfg_b, matrix_name, kernels)
    ha = np.asarray(rep_a.residual_history)
    hb = np.asarray(rep_b.residual_history)
    m = min(ha.shape[0], hb.shape[0])
    full = float(np.max(np.abs(ha[:m] - hb[:m]) / np.maximum(hb[:m], 1e-300))) if m else 0.0
    t = max(m - 2, 0)
    trimmed = float(np.max(np.abs(ha[:t] - hb[:t]) / np.maximum(hb[:t], 1e-300))) if t else 0.0
    return {
        "iters_a": rep_a.iterations,
        "iters_b": rep_b.iterations,
        "iter_diff": abs(rep_a.iterations - rep_b.iterations),
        "max_history_gap": trimmed,
        "max_history_gap_full": full,
        "report_a": rep_a,
        "report_b": rep_b,
    }
