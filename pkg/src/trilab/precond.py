"""Shifted zero-fill incomplete Cholesky and interchangeable substitution kernels.

The factor convention is L·Lᵀ with an explicit positive diagonal d (stored
separately from the strictly-lower CSR part) and a precomputed inv_diag
array.  "Shifted" means the input diagonal is scaled by (1 + shift) before
factorization to keep pivots positive on marginal systems.

Four kernel families solve L y = r and Lᵀ z = y:

* seq: plain row-by-row substitution, the oracle everything else is tested
  against;
* mc:  rows of one color are independent, so each color is a parallel phase;
* bmc: blocks of one color are independent; rows inside a block stay
  sequential (threads get contiguous runs of whole blocks);
* hbmc: level-1 blocks of one color are independent; inside one, b_s
  sequential steps each update w rows at once from a SELL slice (gather,
  multiply-subtract, scale by inv_diag, store).

Every parallel kernel synchronizes only between color phases, so a counted
run reports exactly n_c - 1 barriers.  Each row's arithmetic never depends
on how rows are chunked across threads, which makes outputs bit-identical
for any thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_kernels
from .matrix import CsrMatrix, SellMatrix, csr_to_sell, csr_transpose

__all__ = [
    "IcBreakdownError", "IcFactor", "SellFactor", "BarrierCounter",
    "WorkerPool", "ic0_factorize", "factor_equivalence_check",
    "build_sell_factor", "ic_residual_on_pattern",
    "sub_forward_seq", "sub_backward_seq", "sub_forward_mc",
    "sub_backward_mc", "sub_forward_bmc", "sub_backward_bmc",
    "sub_forward_hbmc", "sub_backward_hbmc", "apply_ic_preconditioner",
]


class IcBreakdownError(ArithmeticError):
    """Non-positive pivot encountered during factorization."""

    def __init__(self, row, pivot):
        self.row = int(row)
        self.pivot = float(pivot)
        super().__init__(f"non-positive pivot {pivot:.6g} at row {row}")


@dataclass
class IcFactor:
    L: CsrMatrix          # strictly lower part of the factor
    d: np.ndarray         # factor diagonal, all positive
    inv_diag: np.ndarray  # 1/d
    shift: float
    layout_tag: str       # which ordering the factored system was in
    U: CsrMatrix          # Lᵀ (strictly upper), built once for backward sweeps

    @property
    def n(self):
        return self.d.shape[0]


@dataclass
class SellFactor:
    """IcFactor repacked into slice-width-w SELL for the hbmc kernels.

    Slices align with the w-row level-2 steps, so slice_len doubles as the
    per-step operand count.
    """

    lower: SellMatrix
    upper: SellMatrix
    d: np.ndarray
    inv_diag: np.ndarray
    w: int
    b_s: int
    layout_tag: str = "hbmc"

    @property
    def n(self):
        return self.d.shape[0]


@dataclass
class BarrierCounter:
    """Counts synchronization points; count/phase_order reset per invocation."""

    count: int = 0
    total: int = 0
    invocations: int = 0
    phase_order: list = field(default_factory=list)

    def start(self):
        self.count = 0
        self.phase_order = []
        self.invocations += 1

    def enter_phase(self, color):
        self.phase_order.append(int(color))

    def barrier(self):
        self.count += 1
        self.total += 1


class _NullCounter:
    def start(self):
        pass

    def enter_phase(self, color):
        pass

    def barrier(self):
        pass


_NULL = _NullCounter()


class WorkerPool:
    """Fork-join helper; one pool is reused across all solver iterations."""

    def __init__(self, threads=1):
        self.threads = max(1, int(threads))
        self._ex = (ThreadPoolExecutor(max_workers=self.threads)
                    if self.threads > 1 else None)

    def run(self, fn, tasks):
        """Run fn(*args) for every args in tasks; returns after all finish."""
        if self._ex is None or len(tasks) <= 1:
            for args in tasks:
                fn(*args)
            return
        futures = [self._ex.submit(fn, *args) for args in tasks]
        for f in futures:
            f.result()

    def close(self):
        if self._ex is not None:
            self._ex.shutdown(wait=True)
            self._ex = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _chunk_bounds(lo, hi, parts):
    """Split [lo, hi) into at most `parts` contiguous non-empty pieces."""
    cnt = hi - lo
    if cnt <= 0:
        return []
    parts = int(min(max(1, parts), cnt))
    return [(lo + (cnt * i) // parts, lo + (cnt * (i + 1)) // parts)
            for i in range(parts)]


def _strict_tri(a: CsrMatrix, upper=False):
    rows = np.repeat(np.arange(a.n, dtype=np.int64), np.diff(a.row_ptr))
    mask = (a.col_idx > rows) if upper else (a.col_idx < rows)
    row_ptr = np.zeros(a.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[mask], minlength=a.n), out=row_ptr[1:])
    return CsrMatrix(a.n, row_ptr, a.col_idx[mask], a.vals[mask],
                     diag_ptr=np.full(a.n, -1, dtype=np.int64))


def _check_structural_symmetry(a: CsrMatrix):
    at = csr_transpose(a)
    if not (np.array_equal(at.row_ptr, a.row_ptr)
            and np.array_equal(at.col_idx, a.col_idx)):
        raise ValueError("matrix structure is not symmetric")


def ic0_factorize(a: CsrMatrix, shift=0.0, layout_tag="natural", kernels=None):
    """Zero-fill incomplete Cholesky of A with diagonal scaled by (1+shift).

    The factor keeps exactly the strictly-lower pattern of A.  Raises
    IcBreakdownError (carrying row and pivot) when a pivot is not positive.
    """
    if shift < 0:
        raise ValueError("shift must be non-negative")
    if (a.diag_ptr < 0).any():
        bad = int(np.nonzero(a.diag_ptr < 0)[0][0])
        raise ValueError(f"row {bad} has no diagonal entry")
    _check_structural_symmetry(a)
    k = kernels if kernels is not None else get_kernels()
    low = _strict_tri(a, upper=False)
    lvals = low.vals.copy()
    adiag = a.diagonal() * (1.0 + shift)
    bad_row, pivot, d, inv_d = k.ic0_factor(low.row_ptr, low.col_idx, lvals, adiag)
    if bad_row >= 0:
        raise IcBreakdownError(bad_row, pivot)
    L = CsrMatrix(a.n, low.row_ptr, low.col_idx, lvals,
                  diag_ptr=np.full(a.n, -1, dtype=np.int64))
    return IcFactor(L, d, inv_d, float(shift), layout_tag, csr_transpose(L))


def ic_residual_on_pattern(a: CsrMatrix, f: IcFactor, kernels=None):
    """Check the factor's defining property on the kept pattern.

    Returns (max_rel, pattern_ok): max_rel is the largest relative deviation
    of (L·Lᵀ) from the shifted input over stored lower-triangle positions
    (diagonal included); pattern_ok is exact equality of pattern(L) with the
    strictly-lower pattern of A.
    """
    k = kernels if kernels is not None else get_kernels()
    low_a = _strict_tri(a, upper=False)
    pattern_ok = (np.array_equal(low_a.row_ptr, f.L.row_ptr)
                  and np.array_equal(low_a.col_idx, f.L.col_idx))
    low, diag = k.llt_on_pattern(f.L.row_ptr, f.L.col_idx, f.L.vals, f.d)
    ref_low = low_a.vals
    ref_diag = a.diagonal() * (1.0 + f.shift)
    scale_low = np.maximum(np.abs(ref_low), 1e-300)
    scale_diag = np.maximum(np.abs(ref_diag), 1e-300)
    max_rel = 0.0
    if ref_low.shape[0]:
        max_rel = float(np.max(np.abs(low - ref_low) / scale_low))
    max_rel = max(max_rel, float(np.max(np.abs(diag - ref_diag) / scale_diag)))
    return max_rel, pattern_ok


def _factor_triples(f: IcFactor):
    rows = np.repeat(np.arange(f.n, dtype=np.int64), np.diff(f.L.row_ptr))
    return rows, f.L.col_idx, f.L.vals


def factor_equivalence_check(a: CsrMatrix, p, shift=0.0, tol=1e-12,
                             kernels=None):
    """Does factorization commute with reordering by p?

    Factors A, maps the factor entries through p, and compares them with the
    factor of the p-reordered A.  Returns (ok, max_rel_deviation); a pattern
    mismatch (possible when p is not order-preserving) reports (False, inf).
    """
    from .matrix import permute_system

    f1 = ic0_factorize(a, shift=shift, kernels=kernels)
    a2, _ = permute_system(a, np.zeros(a.n), p)
    f2 = ic0_factorize(a2, shift=shift, kernels=kernels)
    q = p.new_of_old
    r1, c1, v1 = _factor_triples(f1)
    r1m, c1m = q[r1], q[c1]
    if (c1m > r1m).any():
        return False, float("inf")
    order = np.lexsort((c1m, r1m))
    r2, c2, v2 = _factor_triples(f2)
    if not (np.array_equal(r1m[order], r2) and np.array_equal(c1m[order], c2)):
        return False, float("inf")
    dev = 0.0
    if v2.shape[0]:
        dev = float(np.max(np.abs(v1[order] - v2) / np.maximum(np.abs(v2), 1e-300)))
    d1m = np.empty_like(f1.d)
    d1m[q] = f1.d
    dev = max(dev, float(np.max(np.abs(d1m - f2.d) / np.maximum(np.abs(f2.d), 1e-300))))
    return dev <= tol, dev


def build_sell_factor(f: IcFactor, hl):
    """Repack an hbmc-ordered factor into SELL storage (slice width = w)."""
    if f.layout_tag != "hbmc":
        raise ValueError(f"factor tag {f.layout_tag!r}; need 'hbmc'")
    if f.n != hl.n_pad:
        raise ValueError("factor size does not match padded layout size")
    return SellFactor(csr_to_sell(f.L, hl.w), csr_to_sell(f.U, hl.w),
                      f.d, f.inv_diag, hl.w, hl.b_s)


def _require_tag(f, expected):
    if f.layout_tag != expected:
        raise ValueError(f"factor was built under {f.layout_tag!r}, kernel needs {expected!r}")


def _as_vec(v, n):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape[0] != n:
        raise ValueError(f"vector length {v.shape[0]}, expected {n}")
    return v


def sub_forward_seq(f: IcFactor, r, kernels=None):
    k = kernels if kernels is not None else get_kernels()
    r = _as_vec(r, f.n)
    y = np.empty(f.n)
    k.fwd_csr_range(f.L.row_ptr, f.L.col_idx, f.L.vals, f.inv_diag, r, y, 0, f.n)
    return y


def sub_backward_seq(f: IcFactor, y, kernels=None):
    k = kernels if kernels is not None else get_kernels()
    y = _as_vec(y, f.n)
    z = np.empty(f.n)
    k.bwd_csr_range(f.U.row_ptr, f.U.col_idx, f.U.vals, f.inv_diag, y, z, 0, f.n)
    return z


def _csr_color_sweep(kfun, f, ranges, src, dst, pool, counter, forward):
    n_c = ranges.shape[0] - 1
    colors = range(n_c) if forward else range(n_c - 1, -1, -1)
    counter.start()
    pool = pool if pool is not None else WorkerPool(1)
    for idx, c in enumerate(colors):
        counter.enter_phase(c)
        if forward:
            tasks = [(f.L.row_ptr, f.L.col_idx, f.L.vals, f.inv_diag, src, dst, a, b)
                     for a, b in _chunk_bounds(ranges[c], ranges[c + 1], pool.threads)]
        else:
            tasks = [(f.U.row_ptr, f.U.col_idx, f.U.vals, f.inv_diag, src, dst, a, b)
                     for a, b in _chunk_bounds(ranges[c], ranges[c + 1], pool.threads)]
        pool.run(kfun, tasks)
        if idx < n_c - 1:
            counter.barrier()
    return dst


def sub_forward_mc(f: IcFactor, coloring, r, pool=None, counter=None, kernels=None):
    _require_tag(f, "mc")
    k = kernels if kernels is not None else get_kernels()
    r = _as_vec(r, f.n)
    y = np.empty(f.n)
    return _csr_color_sweep(k.fwd_csr_range, f, coloring.color_ranges, r, y,
                            pool, counter or _NULL, forward=True)


def sub_backward_mc(f: IcFactor, coloring, y, pool=None, counter=None, kernels=None):
    _require_tag(f, "mc")
    k = kernels if kernels is not None else get_kernels()
    y = _as_vec(y, f.n)
    z = np.empty(f.n)
    return _csr_color_sweep(k.bwd_csr_range, f, coloring.color_ranges, y, z,
                            pool, counter or _NULL, forward=False)


def _bmc_row_tasks(layout, c, threads):
    """Chunk color c's blocks into contiguous runs, returned as row ranges."""
    blo = layout.color_block_ranges[c]
    bhi = layout.color_block_ranges[c + 1]
    return [(layout.block_bounds[a], layout.block_bounds[b])
            for a, b in _chunk_bounds(blo, bhi, threads)]


def _bmc_sweep(kfun, f, layout, src, dst, pool, counter, forward):
    counter.start()
    pool = pool if pool is not None else WorkerPool(1)
    colors = range(layout.n_c) if forward else range(layout.n_c - 1, -1, -1)
    tri = f.L if forward else f.U
    for idx, c in enumerate(colors):
        counter.enter_phase(c)
        tasks = [(tri.row_ptr, tri.col_idx, tri.vals, f.inv_diag, src, dst, a, b)
                 for a, b in _bmc_row_tasks(layout, c, pool.threads)]
        pool.run(kfun, tasks)
        if idx < layout.n_c - 1:
            counter.barrier()
    return dst


def sub_forward_bmc(f: IcFactor, layout, r, pool=None, counter=None, kernels=None):
    _require_tag(f, "bmc")
    k = kernels if kernels is not None else get_kernels()
    r = _as_vec(r, f.n)
    return _bmc_sweep(k.fwd_csr_range, f, layout, r, np.empty(f.n),
                      pool, counter or _NULL, forward=True)


def sub_backward_bmc(f: IcFactor, layout, y, pool=None, counter=None, kernels=None):
    _require_tag(f, "bmc")
    k = kernels if kernels is not None else get_kernels()
    y = _as_vec(y, f.n)
    return _bmc_sweep(k.bwd_csr_range, f, layout, y, np.empty(f.n),
                      pool, counter or _NULL, forward=False)


def _hbmc_sweep(kfun, sf, hl, src, dst, pool, counter, forward):
    counter.start()
    pool = pool if pool is not None else WorkerPool(1)
    sell = sf.lower if forward else sf.upper
    colors = range(hl.n_c) if forward else range(hl.n_c - 1, -1, -1)
    for idx, c in enumerate(colors):
        counter.enter_phase(c)
        glo = hl.color_lvl1_ranges[c]
        ghi = hl.color_lvl1_ranges[c + 1]
        tasks = [(sell.slice_ptr, sell.slice_len, sell.col_idx, sell.vals,
                  sf.inv_diag, src, dst, sf.w, sf.b_s, k0, k1)
                 for k0, k1 in _chunk_bounds(glo, ghi, pool.threads)]
        pool.run(kfun, tasks)
        if idx < hl.n_c - 1:
            counter.barrier()
    return dst


def sub_forward_hbmc(sf: SellFactor, hl, r, pool=None, counter=None, kernels=None):
    _require_tag(sf, "hbmc")
    k = kernels if kernels is not None else get_kernels()
    r = _as_vec(r, hl.n_pad)
    return _hbmc_sweep(k.fwd_sell_range, sf, hl, r, np.empty(hl.n_pad),
                       pool, counter or _NULL, forward=True)


def sub_backward_hbmc(sf: SellFactor, hl, y, pool=None, counter=None, kernels=None):
    _require_tag(sf, "hbmc")
    k = kernels if kernels is not None else get_kernels()
    y = _as_vec(y, hl.n_pad)
    return _hbmc_sweep(k.bwd_sell_range, sf, hl, y, np.empty(hl.n_pad),
                       pool, counter or _NULL, forward=False)


def apply_ic_preconditioner(kind, f, layout, r, pool=None, counter=None,
                            kernels=None):
    """z = (L·Lᵀ)⁻¹ r via the selected forward+backward kernel pair."""
    if kind in ("seq", "natural"):
        return sub_backward_seq(f, sub_forward_seq(f, r, kernels), kernels)
    if kind == "mc":
        y = sub_forward_mc(f, layout, r, pool, counter, kernels)
        return sub_backward_mc(f, layout, y, pool, counter, kernels)
    if kind == "bmc":
        y = sub_forward_bmc(f, layout, r, pool, counter, kernels)
        return sub_backward_bmc(f, layout, y, pool, counter, kernels)
    if kind == "hbmc":
        y = sub_forward_hbmc(f, layout, r, pool, counter, kernels)
        return sub_backward_hbmc(f, layout, y, pool, counter, kernels)
    raise ValueError(f"unknown kernel selector {kind!r}")
