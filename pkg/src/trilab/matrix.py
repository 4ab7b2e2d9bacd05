"""Sparse containers and conversions.

Three storage schemes move through the pipeline: COO straight off disk, CSR
for general work (column indices sorted ascending within each row, which the
factorization's merge loops rely on), and sliced ELLPACK for the vector-width
substitution kernels.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_kernels


def _as_i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass
class CooMatrix:
    """Square coordinate-format matrix; entries in no particular order.

    dropped_zeros counts explicitly-zero off-diagonal entries removed at
    ingestion time (file readers set it).
    """

    n: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    dropped_zeros: int = 0

    def __post_init__(self):
        self.row = _as_i64(self.row)
        self.col = _as_i64(self.col)
        self.val = _as_f64(self.val)
        if not (self.row.shape == self.col.shape == self.val.shape):
            raise ValueError("row/col/val length mismatch")

    @property
    def nnz(self):
        return self.val.shape[0]


@dataclass
class CsrMatrix:
    """Square CSR matrix with sorted column indices.

    diag_ptr[i] is the position of entry (i, i) inside vals, or -1 when the
    row has no stored diagonal.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    diag_ptr: np.ndarray = field(default=None)
    inserted_diag: int = 0

    def __post_init__(self):
        self.row_ptr = _as_i64(self.row_ptr)
        self.col_idx = _as_i64(self.col_idx)
        self.vals = _as_f64(self.vals)
        if self.diag_ptr is None:
            self.diag_ptr = _find_diag_ptr(self.n, self.row_ptr, self.col_idx)
        else:
            self.diag_ptr = _as_i64(self.diag_ptr)

    @property
    def nnz(self):
        return self.vals.shape[0]

    def diagonal(self):
        """Dense diagonal; missing entries read as 0."""
        d = np.zeros(self.n)
        has = self.diag_ptr >= 0
        d[has] = self.vals[self.diag_ptr[has]]
        return d

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            for p in range(self.row_ptr[i], self.row_ptr[i + 1]):
                a[i, self.col_idx[p]] = self.vals[p]
        return a


@dataclass
class SellMatrix:
    """Sliced ELLPACK with a fixed slice width.

    Rows are grouped into n_pad/width slices; a slice stores its rows'
    entries column-major (entry t of row r sits at slice_ptr[s] + t*width +
    (r - s*width)), padded to the longest row with val 0 and col pointing at
    the entry's own row so gathers stay in bounds.
    """

    n: int
    n_pad: int
    width: int
    slice_ptr: np.ndarray
    slice_len: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        self.slice_ptr = _as_i64(self.slice_ptr)
        self.slice_len = _as_i64(self.slice_len)
        self.col_idx = _as_i64(self.col_idx)
        self.vals = _as_f64(self.vals)

    @property
    def n_slices(self):
        return self.slice_len.shape[0]


@dataclass
class Permutation:
    """Bijection on [0, n); new_of_old[i] is where old index i lands."""

    new_of_old: np.ndarray

    def __post_init__(self):
        self.new_of_old = _as_i64(self.new_of_old)
        n = self.new_of_old.shape[0]
        seen = np.zeros(n, dtype=bool)
        if n:
            if self.new_of_old.min() < 0 or self.new_of_old.max() >= n:
                raise ValueError("permutation image out of range")
        seen[self.new_of_old] = True
        if not seen.all():
            raise ValueError("not a bijection")

    def __len__(self):
        return self.new_of_old.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n, dtype=np.int64))

    @property
    def old_of_new(self):
        inv = np.empty_like(self.new_of_old)
        inv[self.new_of_old] = np.arange(len(self), dtype=np.int64)
        return inv

    def inverse(self):
        return Permutation(self.old_of_new)

    def compose(self, first):
        """Permutation applying `first`, then self."""
        return Permutation(self.new_of_old[first.new_of_old])


def _find_diag_ptr(n, row_ptr, col_idx):
    diag_ptr = np.full(n, -1, dtype=np.int64)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(row_ptr))
    hits = np.nonzero(col_idx == rows)[0]
    diag_ptr[rows[hits]] = hits
    return diag_ptr


def coo_to_csr(coo, ensure_diagonal=True):
    """Sort entries into CSR. Duplicate (row, col) pairs are an error.

    Rows lacking a diagonal entry get an explicit 0 inserted (the count is
    recorded on the result as inserted_diag); the factorization rejects such
    matrices later with a clear pivot error.
    """
    row, col, val = coo.row, coo.col, coo.val
    inserted = 0
    if ensure_diagonal and coo.n:
        has_diag = np.zeros(coo.n, dtype=bool)
        has_diag[row[row == col]] = True
        missing = np.nonzero(~has_diag)[0]
        inserted = missing.shape[0]
        if inserted:
            row = np.concatenate([row, missing])
            col = np.concatenate([col, missing])
            val = np.concatenate([val, np.zeros(inserted)])
    order = np.lexsort((col, row))
    r = row[order]
    c = col[order]
    v = val[order]
    if r.shape[0] > 1:
        dup = (r[1:] == r[:-1]) & (c[1:] == c[:-1])
        if dup.any():
            k = int(np.nonzero(dup)[0][0])
            raise ValueError(f"duplicate entry at ({r[k]}, {c[k]})")
    row_ptr = np.zeros(coo.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=coo.n), out=row_ptr[1:])
    return CsrMatrix(coo.n, row_ptr, c, v, inserted_diag=inserted)


def csr_to_coo(csr):
    rows = np.repeat(np.arange(csr.n, dtype=np.int64), np.diff(csr.row_ptr))
    return CooMatrix(csr.n, rows, csr.col_idx.copy(), csr.vals.copy())


def csr_transpose(csr):
    coo = csr_to_coo(csr)
    return coo_to_csr(CooMatrix(csr.n, coo.col, coo.row, coo.val),
                      ensure_diagonal=False)


def csr_to_sell(csr, width, row_order=None):
    """Pack a CSR matrix into slices of `width` rows.

    row_order, when given, repositions rows before packing (row i of the
    source lands at packed position row_order.new_of_old[i]; column indices
    are left alone).  Rows past csr.n (when n is not a multiple of width)
    are all padding.
    """
    if width < 1:
        raise ValueError("width must be positive")
    if row_order is not None:
        if len(row_order) != csr.n:
            raise ValueError("row_order length mismatch")
        inv = row_order.old_of_new
        counts = np.diff(csr.row_ptr)[inv]
        row_ptr = np.zeros(csr.n + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        col_idx = np.empty_like(csr.col_idx)
        vals = np.empty_like(csr.vals)
        for i in range(csr.n):
            src = inv[i]
            p0 = csr.row_ptr[src]
            p1 = csr.row_ptr[src + 1]
            col_idx[row_ptr[i]:row_ptr[i + 1]] = csr.col_idx[p0:p1]
            vals[row_ptr[i]:row_ptr[i + 1]] = csr.vals[p0:p1]
        csr = CsrMatrix(csr.n, row_ptr, col_idx, vals,
                        diag_ptr=np.full(csr.n, -1, np.int64))
    n = csr.n
    n_slices = -(-n // width)
    n_pad = n_slices * width
    row_len = np.zeros(n_pad, dtype=np.int64)
    row_len[:n] = np.diff(csr.row_ptr)
    slice_len = row_len.reshape(n_slices, width).max(axis=1)
    slice_ptr = np.zeros(n_slices + 1, dtype=np.int64)
    np.cumsum(slice_len * width, out=slice_ptr[1:])
    total = int(slice_ptr[-1])
    vals = np.zeros(total)
    # default padding: each lane points at its own row, value 0
    col_idx = np.empty(total, dtype=np.int64)
    for s in range(n_slices):
        block = np.arange(s * width, (s + 1) * width, dtype=np.int64)
        col_idx[slice_ptr[s]:slice_ptr[s + 1]] = np.tile(block, slice_len[s])
    for i in range(n):
        p0 = csr.row_ptr[i]
        cnt = csr.row_ptr[i + 1] - p0
        s = i // width
        lane = i - s * width
        pos = slice_ptr[s] + lane + width * np.arange(cnt, dtype=np.int64)
        col_idx[pos] = csr.col_idx[p0:p0 + cnt]
        vals[pos] = csr.vals[p0:p0 + cnt]
    return SellMatrix(n, n_pad, width, slice_ptr, slice_len, col_idx, vals)


def sell_to_csr(sell):
    """Unpack SELL to CSR, dropping padding entries.

    Padding is any entry with value exactly 0 whose column equals its own
    row, so an explicit zero diagonal entry in the source does not survive
    the round trip; everything else does.
    """
    rows = []
    cols = []
    vals = []
    for i in range(sell.n):
        s = i // sell.width
        lane = i - s * sell.width
        pos = sell.slice_ptr[s] + lane + sell.width * np.arange(sell.slice_len[s])
        c = sell.col_idx[pos]
        v = sell.vals[pos]
        keep = ~((v == 0.0) & (c == i))
        rows.append(np.full(int(keep.sum()), i, dtype=np.int64))
        cols.append(c[keep])
        vals.append(v[keep])
    if rows:
        rows, cols, vals = (np.concatenate(rows), np.concatenate(cols),
                            np.concatenate(vals))
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    return coo_to_csr(CooMatrix(sell.n, rows, cols, vals), ensure_diagonal=False)


def permute_system(a, b, p):
    """Apply one symmetric permutation to matrix and right-hand side.

    Entry (i, j) of `a` becomes (p[i], p[j]); b'[p[i]] = b[i].
    """
    coo = csr_to_coo(a)
    q = p.new_of_old
    a_new = coo_to_csr(CooMatrix(a.n, q[coo.row], q[coo.col], coo.val),
                       ensure_diagonal=False)
    b_new = np.empty_like(b, dtype=np.float64)
    b_new[q] = b
    return a_new, b_new


def spmv(a, x, kernels=None):
    """y = A x for CSR or SELL storage."""
    k = kernels if kernels is not None else get_kernels()
    x = _as_f64(x)
    if isinstance(a, CsrMatrix):
        out = np.empty(a.n)
        k.spmv_csr(a.row_ptr, a.col_idx, a.vals, x, out)
        return out
    if isinstance(a, SellMatrix):
        if x.shape[0] < a.n_pad:
            xp = np.zeros(a.n_pad)
            xp[:x.shape[0]] = x
            x = xp
        out = np.empty(a.n_pad)
        k.spmv_sell(a.slice_ptr, a.slice_len, a.col_idx, a.vals, a.width, x, out)
        return out[:a.n]
    raise TypeError(f"spmv: unsupported matrix type {type(a).__name__}")


def gen_laplacian_5pt(nx, ny):
    """5-point Laplacian on an nx-by-ny grid, Dirichlet boundary.

    Node (ix, iy) gets index iy*nx + ix; diagonal 4, neighbors -1.
    Returns (matrix, b) with b all ones.
    """
    if nx < 2 or ny < 2:
        raise ValueError("grid sides must be at least 2")
    n = nx * ny
    rows = []
    cols = []
    vals = []
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix
            rows.append(i)
            cols.append(i)
            vals.append(4.0)
            for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < nx and 0 <= jy < ny:
                    rows.append(i)
                    cols.append(jy * nx + jx)
                    vals.append(-1.0)
    a = coo_to_csr(CooMatrix(n, np.array(rows), np.array(cols), np.array(vals)))
    return a, np.ones(n)


def gen_random_spd(n, density=0.01, seed=0):
    """Random SPD matrix: symmetric sparsity, off-diagonals in [-1, -0.1],
    diagonal 1 + sum of row magnitudes (strictly diagonally dominant)."""
    rng = np.random.default_rng(seed)
    target = max(0, int(round(density * n * n / 2)))
    i = rng.integers(0, n, size=2 * target + 8)
    j = rng.integers(0, n, size=2 * target + 8)
    keep = i < j
    pairs = np.unique(np.stack([i[keep], j[keep]], axis=1), axis=0)[:target]
    ii = pairs[:, 0]
    jj = pairs[:, 1]
    v = -rng.uniform(0.1, 1.0, size=ii.shape[0])
    rows = np.concatenate([ii, jj])
    cols = np.concatenate([jj, ii])
    vals = np.concatenate([v, v])
    diag = np.ones(n)
    np.add.at(diag, rows, np.abs(vals))
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, diag])
    return coo_to_csr(CooMatrix(n, rows, cols, vals))
