"""numba builds of the hot kernels.

All index arrays are int64, all values float64.  nogil=True so the fork-join
worker pool gets real thread parallelism; cache=True so compilation cost is
paid once per machine, not once per process.
"""

import numba as nb
import numpy as np

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@nb.njit(**_JIT)
def spmv_csr(row_ptr, col_idx, vals, x, out):
    n = row_ptr.shape[0] - 1
    for i in range(n):
        s = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s += vals[p] * x[col_idx[p]]
        out[i] = s


@nb.njit(**_JIT)
def spmv_sell(slice_ptr, slice_len, col_idx, vals, slice_width, x, out):
    n_slices = slice_len.shape[0]
    for s in range(n_slices):
        base = s * slice_width
        off = slice_ptr[s]
        for j in range(slice_width):
            out[base + j] = 0.0
        for _t in range(slice_len[s]):
            for j in range(slice_width):
                out[base + j] += vals[off + j] * x[col_idx[off + j]]
            off += slice_width


@nb.njit(**_JIT)
def ic0_factor(lrp, lci, lvals, adiag):
    """Zero-fill incomplete Cholesky on the strict-lower pattern.

    lvals holds the strict-lower values of the (shifted) input and is
    overwritten with the factor entries.  Returns (bad_row, bad_pivot, d,
    inv_d); bad_row is -1 on success.
    """
    n = adiag.shape[0]
    d = np.zeros(n)
    inv_d = np.zeros(n)
    for i in range(n):
        for p in range(lrp[i], lrp[i + 1]):
            j = lci[p]
            s = lvals[p]
            # dot of factor rows i and j over their common columns < j
            p1 = lrp[i]
            e1 = p
            p2 = lrp[j]
            e2 = lrp[j + 1]
            while p1 < e1 and p2 < e2:
                c1 = lci[p1]
                c2 = lci[p2]
                if c1 == c2:
                    s -= lvals[p1] * lvals[p2]
                    p1 += 1
                    p2 += 1
                elif c1 < c2:
                    p1 += 1
                else:
                    p2 += 1
            lvals[p] = s * inv_d[j]
        s = adiag[i]
        for p in range(lrp[i], lrp[i + 1]):
            s -= lvals[p] * lvals[p]
        if s <= 0.0:
            return i, s, d, inv_d
        d[i] = np.sqrt(s)
        inv_d[i] = 1.0 / d[i]
    return -1, 0.0, d, inv_d


@nb.njit(**_JIT)
def llt_on_pattern(lrp, lci, lvals, d):
    """(L Lt) restricted to the factor pattern: strict-lower values + diagonal."""
    low = np.empty(lvals.shape[0])
    diag = np.empty(d.shape[0])
    for i in range(d.shape[0]):
        for p in range(lrp[i], lrp[i + 1]):
            j = lci[p]
            s = lvals[p] * d[j]
            p1 = lrp[i]
            e1 = p
            p2 = lrp[j]
            e2 = lrp[j + 1]
            while p1 < e1 and p2 < e2:
                c1 = lci[p1]
                c2 = lci[p2]
                if c1 == c2:
                    s += lvals[p1] * lvals[p2]
                    p1 += 1
                    p2 += 1
                elif c1 < c2:
                    p1 += 1
                else:
                    p2 += 1
            low[p] = s
        s = d[i] * d[i]
        for p in range(lrp[i], lrp[i + 1]):
            s += lvals[p] * lvals[p]
        diag[i] = s
    return low, diag


@nb.njit(**_JIT)
def fwd_csr_range(lrp, lci, lvals, inv_d, r, y, start, end):
    for i in range(start, end):
        s = r[i]
        for p in range(lrp[i], lrp[i + 1]):
            s -= lvals[p] * y[lci[p]]
        y[i] = s * inv_d[i]


@nb.njit(**_JIT)
def bwd_csr_range(urp, uci, uvals, inv_d, y, z, start, end):
    for i in range(end - 1, start - 1, -1):
        s = y[i]
        for p in range(urp[i], urp[i + 1]):
            s -= uvals[p] * z[uci[p]]
        z[i] = s * inv_d[i]


@nb.njit(**_JIT)
def fwd_sell_range(slice_ptr, slice_len, col_idx, vals, inv_d, r, y, width, block_rows, k0, k1):
    """Forward substitution over level-1 blocks [k0, k1).

    Each block is block_rows sequential steps of `width` rows; one step is a
    gather / multiply-subtract over the slice followed by an elementwise
    scale, so the lane loop vectorizes.
    """
    for k in range(k0, k1):
        base = k * block_rows * width
        for l in range(block_rows):
            row0 = base + l * width
            sid = row0 // width
            off = slice_ptr[sid]
            for j in range(width):
                y[row0 + j] = r[row0 + j]
            for _t in range(slice_len[sid]):
                for j in range(width):
                    y[row0 + j] -= vals[off + j] * y[col_idx[off + j]]
                off += width
            for j in range(width):
                y[row0 + j] *= inv_d[row0 + j]


@nb.njit(**_JIT)
def bwd_sell_range(slice_ptr, slice_len, col_idx, vals, inv_d, y, z, width, block_rows, k0, k1):
    for k in range(k1 - 1, k0 - 1, -1):
        base = k * block_rows * width
        for l in range(block_rows - 1, -1, -1):
            row0 = base + l * width
            sid = row0 // width
            off = slice_ptr[sid]
            for j in range(width):
                z[row0 + j] = y[row0 + j]
            for _t in range(slice_len[sid]):
                for j in range(width):
                    z[row0 + j] -= vals[off + j] * z[col_idx[off + j]]
                off += width
            for j in range(width):
                z[row0 + j] *= inv_d[row0 + j]


@nb.njit(**_JIT)
def greedy_color(row_ptr, col_idx):
    """First-fit coloring, nodes visited in ascending index."""
    n = row_ptr.shape[0] - 1
    color_of = np.full(n, -1, np.int64)
    mark = np.full(n + 1, -1, np.int64)
    for i in range(n):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            if j != i:
                c = color_of[j]
                if c >= 0:
                    mark[c] = i
        c = 0
        while mark[c] == i:
            c += 1
        color_of[i] = c
    return color_of


@nb.njit(**_JIT)
def _heap_push(heap, size, val):
    heap[size] = val
    i = size
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        tmp = heap[parent]
        heap[parent] = heap[i]
        heap[i] = tmp
        i = parent
    return size + 1


@nb.njit(**_JIT)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and heap[left] < heap[smallest]:
            smallest = left
        if right < size and heap[right] < heap[smallest]:
            smallest = right
        if smallest == i:
            break
        tmp = heap[smallest]
        heap[smallest] = heap[i]
        heap[i] = tmp
        i = smallest
    return top, size


@nb.njit(**_JIT)
def grow_blocks(row_ptr, col_idx, block_size):
    """Greedy blocking: seed with the smallest unassigned index, then absorb
    the smallest-indexed unassigned neighbor of the block until it reaches
    block_size or runs out of neighbors."""
    n = row_ptr.shape[0] - 1
    block_of = np.full(n, -1, np.int64)
    heap = np.empty(row_ptr[n] + 1, np.int64)
    next_seed = 0
    n_blocks = 0
    while True:
        while next_seed < n and block_of[next_seed] >= 0:
            next_seed += 1
        if next_seed == n:
            break
        b = n_blocks
        n_blocks += 1
        hsize = 0
        cur = next_seed
        count = 0
        while True:
            block_of[cur] = b
            count += 1
            if count == block_size:
                break
            for p in range(row_ptr[cur], row_ptr[cur + 1]):
                j = col_idx[p]
                if j != cur and block_of[j] < 0:
                    hsize = _heap_push(heap, hsize, j)
            nxt = -1
            while hsize > 0:
                v, hsize = _heap_pop(heap, hsize)
                if block_of[v] < 0:
                    nxt = v
                    break
            if nxt < 0:
                break
            cur = nxt
    return block_of, n_blocks


@nb.njit(**_JIT)
def color_block_graph(row_ptr, col_idx, block_of, n_blocks, block_ptr, block_nodes):
    """First-fit coloring of the block quotient graph, blocks in ascending id."""
    color_of_block = np.full(n_blocks, -1, np.int64)
    mark = np.full(n_blocks + 1, -1, np.int64)
    for b in range(n_blocks):
        for q in range(block_ptr[b], block_ptr[b + 1]):
            i = block_nodes[q]
            for p in range(row_ptr[i], row_ptr[i + 1]):
                bj = block_of[col_idx[p]]
                if bj != b:
                    c = color_of_block[bj]
                    if c >= 0:
                        mark[c] = b
        c = 0
        while mark[c] == b:
            c += 1
        color_of_block[b] = c
    return color_of_block
