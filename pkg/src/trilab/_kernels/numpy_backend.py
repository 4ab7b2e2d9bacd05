"""Pure-numpy fallback for every hot kernel.

Same signatures and same per-row accumulation order as the numba build, so
results agree to rounding and chunked invocations stay deterministic.  Slower;
meant for environments without a working numba install and for A/B checks.
"""

import heapq

import numpy as np

NAME = "numpy"


def spmv_csr(row_ptr, col_idx, vals, x, out):
    if vals.shape[0] == 0:
        out[:] = 0.0
        return
    prods = vals * x[col_idx]
    starts = row_ptr[:-1]
    nonempty = row_ptr[1:] > starts
    idx = np.minimum(starts, prods.shape[0] - 1)
    sums = np.add.reduceat(prods, idx)
    # reduceat yields prods[i] for empty segments; zero those out
    out[:] = np.where(nonempty, sums, 0.0)


def spmv_sell(slice_ptr, slice_len, col_idx, vals, slice_width, x, out):
    w = slice_width
    for s in range(slice_len.shape[0]):
        base = s * w
        off = slice_ptr[s]
        acc = np.zeros(w)
        for _t in range(slice_len[s]):
            acc += vals[off:off + w] * x[col_idx[off:off + w]]
            off += w
        out[base:base + w] = acc


def ic0_factor(lrp, lci, lvals, adiag):
    n = adiag.shape[0]
    d = np.zeros(n)
    inv_d = np.zeros(n)
    for i in range(n):
        p0 = lrp[i]
        p1 = lrp[i + 1]
        for p in range(p0, p1):
            j = lci[p]
            s = lvals[p]
            pa, ea, pb, eb = p0, p, lrp[j], lrp[j + 1]
            while pa < ea and pb < eb:
                ca = lci[pa]
                cb = lci[pb]
                if ca == cb:
                    s -= lvals[pa] * lvals[pb]
                    pa += 1
                    pb += 1
                elif ca < cb:
                    pa += 1
                else:
                    pb += 1
            lvals[p] = s * inv_d[j]
        s = adiag[i]
        for p in range(p0, p1):
            s -= lvals[p] * lvals[p]
        if s <= 0.0:
            return i, s, d, inv_d
        d[i] = np.sqrt(s)
        inv_d[i] = 1.0 / d[i]
    return -1, 0.0, d, inv_d


def llt_on_pattern(lrp, lci, lvals, d):
    low = np.empty(lvals.shape[0])
    diag = np.empty(d.shape[0])
    for i in range(d.shape[0]):
        p0 = lrp[i]
        p1 = lrp[i + 1]
        for p in range(p0, p1):
            j = lci[p]
            s = lvals[p] * d[j]
            pa, ea, pb, eb = p0, p, lrp[j], lrp[j + 1]
            while pa < ea and pb < eb:
                ca = lci[pa]
                cb = lci[pb]
                if ca == cb:
                    s += lvals[pa] * lvals[pb]
                    pa += 1
                    pb += 1
                elif ca < cb:
                    pa += 1
                else:
                    pb += 1
            low[p] = s
        s = d[i] * d[i]
        for p in range(p0, p1):
            s += lvals[p] * lvals[p]
        diag[i] = s
    return low, diag


def fwd_csr_range(lrp, lci, lvals, inv_d, r, y, start, end):
    for i in range(start, end):
        s = r[i]
        for p in range(lrp[i], lrp[i + 1]):
            s -= lvals[p] * y[lci[p]]
        y[i] = s * inv_d[i]


def bwd_csr_range(urp, uci, uvals, inv_d, y, z, start, end):
    for i in range(end - 1, start - 1, -1):
        s = y[i]
        for p in range(urp[i], urp[i + 1]):
            s -= uvals[p] * z[uci[p]]
        z[i] = s * inv_d[i]


def fwd_sell_range(slice_ptr, slice_len, col_idx, vals, inv_d, r, y, width, block_rows, k0, k1):
    w = width
    for k in range(k0, k1):
        base = k * block_rows * w
        for l in range(block_rows):
            row0 = base + l * w
            sid = row0 // w
            off = slice_ptr[sid]
            y[row0:row0 + w] = r[row0:row0 + w]
            for _t in range(slice_len[sid]):
                y[row0:row0 + w] -= vals[off:off + w] * y[col_idx[off:off + w]]
                off += w
            y[row0:row0 + w] *= inv_d[row0:row0 + w]


def bwd_sell_range(slice_ptr, slice_len, col_idx, vals, inv_d, y, z, width, block_rows, k0, k1):
    w = width
    for k in range(k1 - 1, k0 - 1, -1):
        base = k * block_rows * w
        for l in range(block_rows - 1, -1, -1):
            row0 = base + l * w
            sid = row0 // w
            off = slice_ptr[sid]
            z[row0:row0 + w] = y[row0:row0 + w]
            for _t in range(slice_len[sid]):
                z[row0:row0 + w] -= vals[off:off + w] * z[col_idx[off:off + w]]
                off += w
            z[row0:row0 + w] *= inv_d[row0:row0 + w]


def greedy_color(row_ptr, col_idx):
    n = row_ptr.shape[0] - 1
    color_of = np.full(n, -1, np.int64)
    mark = np.full(n + 1, -1, np.int64)
    for i in range(n):
        nbrs = col_idx[row_ptr[i]:row_ptr[i + 1]]
        cs = color_of[nbrs[nbrs != i]]
        mark[cs[cs >= 0]] = i
        c = 0
        while mark[c] == i:
            c += 1
        color_of[i] = c
    return color_of


def grow_blocks(row_ptr, col_idx, block_size):
    n = row_ptr.shape[0] - 1
    block_of = np.full(n, -1, np.int64)
    next_seed = 0
    n_blocks = 0
    while True:
        while next_seed < n and block_of[next_seed] >= 0:
            next_seed += 1
        if next_seed == n:
            break
        b = n_blocks
        n_blocks += 1
        heap = []
        cur = next_seed
        count = 0
        while True:
            block_of[cur] = b
            count += 1
            if count == block_size:
                break
            for j in col_idx[row_ptr[cur]:row_ptr[cur + 1]]:
                if j != cur and block_of[j] < 0:
                    heapq.heappush(heap, int(j))
            nxt = -1
            while heap:
                v = heapq.heappop(heap)
                if block_of[v] < 0:
                    nxt = v
                    break
            if nxt < 0:
                break
            cur = nxt
    return block_of, n_blocks


def color_block_graph(row_ptr, col_idx, block_of, n_blocks, block_ptr, block_nodes):
    color_of_block = np.full(n_blocks, -1, np.int64)
    mark = np.full(n_blocks + 1, -1, np.int64)
    for b in range(n_blocks):
        for i in block_nodes[block_ptr[b]:block_ptr[b + 1]]:
            bj = block_of[col_idx[row_ptr[i]:row_ptr[i + 1]]]
            cs = color_of_block[bj[bj != b]]
            mark[cs[cs >= 0]] = b
        c = 0
        while mark[c] == b:
            c += 1
        color_of_block[b] = c
    return color_of_block
