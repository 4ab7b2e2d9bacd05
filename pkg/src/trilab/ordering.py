"""Reordering construction and verification.

Three orderings are built here:

* nodal coloring (MC): greedy first-fit over nodes in ascending index;
* block coloring (BMC): nodes grouped greedily into blocks of size b_s, the
  block quotient graph colored first-fit in ascending block id;
* hierarchical (HBMC): per color, runs of w consecutive BMC blocks form
  level-1 blocks whose rows are interleaved so each group of w rows (one per
  constituent block) can be updated simultaneously.

Undersized blocks and colors whose block count is not a multiple of w are
padded with dummy unknowns (diagonal 1, rhs 0, no couplings) appended past
the real index range; solves restricted to real unknowns are unchanged.

The module also builds order-relation graphs and checks the sign-preservation
property that makes two orderings leave the preconditioned iteration
identical: a permutation q is order-preserving for A when every structurally
coupled pair keeps its relative order under q.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import get_kernels
from .matrix import CsrMatrix, Permutation

__all__ = [
    "NodalColoring", "Blocking", "BmcLayout", "HbmcLayout", "OrderingGraph",
    "ErReport", "Level2Report", "greedy_color_nodes", "build_blocks",
    "color_blocks", "build_hbmc", "pad_colors", "extend_with_dummies",
    "build_ordering_graph", "check_er_condition", "check_level2_structure",
]


@dataclass
class NodalColoring:
    n_c: int
    color_of: np.ndarray
    perm: Permutation
    color_ranges: np.ndarray  # length n_c+1; rows of color c occupy [r[c], r[c+1]) after perm


@dataclass
class Blocking:
    b_s: int
    block_of: np.ndarray
    blocks: list  # per-block member arrays, ascending original index

    @property
    def n_blocks(self):
        return len(self.blocks)


@dataclass
class BmcLayout:
    blocking: Blocking
    n_c: int
    color_of_block: np.ndarray
    n_of: np.ndarray             # blocks per color
    perm: Permutation            # original index -> position in block-color order
    color_ranges: np.ndarray     # length n_c+1, row spans per color
    block_order: np.ndarray      # block ids in emission order (color-major)
    block_bounds: np.ndarray     # length n_blocks+1, row start of each emitted block
    color_block_ranges: np.ndarray  # length n_c+1, spans into block_order per color


@dataclass
class HbmcLayout:
    base: BmcLayout
    w: int
    nbar_of: np.ndarray          # level-1 blocks per color
    perm: Permutation            # padded block-color position -> final position
    padded_perm: Permutation     # extended original index -> padded block-color position
    composed_perm: Permutation   # extended original index -> final position
    level1_color: np.ndarray     # owning color of each level-1 block
    n: int                       # real unknowns
    n_pad: int                   # total including dummies
    color_ranges: np.ndarray     # length n_c+1, row spans per color (final order)
    color_lvl1_ranges: np.ndarray  # length n_c+1, level-1 block spans per color
    real_positions: np.ndarray   # sorted final positions of real unknowns

    @property
    def b_s(self):
        return self.base.blocking.b_s

    @property
    def n_c(self):
        return self.base.n_c

    @property
    def n_dummy(self):
        return self.n_pad - self.n

    @property
    def n_level1(self):
        return int(self.level1_color.shape[0])

    @property
    def level1_ranges(self):
        """(start, stop, color) per level-1 block; every span is b_s*w wide."""
        span = self.b_s * self.w
        k = np.arange(self.n_level1, dtype=np.int64)
        return np.stack([k * span, (k + 1) * span, self.level1_color], axis=1)


@dataclass
class OrderingGraph:
    """Directed edges over coupled pairs; direction = relative order."""

    tail: np.ndarray
    head: np.ndarray

    def __post_init__(self):
        self.tail = np.ascontiguousarray(self.tail, dtype=np.int64)
        self.head = np.ascontiguousarray(self.head, dtype=np.int64)

    @property
    def n_edges(self):
        return self.tail.shape[0]

    def __eq__(self, other):
        if not isinstance(other, OrderingGraph):
            return NotImplemented
        return (np.array_equal(self.tail, other.tail)
                and np.array_equal(self.head, other.head))


@dataclass
class ErReport:
    holds: bool
    n_pairs: int
    n_violations: int
    violations: list  # first few offending (i, j) pairs, original ids


@dataclass
class Level2Report:
    holds: bool
    n_diag_violations: int      # off-diagonal entries inside a w-wide step
    n_cross_violations: int     # couplings between same-color level-1 blocks
    examples: list


def _group_perm(group_of, n_groups):
    """Permutation sending members of group 0 first (ascending), then 1, ..."""
    order = np.argsort(group_of, kind="stable")
    new_of_old = np.empty_like(order)
    new_of_old[order] = np.arange(order.shape[0], dtype=np.int64)
    counts = np.bincount(group_of, minlength=n_groups)
    ranges = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(counts, out=ranges[1:])
    return Permutation(new_of_old), ranges, order


def greedy_color_nodes(a: CsrMatrix, kernels=None):
    k = kernels if kernels is not None else get_kernels()
    color_of = k.greedy_color(a.row_ptr, a.col_idx)
    n_c = int(color_of.max()) + 1 if a.n else 0
    perm, ranges, _ = _group_perm(color_of, n_c)
    return NodalColoring(n_c, color_of, perm, ranges)


def build_blocks(a: CsrMatrix, b_s, kernels=None):
    if b_s < 1:
        raise ValueError("b_s must be at least 1")
    k = kernels if kernels is not None else get_kernels()
    block_of, n_blocks = k.grow_blocks(a.row_ptr, a.col_idx, b_s)
    order = np.argsort(block_of, kind="stable")
    bounds = np.zeros(n_blocks + 1, dtype=np.int64)
    np.cumsum(np.bincount(block_of, minlength=n_blocks), out=bounds[1:])
    blocks = [order[bounds[b]:bounds[b + 1]] for b in range(n_blocks)]
    return Blocking(b_s, block_of, blocks)


def color_blocks(a: CsrMatrix, blocking: Blocking, kernels=None):
    k = kernels if kernels is not None else get_kernels()
    nb = blocking.n_blocks
    block_ptr = np.zeros(nb + 1, dtype=np.int64)
    np.cumsum(np.array([len(b) for b in blocking.blocks], dtype=np.int64),
              out=block_ptr[1:])
    block_nodes = (np.concatenate(blocking.blocks) if nb
                   else np.empty(0, dtype=np.int64))
    color_of_block = k.color_block_graph(a.row_ptr, a.col_idx,
                                         blocking.block_of, nb,
                                         block_ptr, block_nodes)
    n_c = int(color_of_block.max()) + 1 if nb else 0
    n_of = np.bincount(color_of_block, minlength=n_c).astype(np.int64)
    block_order = np.argsort(color_of_block, kind="stable")
    sizes = np.array([len(blocking.blocks[b]) for b in block_order], dtype=np.int64)
    block_bounds = np.zeros(nb + 1, dtype=np.int64)
    np.cumsum(sizes, out=block_bounds[1:])
    color_block_ranges = np.zeros(n_c + 1, dtype=np.int64)
    np.cumsum(n_of, out=color_block_ranges[1:])
    seq = (np.concatenate([blocking.blocks[b] for b in block_order]) if nb
           else np.empty(0, dtype=np.int64))
    new_of_old = np.empty(a.n, dtype=np.int64)
    new_of_old[seq] = np.arange(a.n, dtype=np.int64)
    color_ranges = block_bounds[color_block_ranges]
    return BmcLayout(blocking, n_c, color_of_block, n_of,
                     Permutation(new_of_old), color_ranges,
                     block_order, block_bounds, color_block_ranges)


def pad_colors(layout: BmcLayout, w):
    """Pad each color to a multiple of w blocks, each block to exactly b_s.

    Returns (slots, nbar_of, n_dummy): slots[p] is the extended original id
    occupying padded position p (dummies numbered from n upward in
    consumption order).
    """
    b_s = layout.blocking.b_s
    n = len(layout.perm)
    next_dummy = n
    slots = []
    nbar_of = np.empty(layout.n_c, dtype=np.int64)
    for c in range(layout.n_c):
        lo, hi = layout.color_block_ranges[c], layout.color_block_ranges[c + 1]
        blk_ids = layout.block_order[lo:hi]
        padded_count = -(-blk_ids.shape[0] // w) * w
        for k in range(padded_count):
            if k < blk_ids.shape[0]:
                members = layout.blocking.blocks[blk_ids[k]]
                slots.extend(int(i) for i in members)
                fill = b_s - members.shape[0]
            else:
                fill = b_s
            slots.extend(range(next_dummy, next_dummy + fill))
            next_dummy += fill
        nbar_of[c] = padded_count // w
    slots = np.array(slots, dtype=np.int64)
    return slots, nbar_of, next_dummy - n


def build_hbmc(layout: BmcLayout, w):
    if w < 1:
        raise ValueError("w must be at least 1")
    b_s = layout.blocking.b_s
    n = len(layout.perm)
    slots, nbar_of, n_dummy = pad_colors(layout, w)
    n_pad = slots.shape[0]
    padded_new_of_old = np.empty(n_pad, dtype=np.int64)
    padded_new_of_old[slots] = np.arange(n_pad, dtype=np.int64)
    padded_perm = Permutation(padded_new_of_old)

    # within each level-1 block, member j of constituent block m moves from
    # local position m*b_s + j to j*w + m
    span = b_s * w
    n_lvl1 = n_pad // span
    local = np.empty(span, dtype=np.int64)
    for m in range(w):
        for j in range(b_s):
            local[m * b_s + j] = j * w + m
    sec = (np.arange(n_lvl1, dtype=np.int64)[:, None] * span + local[None, :]).ravel()
    perm = Permutation(sec)
    composed = perm.compose(padded_perm)

    color_lvl1_ranges = np.zeros(layout.n_c + 1, dtype=np.int64)
    np.cumsum(nbar_of, out=color_lvl1_ranges[1:])
    color_ranges = color_lvl1_ranges * span
    level1_color = np.repeat(np.arange(layout.n_c, dtype=np.int64), nbar_of)
    real_positions = np.sort(composed.new_of_old[:n])
    return HbmcLayout(layout, w, nbar_of, perm, padded_perm, composed,
                      level1_color, n, n_pad, color_ranges,
                      color_lvl1_ranges, real_positions)


def extend_with_dummies(a: CsrMatrix, b, hl: HbmcLayout):
    """Append hl.n_dummy decoupled rows (diagonal 1, rhs 0) to the system."""
    nd = hl.n_dummy
    if nd == 0:
        return a, np.asarray(b, dtype=np.float64)
    n, n_pad = hl.n, hl.n_pad
    row_ptr = np.concatenate([a.row_ptr,
                              a.row_ptr[-1] + np.arange(1, nd + 1, dtype=np.int64)])
    col_idx = np.concatenate([a.col_idx, np.arange(n, n_pad, dtype=np.int64)])
    vals = np.concatenate([a.vals, np.ones(nd)])
    b_ext = np.concatenate([np.asarray(b, dtype=np.float64), np.zeros(nd)])
    return CsrMatrix(n_pad, row_ptr, col_idx, vals), b_ext


def _coupled_pairs(a: CsrMatrix):
    """Unique unordered structurally coupled pairs (lo < hi)."""
    rows = np.repeat(np.arange(a.n, dtype=np.int64), np.diff(a.row_ptr))
    cols = a.col_idx
    off = rows != cols
    lo = np.minimum(rows[off], cols[off])
    hi = np.maximum(rows[off], cols[off])
    order = np.lexsort((hi, lo))
    lo, hi = lo[order], hi[order]
    if lo.shape[0]:
        keep = np.ones(lo.shape[0], dtype=bool)
        keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi = lo[keep], hi[keep]
    return lo, hi


def build_ordering_graph(a: CsrMatrix, p: Permutation):
    lo, hi = _coupled_pairs(a)
    q = p.new_of_old
    flip = q[lo] > q[hi]
    tail = np.where(flip, hi, lo)
    head = np.where(flip, lo, hi)
    order = np.lexsort((head, tail))
    return OrderingGraph(tail[order], head[order])


def check_er_condition(a: CsrMatrix, p: Permutation, max_violations=20,
                       pair_filter=None):
    """Does p keep every coupled pair's relative order?

    pair_filter, when given, receives the (lo, hi) pair arrays and returns a
    mask restricting the scan (used to assert sub-properties separately).
    """
    lo, hi = _coupled_pairs(a)
    if pair_filter is not None:
        mask = pair_filter(lo, hi)
        lo, hi = lo[mask], hi[mask]
    q = p.new_of_old
    bad = q[lo] > q[hi]
    idx = np.nonzero(bad)[0]
    violations = [(int(lo[k]), int(hi[k])) for k in idx[:max_violations]]
    return ErReport(idx.shape[0] == 0, int(lo.shape[0]), int(idx.shape[0]),
                    violations)


def check_level2_structure(a_final: CsrMatrix, hl: HbmcLayout, max_examples=10):
    """Pattern scan of the final-order matrix against the two structural
    guarantees: w-wide steps are diagonal, and same-color level-1 blocks
    never couple."""
    span = hl.b_s * hl.w
    rows = np.repeat(np.arange(a_final.n, dtype=np.int64), np.diff(a_final.row_ptr))
    cols = a_final.col_idx
    off = rows != cols
    r, c = rows[off], cols[off]
    g1, g2 = r // span, c // span
    same = g1 == g2
    diag_bad = same & ((r % span) // hl.w == (c % span) // hl.w)
    cross_bad = (~same) & (hl.level1_color[g1] == hl.level1_color[g2])
    examples = [("step", int(i), int(j)) for i, j in
                zip(r[diag_bad][:max_examples], c[diag_bad][:max_examples])]
    examples += [("cross", int(i), int(j)) for i, j in
                 zip(r[cross_bad][:max_examples], c[cross_bad][:max_examples])]
    nd, nc = int(diag_bad.sum()), int(cross_bad.sum())
    return Level2Report(nd == 0 and nc == 0, nd, nc, examples[:max_examples])
