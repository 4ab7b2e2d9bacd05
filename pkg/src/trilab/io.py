"""Matrix file ingestion and emission.

Two on-disk formats:

* MatrixMarket ``coordinate real symmetric|general`` text files.  The parser
  is hand-rolled rather than delegated so every rejection can name the
  offending line.  Symmetric files carry the lower triangle only and are
  expanded to full storage on read.

* A binary CSR cache to skip re-parsing big text files.  Layout, all
  little-endian:

      bytes 0..5   magic  b"TLCSR\\0"
      u32          version (currently 1)
      i64          n
      i64          nnz
      i64[n+1]     row_ptr
      i64[nnz]     col_idx
      f64[nnz]     values
"""

import io as _io

import numpy as np

from .matrix import CooMatrix, CsrMatrix, coo_to_csr

_MAGIC = b"TLCSR\0"
_CACHE_VERSION = 1


class IngestionError(ValueError):
    """Raised for unreadable matrix files; message carries path:line."""

    def __init__(self, path, lineno, msg):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


def _significant_lines(lines):
    """(1-based line number, text) for non-comment, non-blank lines past the banner."""
    out = []
    for k, text in enumerate(lines[1:], start=2):
        s = text.strip()
        if not s or s.startswith("%"):
            continue
        out.append((k, s))
    return out


def _parse_banner(path, lines):
    if not lines:
        raise IngestionError(path, 1, "empty file")
    tokens = lines[0].split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
        raise IngestionError(path, 1, "malformed MatrixMarket banner")
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise IngestionError(path, 1, f"unsupported object {obj!r}")
    if fmt != "coordinate":
        raise IngestionError(path, 1, f"unsupported format {fmt!r} (need coordinate)")
    if field != "real":
        raise IngestionError(path, 1, f"non-real field {field!r}")
    if symmetry not in ("symmetric", "general"):
        raise IngestionError(path, 1, f"unsupported symmetry {symmetry!r}")
    return symmetry


def read_matrix_market(path):
    """Parse a coordinate real symmetric|general file into full-storage COO.

    1-based indices become 0-based; symmetric input is mirrored; explicit
    zero off-diagonals are dropped (count kept on the result).
    """
    with open(path, "r", encoding="ascii", errors="replace") as f:
        lines = f.readlines()
    symmetry = _parse_banner(path, lines)
    body = _significant_lines(lines)
    if not body:
        raise IngestionError(path, len(lines), "missing size line")
    size_no, size_line = body[0]
    parts = size_line.split()
    if len(parts) != 3:
        raise IngestionError(path, size_no, "size line must be 'rows cols nnz'")
    try:
        m, n, nnz = (int(p) for p in parts)
    except ValueError:
        raise IngestionError(path, size_no, "size line must hold three integers") from None
    if m != n:
        raise IngestionError(path, size_no, f"matrix is {m}x{n}; only square supported")
    if n < 0 or nnz < 0:
        raise IngestionError(path, size_no, "negative dimension")
    entries = body[1:]
    if len(entries) != nnz:
        where = entries[nnz][0] if len(entries) > nnz else size_no
        raise IngestionError(path, where, f"expected {nnz} entries, found {len(entries)}")

    linenos = np.fromiter((no for no, _ in entries), dtype=np.int64, count=nnz)
    arr = None
    if nnz:
        try:
            arr = np.loadtxt(_io.StringIO("\n".join(s for _, s in entries)), ndmin=2)
        except Exception:
            arr = None
        if arr is not None and (arr.shape != (nnz, 3)
                                or not (arr[:, 0] == np.floor(arr[:, 0])).all()
                                or not (arr[:, 1] == np.floor(arr[:, 1])).all()):
            arr = None
    if arr is None and nnz:
        # slow path exists to name the precise line
        arr = np.empty((nnz, 3))
        for k, (no, s) in enumerate(entries):
            parts = s.split()
            if len(parts) != 3:
                raise IngestionError(path, no, "entry line must be 'row col value'")
            try:
                i = int(parts[0])
                j = int(parts[1])
            except ValueError:
                raise IngestionError(path, no, f"bad index in {s!r}") from None
            try:
                v = float(parts[2])
            except ValueError:
                raise IngestionError(path, no, f"non-real value {parts[2]!r}") from None
            arr[k] = (i, j, v)
    if nnz == 0:
        arr = np.zeros((0, 3))

    rows = arr[:, 0].astype(np.int64) - 1
    cols = arr[:, 1].astype(np.int64) - 1
    vals = np.ascontiguousarray(arr[:, 2])
    bad = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
    if bad.any():
        k = int(np.nonzero(bad)[0][0])
        raise IngestionError(path, int(linenos[k]),
                             f"index ({rows[k] + 1}, {cols[k] + 1}) outside {n}x{n}")
    if symmetry == "symmetric":
        above = rows < cols
        if above.any():
            k = int(np.nonzero(above)[0][0])
            raise IngestionError(path, int(linenos[k]),
                                 "entry above the diagonal in a symmetric file")
    order = np.lexsort((cols, rows))
    rs, cs = rows[order], cols[order]
    if rs.shape[0] > 1:
        dup = (rs[1:] == rs[:-1]) & (cs[1:] == cs[:-1])
        if dup.any():
            k = int(np.nonzero(dup)[0][0])
            raise IngestionError(path, int(linenos[order[k + 1]]),
                                 f"duplicate entry ({rs[k] + 1} {cs[k] + 1})")

    off = rows != cols
    drop = off & (vals == 0.0)
    dropped = int(np.count_nonzero(drop))
    if dropped:
        keep = ~drop
        rows, cols, vals, off = rows[keep], cols[keep], vals[keep], off[keep]
    if symmetry == "symmetric" and off.any():
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return CooMatrix(n, rows, cols, vals, dropped_zeros=dropped)


def write_matrix_market(path, csr, comment=None):
    """Write the lower triangle as coordinate real symmetric, 1-based."""
    with open(path, "w", encoding="ascii") as f:
        f.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            for line in str(comment).splitlines():
                f.write(f"% {line}\n")
        rows = np.repeat(np.arange(csr.n, dtype=np.int64), np.diff(csr.row_ptr))
        keep = csr.col_idx <= rows
        r = rows[keep]
        c = csr.col_idx[keep]
        v = csr.vals[keep]
        f.write(f"{csr.n} {csr.n} {r.shape[0]}\n")
        for i in range(r.shape[0]):
            f.write(f"{r[i] + 1} {c[i] + 1} {v[i]:.17g}\n")


def write_csr_cache(path, csr):
    with open(path, "wb") as f:
        f.write(_MAGIC)
        np.array([_CACHE_VERSION], dtype="<u4").tofile(f)
        np.array([csr.n, csr.nnz], dtype="<i8").tofile(f)
        csr.row_ptr.astype("<i8").tofile(f)
        csr.col_idx.astype("<i8").tofile(f)
        csr.vals.astype("<f8").tofile(f)


def read_csr_cache(path):
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise IngestionError(path, 0, "not a CSR cache file (bad magic)")
        version = int(np.fromfile(f, dtype="<u4", count=1)[0])
        if version != _CACHE_VERSION:
            raise IngestionError(path, 0, f"unsupported cache version {version}")
        head = np.fromfile(f, dtype="<i8", count=2)
        if head.shape[0] != 2:
            raise IngestionError(path, 0, "truncated cache header")
        n, nnz = (int(x) for x in head)
        row_ptr = np.fromfile(f, dtype="<i8", count=n + 1)
        col_idx = np.fromfile(f, dtype="<i8", count=nnz)
        vals = np.fromfile(f, dtype="<f8", count=nnz)
    if row_ptr.shape[0] != n + 1 or col_idx.shape[0] != nnz or vals.shape[0] != nnz:
        raise IngestionError(path, 0, "truncated cache body")
    return CsrMatrix(n, row_ptr, col_idx, vals)


def load_matrix(path, write_cache=False):
    """Load either format (sniffed by magic bytes) into CSR.

    write_cache=True drops a sibling .tlcsr file after parsing a text file.
    """
    with open(path, "rb") as f:
        head = f.read(len(_MAGIC))
    if head == _MAGIC:
        return read_csr_cache(path)
    csr = coo_to_csr(read_matrix_market(path))
    if write_cache:
        write_csr_cache(str(path) + ".tlcsr", csr)
    return csr
