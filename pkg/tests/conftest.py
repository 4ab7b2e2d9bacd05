"""Shared builders for the test suite.

Most fixtures are tiny systems with hand-checkable structure; the dense
helpers give an independent reference for every sparse code path.
"""

import numpy as np
import pytest

from trilab import CooMatrix, coo_to_csr, gen_laplacian_5pt


def path_matrix(n, diag=4.0, off=-1.0):
    """Tridiagonal SPD matrix of a path graph: hand-predictable blocks."""
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i); cols.append(i); vals.append(diag)
        if i + 1 < n:
            rows += [i, i + 1]
            cols += [i + 1, i]
            vals += [off, off]
    return coo_to_csr(CooMatrix(n, np.array(rows), np.array(cols),
                                np.array(vals, dtype=float)))


def dense_solve(a, b):
    return np.linalg.solve(a.to_dense(), np.asarray(b, dtype=float))


def max_rel(x, ref):
    ref = np.asarray(ref, dtype=float)
    scale = max(1.0, float(np.abs(ref).max()))
    return float(np.abs(np.asarray(x) - ref).max()) / scale


@pytest.fixture
def grid16():
    a, b = gen_laplacian_5pt(4, 4)
    return a, b


@pytest.fixture
def grid256():
    a, b = gen_laplacian_5pt(16, 16)
    return a, b


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
