"""
Matrix Market files
-------------------

Reads ``coordinate real`` matrices with the ``general`` or ``symmetric``
qualifier and writes sparse matrices and dense factors.

Syntax
------

::

    %%MatrixMarket matrix coordinate real general
    % comments
    <rows> <cols> <entries>
    <i> <j> <value>
    ...

Indices are 1-based. A ``symmetric`` file stores the lower triangle only.
Repeated entries are summed.
"""
import logging
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .errors import MatrixMarketError
from .factorization import canonical_csr

logger = logging.getLogger(__name__)

BANNER = "%%matrixmarket"
SYMMETRIES = ("general", "symmetric")
PRECISION = 17


def _parse_header(path, line):
    tokens = line.lower().split()
    if len(tokens) != 5 or tokens[0] != BANNER or tokens[1] != "matrix":
        raise MatrixMarketError(
            path, 1, "expected '%%MatrixMarket matrix coordinate real <symmetry>'"
        )
    if tokens[2] != "coordinate":
        raise MatrixMarketError(path, 1, f"unsupported format '{tokens[2]}'")
    if tokens[3] != "real":
        raise MatrixMarketError(path, 1, f"unsupported field '{tokens[3]}'")
    if tokens[4] not in SYMMETRIES:
        raise MatrixMarketError(path, 1, f"unsupported symmetry '{tokens[4]}'")
    return tokens[4]


def _numbers(path, lineno, tokens, count, cast):
    if len(tokens) != count:
        raise MatrixMarketError(
            path, lineno, f"expected {count} fields, found {len(tokens)}"
        )
    try:
        return [c(t) for c, t in zip(cast, tokens)]
    except ValueError:
        raise MatrixMarketError(
            path, lineno, f"cannot parse '{' '.join(tokens)}'"
        ) from None


def load_matrix_market(path):
    """Sparse CSR matrix stored in ``path``."""
    path = Path(path)
    with path.open() as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    symmetry = _parse_header(path, lines[0])

    shape = None
    rows, cols, values = [], [], []
    expected = entries = 0
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        tokens = stripped.split()
        if shape is None:
            m, n, expected = _numbers(path, lineno, tokens, 3, (int, int, int))
            if m < 0 or n < 0 or expected < 0:
                raise MatrixMarketError(path, lineno, "negative size")
            shape = (m, n)
            continue
        if entries == expected:
            raise MatrixMarketError(path, lineno, f"more than {expected} entries")
        i, j, v = _numbers(path, lineno, tokens, 3, (int, int, float))
        if not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
            raise MatrixMarketError(
                path, lineno, f"index ({i}, {j}) outside a {shape[0]}x{shape[1]} matrix"
            )
        if symmetry == "symmetric" and i < j:
            raise MatrixMarketError(
                path, lineno, f"entry ({i}, {j}) above the diagonal of a symmetric file"
            )
        entries += 1
        rows.append(i - 1)
        cols.append(j - 1)
        values.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            values.append(v)

    if shape is None:
        raise MatrixMarketError(path, len(lines), "missing size line")
    if symmetry == "symmetric" and shape[0] != shape[1]:
        raise MatrixMarketError(path, len(lines), "symmetric matrix must be square")
    if entries < expected:
        raise MatrixMarketError(
            path, len(lines), f"expected {expected} entries, found {entries}"
        )
    matrix = scipy.sparse.coo_matrix((values, (rows, cols)), shape=shape)
    logger.debug("read %s: %dx%d, %d entries", path, *shape, entries)
    return canonical_csr(matrix)


def load_dense(path):
    """Dense array from a Matrix Market file in either format."""
    data = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(data):
        data = data.toarray()
    return np.asarray(data, dtype=float)


def write_matrix_market(path, M):
    """Write a sparse matrix in coordinate format or a dense factor as an array."""
    path = Path(path)
    if scipy.sparse.issparse(M):
        scipy.io.mmwrite(
            str(path), canonical_csr(M).tocoo(), symmetry="general", precision=PRECISION
        )
        return path
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            f"{M.shape[0]} {M.shape[1]} 0\n"
        )
    else:
        scipy.io.mmwrite(str(path), M, symmetry="general", precision=PRECISION)
    return path


def read_shape(path):
    """``(rows, cols)`` from the size line, without reading the entries."""
    path = Path(path)
    with path.open() as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if lineno == 1 and not stripped.lower().startswith(BANNER):
                raise MatrixMarketError(path, 1, "missing %%MatrixMarket banner")
            if not stripped or stripped.startswith("%"):
                continue
            tokens = stripped.split()
            return tuple(_numbers(path, lineno, tokens[:2], 2, (int, int)))
    raise MatrixMarketError(path, lineno, "missing size line")
