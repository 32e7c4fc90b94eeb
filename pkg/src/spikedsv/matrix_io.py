"""Plain-text matrix exchange: row-major CSV with a ``# rows=M cols=N`` header."""

import re

import numpy as np

_HEADER = re.compile(r"#\s*rows\s*=\s*(\d+)\s+cols\s*=\s*(\d+)")


def write_matrix_csv(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows, cols = A.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# rows={rows} cols={cols}\n")
        for row in A:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        m = _HEADER.match(header.strip())
        if m is None:
            raise ValueError(f"{path}: missing '# rows=M cols=N' header")
        rows, cols = int(m.group(1)), int(m.group(2))
        data = [line for line in fh if line.strip()]
    if len(data) != rows:
        raise ValueError(f"{path}: header declares {rows} rows, found {len(data)}")
    A = np.array([[float(x) for x in line.split(",")] for line in data], dtype=float)
    if A.shape != (rows, cols):
        raise ValueError(f"{path}: expected shape {(rows, cols)}, got {A.shape}")
    return A
