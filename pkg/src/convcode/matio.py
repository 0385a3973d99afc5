"""Binary matrix dump: one JSON header line, then little-endian float64 row-major."""

import json

import numpy as np


def write_matrix(f, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype="<f8"))
    header = json.dumps({"rows": int(M.shape[0]), "cols": int(M.shape[1])})
    f.write(header.encode("ascii") + b"\n")
    f.write(np.ascontiguousarray(M).tobytes())


def read_matrix(f) -> np.ndarray:
    header = json.loads(f.readline().decode("ascii"))
    rows, cols = int(header["rows"]), int(header["cols"])
    buf = f.read(8 * rows * cols)
    if len(buf) != 8 * rows * cols:
        raise EOFError(f"expected {rows}x{cols} float64 payload, got {len(buf)} bytes")
    return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()


def save_matrix(path, M) -> None:
    with open(path, "wb") as f:
        write_matrix(f, M)


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_matrix(f)
