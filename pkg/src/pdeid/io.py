"""On-disk formats for fields, feature matrices, fits and diagnostics.

Binary field layout (little-endian)::

    magic   8 bytes   b"PDEIDFLD"
    M, N    2 x u64
    x_max   f64
    t_max   f64
    values  M*N f64, row-major (index i outer, n inner)

Binary feature-matrix layout::

    magic   8 bytes   b"PDEIDFEA"
    rows, K 2 x u64
    flags   u64       bit 0: ground truth
    scales  K f64
    labels  K x (u32 length + utf-8 bytes)
    values  rows*K f64, column-major
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .dictionary import FeatureMatrix
from .lasso import SparseFit
from .types import Field, SpaceTimeGrid, TermDescriptor, TermKind, canonical_term_order

FIELD_MAGIC = b"PDEIDFLD"
FEATURE_MAGIC = b"PDEIDFEA"
_FIELD_HEADER = struct.Struct("<8sQQdd")
_FEATURE_HEADER = struct.Struct("<8sQQQ")


class FormatError(ValueError):
    pass


def write_field(path, field: Field) -> None:
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEADER.pack(FIELD_MAGIC, g.M, g.N, g.x_max, g.t_max))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size:
        raise FormatError("file too short for a field header")
    magic, M, N, x_max, t_max = _FIELD_HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    payload = raw[_FIELD_HEADER.size:]
    if len(payload) != 8 * M * N:
        raise FormatError(f"expected {M * N} values, found {len(payload) // 8}")
    values = np.frombuffer(payload, dtype="<f8").reshape(M, N)
    return Field(SpaceTimeGrid(int(M), int(N), x_max, t_max), values)


def write_field_csv(path, field: Field) -> None:
    g = field.grid
    X, T = np.meshgrid(g.x, g.t, indexing="ij")
    I, Nn = np.meshgrid(np.arange(g.M), np.arange(g.N), indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "n", "x", "t", "value"])
        for row in zip(I.ravel(), Nn.ravel(), X.ravel(), T.ravel(), field.values.ravel()):
            w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])


def read_field_csv(path, x_max: float = 1.0, t_max: float = 0.1) -> Field:
    """Inverse of ``write_field_csv``; domain extents are inferred from the coordinates when possible."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    i = data[:, 0].astype(int)
    n = data[:, 1].astype(int)
    M, N = i.max() + 1, n.max() + 1
    if data.shape[0] != M * N:
        raise FormatError("CSV does not cover a full grid")
    values = np.empty((M, N))
    values[i, n] = data[:, 4]
    if M > 1:
        x_max = float(data[i == 1, 2][0]) * M
    if N > 1:
        t_max = float(data[n == 1, 3][0]) * N
    return Field(SpaceTimeGrid(int(M), int(N), x_max, t_max), values)


def load_field(path) -> Field:
    path = Path(path)
    return read_field_csv(path) if path.suffix.lower() == ".csv" else read_field(path)


def save_field(path, field: Field) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_field_csv(path, field)
    else:
        write_field(path, field)


def _term_from_label(label: str) -> TermDescriptor:
    for t in canonical_term_order(6):
        if t.label == label:
            return t
    raise FormatError(f"unknown term label {label!r}")


def write_features(path, F: FeatureMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, F.n_rows, F.K, int(F.is_ground_truth)))
        fh.write(np.asarray(F.scales, dtype="<f8").tobytes())
        for lab in F.labels:
            b = lab.encode()
            fh.write(struct.pack("<I", len(b)) + b)
        fh.write(np.asfortranarray(F.values, dtype="<f8").tobytes(order="F"))


def read_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    magic, rows, K, flags = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    off = _FEATURE_HEADER.size
    scales = np.frombuffer(raw, dtype="<f8", count=K, offset=off)
    off += 8 * K
    terms = []
    for _ in range(K):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        terms.append(_term_from_label(raw[off:off + n].decode()))
        off += n
    values = np.frombuffer(raw, dtype="<f8", count=rows * K, offset=off).reshape((rows, K), order="F")
    return FeatureMatrix(values, terms, scales, bool(flags & 1))


def write_features_csv(path, F: FeatureMatrix) -> None:
    np.savetxt(path, F.values, delimiter=",", header=",".join(F.labels), comments="")


def write_fit_csv(path, fit: SparseFit) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term", "normalized", "unscaled", "sign"])
        for lab, bn, b in zip(fit.labels, fit.beta_normalized, fit.beta):
            w.writerow([lab, repr(float(bn)), repr(float(b)), int(np.sign(b) if abs(bn) > 1e-8 else 0)])


REPORT_COLUMNS = ["N", "M", "seed", "lambda", "incoherence", "min_eig", "dual_inf", "tau_inf", "verdict"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(N, M, seed, lam, report) -> list[str]:
    return [_fmt(v) for v in (N, M, seed, lam, report.incoherence_inf_norm, report.min_eigenvalue,
                              report.dual_inf_norm, report.tau_inf_norm, report.verdict)]
