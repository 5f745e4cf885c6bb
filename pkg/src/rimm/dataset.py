"""Incomplete data matrices: mask bookkeeping, presence index, file I/O.

An incomplete matrix is an N x d array of which only the entries flagged by a
boolean mask are observed.  Missing slots hold quiet NaN payloads that are
never read by numeric code; the checked accessor traps such reads.  Indices
are 0-based internally and 1-based in human-facing output.

File formats
------------
CSV     first line ``# dims=<d>``, then N rows of d comma-separated tokens.
        Missing entries are written as ``*``; both ``*`` and ``NA`` are
        accepted on input.  Values are emitted with 17 significant digits.
binary  magic ``RIMM1``, little-endian u64 N and d, then d * ceil(N/8) mask
        bytes (column-major, LSB-first within a byte), then the present
        values as little-endian f64 in column-major present order.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, MissingValueError

__all__ = [
    "IncompleteMatrix",
    "PresenceIndex",
    "CompletenessReport",
    "build_presence_index",
    "gamma_completeness",
    "load_matrix",
    "store_matrix",
]

_MAGIC = b"RIMM1"
_MISSING_TOKENS = frozenset({"*", "NA"})


class IncompleteMatrix:
    """N x d values with an explicit presence mask (True = present).

    Immutable after construction; the backing arrays are marked read-only so
    instances can be shared freely across threads.  All-missing rows are
    legal.  Values under the mask are stored as NaN and must not be read.
    """

    __slots__ = ("values", "mask", "n_examples", "n_dims")

    def __init__(self, values: np.ndarray, mask: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ValueError(
                f"values {values.shape} and mask {mask.shape} must be equal 2-d shapes"
            )
        n, d = values.shape
        if n < 1 or d < 1:
            raise ValueError("matrix must have at least one row and one column")
        clean = np.full((n, d), np.nan)
        np.copyto(clean, values, where=mask)
        if not np.isfinite(clean[mask]).all():
            raise ValueError("present entries must be finite")
        clean.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        self.values = clean
        self.mask = mask
        self.n_examples = n
        self.n_dims = d

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_examples, self.n_dims)

    def value_at(self, i: int, j: int) -> float:
        """Checked read; raises MissingValueError on a masked-out entry."""
        if not self.mask[i, j]:
            raise MissingValueError(
                f"entry ({i + 1}, {j + 1}) is missing and may not be read"
            )
        return float(self.values[i, j])

    def present_count(self) -> int:
        return int(self.mask.sum())

    def column_present(self, j: int) -> np.ndarray:
        """Present values of coordinate j, in row order."""
        return self.values[self.mask[:, j], j]

    def __eq__(self, other) -> bool:
        if not isinstance(other, IncompleteMatrix):
            return NotImplemented
        return bool(
            self.shape == other.shape
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.values[self.mask], other.values[other.mask])
        )

    def __repr__(self) -> str:
        frac = self.present_count() / (self.n_examples * self.n_dims)
        return f"IncompleteMatrix({self.n_examples}x{self.n_dims}, {frac:.1%} present)"


@dataclass(frozen=True)
class PresenceIndex:
    """Per-coordinate sorted index sets of the examples where it is present."""

    gamma_sets: tuple[np.ndarray, ...]
    counts: np.ndarray

    @property
    def n_dims(self) -> int:
        return len(self.gamma_sets)


@dataclass(frozen=True)
class CompletenessReport:
    """Smallest per-coordinate presence fraction and where it occurs."""

    min_fraction: float
    argmin_coordinate: int
    per_coordinate: np.ndarray

    def is_complete(self, gamma: float) -> bool:
        return self.min_fraction >= gamma - 1e-12


def build_presence_index(m: IncompleteMatrix) -> PresenceIndex:
    """Invert the row-wise mask into per-coordinate index sets."""
    sets = tuple(np.flatnonzero(m.mask[:, j]) for j in range(m.n_dims))
    counts = np.array([s.size for s in sets], dtype=np.int64)
    return PresenceIndex(gamma_sets=sets, counts=counts)


def gamma_completeness(idx: PresenceIndex, n: int) -> CompletenessReport:
    """Presence fractions |set_j| / n; min_fraction 0 flags an unestimable coordinate."""
    if n < 1:
        raise ValueError("n must be at least 1")
    per = idx.counts / float(n)
    j = int(np.argmin(per))
    return CompletenessReport(
        min_fraction=float(per[j]), argmin_coordinate=j, per_coordinate=per
    )


# ---------------------------------------------------------------------------
# file I/O


def _format_value(v: float) -> str:
    return format(v, ".17g")


def _store_csv(m: IncompleteMatrix, fh: io.TextIOBase) -> None:
    fh.write(f"# dims={m.n_dims}\n")
    for i in range(m.n_examples):
        row = [
            _format_value(m.values[i, j]) if m.mask[i, j] else "*"
            for j in range(m.n_dims)
        ]
        fh.write(",".join(row) + "\n")


def _load_csv(fh: io.TextIOBase, path: str) -> IncompleteMatrix:
    header = fh.readline().strip()
    if not header:
        raise FormatError(f"{path}: empty file")
    if not header.startswith("# dims="):
        raise FormatError(f"{path}: first line must be '# dims=<d>', got {header!r}")
    try:
        d = int(header[len("# dims=") :])
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimension count in header") from exc
    if d < 1:
        raise FormatError(f"{path}: dimension count must be positive")
    rows, masks = [], []
    for lineno, line in enumerate(fh, start=2):
        line = line.strip()
        if not line:
            continue
        tokens = line.split(",")
        if len(tokens) != d:
            raise FormatError(
                f"{path}:{lineno}: ragged row: expected {d} tokens, got {len(tokens)}"
            )
        vals = np.zeros(d)
        present = np.zeros(d, dtype=bool)
        for j, tok in enumerate(tokens):
            tok = tok.strip()
            if tok in _MISSING_TOKENS:
                continue
            try:
                vals[j] = float(tok)
            except ValueError as exc:
                raise FormatError(
                    f"{path}:{lineno}: non-numeric token {tok!r}"
                ) from exc
            present[j] = True
        rows.append(vals)
        masks.append(present)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return IncompleteMatrix(np.array(rows), np.array(masks))


def _store_binary(m: IncompleteMatrix, fh: io.BufferedIOBase) -> None:
    n, d = m.shape
    fh.write(_MAGIC)
    fh.write(struct.pack("<QQ", n, d))
    for j in range(d):
        fh.write(np.packbits(m.mask[:, j], bitorder="little").tobytes())
    for j in range(d):
        fh.write(m.column_present(j).astype("<f8").tobytes())


def _load_binary(fh: io.BufferedIOBase, path: str) -> IncompleteMatrix:
    magic = fh.read(len(_MAGIC))
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    header = fh.read(16)
    if len(header) != 16:
        raise FormatError(f"{path}: truncated header")
    n, d = struct.unpack("<QQ", header)
    if n < 1 or d < 1:
        raise FormatError(f"{path}: empty matrix")
    mask_bytes = (n + 7) // 8
    mask = np.zeros((n, d), dtype=bool)
    for j in range(d):
        raw = fh.read(mask_bytes)
        if len(raw) != mask_bytes:
            raise FormatError(f"{path}: truncated mask for coordinate {j + 1}")
        mask[:, j] = np.unpackbits(
            np.frombuffer(raw, dtype=np.uint8), count=n, bitorder="little"
        )
    values = np.full((n, d), np.nan)
    for j in range(d):
        k = int(mask[:, j].sum())
        raw = fh.read(8 * k)
        if len(raw) != 8 * k:
            raise FormatError(f"{path}: truncated values for coordinate {j + 1}")
        values[mask[:, j], j] = np.frombuffer(raw, dtype="<f8")
    return IncompleteMatrix(values, mask)


def store_matrix(m: IncompleteMatrix, path: str | os.PathLike, format: str = "csv") -> None:
    """Write a matrix; format is 'csv' or 'binary'."""
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            _store_csv(m, fh)
    elif format == "binary":
        with open(path, "wb") as fh:
            _store_binary(m, fh)
    else:
        raise ValueError(f"unknown format {format!r}")


def load_matrix(path: str | os.PathLike, format: str = "csv") -> IncompleteMatrix:
    """Read a matrix written by store_matrix; raises FormatError on bad input."""
    if format == "csv":
        with open(path, "r", encoding="utf-8") as fh:
            return _load_csv(fh, str(path))
    elif format == "binary":
        with open(path, "rb") as fh:
            return _load_binary(fh, str(path))
    raise ValueError(f"unknown format {format!r}")


def sniff_format(path: str | os.PathLike) -> str:
    """Guess the on-disk format from the magic bytes."""
    with open(path, "rb") as fh:
        return "binary" if fh.read(len(_MAGIC)) == _MAGIC else "csv"
