"""Label-conditioned bitstring counts and circuit-level ingestion.

Outcomes are held as integers and variable ``v`` (0-based, i.e. ``X_{v+1}``)
is bit ``v`` of the integer. Bitstrings are written most-significant variable
first, ``X_n ... X_2 X_1``, so ``int(text, 2)`` is the outcome and the
rightmost character is variable 1. This is the orientation hardware counts
use for qubit numbers; files written the other way round are read with
``bit_order="lsb"``.

Role permutations and subset ids index variables the same way: position
``v`` is bit ``v``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import (
    DataError,
    DegenerateDataError,
    ParseError,
    SchemaVersionError,
    ShotTotalError,
    WidthMismatchError,
)

SCHEMA = "mobius-falsify/1"
MAX_WIDTH = 16


def _check_width(n):
    if not isinstance(n, (int, np.integer)) or not 2 <= n <= MAX_WIDTH:
        raise WidthMismatchError(f"width must be an integer in [2, {MAX_WIDTH}], got {n!r}")
    return int(n)


def parse_bitstring(text, n, bit_order="msb"):
    """Convert a written bitstring to its integer outcome."""
    text = text.replace(" ", "")
    if len(text) != n or set(text) - {"0", "1"}:
        raise WidthMismatchError(f"expected a {n}-bit string, got {text!r}")
    if bit_order == "lsb":
        text = text[::-1]
    elif bit_order != "msb":
        raise ValueError(f"bit_order must be 'msb' or 'lsb', got {bit_order!r}")
    return int(text, 2)


def format_bitstring(value, n, bit_order="msb"):
    text = format(int(value), f"0{n}b")
    return text[::-1] if bit_order == "lsb" else text


def as_tensor(p, n):
    """View a ``(..., 2**n)`` vector as ``(..., 2, ..., 2)`` with axis ``v`` = variable ``v``."""
    p = np.asarray(p)
    lead = p.ndim - 1
    nd = p.reshape(p.shape[:-1] + (2,) * n)
    return nd.transpose(tuple(range(lead)) + tuple(lead + n - 1 - v for v in range(n)))


def from_tensor(t, n):
    """Inverse of :func:`as_tensor`."""
    lead = t.ndim - n
    flipped = t.transpose(tuple(range(lead)) + tuple(lead + n - 1 - v for v in range(n)))
    return flipped.reshape(t.shape[:lead] + (-1,))


def unpack_bits(outcomes, n):
    return (np.asarray(outcomes)[:, None] >> np.arange(n)) & 1


@dataclass(frozen=True, eq=False)
class LabeledCounts:
    """Per-label histograms over ``n``-bit outcomes.

    ``counts`` has shape ``(2, 2**n)``; row ``y`` is the histogram for label
    ``y``.
    """

    n: int
    counts: np.ndarray

    def __post_init__(self):
        n = _check_width(self.n)
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (2, 1 << n):
            raise WidthMismatchError(
                f"counts must have shape (2, {1 << n}) for n={n}, got {counts.shape}"
            )
        if (counts < 0).any():
            raise DataError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_dicts(cls, n, counts0, counts1, bit_order="msb"):
        """Build from ``{outcome: count}`` maps; keys may be ints or bitstrings."""
        arr = np.zeros((2, 1 << n), dtype=np.int64)
        for y, hist in enumerate((counts0, counts1)):
            for key, c in hist.items():
                x = parse_bitstring(key, n, bit_order) if isinstance(key, str) else int(key)
                if not 0 <= x < (1 << n):
                    raise WidthMismatchError(f"outcome {key!r} does not fit in {n} bits")
                arr[y, x] += int(c)
        return cls(n, arr)

    @classmethod
    def from_shots(cls, X, y):
        """Build from a shot table: ``X[:, v]`` is variable ``v``, ``y`` the labels."""
        X = np.asarray(X)
        y = np.asarray(y)
        if X.ndim != 2:
            raise WidthMismatchError("X must be a 2-D array of bits")
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y disagree on the number of shots")
        if not np.isin(X, (0, 1)).all() or not np.isin(y, (0, 1)).all():
            raise DataError("X and y must contain only 0/1 values")
        n = _check_width(X.shape[1])
        outcomes = X.astype(np.int64) @ (1 << np.arange(n))
        arr = np.zeros((2, 1 << n), dtype=np.int64)
        np.add.at(arr, (y.astype(np.int64), outcomes), 1)
        return cls(n, arr)

    @property
    def counts0(self):
        return self.counts[0]

    @property
    def counts1(self):
        return self.counts[1]

    @property
    def totals(self):
        return self.counts.sum(axis=1)

    @property
    def total0(self):
        return int(self.counts[0].sum())

    @property
    def total1(self):
        return int(self.counts[1].sum())

    def require_nonempty(self):
        t = self.totals
        if (t <= 0).any():
            empty = [y for y in (0, 1) if t[y] <= 0]
            raise DegenerateDataError(f"label(s) {empty} have no shots")
        return self

    def conditionals(self):
        """Empirical ``p(x | y)`` as a float array of shape ``(2, 2**n)``."""
        self.require_nonempty()
        return self.counts / self.totals[:, None]

    def label_weights(self):
        """Empirical label frequencies."""
        self.require_nonempty()
        t = self.totals.astype(float)
        return t / t.sum()

    def to_shots(self):
        """Expand into ``(outcomes, labels)`` arrays, sorted by label then outcome."""
        K = 1 << self.n
        outcomes = np.concatenate([np.repeat(np.arange(K), self.counts[y]) for y in (0, 1)])
        labels = np.repeat([0, 1], self.totals)
        return outcomes, labels

    def to_bits(self, outcomes=None):
        """Unpack integer outcomes to a ``(shots, n)`` matrix, column ``v`` = variable ``v``."""
        if outcomes is None:
            outcomes, _ = self.to_shots()
        return unpack_bits(outcomes, self.n)

    def as_dicts(self, bit_order="msb"):
        return [
            {format_bitstring(x, self.n, bit_order): int(c) for x, c in enumerate(row) if c}
            for row in self.counts
        ]

    def __eq__(self, other):
        if not isinstance(other, LabeledCounts):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"LabeledCounts(n={self.n}, total0={self.total0}, total1={self.total1})"


@dataclass(frozen=True)
class CircuitRecord:
    """Raw counts of one executed circuit, in the physical (masked, rotated) frame."""

    label: int
    mask: int
    role_perm: tuple
    raw_counts: dict
    shots: int
    circuit_id: str = ""

    def __post_init__(self):
        perm = tuple(int(p) for p in self.role_perm)
        object.__setattr__(self, "role_perm", perm)
        n = len(perm)
        _check_width(n)
        if sorted(perm) != list(range(n)):
            raise DataError(f"role_perm {perm} is not a permutation of 0..{n - 1}")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if not 0 <= self.mask < (1 << n):
            raise WidthMismatchError(f"mask {self.mask} does not fit in {n} bits")
        counts = {int(k): int(v) for k, v in self.raw_counts.items()}
        for k, v in counts.items():
            if not 0 <= k < (1 << n):
                raise WidthMismatchError(f"outcome {k} does not fit in {n} bits")
            if v < 0:
                raise DataError("counts must be nonnegative")
        object.__setattr__(self, "raw_counts", counts)
        if self.shots <= 0:
            raise ShotTotalError(f"shots must be positive, got {self.shots}")
        total = sum(counts.values())
        if total != self.shots:
            raise ShotTotalError(
                f"circuit {self.circuit_id or '?'}: counts sum to {total}, declared shots {self.shots}"
            )

    @property
    def n(self):
        return len(self.role_perm)


def unmask(record):
    """Undo the measurement-twirl mask by XOR-ing it back out of every outcome."""
    if record.mask == 0:
        return record
    counts = {k ^ record.mask: v for k, v in record.raw_counts.items()}
    return replace(record, raw_counts=counts, mask=0)


def _apply_positions(x, src_of):
    """Output bit ``i`` is input bit ``src_of[i]``."""
    out = 0
    for i, src in enumerate(src_of):
        out |= ((x >> src) & 1) << i
    return out


def unrotate(record):
    """Undo a role rotation: logical bit ``i`` is read from physical position ``role_perm[i]``."""
    perm = record.role_perm
    identity = tuple(range(len(perm)))
    if perm == identity:
        return record
    counts = Counter()
    for k, v in record.raw_counts.items():
        counts[_apply_positions(k, perm)] += v
    return replace(record, raw_counts=dict(counts), role_perm=identity)


def rotate_outcome(x, role_perm):
    """Forward role rotation; the inverse of what :func:`unrotate` applies."""
    inverse = [0] * len(role_perm)
    for i, p in enumerate(role_perm):
        inverse[p] = i
    return _apply_positions(x, inverse)


@dataclass
class Dataset:
    n: int
    records: list
    provenance: str = ""
    metadata: dict = field(default_factory=dict)

    def validate(self):
        if not self.records:
            raise DegenerateDataError("dataset has no records")
        for r in self.records:
            if r.n != self.n:
                raise WidthMismatchError(
                    f"record {r.circuit_id or '?'} has width {r.n}, dataset width {self.n}"
                )
        labels = {r.label for r in self.records}
        if labels != {0, 1}:
            raise DegenerateDataError(f"dataset must contain both labels, found {sorted(labels)}")
        return self

    @property
    def total_shots(self):
        return sum(r.shots for r in self.records)


def aggregate(dataset):
    """Unmask and unrotate every record, then sum into per-label histograms."""
    dataset.validate()
    arr = np.zeros((2, 1 << dataset.n), dtype=np.int64)
    for record in dataset.records:
        corrected = unrotate(unmask(record))
        for k, v in corrected.raw_counts.items():
            arr[record.label, k] += v
    return LabeledCounts(dataset.n, arr)


def _record_from_json(obj, n, bit_order, index):
    where = f"record {index}"
    try:
        label = obj["label"]
        counts_obj = obj["counts"]
        shots = obj["shots"]
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(counts_obj, dict):
        raise ParseError(f"{where}: 'counts' must be an object")
    if not isinstance(shots, int) or isinstance(shots, bool):
        raise ParseError(f"{where}: 'shots' must be an integer")
    mask_text = obj.get("mask")
    mask = 0 if mask_text is None else parse_bitstring(str(mask_text), n, bit_order)
    perm = obj.get("role_perm")
    perm = tuple(range(n)) if perm is None else tuple(int(p) for p in perm)
    if len(perm) != n:
        raise WidthMismatchError(f"{where}: role_perm has length {len(perm)}, expected {n}")
    if sorted(perm) != list(range(n)):
        raise DataError(f"{where}: role_perm {list(perm)} is not a permutation")
    counts = {}
    for key, c in counts_obj.items():
        if not isinstance(c, int) or isinstance(c, bool):
            raise ParseError(f"{where}: count for {key!r} is not an integer")
        x = parse_bitstring(key, n, bit_order)
        counts[x] = counts.get(x, 0) + c
    return CircuitRecord(
        label=label,
        mask=mask,
        role_perm=perm,
        raw_counts=counts,
        shots=shots,
        circuit_id=str(obj.get("circuit_id", f"record-{index}")),
    )


def dataset_from_json(obj, bit_order="msb"):
    if not isinstance(obj, dict):
        raise ParseError("top level must be a JSON object")
    schema = obj.get("schema")
    if schema != SCHEMA:
        raise SchemaVersionError(f"unknown schema {schema!r}; expected {SCHEMA!r}")
    if "n" not in obj or "records" not in obj:
        raise ParseError("dataset needs 'n' and 'records'")
    n = _check_width(obj["n"])
    if not isinstance(obj["records"], list):
        raise ParseError("'records' must be a list")
    records = [_record_from_json(r, n, bit_order, i) for i, r in enumerate(obj["records"])]
    provenance = obj.get("provenance", "")
    if not isinstance(provenance, str):
        provenance = json.dumps(provenance, sort_keys=True)
    return Dataset(n, records, provenance, dict(obj.get("metadata", {}))).validate()


def load_dataset(path, bit_order="msb"):
    """Read and validate a dataset file.

    ``bit_order="lsb"`` reads files whose strings put variable 1 first;
    masks are reversed the same way. ``role_perm`` entries are variable
    indices and do not depend on the orientation.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return dataset_from_json(obj, bit_order)


def dataset_to_json(dataset):
    n = dataset.n
    return {
        "schema": SCHEMA,
        "n": n,
        "provenance": dataset.provenance,
        "metadata": dataset.metadata,
        "records": [
            {
                "label": r.label,
                "mask": format_bitstring(r.mask, n),
                "role_perm": list(r.role_perm),
                "shots": r.shots,
                "counts": {format_bitstring(k, n): v for k, v in sorted(r.raw_counts.items())},
                "circuit_id": r.circuit_id,
            }
            for r in dataset.records
        ],
    }


def save_dataset(dataset, path):
    Path(path).write_text(json.dumps(dataset_to_json(dataset), indent=1) + "\n", encoding="utf-8")
