"""Canonical matrix-form model: sparse triplets, row signs/rhs, objective
vector, per-column bounds, and row provenance.

Everything lives in flat numpy arrays (columns and row provenance included)
so million-entry models assemble and merge without per-element Python work.
Columns are identified by (variable family, concrete index tuple); rows by
(constraint-block id, realized global index tuple).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SIGN_EQ, SIGN_LE, SIGN_GE = 0, 1, 2
SIGN_CODE = {"=": SIGN_EQ, "<=": SIGN_LE, ">=": SIGN_GE}
SIGN_TEXT = {v: k for k, v in SIGN_CODE.items()}


def column_label(family: str, index: tuple[int, ...]) -> str:
    """Solver-safe column name: family and index joined by underscores."""
    if not index:
        return family
    return family + "_" + "_".join(str(i) for i in index)


def row_label(block: int, gstar: tuple[int, ...]) -> str:
    if not gstar:
        return f"c{block}"
    return f"c{block}_" + "_".join(str(i) for i in gstar)


@dataclass
class CanonicalModel:
    # columns: family name table + per-column family code and ragged index
    families: list[str]
    col_family: np.ndarray            # int32, len num_vars
    col_index_flat: np.ndarray        # int64, concatenated index tuples
    col_index_offsets: np.ndarray     # int64, len num_vars + 1
    col_lower: np.ndarray             # float64
    col_upper: np.ndarray             # float64, +inf = unbounded
    col_integer: np.ndarray           # bool
    objective: np.ndarray             # float64, dense
    # triplets sorted by (row, col); exact zeros never stored
    entry_row: np.ndarray             # int64
    entry_col: np.ndarray             # int64
    entry_val: np.ndarray             # float64
    row_offsets: np.ndarray           # int64, len num_rows + 1
    row_sign: np.ndarray              # int8 codes
    row_rhs: np.ndarray               # float64
    row_block: np.ndarray             # int32, 1-based constraint-block id
    row_gstar_flat: np.ndarray        # int64, concatenated realized G*
    row_gstar_offsets: np.ndarray     # int64, len num_rows + 1
    _catalog: list | None = field(default=None, repr=False, compare=False)
    _col_ids: dict | None = field(default=None, repr=False, compare=False)

    @property
    def num_vars(self) -> int:
        return len(self.col_family)

    @property
    def num_rows(self) -> int:
        return len(self.row_rhs)

    @property
    def nnz(self) -> int:
        return len(self.entry_val)

    # -- column accessors ---------------------------------------------------

    def col_key(self, j: int) -> tuple[str, tuple[int, ...]]:
        lo, hi = self.col_index_offsets[j], self.col_index_offsets[j + 1]
        return (self.families[self.col_family[j]],
                tuple(int(v) for v in self.col_index_flat[lo:hi]))

    @property
    def catalog(self) -> list[tuple[str, tuple[int, ...]]]:
        if self._catalog is None:
            flat = self.col_index_flat.tolist()
            offs = self.col_index_offsets.tolist()
            fams = [self.families[c] for c in self.col_family.tolist()]
            self._catalog = [
                (fams[j], tuple(flat[offs[j]:offs[j + 1]]))
                for j in range(len(fams))
            ]
        return self._catalog

    def col_id(self, family: str, index: tuple[int, ...]) -> int:
        if self._col_ids is None:
            self._col_ids = {key: j for j, key in enumerate(self.catalog)}
        return self._col_ids[(family, index)]

    def col_name(self, j: int) -> str:
        family, index = self.col_key(j)
        return column_label(family, index)

    # -- row accessors -------------------------------------------------------

    def row_gstar(self, r: int) -> tuple[int, ...]:
        lo, hi = self.row_gstar_offsets[r], self.row_gstar_offsets[r + 1]
        return tuple(int(v) for v in self.row_gstar_flat[lo:hi])

    def row_name(self, r: int) -> str:
        return row_label(int(self.row_block[r]), self.row_gstar(r))

    def row_entries(self, r: int) -> list[tuple[int, float]]:
        lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
        return [(int(c), float(v))
                for c, v in zip(self.entry_col[lo:hi], self.entry_val[lo:hi])]

    def sign_text(self, r: int) -> str:
        return SIGN_TEXT[int(self.row_sign[r])]

    def dense(self) -> np.ndarray:
        """Dense constraint matrix; test-scale models only."""
        a = np.zeros((self.num_rows, self.num_vars))
        a[self.entry_row, self.entry_col] = self.entry_val
        return a

    def check(self) -> list[str]:
        """Internal-consistency audit of the invariants this form promises."""
        problems = []
        if not np.all(np.isfinite(self.entry_val)):
            problems.append("non-finite coefficient")
        if np.any(self.entry_val == 0.0):
            problems.append("stored zero entry")
        if not (len(self.entry_row) == len(self.entry_col) == len(self.entry_val)):
            problems.append("triplet arrays disagree in length")
        if len(self.entry_row) > 1:
            order = (self.entry_row[1:] > self.entry_row[:-1]) | (
                (self.entry_row[1:] == self.entry_row[:-1])
                & (self.entry_col[1:] > self.entry_col[:-1]))
            if not np.all(order):
                problems.append("triplets not strictly sorted by (row, col)")
        prov = {(int(self.row_block[r]), self.row_gstar(r))
                for r in range(self.num_rows)}
        if len(prov) != self.num_rows:
            problems.append("duplicate row provenance")
        keys = set(self.catalog)
        if len(keys) != self.num_vars:
            problems.append("duplicate column")
        return problems

    def to_bytes(self) -> bytes:
        """Stable byte serialization; equal models serialize identically."""
        header = json.dumps({"families": self.families}).encode()
        parts = [header]
        for arr in (self.col_family, self.col_index_flat,
                    self.col_index_offsets, self.col_lower, self.col_upper,
                    self.col_integer.astype(np.int8), self.objective,
                    self.entry_row, self.entry_col, self.entry_val,
                    self.row_offsets, self.row_sign, self.row_rhs,
                    self.row_block, self.row_gstar_flat,
                    self.row_gstar_offsets):
            parts.append(np.ascontiguousarray(arr).tobytes())
        return b"\x00".join(parts)

    def __eq__(self, other):
        # semantic identity: column keys in order plus all numeric content;
        # the internal family-code numbering is allowed to differ
        if not isinstance(other, CanonicalModel):
            return NotImplemented
        return (self.catalog == other.catalog
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("col_lower", "col_upper", "col_integer",
                                  "objective", "entry_row", "entry_col",
                                  "entry_val", "row_offsets", "row_sign",
                                  "row_rhs", "row_block", "row_gstar_flat",
                                  "row_gstar_offsets")))

    def copy(self) -> "CanonicalModel":
        return CanonicalModel(
            list(self.families),
            *(getattr(self, f).copy()
              for f in ("col_family", "col_index_flat", "col_index_offsets",
                        "col_lower", "col_upper", "col_integer", "objective",
                        "entry_row", "entry_col", "entry_val", "row_offsets",
                        "row_sign", "row_rhs", "row_block", "row_gstar_flat",
                        "row_gstar_offsets")))


def from_rows(catalog, rows, objective_entries, lower, upper, integer):
    """Assemble a CanonicalModel from per-row Python entry lists.

    ``catalog``: ordered (family, index tuple) pairs. ``rows``: list of
    (entries, sign_text, rhs, block, gstar) where entries is a list of
    (col, coef); duplicates within a row are summed in list order and exact
    zeros dropped. Convenience path for tests, readers, and hand-built
    models; the instantiator assembles big models directly from arrays.
    """
    families: list[str] = []
    fam_code: dict[str, int] = {}
    col_family = np.empty(len(catalog), dtype=np.int32)
    flat: list[int] = []
    offsets = [0]
    for j, (fam, idx) in enumerate(catalog):
        if fam not in fam_code:
            fam_code[fam] = len(families)
            families.append(fam)
        col_family[j] = fam_code[fam]
        flat.extend(idx)
        offsets.append(len(flat))

    n = len(catalog)
    obj = np.zeros(n)
    for j, v in objective_entries:
        obj[j] += v

    er, ec, ev = [], [], []
    signs = np.empty(len(rows), dtype=np.int8)
    rhs = np.empty(len(rows))
    blocks = np.empty(len(rows), dtype=np.int32)
    gflat: list[int] = []
    goffs = [0]
    row_offsets = [0]
    for r, (entries, sign, b, blk, gstar) in enumerate(rows):
        acc: dict[int, float] = {}
        for j, v in entries:
            acc[j] = acc.get(j, 0.0) + v
        for j in sorted(acc):
            if acc[j] != 0.0:
                er.append(r)
                ec.append(j)
                ev.append(acc[j])
        row_offsets.append(len(er))
        signs[r] = SIGN_CODE[sign]
        rhs[r] = b
        blocks[r] = blk
        gflat.extend(gstar)
        goffs.append(len(gflat))

    return CanonicalModel(
        families=families,
        col_family=col_family,
        col_index_flat=np.asarray(flat, dtype=np.int64),
        col_index_offsets=np.asarray(offsets, dtype=np.int64),
        col_lower=np.asarray(lower, dtype=np.float64),
        col_upper=np.asarray(upper, dtype=np.float64),
        col_integer=np.asarray(integer, dtype=bool),
        objective=obj,
        entry_row=np.asarray(er, dtype=np.int64),
        entry_col=np.asarray(ec, dtype=np.int64),
        entry_val=np.asarray(ev, dtype=np.float64),
        row_offsets=np.asarray(row_offsets, dtype=np.int64),
        row_sign=signs,
        row_rhs=rhs,
        row_block=blocks,
        row_gstar_flat=np.asarray(gflat, dtype=np.int64),
        row_gstar_offsets=np.asarray(goffs, dtype=np.int64),
    )
