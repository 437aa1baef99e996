"""CPLEX LP text emission and parsing, plus a triplet interchange format.

The LP writer targets the common dialect subset: ``Minimize``, ``Subject
To``, ``Bounds``, ``Generals``, ``End``. Every column gets a Bounds line (in
column order) so a reader can reconstruct the exact column catalog; rows are
named from their provenance (``c<block>_<G*>``). All numbers render as the
shortest decimal string that parses back to the identical binary64 value,
so a write/read cycle is lossless.
"""

from __future__ import annotations

import io
import json
import math
import re

import numpy as np

from .canonical import SIGN_CODE, SIGN_TEXT, CanonicalModel, from_rows
from .errors import LpParseError


def format_number(v: float) -> str:
    """Shortest decimal form that round-trips to the same float. CPython's
    repr already guarantees this for finite binary64 values."""
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {v!r} cannot be serialized")
    return repr(float(v))


def _index_segment(i: int) -> str:
    return f"m{-i}" if i < 0 else str(i)


def _name_for(family: str, index: tuple[int, ...]) -> str:
    if not index:
        return family
    return family + "_" + "_".join(_index_segment(i) for i in index)


_SEGMENT = re.compile(r"^(m?)(\d+)$")


def split_name(name: str) -> tuple[str, tuple[int, ...]]:
    """Invert the column naming scheme: trailing integer segments form the
    index tuple, the rest is the family."""
    parts = name.split("_")
    idx: list[int] = []
    while len(parts) > 1:
        m = _SEGMENT.match(parts[-1])
        if not m:
            break
        v = int(m.group(2))
        idx.append(-v if m.group(1) else v)
        parts.pop()
    return "_".join(parts), tuple(reversed(idx))


# ---------------------------------------------------------------------------
# Writer
# ---------------------------------------------------------------------------

def _term_text(coef: float, name: str, first: bool) -> str:
    sign = "-" if math.copysign(1.0, coef) < 0 else "+"
    mag = abs(coef)
    body = name if mag == 1.0 else f"{format_number(mag)} {name}"
    if first and sign == "+":
        return body
    return f"{sign} {body}"


def write_lp(model: CanonicalModel, sink) -> None:
    """Write the LP text form to a binary stream or path."""
    own = isinstance(sink, str)
    stream = open(sink, "wb") if own else sink
    try:
        w = io.TextIOWrapper(stream, encoding="ascii", newline="\n",
                             write_through=True)
        names = [_name_for(*model.col_key(j)) for j in range(model.num_vars)]
        w.write("Minimize\n obj:")
        first = True
        for j in np.flatnonzero(model.objective != 0.0):
            w.write(" " + _term_text(float(model.objective[j]), names[j], first))
            first = False
        w.write("\nSubject To\n")
        cols, vals = model.entry_col, model.entry_val
        offs = model.row_offsets
        for r in range(model.num_rows):
            w.write(f" {model.row_name(r)}:")
            lo, hi = int(offs[r]), int(offs[r + 1])
            if lo == hi:
                w.write(" 0")  # empty row: keep it parseable and explicit
            else:
                parts = [_term_text(float(vals[k]), names[int(cols[k])], k == lo)
                         for k in range(lo, hi)]
                w.write(" " + " ".join(parts))
            w.write(f" {model.sign_text(r)} {format_number(float(model.row_rhs[r]))}\n")
        w.write("Bounds\n")
        for j in range(model.num_vars):
            lo = float(model.col_lower[j])
            hi = float(model.col_upper[j])
            name = names[j]
            if lo == hi:
                w.write(f" {name} = {format_number(lo)}\n")
            elif math.isinf(lo) and math.isinf(hi):
                w.write(f" {name} free\n")
            elif math.isinf(lo):
                w.write(f" {name} <= {format_number(hi)}\n")
            elif math.isinf(hi):
                w.write(f" {format_number(lo)} <= {name}\n")
            else:
                w.write(f" {format_number(lo)} <= {name} <= {format_number(hi)}\n")
        generals = np.flatnonzero(model.col_integer)
        if len(generals):
            w.write("Generals\n")
            for j in generals:
                w.write(f" {names[int(j)]}\n")
        w.write("End\n")
        w.detach()
    finally:
        if own:
            stream.close()


# ---------------------------------------------------------------------------
# Reader
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(<=|>=|=<|=>|=|\+|-|:|[A-Za-z_][A-Za-z0-9_.]*"
                    r"|[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)")

_SECTIONS = {
    "minimize": "objective", "min": "objective",
    "maximize": "objective_max", "max": "objective_max",
    "subject to": "rows", "st": "rows", "s.t.": "rows", "such that": "rows",
    "bounds": "bounds", "bound": "bounds",
    "generals": "generals", "general": "generals", "integers": "generals",
    "end": "end",
}

_NUM = re.compile(r"^[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?$")


def _tokenize(line: str, line_no: int):
    pos = 0
    out = []
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            rest = line[pos:].strip()
            if not rest:
                break
            raise LpParseError(line_no, f"unrecognized input {rest[:20]!r}")
        tok = m.group(1)
        if tok in ("=<", "=>"):
            raise LpParseError(line_no, f"malformed sign {tok!r}")
        out.append((tok, line_no))
        pos = m.end()
    return out


class _RowAccum:
    """One objective/constraint being assembled from the token stream."""

    def __init__(self, name, line_no):
        self.name = name
        self.line_no = line_no
        self.terms: list[tuple[str, float]] = []
        self.sign: str | None = None
        self.rhs: float | None = None
        self._pending_sign = 1.0
        self._pending_num: float | None = None

    def feed(self, tok, line_no):
        if tok == "+":
            self._flush_const(line_no)
        elif tok == "-":
            self._flush_const(line_no)
            self._pending_sign = -self._pending_sign
        elif tok in ("<=", ">=", "="):
            self._flush_const(line_no)
            self.sign = tok
        elif _NUM.match(tok):
            if self._pending_num is not None:
                raise LpParseError(line_no, f"two numbers in a row near {tok!r}")
            self._pending_num = float(tok)
        else:
            coef = self._pending_sign * (1.0 if self._pending_num is None
                                         else self._pending_num)
            self.terms.append((tok, coef))
            self._pending_sign = 1.0
            self._pending_num = None

    def _flush_const(self, line_no):
        # a bare number with no variable is a constant term; the writer only
        # emits "0" for empty rows, so only exact zero is accepted
        if self._pending_num is not None:
            if self._pending_num != 0.0:
                raise LpParseError(line_no,
                                   "constant term in expression not supported")
            self._pending_num = None
            self._pending_sign = 1.0

    def finish_row(self):
        return self.name, self.terms, self.sign, self.rhs


def read_lp(source) -> CanonicalModel:
    """Parse an LP document produced by write_lp (or the standard subset
    with explicit per-column bounds lines)."""
    own = isinstance(source, str)
    stream = open(source, "rb") if own else source
    try:
        text = stream.read().decode("ascii")
    finally:
        if own:
            stream.close()

    sense = "min"
    section = None
    objective_terms: list[tuple[str, float]] = []
    rows = []            # (name, terms, sign, rhs)
    bounds_order: list[str] = []
    bounds: dict[str, tuple[float, float]] = {}
    generals: set[str] = set()
    accum: _RowAccum | None = None
    pending_rhs_sign = 1.0

    def close_accum():
        nonlocal accum
        if accum is None:
            return
        name, terms, sig, rhs = accum.finish_row()
        if section == "objective":
            objective_terms.extend(terms)
            if sig is not None:
                raise LpParseError(accum.line_no, "sign in objective")
        else:
            if sig is None or rhs is None:
                raise LpParseError(accum.line_no,
                                   f"constraint {name!r} has no sign/rhs")
            rows.append((name, terms, sig, rhs))
        accum = None

    lines = text.splitlines()
    for line_no, raw in enumerate(lines, 1):
        line = raw.split("\\", 1)[0]
        stripped = line.strip().lower()
        if stripped in _SECTIONS:
            close_accum()
            kind = _SECTIONS[stripped]
            if kind == "objective_max":
                sense = "max"
                section = "objective"
            elif kind == "end":
                section = "end"
                break
            else:
                section = kind
            continue
        if not line.strip():
            continue
        toks = _tokenize(line, line_no)
        if section in ("objective", "rows"):
            i = 0
            while i < len(toks):
                tok, ln = toks[i]
                if i + 1 < len(toks) and toks[i + 1][0] == ":":
                    close_accum()
                    accum = _RowAccum(tok, ln)
                    i += 2
                    continue
                if accum is None:
                    if section == "objective":
                        accum = _RowAccum("obj", ln)
                    else:
                        raise LpParseError(ln, "constraint without a name")
                if tok == ":":
                    raise LpParseError(ln, "unexpected ':'")
                if accum.sign is not None and accum.rhs is None and \
                        tok in ("+", "-"):
                    pending_rhs_sign = 1.0 if tok == "+" else -1.0
                    i += 1
                    continue
                if accum.sign is not None and accum.rhs is None:
                    if not _NUM.match(tok):
                        raise LpParseError(ln, f"expected rhs number, got {tok!r}")
                    accum.rhs = pending_rhs_sign * float(tok)
                    pending_rhs_sign = 1.0
                    i += 1
                    continue
                accum.feed(tok, ln)
                i += 1
        elif section == "bounds":
            _parse_bound_line(toks, line_no, bounds, bounds_order)
        elif section == "generals":
            for tok, ln in toks:
                if not re.match(r"^[A-Za-z_]", tok):
                    raise LpParseError(ln, f"bad name {tok!r} in Generals")
                generals.add(tok)
        elif section is None:
            raise LpParseError(line_no, "content before any section header")
    close_accum()

    # columns: bounds section order first (the writer emits all of them),
    # then any name seen only in expressions, in appearance order
    order: list[str] = list(bounds_order)
    seen = set(order)
    for name, _ in objective_terms:
        if name not in seen:
            order.append(name)
            seen.add(name)
    for _, terms, _, _ in rows:
        for name, _ in terms:
            if name not in seen:
                order.append(name)
                seen.add(name)
    col_of = {n: j for j, n in enumerate(order)}
    catalog = [split_name(n) for n in order]

    lower = np.zeros(len(order))
    upper = np.full(len(order), np.inf)
    for n, (lo, hi) in bounds.items():
        lower[col_of[n]] = lo
        upper[col_of[n]] = hi
    integer = np.zeros(len(order), dtype=bool)
    for n in generals:
        if n in col_of:
            integer[col_of[n]] = True

    obj_entries = []
    for name, coef in objective_terms:
        obj_entries.append((col_of[name], coef if sense == "min" else -coef))

    parsed_rows = []
    for name, terms, sig, rhs in rows:
        m = re.match(r"^c(\d+)((?:_m?\d+)*)$", name)
        if m:
            block = int(m.group(1))
            gstar = tuple(-int(s[1:]) if s.startswith("m") else int(s)
                          for s in m.group(2).split("_")[1:]) \
                if m.group(2) else ()
        else:
            block, gstar = 1, ()
        entries = [(col_of[n], c) for n, c in terms]
        parsed_rows.append((entries, sig, rhs, block, gstar))

    return from_rows(catalog, parsed_rows, obj_entries, lower, upper, integer)


def _parse_bound_line(toks, line_no, bounds, order):
    vals = [t for t, _ in toks]

    def note(name, lo, hi):
        if name not in bounds:
            order.append(name)
            bounds[name] = (lo, hi)
        else:
            plo, phi = bounds[name]
            bounds[name] = (max(plo, lo), min(phi, hi))

    def num(tok):
        sign = 1.0
        while tok and tok[0] in "+-":
            if tok[0] == "-":
                sign = -sign
            tok = tok[1:]
        if not _NUM.match(tok):
            raise LpParseError(line_no, f"expected number, got {tok!r}")
        return sign * float(tok)

    # join unary minus with its number for simpler matching
    merged: list[str] = []
    for t in vals:
        if merged and merged[-1] in ("+", "-") and _NUM.match(t):
            merged[-1] = merged[-1] + t
        else:
            merged.append(t)
    v = merged
    if len(v) == 2 and v[1].lower() == "free":
        note(v[0], -np.inf, np.inf)
    elif len(v) == 3 and v[1] == "=":
        x = num(v[2])
        note(v[0], x, x)
    elif len(v) == 3 and v[1] == "<=" and re.match(r"^[A-Za-z_]", v[0]):
        note(v[0], -np.inf, num(v[2]))
    elif len(v) == 3 and v[1] == "<=":
        note(v[2], num(v[0]), np.inf)
    elif len(v) == 3 and v[1] == ">=":
        note(v[0], num(v[2]), np.inf)
    elif len(v) == 5 and v[1] == "<=" and v[3] == "<=":
        note(v[2], num(v[0]), num(v[4]))
    else:
        raise LpParseError(line_no, f"unrecognized bounds line {' '.join(v)!r}")


# ---------------------------------------------------------------------------
# Triplet interchange (CSV matrix + JSON sidecar)
# ---------------------------------------------------------------------------

def write_triplets(model: CanonicalModel, csv_path: str, sidecar_path: str) -> None:
    with open(csv_path, "w", encoding="ascii", newline="\n") as f:
        f.write("row,col,val\n")
        for r, c, v in zip(model.entry_row.tolist(), model.entry_col.tolist(),
                           model.entry_val.tolist()):
            f.write(f"{r},{c},{format_number(v)}\n")

    def flist(arr):
        return [None if math.isinf(x) else x for x in arr.tolist()]

    sidecar = {
        "families": model.families,
        "col_family": model.col_family.tolist(),
        "col_index_flat": model.col_index_flat.tolist(),
        "col_index_offsets": model.col_index_offsets.tolist(),
        "col_lower": flist(model.col_lower),
        "col_upper": flist(model.col_upper),
        "col_integer": model.col_integer.astype(int).tolist(),
        "objective": [[int(j), float(model.objective[j])]
                      for j in np.flatnonzero(model.objective != 0.0)],
        "num_vars": model.num_vars,
        "row_sign": [SIGN_TEXT[int(s)] for s in model.row_sign],
        "row_rhs": model.row_rhs.tolist(),
        "row_block": model.row_block.tolist(),
        "row_gstar_flat": model.row_gstar_flat.tolist(),
        "row_gstar_offsets": model.row_gstar_offsets.tolist(),
    }
    with open(sidecar_path, "w", encoding="ascii", newline="\n") as f:
        json.dump(sidecar, f, indent=1, sort_keys=True)
        f.write("\n")


def read_triplets(csv_path: str, sidecar_path: str) -> CanonicalModel:
    with open(sidecar_path, "r", encoding="ascii") as f:
        side = json.load(f)
    er, ec, ev = [], [], []
    with open(csv_path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        if header != "row,col,val":
            raise LpParseError(1, f"bad triplet header {header!r}")
        for line_no, line in enumerate(f, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise LpParseError(line_no, f"expected row,col,val got {line!r}")
            er.append(int(parts[0]))
            ec.append(int(parts[1]))
            ev.append(float(parts[2]))

    def farr(vals, neg):
        return np.array([(-np.inf if neg else np.inf) if x is None else x
                         for x in vals], dtype=np.float64)

    num_rows = len(side["row_rhs"])
    er = np.asarray(er, dtype=np.int64)
    ec = np.asarray(ec, dtype=np.int64)
    ev = np.asarray(ev, dtype=np.float64)
    row_offsets = np.searchsorted(er, np.arange(num_rows + 1))
    obj = np.zeros(side["num_vars"])
    for j, v in side["objective"]:
        obj[j] = v
    return CanonicalModel(
        families=list(side["families"]),
        col_family=np.asarray(side["col_family"], dtype=np.int32),
        col_index_flat=np.asarray(side["col_index_flat"], dtype=np.int64),
        col_index_offsets=np.asarray(side["col_index_offsets"], dtype=np.int64),
        col_lower=farr(side["col_lower"], neg=True),
        col_upper=farr(side["col_upper"], neg=False),
        col_integer=np.asarray(side["col_integer"], dtype=bool),
        objective=obj,
        entry_row=er,
        entry_col=ec,
        entry_val=ev,
        row_offsets=row_offsets.astype(np.int64),
        row_sign=np.asarray([SIGN_CODE[s] for s in side["row_sign"]],
                            dtype=np.int8),
        row_rhs=np.asarray(side["row_rhs"], dtype=np.float64),
        row_block=np.asarray(side["row_block"], dtype=np.int32),
        row_gstar_flat=np.asarray(side["row_gstar_flat"], dtype=np.int64),
        row_gstar_offsets=np.asarray(side["row_gstar_offsets"], dtype=np.int64),
    )
