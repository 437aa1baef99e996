"""Concrete data bound to a symbolic model at instantiation time.

Index sets are lists of integer tuples (duplicates are legal and contribute
additively under sum semantics). Parameter arrays map integer tuples to
numbers. Index spaces list every admissible value of a placeholder, keyed by
the placeholder's domain name (or its own name when no domain is declared).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IrParseError, MissingSpace
from .ir import IndexPlaceholder, SymbolicModel


@dataclass
class DataBundle:
    index_sets: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)
    parameter_arrays: dict[str, dict[tuple[int, ...], float]] = field(default_factory=dict)
    index_spaces: dict[str, list[int]] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)
    # numpy mirrors, built lazily and kept until the bundle is copied; treat
    # a bundle as immutable once instantiation has touched it
    _set_arrays: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _param_arrays: dict[str, tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, repr=False)

    def set_array(self, name: str) -> np.ndarray:
        """2-D int64 view of one index set (n_tuples x arity), cached."""
        arr = self._set_arrays.get(name)
        if arr is None:
            rows = self.index_sets[name]
            if rows:
                arr = np.asarray(rows, dtype=np.int64)
            else:
                arr = np.empty((0, 0), dtype=np.int64)
            self._set_arrays[name] = arr
        return arr

    def param_mirror(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(keys, values) arrays of one parameter array, cached."""
        pair = self._param_arrays.get(name)
        if pair is None:
            arr = self.parameter_arrays[name]
            if arr:
                keys = np.asarray(list(arr.keys()), dtype=np.int64)
                vals = np.asarray(list(arr.values()), dtype=np.float64)
            else:
                keys = np.empty((0, 1), dtype=np.int64)
                vals = np.empty(0, dtype=np.float64)
            pair = (keys, vals)
            self._param_arrays[name] = pair
        return pair

    def space_of(self, ph: IndexPlaceholder) -> list[int] | None:
        key = ph.domain if ph.domain is not None else ph.name
        return self.index_spaces.get(key)

    def require_space(self, ph: IndexPlaceholder) -> list[int]:
        space = self.space_of(ph)
        if space is None:
            raise MissingSpace(ph.name)
        return space

    def copy_shallow(self) -> "DataBundle":
        return DataBundle(dict(self.index_sets), dict(self.parameter_arrays),
                          dict(self.index_spaces), dict(self.scalars))

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "index_sets": {k: [list(t) for t in v]
                           for k, v in sorted(self.index_sets.items())},
            "parameter_arrays": {
                k: {"index": [list(t) for t in v.keys()],
                    "value": list(v.values())}
                for k, v in sorted(self.parameter_arrays.items())
            },
            "index_spaces": {k: list(v)
                             for k, v in sorted(self.index_spaces.items())},
            "scalars": dict(sorted(self.scalars.items())),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DataBundle":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise IrParseError("$", f"not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise IrParseError("$", "data document root must be an object")
        bundle = cls()
        for name, rows in doc.get("index_sets", {}).items():
            bundle.index_sets[name] = [tuple(int(x) for x in r) for r in rows]
        for name, arr in doc.get("parameter_arrays", {}).items():
            path = f"$.parameter_arrays.{name}"
            if not isinstance(arr, dict) or "index" not in arr or "value" not in arr:
                raise IrParseError(path, "needs parallel 'index' and 'value' arrays")
            idx, val = arr["index"], arr["value"]
            if len(idx) != len(val):
                raise IrParseError(path, f"{len(idx)} keys vs {len(val)} values")
            bundle.parameter_arrays[name] = {
                tuple(int(x) for x in k): float(v) for k, v in zip(idx, val)
            }
        for name, vals in doc.get("index_spaces", {}).items():
            bundle.index_spaces[name] = [int(x) for x in vals]
        for name, v in doc.get("scalars", {}).items():
            bundle.scalars[name] = float(v)
        return bundle


def check_bundle(model: SymbolicModel, data: DataBundle) -> list[str]:
    """Cheap structural cross-checks of data against a model. Returns a list
    of problems (empty = usable). Deep checks (per-lookup misses) surface
    during instantiation instead, where the offending index is known."""
    problems = []
    for c in model.constants:
        if c.kind == "index_set":
            rows = data.index_sets.get(c.name)
            if rows is None:
                problems.append(f"index set {c.name!r} missing from data")
                continue
            for t in rows:
                if len(t) != c.arity:
                    problems.append(
                        f"index set {c.name!r}: tuple {t} has length "
                        f"{len(t)}, expected {c.arity}")
                    break
        elif c.kind == "parameter_array":
            arr = data.parameter_arrays.get(c.name)
            if arr is None:
                problems.append(f"parameter array {c.name!r} missing from data")
                continue
            for k in arr:
                if len(k) != c.arity:
                    problems.append(
                        f"parameter array {c.name!r}: key {k} has length "
                        f"{len(k)}, expected {c.arity}")
                    break
        elif c.kind == "scalar":
            if c.name not in data.scalars:
                problems.append(f"scalar {c.name!r} missing from data")
    return problems
