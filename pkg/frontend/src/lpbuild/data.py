"""Concrete data collection, serialized to the core's data-bundle JSON."""

from __future__ import annotations

import json

from .model import _err


class Data:
    """Index sets, parameter tables, index spaces, and scalars."""

    def __init__(self):
        self._index_sets = {}
        self._params = {}
        self._spaces = {}
        self._scalars = {}

    def index_set(self, name, tuples):
        rows = [tuple(int(v) for v in t) for t in tuples]
        arities = {len(t) for t in rows}
        if len(arities) > 1:
            _err(f"index set {name!r} mixes tuple lengths {sorted(arities)}")
        self._index_sets[name] = rows
        return self

    def table(self, name, mapping):
        """Parameter array: {index tuple: value}."""
        out = {}
        arity = None
        for k, v in mapping.items():
            k = tuple(int(x) for x in (k if isinstance(k, tuple) else (k,)))
            if arity is None:
                arity = len(k)
            elif len(k) != arity:
                _err(f"parameter {name!r} mixes key lengths")
            out[k] = float(v)
        self._params[name] = out
        return self

    def space(self, name, values):
        self._spaces[name] = [int(v) for v in values]
        return self

    def scalar(self, name, value):
        self._scalars[name] = float(value)
        return self

    def emit(self) -> str:
        doc = {
            "index_sets": {k: [list(t) for t in v]
                           for k, v in sorted(self._index_sets.items())},
            "parameter_arrays": {
                k: {"index": [list(t) for t in v.keys()],
                    "value": list(v.values())}
                for k, v in sorted(self._params.items())
            },
            "index_spaces": {k: list(v)
                             for k, v in sorted(self._spaces.items())},
            "scalars": dict(sorted(self._scalars.items())),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
