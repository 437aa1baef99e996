"""Model instantiation: turning (symbolic template, data bundle) into term
streams and a canonical matrix.

Two engines produce the same terms:

* ``exhaustive_*`` enumerates every combination of the global placeholders
  and re-scans each sum's full set data per combination. Cost grows with
  |space(G)| * |set data|. It exists as the simple, obviously-correct
  reference; keep it boring.

* ``block_terms`` walks the expression once. Each sum's set data is grouped
  up front into a hash index keyed by the tuple positions its enclosing
  scope has already fixed, so a visit touches only matching tuples and the
  total work stays proportional to the data. Requires normalized
  expressions (every leaf path crosses a sum that, jointly with its
  ancestors, pins all of G); ``normalize`` rewrites any expression into
  that shape without changing its instantiation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import DataBundle
from .errors import MissingParameter, MissingSpace
from .ir import (Add, ExprNode, MultidimExpression, ParamCoef, Sub, Sum,
                 SymbolicModel, Term, number_sums)

SYNTH_PREFIX = "~"  # synthetic set names live outside the user namespace


# ---------------------------------------------------------------------------
# Normalization (dummy sums + binding expansion)
# ---------------------------------------------------------------------------

def normalize(model: SymbolicModel, expr: MultidimExpression,
              data: DataBundle) -> tuple[MultidimExpression, dict]:
    """Rewrite ``expr`` so every leaf-to-root path crosses at least one sum
    and the globals bound along each such path cover all of G.

    Bare leaves get wrapped in a dummy sum over the full index space of G.
    A leaf whose path misses some globals gets its innermost sum's binding
    extended with them, the set data expanded by enumerating the missing
    placeholders' spaces per tuple. Returns the rewritten expression plus
    the synthetic set tables it references (keyed by fresh ``~``-prefixed
    names, kept apart from user data).
    """
    gtuple = expr.global_indices
    gset = set(gtuple)
    extra: dict[str, list[tuple[int, ...]]] = {}
    counter = itertools.count(1)

    def space_of(name: str) -> list[int]:
        ph = model.placeholder(name)
        if ph is None:
            raise MissingSpace(name)
        return data.require_space(ph)

    def rec(node: ExprNode, covered: frozenset[str],
            innermost: Sum | None) -> ExprNode:
        if isinstance(node, Add):
            return Add(rec(node.left, covered, innermost),
                       rec(node.right, covered, innermost))
        if isinstance(node, Sub):
            return Sub(rec(node.left, covered, innermost),
                       rec(node.right, covered, innermost))
        if isinstance(node, Sum):
            bound = covered | (set(node.binding) & gset)
            child = rec(node.child, frozenset(bound), node)
            if child is node.child:
                return node
            return Sum(node.sum_id, node.binding, node.set_ref, child)
        # leaf
        missing = [g for g in gtuple if g not in covered]
        if innermost is None:
            if not gtuple and not missing:
                # no sums on the path and nothing to cover: wrap in a dummy
                # sum over the trivial one-row set so the single-pass engine
                # always enters a sum before a leaf
                name = f"{SYNTH_PREFIX}space{next(counter)}"
                extra[name] = [()]
                return Sum(0, (), name, node)
            name = f"{SYNTH_PREFIX}space{next(counter)}"
            extra[name] = [tuple(t) for t in
                           itertools.product(*(space_of(g) for g in missing))]
            return Sum(0, tuple(missing), name, node)
        if not missing:
            return node
        return node  # handled by expansion pass below via marker

    # First pass: wrap bare leaves. Second task (expanding a sum's binding)
    # needs per-sum knowledge of which leaves below it still miss globals,
    # so collect that in one walk and rewrite bottom-up.
    wrapped = rec(expr.root, frozenset(), None)

    expansions: dict[int, list[str]] = {}

    def collect(node: ExprNode, covered: frozenset[str], innermost_id: int | None):
        if isinstance(node, (Add, Sub)):
            collect(node.left, covered, innermost_id)
            collect(node.right, covered, innermost_id)
            return
        if isinstance(node, Sum):
            bound = covered | (set(node.binding) & gset)
            collect(node.child, frozenset(bound), id(node))
            return
        missing = [g for g in gtuple if g not in covered]
        if missing:
            assert innermost_id is not None  # bare leaves were wrapped above
            order = expansions.setdefault(innermost_id, [])
            for g in missing:
                if g not in order:
                    order.append(g)

    collect(wrapped, frozenset(), None)

    def tables_for(node: Sum) -> list[tuple[int, ...]]:
        if node.set_ref in extra:
            return extra[node.set_ref]
        rows = data.index_sets.get(node.set_ref)
        if rows is None:
            raise MissingSpace(node.set_ref)
        return rows

    def expand(node: ExprNode) -> ExprNode:
        if isinstance(node, Add):
            return Add(expand(node.left), expand(node.right))
        if isinstance(node, Sub):
            return Sub(expand(node.left), expand(node.right))
        if isinstance(node, Sum):
            child = expand(node.child)
            missing = expansions.get(id(node))
            if not missing:
                if child is node.child:
                    return node
                return Sum(node.sum_id, node.binding, node.set_ref, child)
            rows = tables_for(node)
            spaces = [space_of(g) for g in missing]
            name = f"{SYNTH_PREFIX}exp{next(counter)}"
            extra[name] = [t + combo for t in rows
                           for combo in itertools.product(*spaces)]
            return Sum(node.sum_id, node.binding + tuple(missing), name, child)
        return node

    expanded = expand(wrapped)
    out = number_sums(MultidimExpression(gtuple, expanded))
    return out, extra


# ---------------------------------------------------------------------------
# Exhaustive reference engine (one row per element of space(G))
# ---------------------------------------------------------------------------

def _coef_fn(coef, data: DataBundle, params: dict | None = None):
    if isinstance(coef, ParamCoef):
        arr = None if params is None else params.get(coef.param)
        if arr is None:
            arr = data.parameter_arrays.get(coef.param)
        if arr is None:
            raise MissingParameter(coef.param, None)
        names, scale, pname = coef.index, coef.scale, coef.param

        def lookup(ctx):
            key = tuple(ctx[n] for n in names)
            try:
                return scale * arr[key]
            except KeyError:
                raise MissingParameter(pname, key) from None

        return lookup
    value = float(coef)
    return lambda ctx: value


def exhaustive_block_terms(model: SymbolicModel, expr: MultidimExpression,
                           data: DataBundle):
    """Literal enumeration: fix G*, walk the tree, scan each sum's full set
    data, repeat for every G* in space(G). Yields (G*, family, index, coef)
    in row-major visit order."""
    spaces = [data.require_space(_ph(model, g)) for g in expr.global_indices]
    gtuple = expr.global_indices
    out = []
    # per-node constants (the binding split and coefficient resolver are
    # path-determined, not data-dependent)
    coef_fns: dict[int, object] = {}
    splits: dict[int, tuple] = {}

    def visit(node: ExprNode, ctx: dict, sign: float, gstar):
        if isinstance(node, Term):
            fn = coef_fns.get(id(node))
            if fn is None:
                fn = coef_fns[id(node)] = _coef_fn(node.coef, data)
            vidx = tuple(ctx[n] for n in node.index)
            out.append((gstar, node.variable, vidx, sign * fn(ctx)))
            return
        if isinstance(node, Add):
            visit(node.left, ctx, sign, gstar)
            visit(node.right, ctx, sign, gstar)
            return
        if isinstance(node, Sub):
            visit(node.left, ctx, sign, gstar)
            visit(node.right, ctx, -sign, gstar)
            return
        table = data.index_sets.get(node.set_ref)
        if table is None:
            raise MissingSpace(node.set_ref)
        split = splits.get(id(node))
        if split is None:
            bound = [(p, n) for p, n in enumerate(node.binding) if n in ctx]
            fresh = [(p, n) for p, n in enumerate(node.binding)
                     if n not in ctx]
            split = splits[id(node)] = (bound, fresh)
        bound, fresh = split
        # full scan on every visit: the defining cost of this algorithm
        if len(bound) == 1:
            (p0, n0), = bound
            want = ctx[n0]
            matches = [t for t in table if t[p0] == want]
        elif not bound:
            matches = table
        else:
            matches = [t for t in table
                       if all(t[p] == ctx[n] for p, n in bound)]
        for t in matches:
            inner = dict(ctx)
            for p, n in fresh:
                inner[n] = t[p]
            visit(node.child, inner, sign, gstar)

    for combo in itertools.product(*spaces):
        ctx = dict(zip(gtuple, combo))
        visit(expr.root, ctx, 1.0, combo)
    return out


def exhaustive_block_map(model, expr, data) -> dict:
    """Aggregated view of the exhaustive stream: (G*, family, index) -> sum."""
    agg: dict = {}
    for gstar, fam, vidx, coef in exhaustive_block_terms(model, expr, data):
        key = (gstar, fam, vidx)
        agg[key] = agg.get(key, 0.0) + coef
    return agg


def _ph(model, name):
    ph = model.placeholder(name)
    if ph is None:
        raise MissingSpace(name)
    return ph


# ---------------------------------------------------------------------------
# Single-pass engine
# ---------------------------------------------------------------------------

@dataclass
class BlockTerms:
    """Aggregated term output of one block (0 = objective).

    families maps variable family -> (keys, coefs) where keys is an
    (n, |G| + rank) int64 matrix of G* columns followed by the variable
    index columns, lexicographically sorted and unique, and coefs holds the
    summed coefficients (zeros retained until assembly).
    """

    block: int
    gwidth: int
    families: dict[str, tuple[np.ndarray, np.ndarray]]


class _Chunk:
    """Columnar buffer for one run of terms of a single family."""

    __slots__ = ("family", "gcols", "vcols", "coefs")

    def __init__(self, family: str, gwidth: int, rank: int):
        self.family = family
        self.gcols = [[] for _ in range(gwidth)]
        self.vcols = [[] for _ in range(rank)]
        self.coefs = []


def _sum_table(node: Sum, data: DataBundle, extra_sets, tables):
    if tables is not None and node.sum_id in tables:
        return tables[node.sum_id]
    if node.set_ref in extra_sets:
        return extra_sets[node.set_ref]
    rows = data.index_sets.get(node.set_ref)
    if rows is None:
        raise MissingSpace(node.set_ref)
    return rows


def block_terms(model: SymbolicModel, expr: MultidimExpression,
                data: DataBundle, extra_sets: dict | None = None,
                tables: dict | None = None, block: int = 0,
                keep_chunks: bool = False, params: dict | None = None):
    """Run the single-pass engine over one (already normalized) expression.

    ``tables`` optionally overrides the set data per sum_id, and ``params``
    the parameter arrays by name (the parallel module passes per-worker
    views of both). Returns BlockTerms, or (BlockTerms, chunks) when
    keep_chunks is set — chunks preserve the raw traversal emission order.
    """
    extra_sets = extra_sets or {}
    gtuple = expr.global_indices
    gset = set(gtuple)
    chunks: list[_Chunk] = []

    def new_chunk(family, rank):
        c = _Chunk(family, len(gtuple), rank)
        chunks.append(c)
        return c

    def term_sources(term: Term, binding, ctx_names):
        """Resolve every needed placeholder to a tuple position or a context
        name; None when something is unresolvable here."""
        pos = {n: p for p, n in enumerate(binding)}
        srcs_g, srcs_v = [], []
        for n in gtuple:
            if n in pos:
                srcs_g.append((True, pos[n]))
            elif n in ctx_names:
                srcs_g.append((False, n))
            else:
                return None
        for n in term.index:
            if n in pos:
                srcs_v.append((True, pos[n]))
            elif n in ctx_names:
                srcs_v.append((False, n))
            else:
                return None
        if isinstance(term.coef, ParamCoef):
            srcs_c = []
            for n in term.coef.index:
                if n in pos:
                    srcs_c.append((True, pos[n]))
                elif n in ctx_names:
                    srcs_c.append((False, n))
                else:
                    return None
            return srcs_g, srcs_v, srcs_c
        return srcs_g, srcs_v, None

    def fused_sum(node: Sum, rows, ctx, sign):
        """Tight loop for the common sum-over-terms shape."""
        term: Term = node.child
        resolved = term_sources(term, node.binding, ctx)
        srcs_g, srcs_v, srcs_c = resolved
        chunk = new_chunk(term.variable, len(term.index))
        gcols, vcols, coefs = chunk.gcols, chunk.vcols, chunk.coefs
        gfix = [(k, ctx[n]) for k, (is_pos, n) in enumerate(srcs_g) if not is_pos]
        gpos = [(k, p) for k, (is_pos, p) in enumerate(srcs_g) if is_pos]
        vfix = [(k, ctx[n]) for k, (is_pos, n) in enumerate(srcs_v) if not is_pos]
        vpos = [(k, p) for k, (is_pos, p) in enumerate(srcs_v) if is_pos]
        for k, v in gfix:
            gcols[k].extend([v] * len(rows))
        for k, v in vfix:
            vcols[k].extend([v] * len(rows))
        for k, p in gpos:
            col = gcols[k]
            for t in rows:
                col.append(t[p])
        for k, p in vpos:
            col = vcols[k]
            for t in rows:
                col.append(t[p])
        if srcs_c is None:
            coefs.extend([sign * term.coef] * len(rows))
        else:
            arr = None if params is None else params.get(term.coef.param)
            if arr is None:
                arr = data.parameter_arrays.get(term.coef.param)
            if arr is None:
                raise MissingParameter(term.coef.param, None)
            scale = sign * term.coef.scale
            cfix = [(k, ctx[n]) for k, (is_pos, n) in enumerate(srcs_c) if not is_pos]
            key_template = [0] * len(srcs_c)
            for k, v in cfix:
                key_template[k] = v
            cpos = [(k, p) for k, (is_pos, p) in enumerate(srcs_c) if is_pos]
            for t in rows:
                for k, p in cpos:
                    key_template[k] = t[p]
                key = tuple(key_template)
                try:
                    coefs.append(scale * arr[key])
                except KeyError:
                    raise MissingParameter(term.coef.param, key) from None

    # static per-sum info: filter positions and hash indexes, keyed by sum_id
    filter_pos: dict[int, list[tuple[int, str]]] = {}
    hash_index: dict[int, dict] = {}

    def prepare(node: ExprNode, bound: frozenset[str]):
        if isinstance(node, (Add, Sub)):
            prepare(node.left, bound)
            prepare(node.right, bound)
            return
        if isinstance(node, Sum):
            fpos = [(p, n) for p, n in enumerate(node.binding)
                    if n in gset and n in bound]
            filter_pos[node.sum_id] = fpos
            if fpos:
                idx: dict = {}
                positions = [p for p, _ in fpos]
                table = _sum_table(node, data, extra_sets, tables)
                if len(positions) == 1:
                    p0 = positions[0]
                    for t in table:
                        idx.setdefault(t[p0], []).append(t)
                else:
                    for t in table:
                        idx.setdefault(tuple(t[p] for p in positions), []).append(t)
                hash_index[node.sum_id] = idx
            prepare(node.child, bound | (set(node.binding) & gset))

    prepare(expr.root, frozenset())

    def visit(node: ExprNode, ctx: dict, sign: float):
        if isinstance(node, Term):
            # leaf outside any sum: only legal when G is empty pre-normalize;
            # normalized trees always wrap leaves, but keep this path usable
            coef = _coef_fn(node.coef, data, params)(ctx)
            chunk = new_chunk(node.variable, len(node.index))
            for k, g in enumerate(gtuple):
                chunk.gcols[k].append(ctx[g])
            for k, n in enumerate(node.index):
                chunk.vcols[k].append(ctx[n])
            chunk.coefs.append(sign * coef)
            return
        if isinstance(node, Add):
            visit(node.left, ctx, sign)
            visit(node.right, ctx, sign)
            return
        if isinstance(node, Sub):
            visit(node.left, ctx, sign)
            visit(node.right, ctx, -sign)
            return
        fpos = filter_pos[node.sum_id]
        if fpos:
            if len(fpos) == 1:
                key = ctx[fpos[0][1]]
            else:
                key = tuple(ctx[n] for _, n in fpos)
            rows = hash_index[node.sum_id].get(key, ())
        else:
            rows = _sum_table(node, data, extra_sets, tables)
        if not rows:
            return
        if isinstance(node.child, Sum) or isinstance(node.child, (Add, Sub)):
            fresh = [(p, n) for p, n in enumerate(node.binding) if n not in ctx]
            for t in rows:
                inner = dict(ctx)
                for p, n in fresh:
                    inner[n] = t[p]
                visit(node.child, inner, sign)
            return
        if term_sources(node.child, node.binding, ctx) is not None:
            fused_sum(node, rows, ctx, sign)
            return
        fresh = [(p, n) for p, n in enumerate(node.binding) if n not in ctx]
        for t in rows:
            inner = dict(ctx)
            for p, n in fresh:
                inner[n] = t[p]
            visit(node.child, inner, sign)

    visit(expr.root, {}, 1.0)

    terms = _aggregate_chunks(chunks, len(gtuple), block)
    if keep_chunks:
        return terms, chunks
    return terms


def _aggregate_chunks(chunks: list[_Chunk], gwidth: int, block: int) -> BlockTerms:
    by_family: dict[str, list[_Chunk]] = {}
    for c in chunks:
        by_family.setdefault(c.family, []).append(c)
    families = {}
    for fam, cs in by_family.items():
        rank = len(cs[0].vcols)
        cols = []
        for k in range(gwidth):
            cols.append(np.asarray(
                [v for c in cs for v in c.gcols[k]], dtype=np.int64))
        for k in range(rank):
            cols.append(np.asarray(
                [v for c in cs for v in c.vcols[k]], dtype=np.int64))
        coefs = np.asarray([v for c in cs for v in c.coefs], dtype=np.float64)
        keys = (np.column_stack(cols) if cols
                else np.empty((len(coefs), 0), dtype=np.int64))
        ukeys, sums = aggregate_sorted(keys, coefs)
        families[fam] = (ukeys, sums)
    return BlockTerms(block, gwidth, families)


def pack_rows(mat: np.ndarray) -> np.ndarray | None:
    """Encode each row of a non-negative-span int matrix into one int64 so
    sorting can use a single key. None when the value ranges don't fit."""
    n, w = mat.shape
    if w == 0:
        return np.zeros(n, dtype=np.int64)
    if w == 1:
        return mat[:, 0].copy()
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    mins = mat.min(axis=0)
    spans = mat.max(axis=0) - mins + 1
    bits = [max(int(s - 1).bit_length(), 1) for s in spans]
    if sum(bits) > 62:
        return None
    packed = (mat[:, 0] - mins[0]).astype(np.int64)
    for k in range(1, w):
        packed = (packed << np.int64(bits[k])) | (mat[:, k] - mins[k])
    return packed


def sort_order(mat: np.ndarray) -> np.ndarray:
    """Stable lexicographic row order (first column = primary key)."""
    packed = pack_rows(mat)
    if packed is not None:
        return np.argsort(packed, kind="stable")
    return np.lexsort(tuple(mat[:, k] for k in reversed(range(mat.shape[1]))))


def aggregate_sorted(keys: np.ndarray, coefs: np.ndarray):
    """Sort rows lexicographically and sum coefficients of equal rows.

    Stable sort + left-to-right reduceat keeps the additions in traversal
    order, which is what makes parallel and serial runs bit-identical."""
    n = len(coefs)
    if n == 0:
        return keys.reshape(0, keys.shape[1]), coefs
    order = sort_order(keys)
    skeys = keys[order]
    scoefs = coefs[order]
    if n == 1:
        return skeys, scoefs
    change = np.empty(n, dtype=bool)
    change[0] = True
    np.any(skeys[1:] != skeys[:-1], axis=1, out=change[1:])
    starts = np.flatnonzero(change)
    sums = np.add.reduceat(scoefs, starts)
    return skeys[starts], sums


def _pieces_presorted(pieces) -> bool:
    """True when concatenating the (individually sorted, unique) pieces in
    order yields a strictly increasing key sequence."""
    prev_last = None
    for keys, _ in pieces:
        if len(keys) == 0:
            continue
        first = tuple(keys[0].tolist())
        if prev_last is not None and first <= prev_last:
            return False
        prev_last = tuple(keys[-1].tolist())
    return True


def merge_block_terms(parts: list[BlockTerms]) -> BlockTerms:
    """Combine per-worker aggregates for one block. Parts arrive in part
    order; groups never span parts, so re-aggregation preserves bits. When
    the parts' key ranges are already in ascending order (pivot leading the
    key, contiguous range plans) the merge is a plain concatenation."""
    first = parts[0]
    fams: dict[str, list] = {}
    for p in parts:
        assert p.block == first.block and p.gwidth == first.gwidth
        for fam, (keys, sums) in p.families.items():
            fams.setdefault(fam, []).append((keys, sums))
    merged = {}
    for fam, pieces in fams.items():
        if len(pieces) == 1:
            merged[fam] = pieces[0]
            continue
        keys = np.concatenate([k for k, _ in pieces], axis=0)
        coefs = np.concatenate([s for _, s in pieces])
        if _pieces_presorted(pieces):
            merged[fam] = (keys, coefs)
        else:
            merged[fam] = aggregate_sorted(keys, coefs)
    return BlockTerms(first.block, first.gwidth, merged)


def iter_raw_terms(model: SymbolicModel, expr: MultidimExpression,
                   data: DataBundle, extra_sets: dict | None = None):
    """Raw single-pass term stream (G*, family, index, coef) in traversal
    emission order, before aggregation."""
    _, chunks = block_terms(model, expr, data, extra_sets, keep_chunks=True)
    for c in chunks:
        n = len(c.coefs)
        for i in range(n):
            gstar = tuple(col[i] for col in c.gcols)
            vidx = tuple(col[i] for col in c.vcols)
            yield gstar, c.family, vidx, c.coefs[i]
