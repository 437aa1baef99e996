"""Canonical-model assembly: realized rows, column catalog, and the final
triplet build. Shared by both instantiation engines and the parallel merge
path, so its output is a pure function of the aggregated term arrays.

Row order: constraint blocks in declaration order, rows within a block in
lexicographic order of the realized global index. Column order (sparse
mode): first appearance over a canonical scan — objective first, then each
row in final order with its entries ordered by (family name, index); dense
mode instead enumerates every variable's full index-space cross product in
odometer order with the last index slowest.
"""

from __future__ import annotations

import numpy as np

from .canonical import SIGN_CODE, CanonicalModel
from .data import DataBundle
from .errors import LpforgeError, MissingParameter, MissingRhs, MissingSpace
from .instantiate import (BlockTerms, aggregate_sorted, block_terms,
                          exhaustive_block_map, normalize, sort_order)
from .ir import SymbolicModel, normalized_sense, require_valid

_BLOCK_SHIFT = np.int64(40)  # composite scan key: block << 40 | row rank


class DenseDomainMiss(LpforgeError):
    """A term's variable index falls outside the declared dense domain."""

    def __init__(self, family, position, value):
        super().__init__(f"variable {family!r} index position {position} "
                         f"takes value {value} outside its declared domain")


def _pack_with(mat: np.ndarray, mins: np.ndarray, bits: list[int]) -> np.ndarray:
    packed = (mat[:, 0] - mins[0]).astype(np.int64)
    for k in range(1, mat.shape[1]):
        packed = (packed << np.int64(bits[k])) | (mat[:, k] - mins[k])
    return packed


def rank_rows(ref: np.ndarray, query: np.ndarray):
    """Locate query rows inside ``ref`` (lex-sorted, unique rows).

    Returns (positions, found). Uses a shared bit-packing of both matrices
    when the value ranges fit in 62 bits, else a dict fallback."""
    nq = len(query)
    if ref.shape[1] == 0:
        found = np.full(nq, len(ref) > 0)
        return np.zeros(nq, dtype=np.int64), found
    if len(ref) == 0:
        return np.zeros(nq, dtype=np.int64), np.zeros(nq, dtype=bool)
    if nq == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    both_min = np.minimum(ref.min(axis=0), query.min(axis=0))
    both_max = np.maximum(ref.max(axis=0), query.max(axis=0))
    bits = [max(int(hi - lo).bit_length(), 1)
            for lo, hi in zip(both_min.tolist(), both_max.tolist())]
    if sum(bits) <= 62:
        rp = _pack_with(ref, both_min, bits)
        qp = _pack_with(query, both_min, bits)
        pos = np.searchsorted(rp, qp)
        clip = np.minimum(pos, len(rp) - 1)
        found = rp[clip] == qp
        return np.where(found, clip, 0), found
    lookup = {tuple(r): i for i, r in enumerate(ref.tolist())}
    pos = np.zeros(nq, dtype=np.int64)
    found = np.zeros(nq, dtype=bool)
    for i, r in enumerate(query.tolist()):
        j = lookup.get(tuple(r))
        if j is not None:
            pos[i] = j
            found[i] = True
    return pos, found


def _space_arrays(model: SymbolicModel, data: DataBundle, names):
    """Per-placeholder space as a sorted np array, or None when unknown."""
    out = []
    for n in names:
        ph = model.placeholder(n)
        space = data.space_of(ph) if ph is not None else None
        out.append(None if space is None else
                   np.unique(np.asarray(space, dtype=np.int64)))
    return out


def realized_rows(model: SymbolicModel, data: DataBundle, block,
                  dense_rows: bool):
    """Row index tuples (lex-sorted matrix) and rhs values for one block.

    Dense mode enumerates the full space of G; the default realizes the rhs
    parameter array's keys (restricted to the known spaces). A literal rhs
    always broadcasts over the full space."""
    gnames = block.expr.global_indices
    gw = len(gnames)
    literal = not isinstance(block.rhs, str)
    if dense_rows or literal:
        spaces = []
        for n in gnames:
            ph = model.placeholder(n)
            space = data.space_of(ph) if ph is not None else None
            if space is None:
                raise MissingSpace(n)
            spaces.append(sorted(space))
        if gw == 0:
            gmat = np.zeros((1, 0), dtype=np.int64)
        else:
            grids = np.meshgrid(*[np.asarray(s, dtype=np.int64) for s in spaces],
                                indexing="ij")
            gmat = np.column_stack([g.ravel() for g in grids]) \
                if grids else np.zeros((1, 0), dtype=np.int64)
        if literal:
            return gmat, np.full(len(gmat), float(block.rhs))
        arr = data.parameter_arrays.get(block.rhs)
        if arr is None:
            raise MissingParameter(block.rhs, None)
        vals = np.empty(len(gmat))
        for i, row in enumerate(map(tuple, gmat.tolist())):
            try:
                vals[i] = arr[row]
            except KeyError:
                raise MissingRhs(0, row) from None
        return gmat, vals
    if block.rhs not in data.parameter_arrays:
        raise MissingParameter(block.rhs, None)
    gmat, vals = data.param_mirror(block.rhs)
    if len(gmat) == 0:
        return np.zeros((0, gw), dtype=np.int64), np.zeros(0)
    keep = np.ones(len(gmat), dtype=bool)
    for p, space in enumerate(_space_arrays(model, data, gnames)):
        if space is not None:
            keep &= np.isin(gmat[:, p], space)
    gmat, vals = gmat[keep], vals[keep]
    order = sort_order(gmat)
    return gmat[order], vals[order]


def _dense_catalog(model: SymbolicModel, data: DataBundle):
    """Odometer column enumeration (last index slowest) per declared
    variable, in declaration order. Requires per-variable domains."""
    families, fam_rank, fam_spaces, fam_offset = [], {}, {}, {}
    total = 0
    per_family = {}
    for v in model.variables:
        if v.domains is None and v.rank > 0:
            raise MissingSpace(f"{v.name} (declare domains for dense columns)")
        spaces = []
        for dname in (v.domains or ()):
            space = data.index_spaces.get(dname)
            if space is None:
                raise MissingSpace(dname)
            spaces.append(np.asarray(sorted(space), dtype=np.int64))
        fam_rank[v.name] = len(families)
        families.append(v.name)
        fam_spaces[v.name] = spaces
        fam_offset[v.name] = total
        count = 1
        for s in spaces:
            count *= len(s)
        per_family[v.name] = count
        total += count

    col_family = np.empty(total, dtype=np.int32)
    flat_parts, offsets_parts = [], []
    for v in model.variables:
        spaces = fam_spaces[v.name]
        count = per_family[v.name]
        base = fam_offset[v.name]
        col_family[base:base + count] = fam_rank[v.name]
        if v.rank == 0:
            flat_parts.append(np.zeros((count, 0), dtype=np.int64))
        else:
            # first index fastest: odometer over reversed spaces, flipped back
            grids = np.meshgrid(*[s for s in reversed(spaces)], indexing="ij")
            mat = np.column_stack([g.ravel() for g in reversed(grids)])
            flat_parts.append(mat)
        offsets_parts.append(np.full(count, v.rank, dtype=np.int64))
    widths = np.concatenate(offsets_parts) if offsets_parts else np.zeros(0, np.int64)
    offsets = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(widths, out=offsets[1:])
    flat = (np.concatenate([m.ravel() for m in flat_parts])
            if flat_parts else np.zeros(0, dtype=np.int64))

    def col_of(family: str, vmat: np.ndarray) -> np.ndarray:
        spaces = fam_spaces[family]
        cols = np.full(len(vmat), fam_offset[family], dtype=np.int64)
        stride = 1
        for p, space in enumerate(spaces):
            pos = np.searchsorted(space, vmat[:, p])
            clip = np.minimum(pos, len(space) - 1)
            ok = (len(space) > 0) and np.all(space[clip] == vmat[:, p])
            if not ok:
                bad = np.flatnonzero(space[clip] != vmat[:, p])[0] \
                    if len(space) else 0
                raise DenseDomainMiss(family, p, int(vmat[bad, p]))
            cols += pos * stride
            stride *= len(space)
        return cols

    return families, col_family, flat, offsets, col_of


def _sparse_catalog(records):
    """First-appearance catalog from entry records.

    records: list of (block_pos, family, vmat, row_rank, coefs). A column's
    scan position is its earliest (block, row); ties inside one row break by
    family name then index tuple.
    """
    fam_names = sorted({fam for _, fam, _, _, _ in records})
    fam_code = {f: i for i, f in enumerate(fam_names)}
    cand_v: dict[str, list[np.ndarray]] = {f: [] for f in fam_names}
    cand_c: dict[str, list[np.ndarray]] = {f: [] for f in fam_names}
    for block_pos, fam, vmat, row_rank, _ in records:
        cand_v[fam].append(vmat)
        cand_c[fam].append((np.int64(block_pos) << _BLOCK_SHIFT)
                           | row_rank.astype(np.int64))

    fam_ucols: dict[str, np.ndarray] = {}
    fam_ucomp: dict[str, np.ndarray] = {}
    for f in fam_names:
        vmat = np.concatenate(cand_v[f], axis=0)
        comp = np.concatenate(cand_c[f])
        order1 = np.argsort(comp, kind="stable")
        v1, c1 = vmat[order1], comp[order1]
        order2 = sort_order(v1)
        v2, c2 = v1[order2], c1[order2]
        if len(v2) == 0:
            fam_ucols[f] = v2
            fam_ucomp[f] = c2
            continue
        change = np.empty(len(v2), dtype=bool)
        change[0] = True
        if v2.shape[1]:
            np.any(v2[1:] != v2[:-1], axis=1, out=change[1:])
        else:
            change[1:] = False
        starts = np.flatnonzero(change)
        fam_ucols[f] = v2[starts]      # lex order within the family
        fam_ucomp[f] = c2[starts]      # min scan position per column

    comp_all = np.concatenate([fam_ucomp[f] for f in fam_names]) \
        if fam_names else np.zeros(0, dtype=np.int64)
    famr_all = np.concatenate(
        [np.full(len(fam_ucomp[f]), fam_code[f], dtype=np.int64)
         for f in fam_names]) if fam_names else np.zeros(0, dtype=np.int64)
    lexr_all = np.concatenate(
        [np.arange(len(fam_ucomp[f]), dtype=np.int64) for f in fam_names]) \
        if fam_names else np.zeros(0, dtype=np.int64)
    perm = np.lexsort((lexr_all, famr_all, comp_all))
    total = len(perm)

    colid = np.empty(total, dtype=np.int64)
    colid[perm] = np.arange(total, dtype=np.int64)
    fam_colid: dict[str, np.ndarray] = {}
    base = 0
    for f in fam_names:
        n = len(fam_ucomp[f])
        fam_colid[f] = colid[base:base + n]
        base += n

    col_family = famr_all[perm].astype(np.int32)
    ranks = {f: fam_ucols[f].shape[1] for f in fam_names}
    widths = np.array([ranks[fam_names[c]] for c in col_family],
                      dtype=np.int64) if total else np.zeros(0, np.int64)
    offsets = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(widths, out=offsets[1:])
    flat = np.zeros(int(offsets[-1]), dtype=np.int64)
    for f in fam_names:
        ids = fam_colid[f]
        rank = ranks[f]
        if rank == 0 or len(ids) == 0:
            continue
        starts = offsets[ids]
        pos = (starts[:, None] + np.arange(rank)).ravel()
        flat[pos] = fam_ucols[f].ravel()

    def col_of(family: str, vmat: np.ndarray) -> np.ndarray:
        pos, found = rank_rows(fam_ucols[family], vmat)
        assert np.all(found), "entry column missing from its own catalog"
        return fam_colid[family][pos]

    return fam_names, col_family, flat, offsets, col_of


def build_canonical(model: SymbolicModel, data: DataBundle,
                    terms: list[BlockTerms], *, dense_columns=False,
                    dense_rows=False) -> CanonicalModel:
    """Assemble aggregated per-block terms into the canonical form."""
    blocks = model.constraints
    realized = [realized_rows(model, data, blk, dense_rows) for blk in blocks]
    row_counts = [len(g) for g, _ in realized]
    row_base = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum(row_counts, out=row_base[1:])

    records = []  # (block_pos, family, vmat, row_rank, coefs)
    for t in terms:
        gw = t.gwidth
        if t.block > 0:
            gnames = blocks[t.block - 1].expr.global_indices
            spaces = _space_arrays(model, data, gnames)
            gmat_realized = realized[t.block - 1][0]
        for fam in sorted(t.families):
            keys, coefs = t.families[fam]
            nz = coefs != 0.0
            if not np.all(nz):
                keys, coefs = keys[nz], coefs[nz]
            if len(coefs) == 0:
                continue
            gpart, vpart = keys[:, :gw], keys[:, gw:]
            if t.block == 0:
                records.append((0, fam, vpart,
                                np.zeros(len(coefs), dtype=np.int64), coefs))
                continue
            pos, found = rank_rows(gmat_realized, gpart)
            if not np.all(found):
                in_space = np.ones(len(coefs), dtype=bool)
                for p, space in enumerate(spaces):
                    if space is not None:
                        in_space &= np.isin(gpart[:, p], space)
                orphan = ~found & in_space
                if np.any(orphan):
                    bad = int(np.flatnonzero(orphan)[0])
                    raise MissingRhs(t.block, tuple(gpart[bad].tolist()))
                keep = found
                gpart, vpart, pos, coefs = (gpart[keep], vpart[keep],
                                            pos[keep], coefs[keep])
                if len(coefs) == 0:
                    continue
            records.append((t.block, fam, vpart, pos, coefs))

    if dense_columns:
        families, col_family, flat, offsets, col_of = _dense_catalog(model, data)
    else:
        families, col_family, flat, offsets, col_of = _sparse_catalog(records)
    num_vars = len(col_family)

    objective = np.zeros(num_vars)
    er_parts, ec_parts, ev_parts = [], [], []
    for block_pos, fam, vmat, row_rank, coefs in records:
        cols = col_of(fam, vmat)
        if block_pos == 0:
            objective[cols] = coefs
        else:
            er_parts.append(row_base[block_pos - 1] + row_rank)
            ec_parts.append(cols)
            ev_parts.append(coefs)

    if er_parts:
        er = np.concatenate(er_parts)
        ec = np.concatenate(ec_parts)
        ev = np.concatenate(ev_parts)
        key = er << np.int64(32) | ec if (len(er) == 0 or
                                          (er.max() < (1 << 30) and
                                           ec.max() < (1 << 32))) else None
        if key is None:
            order = np.lexsort((ec, er))
        else:
            order = np.argsort(key, kind="stable")
        er, ec, ev = er[order], ec[order], ev[order]
    else:
        er = np.zeros(0, dtype=np.int64)
        ec = np.zeros(0, dtype=np.int64)
        ev = np.zeros(0, dtype=np.float64)

    num_rows = int(row_base[-1])
    row_offsets = np.searchsorted(er, np.arange(num_rows + 1, dtype=np.int64))

    sign_parts, rhs_parts, block_parts, gflat_parts, gwidths = [], [], [], [], []
    for bi, blk in enumerate(blocks, 1):
        gmat, vals = realized[bi - 1]
        sign_parts.append(np.full(len(gmat), SIGN_CODE[blk.sign], dtype=np.int8))
        rhs_parts.append(vals)
        block_parts.append(np.full(len(gmat), bi, dtype=np.int32))
        gflat_parts.append(gmat.ravel())
        gwidths.append(np.full(len(gmat), gmat.shape[1], dtype=np.int64))
    row_sign = np.concatenate(sign_parts) if sign_parts else np.zeros(0, np.int8)
    row_rhs = np.concatenate(rhs_parts) if rhs_parts else np.zeros(0)
    row_block = np.concatenate(block_parts) if block_parts else np.zeros(0, np.int32)
    gstar_flat = np.concatenate(gflat_parts) if gflat_parts else np.zeros(0, np.int64)
    gw_all = np.concatenate(gwidths) if gwidths else np.zeros(0, np.int64)
    gstar_offsets = np.zeros(num_rows + 1, dtype=np.int64)
    np.cumsum(gw_all, out=gstar_offsets[1:])

    # per-family bounds and integrality broadcast onto columns
    fam_lower = np.zeros(len(families))
    fam_upper = np.full(len(families), np.inf)
    fam_int = np.zeros(len(families), dtype=bool)
    for fi, fname in enumerate(families):
        decl = model.variable(fname)
        if decl is not None:
            fam_lower[fi] = decl.lower
            fam_int[fi] = decl.integer
        for b in model.bounds:
            if b.var == fname:
                if b.lower is not None:
                    fam_lower[fi] = b.lower
                if b.upper is not None:
                    fam_upper[fi] = b.upper
    if num_vars:
        col_lower = fam_lower[col_family]
        col_upper = fam_upper[col_family]
        col_integer = fam_int[col_family]
    else:
        col_lower = np.zeros(0)
        col_upper = np.zeros(0)
        col_integer = np.zeros(0, dtype=bool)

    return CanonicalModel(
        families=families,
        col_family=col_family,
        col_index_flat=flat,
        col_index_offsets=offsets,
        col_lower=col_lower,
        col_upper=col_upper,
        col_integer=col_integer,
        objective=objective,
        entry_row=er,
        entry_col=ec,
        entry_val=ev,
        row_offsets=row_offsets.astype(np.int64),
        row_sign=row_sign,
        row_rhs=row_rhs,
        row_block=row_block,
        row_gstar_flat=gstar_flat,
        row_gstar_offsets=gstar_offsets,
    )


# ---------------------------------------------------------------------------
# Top-level instantiation entry points
# ---------------------------------------------------------------------------

def _block_expressions(model: SymbolicModel):
    yield 0, model.objective
    for i, blk in enumerate(model.constraints, 1):
        yield i, blk.expr


def instantiate_efficient(model: SymbolicModel, data: DataBundle, *,
                          dense_columns=False, dense_rows=False) -> CanonicalModel:
    """Single-pass instantiation (normalize, one traversal per block,
    aggregate, assemble). Output matches instantiate_exhaustive."""
    require_valid(model)
    model = normalized_sense(model)
    terms = []
    for bi, expr in _block_expressions(model):
        norm, extra = normalize(model, expr, data)
        terms.append(block_terms(model, norm, data, extra, block=bi))
    return build_canonical(model, data, terms,
                           dense_columns=dense_columns, dense_rows=dense_rows)


def _terms_from_map(agg: dict, gwidth: int, block: int) -> BlockTerms:
    per_fam: dict[str, tuple[list, list]] = {}
    for (gstar, fam, vidx), coef in agg.items():
        rows, vals = per_fam.setdefault(fam, ([], []))
        rows.append(list(gstar) + list(vidx))
        vals.append(coef)
    families = {}
    for fam, (rows, vals) in per_fam.items():
        keys = np.asarray(rows, dtype=np.int64)
        if keys.ndim == 1:
            keys = keys.reshape(len(vals), 0)
        coefs = np.asarray(vals, dtype=np.float64)
        families[fam] = aggregate_sorted(keys, coefs)
    return BlockTerms(block, gwidth, families)


def instantiate_exhaustive(model: SymbolicModel, data: DataBundle, *,
                           dense_columns=False, dense_rows=False) -> CanonicalModel:
    """Reference instantiation by full enumeration of space(G)."""
    require_valid(model)
    model = normalized_sense(model)
    terms = []
    for bi, expr in _block_expressions(model):
        agg = exhaustive_block_map(model, expr, data)
        terms.append(_terms_from_map(agg, len(expr.global_indices), bi))
    return build_canonical(model, data, terms,
                           dense_columns=dense_columns, dense_rows=dense_rows)


def efficient_block_maps(model: SymbolicModel, data: DataBundle) -> list[dict]:
    """Aggregated (G*, family, index) -> coefficient map per block (objective
    first), from the single-pass engine. Test-friendly mirror of
    exhaustive_block_map."""
    require_valid(model)
    model = normalized_sense(model)
    out = []
    for bi, expr in _block_expressions(model):
        norm, extra = normalize(model, expr, data)
        t = block_terms(model, norm, data, extra, block=bi)
        agg = {}
        for fam, (keys, coefs) in t.families.items():
            gw = t.gwidth
            for row, c in zip(keys.tolist(), coefs.tolist()):
                agg[(tuple(row[:gw]), fam, tuple(row[gw:]))] = c
        out.append(agg)
    return out
