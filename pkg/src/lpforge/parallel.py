"""Parallel instantiation by data partitioning.

One global placeholder (the pivot) is chosen; its value space is split into
disjoint parts. Each worker instantiates the same expressions over a view
of the set data that keeps only tuples whose pivot position falls in its
part. Blocks whose index tuple does not contain the pivot (the objective
included) run whole on worker 0. Merged per-block term aggregates feed the
ordinary assembly, so the result is identical to the serial path.

Process workers derive their filtered set tables from the bundle's numpy
mirrors (slicing a numpy buffer after fork is copy-on-write-free, unlike
walking inherited Python objects, whose refcount updates copy pages), and
ship aggregated term arrays back through shared memory so large results
never cross a pipe.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assemble import build_canonical
from .canonical import CanonicalModel
from .data import DataBundle
from .errors import WorkerFailure
from .instantiate import (BlockTerms, block_terms, merge_block_terms,
                          normalize)
from .ir import ParamCoef, Sum, SymbolicModel, Term, normalized_sense, \
    require_valid, walk

PROCESS_MIN_TUPLES = 200_000  # below this, thread dispatch wins


@dataclass
class PartitionPlan:
    """Disjoint pivot-value parts covering space(pivot). pivot None means a
    single-part (serial-equivalent) plan."""

    pivot: str | None
    parts: list[list[int]] = field(default_factory=list)

    @property
    def num_parts(self) -> int:
        return max(len(self.parts), 1)


def _pivot_weights(model: SymbolicModel, data: DataBundle):
    """Total set-tuple count each global placeholder would parallelize,
    plus its per-value histogram."""
    totals: dict[str, int] = {}
    hists: dict[str, dict[int, int]] = {}
    exprs = [model.objective] + [b.expr for b in model.constraints]
    for expr in exprs:
        gset = set(expr.global_indices)
        if not gset:
            continue
        for node in walk(expr.root):
            if not isinstance(node, Sum):
                continue
            rows = data.index_sets.get(node.set_ref)
            if not rows:
                continue
            arr = data.set_array(node.set_ref)
            for p, name in enumerate(node.binding):
                if name not in gset:
                    continue
                totals[name] = totals.get(name, 0) + len(rows)
                hist = hists.setdefault(name, {})
                vals, counts = np.unique(arr[:, p], return_counts=True)
                for v, c in zip(vals.tolist(), counts.tolist()):
                    hist[v] = hist.get(v, 0) + c
    return totals, hists


def plan_partition(model: SymbolicModel, data: DataBundle,
                   workers: int) -> PartitionPlan:
    """Pick the pivot with the most attributable set-tuple work and split
    its space into contiguous ranges of near-equal tuple weight."""
    require_valid(model)
    if workers <= 1:
        return PartitionPlan(None)
    totals, hists = _pivot_weights(model, data)
    candidates = [(n, t) for n, t in totals.items()
                  if data.space_of(model.placeholder(n)) is not None]
    if not candidates:
        return PartitionPlan(None)
    pivot = max(candidates, key=lambda nt: (nt[1], nt[0]))[0]
    space = sorted(data.space_of(model.placeholder(pivot)))
    hist = hists.get(pivot, {})
    weights = [hist.get(v, 0) + 1 for v in space]  # +1 keeps empty values movable

    target = sum(weights) / workers
    parts: list[list[int]] = []
    current: list[int] = []
    acc = 0.0
    for v, w in zip(space, weights):
        if current and acc + w > target and len(parts) < workers - 1:
            parts.append(current)
            current, acc = [], 0.0
        current.append(v)
        acc += w
    if current:
        parts.append(current)
    if len(parts) == 1:
        return PartitionPlan(None)
    return PartitionPlan(pivot, parts)


# ---------------------------------------------------------------------------
# Work context (inherited by forked workers; set before the pool spawns)
# ---------------------------------------------------------------------------

_WORK: dict | None = None


def _block_static(norm, extra, pivot):
    """Which sums/params a block touches and where the pivot sits in each."""
    sums = []
    params: dict[str, int | None] = {}
    for node in walk(norm.root):
        if isinstance(node, Sum):
            try:
                ppos = node.binding.index(pivot) if pivot is not None else None
            except ValueError:
                ppos = None
            sums.append((node.sum_id, node.set_ref, node.set_ref in extra,
                         ppos))
        elif isinstance(node, Term) and isinstance(node.coef, ParamCoef):
            name = node.coef.param
            try:
                ppos = node.coef.index.index(pivot) if pivot is not None \
                    else None
            except ValueError:
                ppos = None
            if name in params and params[name] != ppos:
                params[name] = None  # conflicting positions: ship it whole
            else:
                params[name] = ppos
    return sums, params


def _prepare_work(model: SymbolicModel, data: DataBundle,
                  plan: PartitionPlan):
    norm_blocks = []
    for bi, expr in [(0, model.objective)] + [
            (i, b.expr) for i, b in enumerate(model.constraints, 1)]:
        norm, extra = normalize(model, expr, data)
        bears = plan.pivot is not None and plan.pivot in norm.global_indices
        sums, params = _block_static(norm, extra,
                                     plan.pivot if bears else None)
        norm_blocks.append((bi, norm, extra, bears, sums, params))
    part_sets = [frozenset(p) for p in plan.parts]
    part_ranges = []
    for p in plan.parts:
        if p and sorted(p) == list(range(min(p), max(p) + 1)):
            part_ranges.append((min(p), max(p)))
        else:
            part_ranges.append(None)
    # make sure every mirror exists before forking so children share them
    for _, _, _, bears, sums, params in norm_blocks:
        for _, set_ref, is_extra, _ in sums:
            if not is_extra and set_ref in data.index_sets:
                data.set_array(set_ref)
        for name in params:
            if name in data.parameter_arrays:
                data.param_mirror(name)
    return {"model": model, "data": data, "plan": plan,
            "blocks": norm_blocks, "part_sets": part_sets,
            "part_ranges": part_ranges, "transport": "obj"}


def _part_mask(col: np.ndarray, part_range, part_values) -> np.ndarray:
    if part_range is not None:
        lo, hi = part_range
        return (col >= lo) & (col <= hi)
    vals = np.fromiter(part_values, dtype=np.int64, count=len(part_values))
    return np.isin(col, vals)


def _child_tables(work, sums, extra, part_id, filtered):
    """Child-owned set tables for one block: pivot-filtered where the sum
    binds the pivot, full otherwise, all materialized from numpy mirrors."""
    data: DataBundle = work["data"]
    part_values = work["part_sets"][part_id] if filtered else None
    part_range = work["part_ranges"][part_id] if filtered else None
    tables = {}
    for sum_id, set_ref, is_extra, ppos in sums:
        if is_extra:
            rows = extra[set_ref]
            if filtered and ppos is not None:
                rows = [t for t in rows if t[ppos] in part_values]
            tables[sum_id] = rows
            continue
        if set_ref not in data.index_sets:
            continue  # engine raises with context
        arr = data.set_array(set_ref)
        if filtered and ppos is not None and len(arr):
            arr = arr[_part_mask(arr[:, ppos], part_range, part_values)]
        tables[sum_id] = arr.tolist()
    return tables


def _run_part(part_id: int):
    work = _WORK
    model = work["model"]
    data = work["data"]
    out = []
    for bi, norm, extra, bears, sums, params in work["blocks"]:
        if not bears and part_id != 0:
            continue
        if bears:
            tables = _child_tables(work, sums, extra, part_id, True)
            out.append((bi, block_terms(model, norm, data, extra,
                                        tables=tables, block=bi)))
        else:
            out.append((bi, block_terms(model, norm, data, extra, block=bi)))
    if work["transport"] == "shm":
        return _ship_shm(out)
    return ("obj", out, [])


# ---------------------------------------------------------------------------
# Shared-memory result transport
# ---------------------------------------------------------------------------

def _ship_shm(out):
    from multiprocessing import resource_tracker, shared_memory
    segs = []
    meta = []

    def pack(arr):
        arr = np.ascontiguousarray(arr)
        if arr.nbytes == 0:
            return ("inline", arr)
        shm = shared_memory.SharedMemory(create=True, size=arr.nbytes)
        np.ndarray(arr.shape, arr.dtype, buffer=shm.buf)[...] = arr
        segs.append(shm)
        # the parent owns the segment's lifetime; keep this process's
        # resource tracker from unlinking it when the worker exits
        resource_tracker.unregister(shm._name, "shared_memory")
        return ("shm", len(segs) - 1, str(arr.dtype), arr.shape)

    for bi, bt in out:
        fams = {fam: (pack(keys), pack(coefs))
                for fam, (keys, coefs) in bt.families.items()}
        meta.append((bi, bt.gwidth, fams))
    names = [s.name for s in segs]
    for s in segs:
        s.close()
    return ("shm", meta, names)


def _receive(payload):
    """Rebuild (block, BlockTerms) pairs; returns (pairs, shm_handles)."""
    kind, meta, names = payload
    if kind == "obj":
        return meta, []
    from multiprocessing import shared_memory
    handles = [shared_memory.SharedMemory(name=n) for n in names]

    def unpack(ref):
        if ref[0] == "inline":
            return ref[1]
        _, idx, dtype, shape = ref
        return np.ndarray(shape, np.dtype(dtype), buffer=handles[idx].buf)

    pairs = []
    for bi, gwidth, fams in meta:
        families = {fam: (unpack(k), unpack(c)) for fam, (k, c) in fams.items()}
        pairs.append((bi, BlockTerms(bi, gwidth, families)))
    return pairs, handles


def _release(handles):
    for h in handles:
        try:
            h.close()
            h.unlink()
        except FileNotFoundError:
            pass


def _estimated_tuples(model: SymbolicModel, data: DataBundle) -> int:
    total = 0
    for expr in [model.objective] + [b.expr for b in model.constraints]:
        for node in walk(expr.root):
            if isinstance(node, Sum):
                total += len(data.index_sets.get(node.set_ref, ()))
    return total


def instantiate_parallel(model: SymbolicModel, data: DataBundle,
                         plan: PartitionPlan | None = None, *,
                         workers: int | None = None, executor: str = "auto",
                         dense_columns=False, dense_rows=False) -> CanonicalModel:
    """Partitioned instantiation. Byte-identical to instantiate_efficient.

    executor: "process" (fork + shared-memory return), "thread", "serial",
    or "auto" (process for large inputs when fork exists, else thread)."""
    global _WORK
    require_valid(model)
    model = normalized_sense(model)
    if workers is None:
        workers = plan.num_parts if plan is not None else \
            int(os.environ.get("LPFORGE_THREADS", "1"))
    if plan is None:
        plan = plan_partition(model, data, workers)

    work = _prepare_work(model, data, plan)
    if plan.pivot is None or plan.num_parts == 1:
        terms = [block_terms(model, norm, data, extra, block=bi)
                 for bi, norm, extra, _, _, _ in work["blocks"]]
        return build_canonical(model, data, terms,
                               dense_columns=dense_columns,
                               dense_rows=dense_rows)

    nparts = len(plan.parts)
    if executor == "auto":
        big = _estimated_tuples(model, data) >= PROCESS_MIN_TUPLES
        executor = "process" if (big and hasattr(os, "fork")) else "thread"
    work["transport"] = "shm" if executor == "process" else "obj"

    payloads: list = [None] * nparts
    if executor == "serial":
        for pid in range(nparts):
            _WORK = work
            try:
                payloads[pid] = _run_part(pid)
            except Exception as e:
                raise WorkerFailure(pid, e) from e
            finally:
                _WORK = None
    else:
        _WORK = work
        try:
            if executor == "process":
                ctx = multiprocessing.get_context("fork")
                pool = ProcessPoolExecutor(nparts, mp_context=ctx)
            else:
                pool = ThreadPoolExecutor(nparts)
            with pool:
                futures = {pid: pool.submit(_run_part, pid)
                           for pid in range(nparts)}
                for pid, fut in futures.items():
                    try:
                        payloads[pid] = fut.result()
                    except Exception as e:
                        raise WorkerFailure(pid, e) from e
        finally:
            _WORK = None

    handles = []
    try:
        per_block: dict[int, list[BlockTerms]] = {}
        for pid in range(nparts):  # part order, not completion order
            pairs, hs = _receive(payloads[pid])
            handles.extend(hs)
            for bi, bt in pairs:
                per_block.setdefault(bi, []).append(bt)
        merged = [merge_block_terms(parts)
                  for _, parts in sorted(per_block.items())]
        return build_canonical(model, data, merged,
                               dense_columns=dense_columns,
                               dense_rows=dense_rows)
    finally:
        _release(handles)
