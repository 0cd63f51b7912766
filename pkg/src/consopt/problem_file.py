"""Reading and writing problem files.

A problem file is YAML::

    n: 2
    cr:
      - kind: quadratic
        indices: [0]
        params: {q: 2.0}
      - kind: source
        indices: [1]
        params: {e: 1.0}
    li:
      - kind: equality-chain
        inputs: [0]
        outputs: [1]

LI kinds are those of :func:`consopt.li.catalog_li`; ``general`` blocks give
``matrix`` (rows = outputs, columns = inputs). Errors name the line and field.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .cr import CR_KINDS, catalog_cr
from .errors import BadParams, ConsoptError, CoverageError, ParseError
from .li import catalog_li
from .partition import IndexPartition
from .problem import Problem

LI_KINDS = ("replicator", "equality-chain", "negator", "general")


class _Map(dict):
    line = 0
    key_lines: dict


def _construct(node, loader):
    if isinstance(node, yaml.MappingNode):
        out = _Map()
        out.line = node.start_mark.line + 1
        out.key_lines = {}
        for k, v in node.value:
            key = loader.construct_object(k, deep=True)
            out[key] = _construct(v, loader)
            out.key_lines[key] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, loader) for v in node.value]
    return loader.construct_object(node, deep=True)


def _load(text: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", exc)), line=None if mark is None else mark.line + 1) from None
    if node is None:
        raise ParseError("empty problem file", line=1)
    return _construct(node, yaml.SafeLoader(""))


def _field(m: _Map, key, kind=None, required=True):
    if key not in m:
        if required:
            raise ParseError("missing field", line=m.line, field=key)
        return None
    v = m[key]
    if kind is not None and not isinstance(v, kind):
        raise ParseError(f"expected {getattr(kind, '__name__', kind)}", line=m.key_lines[key], field=key)
    return v


def _indices(m: _Map, key, n):
    v = _field(m, key, list)
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in v):
        raise ParseError("indices must be integers", line=m.key_lines[key], field=key)
    bad = [i for i in v if not 0 <= i < n]
    if bad:
        raise ParseError(f"index {bad[0]} outside [0, {n})", line=m.key_lines[key], field=key)
    return v


def _check_cover(n, entries, family):
    owner = {}
    for idx, line in entries:
        for i in idx:
            if i in owner:
                raise CoverageError(
                    f"line {line}: index {i} is already housed by the {family} block on line {owner[i]}"
                )
            owner[i] = line
    missing = sorted(set(range(n)) - set(owner))
    if missing:
        raise CoverageError(f"index {missing[0]} is not housed by any {family} block")


def parse_problem(source) -> Problem:
    """Parse a problem file (path, or YAML text when it contains a newline)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    doc = _load(text)
    if not isinstance(doc, _Map):
        raise ParseError("top level must be a mapping", line=1)
    n = _field(doc, "n", int)
    if n <= 0:
        raise CoverageError(f"line {doc.key_lines['n']}: n must be positive")
    cr_docs = _field(doc, "cr", list)
    li_docs = _field(doc, "li", list, required=False) or []

    crs, cr_idx = [], []
    for entry in cr_docs:
        if not isinstance(entry, _Map):
            raise ParseError("each CR entry must be a mapping", line=doc.key_lines["cr"], field="cr")
        kind = _field(entry, "kind", str)
        if kind not in CR_KINDS:
            raise ParseError(f"unknown CR kind {kind!r}", line=entry.key_lines["kind"], field="kind")
        idx = _indices(entry, "indices", n)
        params = dict(_field(entry, "params", dict, required=False) or {})
        params.setdefault("dim", len(idx))
        try:
            canon, _ = catalog_cr(kind, **params)
        except BadParams as exc:
            line = entry.key_lines.get("params", entry.line)
            raise BadParams(f"line {line}, field 'params': {exc}") from None
        if canon.dim != len(idx):
            raise ParseError(f"block dim {canon.dim} does not match {len(idx)} indices", line=entry.line, field="indices")
        crs.append(canon)
        cr_idx.append((idx, entry.line))

    lis, li_io = [], []
    for entry in li_docs:
        if not isinstance(entry, _Map):
            raise ParseError("each LI entry must be a mapping", line=doc.key_lines["li"], field="li")
        kind = _field(entry, "kind", str)
        if kind not in LI_KINDS:
            raise ParseError(f"unknown LI kind {kind!r}", line=entry.key_lines["kind"], field="kind")
        ins = _indices(entry, "inputs", n)
        outs = _indices(entry, "outputs", n)
        try:
            if kind == "general":
                matrix = _field(entry, "matrix", list)
                A = np.asarray(matrix, dtype=float).reshape(len(outs), len(ins))
                block = catalog_li("general", matrix=A)
            elif kind == "replicator":
                block = catalog_li(kind, m=len(outs))
            else:
                block = catalog_li(kind, dim=len(ins))
        except (BadParams, ValueError) as exc:
            raise BadParams(f"line {entry.line}, field 'matrix': {exc}") from None
        if block.a_matrix.shape != (len(outs), len(ins)):
            raise ParseError(
                f"{kind} block needs A of shape {block.a_matrix.shape}, got {len(outs)} outputs x {len(ins)} inputs",
                line=entry.line, field="outputs",
            )
        lis.append(block)
        li_io.append((ins, outs, entry.line))

    _check_cover(n, cr_idx, "CR")
    _check_cover(n, [(i + o, line) for i, o, line in li_io], "LI")
    part = IndexPartition.from_io(n, [i for i, _ in cr_idx], [(i, o) for i, o, _ in li_io])
    return Problem(part, crs, lis)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _compact(v):
    """Collapse a constant vector to its scalar for readability."""
    v = _plain(v)
    if isinstance(v, list) and v and not isinstance(v[0], list) and all(x == v[0] for x in v):
        return v[0]
    return v


def emit_problem(p: Problem) -> str:
    part = p.partition
    doc = {"n": part.n_total, "cr": [], "li": []}
    for cr, idx in zip(p.crs, part.cr_blocks):
        if cr.kind not in CR_KINDS:
            raise ConsoptError(f"{cr.kind!r} blocks cannot be written to a problem file")
        entry = {"kind": cr.kind, "indices": idx.tolist()}
        if cr.params:
            entry["params"] = {k: _compact(v) for k, v in cr.params.items()}
        doc["cr"].append(entry)
    for l, li in enumerate(p.lis):
        entry = {"kind": li.kind, "inputs": part.li_inputs(l).tolist(), "outputs": part.li_outputs(l).tolist()}
        if li.kind == "general":
            entry["matrix"] = li.a_matrix.tolist()
        doc["li"].append(entry)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def problems_equal(p1: Problem, p2: Problem) -> bool:
    """Structural equality on the problem model (partition, kinds, parameters, matrices)."""
    if p1.partition != p2.partition or len(p1.crs) != len(p2.crs) or len(p1.lis) != len(p2.lis):
        return False
    for a, b in zip(p1.crs, p2.crs):
        if a.kind != b.kind or set(a.params) != set(b.params):
            return False
        for k in a.params:
            if not np.array_equal(np.asarray(a.params[k]), np.asarray(b.params[k])):
                return False
    for a, b in zip(p1.lis, p2.lis):
        if a.kind != b.kind or not np.array_equal(a.a_matrix, b.a_matrix):
            return False
    return True
