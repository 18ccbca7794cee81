"""Grid files, Matpower case ingestion and error metrics.

Grid file (version 1) is a JSON object::

    {"version": 1, "num_nodes": N, "root": 0,
     "edges": [{"u": 0, "v": 1, "r": 0.01, "x": 0.02, "operational": true}, ...],
     "base_loads": [{"node": 1, "p": 0.01, "q": 0.006}, ...]}

All quantities are per-unit. Operational edges must form a radial tree rooted
at ``root``; every edge, operational or not, is a candidate line.
"""

from __future__ import annotations

import json
import re
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ParseError, SchemaError, UnsupportedConstruct
from .grid import CandidateEdgeSet, GridTopology, Impedance, build_tree, edge_key

GRID_FILE_VERSION = 1


class GridFile(NamedTuple):
    topology: GridTopology
    candidates: CandidateEdgeSet
    base_loads: np.ndarray | None  # shape (num_nodes, 2): p, q; None when the file has none


def _field(obj, key, path, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path)
    val = obj[key]
    if kind is int:
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif kind is float:
        ok = isinstance(val, (int, float)) and not isinstance(val, bool) and np.isfinite(val)
    elif kind is bool:
        ok = isinstance(val, bool)
    else:
        ok = isinstance(val, kind)
    if not ok:
        raise SchemaError(path, f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def parse_grid_json(data: bytes | str) -> GridFile:
    """Parse and validate a version-1 grid document.

    Raises
    ------
    ParseError
        Malformed JSON, with line and column.
    SchemaError
        Missing or ill-typed field, named by its path (e.g. ``edges[0].r``).
    NotATree, RootDegreeViolation
        Operational edges do not form a valid radial grid.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    version = _field(doc, "version", "version", int)
    if version != GRID_FILE_VERSION:
        raise SchemaError("version", f"unsupported version {version}")
    n = _field(doc, "num_nodes", "num_nodes", int)
    root = _field(doc, "root", "root", int)
    edges = _field(doc, "edges", "edges", list)
    operational = []
    candidates: dict[tuple[int, int], Impedance] = {}
    for i, e in enumerate(edges):
        path = f"edges[{i}]"
        u = _field(e, "u", f"{path}.u", int)
        v = _field(e, "v", f"{path}.v", int)
        r = _field(e, "r", f"{path}.r", float)
        x = _field(e, "x", f"{path}.x", float)
        op = _field(e, "operational", f"{path}.operational", bool)
        if r <= 0:
            raise SchemaError(f"{path}.r", "must be positive")
        if x <= 0:
            raise SchemaError(f"{path}.x", "must be positive")
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise SchemaError(f"{path}.u", f"endpoints ({u}, {v}) invalid for {n} nodes")
        z = Impedance(float(r), float(x))
        key = edge_key(u, v)
        if key in candidates:
            raise SchemaError(path, f"duplicate edge {key}")
        candidates[key] = z
        if op:
            operational.append((u, v, z))
    topology = build_tree(n, operational, root)
    if "base_loads" not in doc:
        return GridFile(topology, CandidateEdgeSet(candidates), None)
    loads = np.zeros((n, 2))
    for i, item in enumerate(_field(doc, "base_loads", "base_loads", list)):
        path = f"base_loads[{i}]"
        node = _field(item, "node", f"{path}.node", int)
        if not 0 <= node < n:
            raise SchemaError(f"{path}.node", f"node {node} outside 0..{n - 1}")
        loads[node] = (_field(item, "p", f"{path}.p", float), _field(item, "q", f"{path}.q", float))
    return GridFile(topology, CandidateEdgeSet(candidates), loads)


def emit_grid_json(topology: GridTopology, candidates: CandidateEdgeSet | None = None, base_loads=None) -> bytes:
    """Canonical version-1 document: sorted keys, edges ordered by endpoint pair."""
    ops = topology.impedances
    allz = dict(ops)
    if candidates is not None:
        for k, z in candidates.impedances.items():
            allz.setdefault(k, z)
    edges = [
        {"u": u, "v": v, "r": z.r, "x": z.x, "operational": (u, v) in ops}
        for (u, v), z in sorted(allz.items())
    ]
    doc = {
        "version": GRID_FILE_VERSION,
        "num_nodes": topology.num_nodes,
        "root": topology.root,
        "edges": edges,
    }
    if base_loads is not None:
        loads = np.asarray(base_loads, dtype=float)
        doc["base_loads"] = [
            {"node": i, "p": float(loads[i, 0]), "q": float(loads[i, 1])}
            for i in range(len(loads))
            if loads[i, 0] != 0 or loads[i, 1] != 0
        ]
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Matpower subset
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_ASSIGN = re.compile(r"^mpc\.(\w+)\s*=\s*(.*)$", re.S)
_FUNCTION = re.compile(r"^function\s+\w+\s*=\s*\w+\s*$")
_STRING = re.compile(r"^'[^']*'$")

# column positions (0-based) in the Matpower bus and branch matrices
BUS_I, BUS_TYPE, PD, QD = 0, 1, 2, 3
F_BUS, T_BUS, BR_R, BR_X, BR_STATUS = 0, 1, 2, 3, 10
REF = 3


def _statements(text: str):
    """Split on ';' and newlines outside brackets; yield (line_no, statement)."""
    buf: list[str] = []
    depth = 0
    start = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0]
        for ch in line:
            if start is None and not ch.isspace():
                start = lineno
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            if ch == ";" and depth == 0:
                stmt = "".join(buf).strip()
                if stmt:
                    yield start, stmt
                buf, start = [], None
                continue
            buf.append(ch)
        if depth == 0:
            stmt = "".join(buf).strip()
            if stmt:
                yield start, stmt
            buf, start = [], None
        else:
            buf.append("\n")
    if depth != 0:
        raise ParseError("unterminated matrix", start)


def _matrix(body: str, lineno: int, name: str) -> np.ndarray:
    inner = body.strip()[1:-1]
    rows = []
    for row in re.split(r"[;\n]", inner):
        toks = row.replace(",", " ").split()
        if not toks:
            continue
        for t in toks:
            if not _NUMBER.match(t):
                raise UnsupportedConstruct(f"line {lineno}: non-numeric entry {t!r} in mpc.{name}")
        rows.append([float(t) for t in toks])
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError(f"mpc.{name}: ragged rows", lineno)
    return np.array(rows)


def parse_matpower_case(text: str) -> GridFile:
    """Read a radial Matpower case written as plain numeric matrices.

    The reference bus (type 3) becomes node 0 and the remaining buses take ids
    1, 2, ... in file order. Branches with status 0 become candidate lines
    only. Loads are P_D and Q_D divided by ``mpc.baseMVA``.

    Raises
    ------
    UnsupportedConstruct
        Indexed assignments, expressions or anything beyond plain matrices.
    NotATree
        The in-service branches are not a spanning tree.
    """
    fields: dict[str, object] = {}
    for lineno, stmt in _statements(text):
        if _FUNCTION.match(stmt):
            continue
        m = _ASSIGN.match(stmt)
        if not m:
            raise UnsupportedConstruct(f"line {lineno}: unsupported statement {stmt.splitlines()[0]!r}")
        name, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("[") and rhs.endswith("]"):
            fields[name] = _matrix(rhs, lineno, name)
        elif _NUMBER.match(rhs):
            fields[name] = float(rhs)
        elif _STRING.match(rhs):
            fields[name] = rhs[1:-1]
        else:
            raise UnsupportedConstruct(f"line {lineno}: mpc.{name} is not a plain number, string or matrix")
    for key in ("baseMVA", "bus", "branch"):
        if key not in fields:
            raise SchemaError(f"mpc.{key}")
    base = fields["baseMVA"]
    bus, branch = fields["bus"], fields["branch"]
    if not isinstance(base, float) or base <= 0:
        raise SchemaError("mpc.baseMVA", "must be a positive number")
    if not isinstance(bus, np.ndarray) or bus.ndim != 2 or bus.shape[1] < 4:
        raise SchemaError("mpc.bus", "needs at least 4 columns")
    if not isinstance(branch, np.ndarray) or branch.ndim != 2 or branch.shape[1] < 4:
        raise SchemaError("mpc.branch", "needs at least 4 columns")
    refs = [i for i in range(len(bus)) if int(bus[i, BUS_TYPE]) == REF]
    if len(refs) != 1:
        raise SchemaError("mpc.bus", f"expected exactly one reference bus, found {len(refs)}")
    order = refs + [i for i in range(len(bus)) if i != refs[0]]
    ids = {int(bus[i, BUS_I]): k for k, i in enumerate(order)}
    if len(ids) != len(bus):
        raise SchemaError("mpc.bus", "duplicate bus numbers")
    n = len(bus)
    loads = np.zeros((n, 2))
    for i in range(n):
        loads[ids[int(bus[i, BUS_I])]] = (bus[i, PD] / base, bus[i, QD] / base)
    operational = []
    cand: dict[tuple[int, int], Impedance] = {}
    for k, row in enumerate(branch):
        try:
            u, v = ids[int(row[F_BUS])], ids[int(row[T_BUS])]
        except KeyError as exc:
            raise SchemaError(f"mpc.branch[{k}]", f"unknown bus {exc.args[0]}") from None
        if row[BR_R] <= 0 or row[BR_X] <= 0:
            raise SchemaError(f"mpc.branch[{k}]", "needs positive r and x")
        z = Impedance(float(row[BR_R]), float(row[BR_X]))
        status = row[BR_STATUS] if branch.shape[1] > BR_STATUS else 1.0
        cand.setdefault(edge_key(u, v), z)
        if status != 0:
            operational.append((u, v, z))
    topology = build_tree(n, operational, 0)
    return GridFile(topology, CandidateEdgeSet(cand), loads)


def topology_error(estimated: Iterable[tuple[int, int]], true: Iterable[tuple[int, int]]) -> float:
    """Share of wrong edges: |estimated xor true| / (2 |true|), capped at 1."""
    est = {edge_key(*e) for e in estimated}
    tru = {edge_key(*e) for e in true}
    if not tru:
        return 0.0 if not est else 1.0
    return min(1.0, len(est ^ tru) / (2 * len(tru)))
