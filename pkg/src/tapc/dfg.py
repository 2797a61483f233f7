"""Multiplication-free data-flow graphs for ternary matrix rows.

Each LinearSystem row is a signed sum of patch slots, so the whole system
compiles to chains of two-operand adds/subs. Unary negation is never
materialized: a value consumed with flipped sign turns an add into a sub
(and vice versa), and a row that is exactly the negation of a node is
tagged with a minus sign that the accumulation phase resolves by
subtracting instead of adding.

The optimizer is a greedy signed-pair extractor: the two-term pattern
(+-x_i +-x_j) occurring in the most rows, counting a pattern and its
negation together, is hoisted into a temporary, substituted and the count
repeated until no pattern occurs twice. Scope is one LinearSystem, i.e.
one input channel of one layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lowering import LinearSystem

INPUT, ADD, SUB, ZERO = "input", "add", "sub", "zero"


@dataclass
class DfgNode:
    id: int
    kind: str
    slot: int = -1            # input nodes: patch slot index
    lhs: int = -1             # add/sub: operand node ids
    rhs: int = -1
    output_tags: list = field(default_factory=list)   # (row, sign) pairs
    lo: int = 0               # value interval, filled by annotate_bitwidths
    hi: int = 0
    width: int = 0            # minimal two's-complement width for [lo, hi]
    use_count: int = 0        # operand uses plus output tags


@dataclass
class DataFlowGraph:
    """Topologically ordered nodes computing every row of one LinearSystem."""

    channel: int
    n_rows: int
    n_slots: int
    nodes: list[DfgNode] = field(default_factory=list)

    @property
    def op_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind in (ADD, SUB))

    def row_tags(self) -> list[tuple[int, int]]:
        """Per output row: (node id, sign), exactly one tag per row."""
        tags: dict[int, tuple[int, int]] = {}
        for node in self.nodes:
            for row, sign in node.output_tags:
                tags[row] = (node.id, sign)
        return [tags[r] for r in range(self.n_rows)]


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _rows_as_terms(matrix: np.ndarray) -> list[dict[int, int]]:
    rows = []
    for r in range(matrix.shape[0]):
        row = {}
        for k in np.flatnonzero(matrix[r]):
            row[int(k)] = int(matrix[r, k])
        rows.append(row)
    return rows


def _emit(channel: int, n_rows: int, n_slots: int,
          temp_defs: list[tuple[int, int, int]],
          rows: list[dict[int, int]]) -> DataFlowGraph:
    """Materialize term lists as a node graph.

    temp_defs entries are (u, sign_v, v): temporary atom n_slots+i equals
    atom u plus sign_v * atom v. Atoms below n_slots are patch slots.
    """
    g = DataFlowGraph(channel, n_rows, n_slots)
    atom_node: dict[int, int] = {}
    zero_id = -1

    def node_for(atom: int) -> int:
        if atom not in atom_node:
            if atom >= n_slots:
                raise ValueError("temporary referenced before definition")
            n = DfgNode(len(g.nodes), INPUT, slot=atom)
            g.nodes.append(n)
            atom_node[atom] = n.id
        return atom_node[atom]

    def new_op(kind: str, lhs: int, rhs: int) -> int:
        n = DfgNode(len(g.nodes), kind, lhs=lhs, rhs=rhs)
        g.nodes.append(n)
        g.nodes[lhs].use_count += 1
        g.nodes[rhs].use_count += 1
        return n.id

    for i, (u, sv, v) in enumerate(temp_defs):
        lhs, rhs = node_for(u), node_for(v)
        atom_node[n_slots + i] = new_op(ADD if sv > 0 else SUB, lhs, rhs)

    for r, row in enumerate(rows):
        terms = sorted(row.items())
        if not terms:
            if zero_id < 0:
                zero = DfgNode(len(g.nodes), ZERO)
                g.nodes.append(zero)
                zero_id = zero.id
            g.nodes[zero_id].output_tags.append((r, 1))
            g.nodes[zero_id].use_count += 1
            continue
        (a0, s0), rest = terms[0], terms[1:]
        cur = node_for(a0)
        for a, s in rest:
            cur = new_op(ADD if s == s0 else SUB, cur, node_for(a))
        g.nodes[cur].output_tags.append((r, s0))
        g.nodes[cur].use_count += 1
    return g


def build_dfg(system: LinearSystem) -> DataFlowGraph:
    """Naive lowering: each row becomes a left-to-right chain, nothing shared."""
    rows = _rows_as_terms(system.matrix)
    return _emit(system.channel, system.matrix.shape[0], system.matrix.shape[1], [], rows)


def _terms_of(g: DataFlowGraph) -> list[dict[int, int]]:
    """Expand every output row back into signed slot terms (exact for DAGs)."""
    memo: dict[int, dict[int, int]] = {}

    def expand(nid: int) -> dict[int, int]:
        if nid in memo:
            return memo[nid]
        node = g.nodes[nid]
        if node.kind == INPUT:
            out = {node.slot: 1}
        elif node.kind == ZERO:
            out = {}
        else:
            out = dict(expand(node.lhs))
            sign = 1 if node.kind == ADD else -1
            for a, s in expand(node.rhs).items():
                out[a] = out.get(a, 0) + sign * s
                if out[a] == 0:
                    del out[a]
            # ternary rows never repeat a slot, so coefficients stay in {-1, +1}
            if any(abs(s) > 1 for s in out.values()):
                raise ValueError("non-ternary expansion; graph is not row-affine")
        memo[nid] = out
        return out

    rows: list[dict[int, int]] = [dict() for _ in range(g.n_rows)]
    for node in g.nodes:
        for row, sign in node.output_tags:
            rows[row] = {a: sign * s for a, s in expand(node.id).items()}
    return rows


def _canonical(u: int, su: int, v: int, sv: int) -> tuple[tuple[int, int, int], int]:
    """Canonical key for a signed pair and the sign relating pattern to key."""
    if u > v:
        u, su, v, sv = v, sv, u, su
    if su < 0:
        return (u, v, -sv), -1
    return (u, v, sv), 1


def eliminate_common_subexpressions(g: DataFlowGraph) -> DataFlowGraph:
    """Greedy shared-pair hoisting over one channel's rows.

    Ties break toward the lexicographically lowest (i, j) pair with the
    positive-sign form preferred, so rebuilds are deterministic. Every
    extraction with k matching rows trades k chain ops for one temporary,
    so op_count never increases.
    """
    rows = _terms_of(g)
    n_slots = g.n_slots
    temp_defs: list[tuple[int, int, int]] = []

    while True:
        counts: dict[tuple[int, int, int], int] = {}
        for row in rows:
            atoms = sorted(row.items())
            for i in range(len(atoms)):
                for j in range(i + 1, len(atoms)):
                    (u, su), (v, sv) = atoms[i], atoms[j]
                    key, _ = _canonical(u, su, v, sv)
                    counts[key] = counts.get(key, 0) + 1
        if not counts:
            break
        best_key = min(counts, key=lambda k: (-counts[k], k[0], k[1], 0 if k[2] > 0 else 1))
        if counts[best_key] < 2:
            break
        u, v, sv = best_key
        temp = n_slots + len(temp_defs)
        temp_defs.append((u, sv, v))
        for row in rows:
            if u in row and v in row:
                if row[u] == 1 and row[v] == sv:
                    del row[u], row[v]
                    row[temp] = 1
                elif row[u] == -1 and row[v] == -sv:
                    del row[u], row[v]
                    row[temp] = -1
    return _emit(g.channel, g.n_rows, n_slots, temp_defs, rows)


# ---------------------------------------------------------------------------
# analysis and evaluation
# ---------------------------------------------------------------------------

def min_signed_width(lo: int, hi: int) -> int:
    """Smallest two's-complement width whose range covers [lo, hi]."""
    w = 1
    while lo < -(1 << (w - 1)) or hi > (1 << (w - 1)) - 1:
        w += 1
    return w


def annotate_bitwidths(g: DataFlowGraph, input_bits: int) -> DataFlowGraph:
    """Interval analysis: inputs are unsigned input_bits wide, ops combine exactly."""
    top = (1 << input_bits) - 1
    for node in g.nodes:
        if node.kind == INPUT:
            node.lo, node.hi = 0, top
        elif node.kind == ZERO:
            node.lo = node.hi = 0
        else:
            l, r = g.nodes[node.lhs], g.nodes[node.rhs]
            if node.kind == ADD:
                node.lo, node.hi = l.lo + r.lo, l.hi + r.hi
            else:
                node.lo, node.hi = l.lo - r.hi, l.hi - r.lo
        node.width = min_signed_width(node.lo, node.hi)
    return g


def dfg_evaluate(g: DataFlowGraph, patch, check_ranges: bool = False) -> np.ndarray:
    """Evaluate all rows on one patch vector, honoring output sign tags.

    With check_ranges=True every intermediate is asserted against its
    annotated interval (annotate_bitwidths must have run).
    """
    patch = np.asarray(patch, dtype=np.int64)
    if patch.shape != (g.n_slots,):
        raise ValueError(f"patch must have {g.n_slots} entries")
    values = np.zeros(len(g.nodes), dtype=np.int64)
    out = np.zeros(g.n_rows, dtype=np.int64)
    for node in g.nodes:
        if node.kind == INPUT:
            v = int(patch[node.slot])
        elif node.kind == ZERO:
            v = 0
        elif node.kind == ADD:
            v = int(values[node.lhs] + values[node.rhs])
        else:
            v = int(values[node.lhs] - values[node.rhs])
        if check_ranges and not node.lo <= v <= node.hi:
            raise AssertionError(
                f"node {node.id} ({node.kind}) value {v} outside [{node.lo}, {node.hi}]")
        values[node.id] = v
        for row, sign in node.output_tags:
            out[row] = sign * v
    return out
