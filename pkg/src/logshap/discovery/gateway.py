"""BPMN-like graphs of tasks and gateways."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass

from .tree import AND, LOOP, SEQ, XOR, ProcessTree

START, END, TASK = "start", "end", "task"
XOR_SPLIT, XOR_JOIN, AND_SPLIT, AND_JOIN = "xor-split", "xor-join", "and-split", "and-join"
NODE_KINDS = (START, END, TASK, XOR_SPLIT, XOR_JOIN, AND_SPLIT, AND_JOIN)
SPLITS = (XOR_SPLIT, AND_SPLIT)
JOINS = (XOR_JOIN, AND_JOIN)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GatewayGraph:
    """``nodes`` maps node id to ``(kind, label)``; ``edges`` is a sorted tuple of pairs."""

    nodes: dict[str, tuple[str, str | None]]
    edges: tuple[tuple[str, str], ...]

    def kind(self, node: str) -> str:
        return self.nodes[node][0]

    def successors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for a, b in self.edges:
            out[a].append(b)
        return out

    def predecessors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for a, b in self.edges:
            out[b].append(a)
        return out

    def count(self, kind: str) -> int:
        return sum(1 for k, _ in self.nodes.values() if k == kind)

    def validate(self) -> None:
        """Raise GraphError unless the structural invariants hold."""
        starts = [n for n, (k, _) in self.nodes.items() if k == START]
        ends = [n for n, (k, _) in self.nodes.items() if k == END]
        if len(starts) != 1 or len(ends) != 1:
            raise GraphError("need exactly one start and one end node")
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise GraphError(f"edge {a}->{b} references an unknown node")
        succ, pred = self.successors(), self.predecessors()
        if pred.get(starts[0]) or succ.get(ends[0]):
            raise GraphError("start has incoming or end has outgoing edges")
        for n, (k, _) in self.nodes.items():
            if k in SPLITS and len(succ.get(n, ())) < 2:
                raise GraphError(f"split {n} has out-degree < 2")
            if k in JOINS and len(pred.get(n, ())) < 2:
                raise GraphError(f"join {n} has in-degree < 2")
        fwd = _reach(starts[0], succ)
        bwd = _reach(ends[0], pred)
        missing = set(self.nodes) - (fwd & bwd)
        if missing:
            raise GraphError(f"nodes off every start-end path: {sorted(missing)}")

    def to_text(self) -> str:
        lines = []
        for n in sorted(self.nodes):
            k, label = self.nodes[n]
            lines.append(f"node {n} {k}" + (f" {label}" if label is not None else ""))
        lines.extend(f"edge {a} {b}" for a, b in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GatewayGraph":
        nodes: dict[str, tuple[str, str | None]] = {}
        edges = []
        for raw in text.splitlines():
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "node" and len(parts) in (3, 4):
                if parts[2] not in NODE_KINDS:
                    raise GraphError(f"unknown node kind in line {raw!r}")
                nodes[parts[1]] = (parts[2], parts[3] if len(parts) == 4 else None)
            elif parts[0] == "edge" and len(parts) == 3:
                edges.append((parts[1], parts[2]))
            else:
                raise GraphError(f"cannot parse line {raw!r}")
        return cls(nodes, tuple(sorted(edges)))


def _reach(src: str, adj: dict[str, list[str]]) -> set[str]:
    seen = {src}
    todo = deque([src])
    while todo:
        for m in adj.get(todo.popleft(), ()):
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


class _Builder:
    def __init__(self) -> None:
        self.nodes: dict[str, tuple[str, str | None]] = {}
        self.edges: list[tuple[str, str]] = []
        self._n = 0

    def add(self, kind: str, label: str | None = None) -> str:
        self._n += 1
        nid = f"n{self._n}"
        self.nodes[nid] = (kind, label)
        return nid

    def edge(self, a: str, b: str) -> None:
        self.edges.append((a, b))

    def build(self) -> GatewayGraph:
        return GatewayGraph(dict(self.nodes), tuple(sorted(self.edges)))


def tree_to_gateway_graph(tree: ProcessTree) -> GatewayGraph:
    b = _Builder()

    # returns (entry, exit) node ids, or None for behaviour that is a pure pass-through
    def build(node: ProcessTree) -> tuple[str, str] | None:
        if node.is_leaf:
            if node.label is None:
                return None
            t = b.add(TASK, node.label)
            return t, t
        if node.operator == SEQ:
            parts = [p for p in (build(c) for c in node.children) if p is not None]
            if not parts:
                return None
            for (_, x), (e, _) in zip(parts, parts[1:]):
                b.edge(x, e)
            return parts[0][0], parts[-1][1]
        if node.operator in (XOR, AND):
            if len(node.children) == 1:
                return build(node.children[0])
            split_kind, join_kind = (XOR_SPLIT, XOR_JOIN) if node.operator == XOR else (AND_SPLIT, AND_JOIN)
            s, j = b.add(split_kind), b.add(join_kind)
            for c in node.children:
                p = build(c)
                if p is None:
                    b.edge(s, j)
                else:
                    b.edge(s, p[0])
                    b.edge(p[1], j)
            return s, j
        if node.operator == LOOP:
            j, s = b.add(XOR_JOIN), b.add(XOR_SPLIT)
            body = build(node.children[0])
            if body is None:
                b.edge(j, s)
            else:
                b.edge(j, body[0])
                b.edge(body[1], s)
            redo = build(node.children[1])
            if redo is None:
                b.edge(s, j)
            else:
                b.edge(s, redo[0])
                b.edge(redo[1], j)
            return j, s
        raise AssertionError(node.operator)

    start = b.add(START)
    end = b.add(END)
    inner = build(tree)
    if inner is None:
        b.edge(start, end)
    else:
        b.edge(start, inner[0])
        b.edge(inner[1], end)
    return b.build()
