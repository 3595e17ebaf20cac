"""Workflow nets: construction from trees and gateway graphs, soundness check."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .gateway import AND_JOIN, AND_SPLIT, END, START, TASK, XOR_JOIN, XOR_SPLIT, GatewayGraph
from .tree import AND, LOOP, SEQ, XOR, ProcessTree

Marking = tuple[tuple[str, int], ...]

SOUND, UNSOUND, UNKNOWN = "sound", "unsound", "unknown"


class NetError(ValueError):
    pass


def marking(tokens: Mapping[str, int] | Iterable[tuple[str, int]]) -> Marking:
    items = tokens.items() if isinstance(tokens, Mapping) else tokens
    return tuple(sorted((p, n) for p, n in items if n > 0))


@dataclass(frozen=True)
class PetriNet:
    """Place/transition net with unit arc weights.

    ``transitions`` maps a transition id to its label (None = silent).
    ``pre``/``post`` map a transition id to its input/output places.
    """

    places: tuple[str, ...]
    transitions: dict[str, str | None]
    pre: dict[str, tuple[str, ...]]
    post: dict[str, tuple[str, ...]]
    initial: Marking
    final: Marking

    @property
    def source(self) -> str:
        return self.initial[0][0]

    @property
    def sink(self) -> str:
        return self.final[0][0]

    def validate_workflow(self) -> None:
        if len(self.initial) != 1 or self.initial[0][1] != 1:
            raise NetError("initial marking must be one token on a single source place")
        if len(self.final) != 1 or self.final[0][1] != 1:
            raise NetError("final marking must be one token on a single sink place")
        src, snk = self.source, self.sink
        if any(src in outs for outs in self.post.values()):
            raise NetError("source place has incoming arcs")
        if any(snk in ins for ins in self.pre.values()):
            raise NetError("sink place has outgoing arcs")

    def enabled(self, m: Mapping[str, int], t: str) -> bool:
        return all(m.get(p, 0) >= 1 for p in self.pre[t])

    def fire(self, m: Marking, t: str) -> Marking:
        c = Counter(dict(m))
        for p in self.pre[t]:
            c[p] -= 1
        for p in self.post[t]:
            c[p] += 1
        return marking(c)

    def labels(self) -> set[str]:
        return {l for l in self.transitions.values() if l is not None}

    def to_text(self) -> str:
        lines = [f"place {p}" for p in self.places]
        for t in sorted(self.transitions):
            lines.append(f"transition {t} {self.transitions[t] or '-'}")
        for t in sorted(self.transitions):
            lines.extend(f"arc {p} {t}" for p in self.pre[t])
            lines.extend(f"arc {t} {p}" for p in self.post[t])
        lines.extend(f"initial {p} {n}" for p, n in self.initial)
        lines.extend(f"final {p} {n}" for p, n in self.final)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PetriNet":
        places: list[str] = []
        trans: dict[str, str | None] = {}
        arcs: list[tuple[str, str]] = []
        init, fin = [], []
        for raw in text.splitlines():
            parts = raw.split()
            if not parts:
                continue
            kind = parts[0]
            if kind == "place" and len(parts) == 2:
                places.append(parts[1])
            elif kind == "transition" and len(parts) == 3:
                trans[parts[1]] = None if parts[2] == "-" else parts[2]
            elif kind == "arc" and len(parts) == 3:
                arcs.append((parts[1], parts[2]))
            elif kind in ("initial", "final") and len(parts) == 3:
                (init if kind == "initial" else fin).append((parts[1], int(parts[2])))
            else:
                raise NetError(f"cannot parse line {raw!r}")
        pre: dict[str, list[str]] = {t: [] for t in trans}
        post: dict[str, list[str]] = {t: [] for t in trans}
        for a, b in arcs:
            if a in trans:
                post[a].append(b)
            elif b in trans:
                pre[b].append(a)
            else:
                raise NetError(f"arc {a}->{b} does not touch a transition")
        return cls(
            tuple(places),
            trans,
            {t: tuple(v) for t, v in pre.items()},
            {t: tuple(v) for t, v in post.items()},
            marking(init),
            marking(fin),
        )


class _NetBuilder:
    def __init__(self) -> None:
        self.places: list[str] = []
        self.trans: dict[str, str | None] = {}
        self.pre: dict[str, list[str]] = {}
        self.post: dict[str, list[str]] = {}

    def place(self) -> str:
        p = f"p{len(self.places)}"
        self.places.append(p)
        return p

    def transition(self, label: str | None, ins: Iterable[str], outs: Iterable[str]) -> str:
        t = f"t{len(self.trans)}"
        self.trans[t] = label
        self.pre[t] = list(ins)
        self.post[t] = list(outs)
        return t

    def build(self, source: str, sink: str) -> PetriNet:
        return PetriNet(
            tuple(self.places),
            dict(self.trans),
            {t: tuple(v) for t, v in self.pre.items()},
            {t: tuple(v) for t, v in self.post.items()},
            ((source, 1),),
            ((sink, 1),),
        )


def tree_to_petri(tree: ProcessTree) -> PetriNet:
    b = _NetBuilder()

    def build(node: ProcessTree, entry: str, exit_: str) -> None:
        if node.is_leaf:
            b.transition(node.label, [entry], [exit_])
        elif node.operator == SEQ:
            cur = entry
            for i, c in enumerate(node.children):
                nxt = exit_ if i == len(node.children) - 1 else b.place()
                build(c, cur, nxt)
                cur = nxt
        elif node.operator == XOR:
            for c in node.children:
                build(c, entry, exit_)
        elif node.operator == AND:
            starts = [b.place() for _ in node.children]
            ends = [b.place() for _ in node.children]
            b.transition(None, [entry], starts)
            for c, s, e in zip(node.children, starts, ends):
                build(c, s, e)
            b.transition(None, ends, [exit_])
        elif node.operator == LOOP:
            # private entry/mid places keep redo tokens out of the shared entry place
            inner, mid = b.place(), b.place()
            b.transition(None, [entry], [inner])
            build(node.children[0], inner, mid)
            build(node.children[1], mid, inner)
            b.transition(None, [mid], [exit_])
        else:
            raise AssertionError(node.operator)

    source, sink = b.place(), b.place()
    build(tree, source, sink)
    return b.build(source, sink)


def graph_to_petri(graph: GatewayGraph) -> PetriNet:
    """Start, end and xor gateways become places; tasks and and-gateways become transitions.

    An edge between two place-like nodes gets a silent transition, an edge
    between two transition-like nodes gets a fresh place.
    """
    b = _NetBuilder()
    place_like = {START, END, XOR_SPLIT, XOR_JOIN}
    node_place: dict[str, str] = {}
    for n in sorted(graph.nodes):
        if graph.kind(n) in place_like:
            node_place[n] = b.place()
    ins: dict[str, list[str]] = {n: [] for n in graph.nodes}
    outs: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for a, c in graph.edges:
        a_pl, c_pl = a in node_place, c in node_place
        if a_pl and c_pl:
            b.transition(None, [node_place[a]], [node_place[c]])
        elif a_pl:
            ins[c].append(node_place[a])
        elif c_pl:
            outs[a].append(node_place[c])
        else:
            p = b.place()
            outs[a].append(p)
            ins[c].append(p)
    for n in sorted(graph.nodes):
        kind, label = graph.nodes[n]
        if kind == TASK:
            b.transition(label, ins[n], outs[n])
        elif kind in (AND_SPLIT, AND_JOIN):
            b.transition(None, ins[n], outs[n])
    start = next(n for n in graph.nodes if graph.kind(n) == START)
    end = next(n for n in graph.nodes if graph.kind(n) == END)
    return b.build(node_place[start], node_place[end])


def check_soundness(net: PetriNet, state_cap: int = 100_000) -> str:
    """Explicit-state soundness check of a workflow net.

    Sound iff the final marking is reachable from every reachable marking,
    no reachable marking strictly covers the final marking, and every
    transition fires somewhere. Returns ``"unknown"`` once more than
    ``state_cap`` markings would be needed to decide.
    """
    net.validate_workflow()
    place_ix = {p: i for i, p in enumerate(net.places)}
    order = sorted(net.transitions)
    pre = [tuple(place_ix[p] for p in net.pre[t]) for t in order]
    post = [tuple(place_ix[p] for p in net.post[t]) for t in order]

    def vec(m: Marking) -> tuple[int, ...]:
        v = [0] * len(place_ix)
        for p, n in m:
            v[place_ix[p]] = n
        return tuple(v)

    init, final = vec(net.initial), vec(net.final)
    final_marked = [i for i, n in enumerate(final) if n]
    index = {init: 0}
    edges: list[list[int]] = [[]]
    fired = [False] * len(order)
    todo = deque([init])
    while todo:
        m = todo.popleft()
        if m != final and all(m[i] >= final[i] for i in final_marked):
            return UNSOUND
        src = index[m]
        for k in range(len(order)):
            if not all(m[i] for i in pre[k]):
                continue
            fired[k] = True
            v = list(m)
            for i in pre[k]:
                v[i] -= 1
            for i in post[k]:
                v[i] += 1
            m2 = tuple(v)
            j = index.get(m2)
            if j is None:
                if len(index) >= state_cap:
                    return UNKNOWN
                j = index[m2] = len(index)
                edges.append([])
                todo.append(m2)
            edges[src].append(j)
    if not all(fired) or final not in index:
        return UNSOUND
    back: list[list[int]] = [[] for _ in index]
    for a, outs in enumerate(edges):
        for c in outs:
            back[c].append(a)
    seen = {index[final]}
    todo_i = deque(seen)
    while todo_i:
        for a in back[todo_i.popleft()]:
            if a not in seen:
                seen.add(a)
                todo_i.append(a)
    return SOUND if len(seen) == len(index) else UNSOUND
