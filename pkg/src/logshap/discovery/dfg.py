"""Frequency-filtered directly-follows miner producing gateway graphs."""

from __future__ import annotations

from collections import Counter, defaultdict, deque

from ..eventlog import EventLog, LogError
from ..features import quantile
from .gateway import (
    AND_JOIN,
    AND_SPLIT,
    END,
    START,
    TASK,
    XOR_JOIN,
    XOR_SPLIT,
    GatewayGraph,
)

_START, _END = "__start__", "__end__"


def directly_follows(log: EventLog) -> Counter:
    """Arc frequencies, including artificial start and end arcs."""
    arcs: Counter = Counter()
    for seq in log.sequences():
        path = (_START, *seq, _END)
        arcs.update(zip(path, path[1:]))
    return arcs


def _reachable(src: str, arcs, forward: bool = True) -> set[str]:
    adj = defaultdict(list)
    for a, b in arcs:
        if forward:
            adj[a].append(b)
        else:
            adj[b].append(a)
    seen = {src}
    todo = deque([src])
    while todo:
        for m in adj[todo.popleft()]:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


def _repair(kept: set, freq: Counter, nodes: set[str]) -> set:
    """Re-add the heaviest original arcs until every node lies on a start-end path."""
    kept = set(kept)
    ranked = sorted(freq, key=lambda arc: (-freq[arc], arc))
    while True:
        fwd = _reachable(_START, kept)
        if nodes <= fwd:
            break
        arc = next(a for a in ranked if a not in kept and a[0] in fwd and a[1] not in fwd)
        kept.add(arc)
    while True:
        bwd = _reachable(_END, kept, forward=False)
        if nodes <= bwd:
            break
        arc = next(a for a in ranked if a not in kept and a[1] in bwd and a[0] not in bwd)
        kept.add(arc)
    return kept


def dfg_discover(log: EventLog, eta: float = 0.0, concurrency_threshold: float = 0.7) -> GatewayGraph:
    """Mine a gateway graph from the filtered directly-follows graph.

    Arcs below the ``eta`` quantile of arc frequencies are pruned, then the
    heaviest pruned arcs are restored until every activity is connected
    from start to end. Activity pairs with arcs in both directions whose
    frequencies are balanced (relative difference below
    ``concurrency_threshold``) are treated as concurrent: the two arcs are
    dropped and shared splits/joins over them become and-gateways.
    """
    if len(log) == 0:
        raise LogError("cannot discover a model from an empty log")
    freq = directly_follows(log)
    nodes = {a for arc in freq for a in arc}

    threshold = quantile(list(freq.values()), eta)
    kept = _repair({a for a in freq if freq[a] >= threshold}, freq, nodes)

    concurrent = set()
    for a, b in kept:
        if a < b and a not in (_START, _END) and b not in (_START, _END) and (b, a) in kept:
            ab, ba = freq[(a, b)], freq[(b, a)]
            if abs(ab - ba) / (ab + ba) < concurrency_threshold:
                concurrent.add((a, b))
    if concurrent:
        dropped = {(a, b) for a, b in concurrent} | {(b, a) for a, b in concurrent}
        kept = _repair(kept - dropped, freq, nodes)
        # a concurrency arc restored for connectivity cancels that pair
        concurrent = {(a, b) for a, b in concurrent if (a, b) not in kept and (b, a) not in kept}

    def parallel(xs: list[str]) -> bool:
        return all(
            (min(x, y), max(x, y)) in concurrent for i, x in enumerate(xs) for y in xs[i + 1 :]
        )

    succ: dict[str, list[str]] = defaultdict(list)
    pred: dict[str, list[str]] = defaultdict(list)
    for a, b in sorted(kept):
        succ[a].append(b)
        pred[b].append(a)

    gnodes: dict[str, tuple[str, str | None]] = {"start": (START, None), "end": (END, None)}
    ident = {_START: "start", _END: "end"}
    for i, act in enumerate(sorted(nodes - {_START, _END})):
        ident[act] = f"a{i}"
        gnodes[f"a{i}"] = (TASK, act)

    out_port, in_port = {}, {}
    edges = []
    for n in sorted(nodes):
        out_port[n] = in_port[n] = ident[n]
        if len(succ[n]) >= 2:
            s = f"s_{ident[n]}"
            gnodes[s] = (AND_SPLIT if parallel(succ[n]) else XOR_SPLIT, None)
            edges.append((ident[n], s))
            out_port[n] = s
        if len(pred[n]) >= 2:
            j = f"j_{ident[n]}"
            gnodes[j] = (AND_JOIN if parallel(pred[n]) else XOR_JOIN, None)
            edges.append((j, ident[n]))
            in_port[n] = j
    for a, b in sorted(kept):
        edges.append((out_port[a], in_port[b]))
    return GatewayGraph(gnodes, tuple(sorted(edges)))
