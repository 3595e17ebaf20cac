"""Basic inductive miner: recursive cut detection on the directly-follows graph."""

from __future__ import annotations

from collections import Counter, defaultdict
from itertools import combinations

from ..eventlog import EventLog, LogError
from .tree import AND, LOOP, SEQ, XOR, ProcessTree

Log = Counter  # activity tuple -> multiplicity


def inductive_discover(log: EventLog) -> ProcessTree:
    if len(log) == 0:
        raise LogError("cannot discover a model from an empty log")
    return _mine(Counter(log.sequences()))


def _mine(log: Log) -> ProcessTree:
    if () in log:
        rest = Counter({t: n for t, n in log.items() if t})
        if not rest:
            return ProcessTree.tau()
        return ProcessTree.op(XOR, ProcessTree.tau(), _mine(rest))

    alphabet = sorted({a for t in log for a in t})
    if len(alphabet) == 1:
        a = ProcessTree.leaf(alphabet[0])
        if all(len(t) == 1 for t in log):
            return a
        return ProcessTree.op(LOOP, a, ProcessTree.tau())

    dfg, starts, ends = _dfg(log)
    for detect, split, op in (
        (_xor_cut, _split_xor, XOR),
        (_seq_cut, _split_project, SEQ),
        (_and_cut, _split_project, AND),
        (_loop_cut, _split_loop, LOOP),
    ):
        cut = detect(alphabet, dfg, starts, ends)
        if cut is None:
            continue
        sublogs = split(log, cut)
        kids = [_mine(s) for s in sublogs]
        if op == LOOP:
            redo = kids[1] if len(kids) == 2 else ProcessTree.op(XOR, *kids[1:])
            return ProcessTree.op(LOOP, kids[0], redo)
        return ProcessTree.op(op, *kids)

    # flower fall-through
    body = ProcessTree.op(XOR, *(ProcessTree.leaf(a) for a in alphabet))
    return ProcessTree.op(LOOP, body, ProcessTree.tau())


def _dfg(log: Log) -> tuple[set[tuple[str, str]], set[str], set[str]]:
    dfg = set()
    starts, ends = set(), set()
    for t in log:
        starts.add(t[0])
        ends.add(t[-1])
        dfg.update(zip(t, t[1:]))
    return dfg, starts, ends


def _components(nodes: list[str], edges) -> list[list[str]]:
    parent = {n: n for n in nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = defaultdict(list)
    for n in nodes:
        groups[find(n)].append(n)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def _xor_cut(alphabet, dfg, starts, ends):
    comps = _components(alphabet, [(a, b) for a, b in dfg if a != b])
    return comps if len(comps) > 1 else None


def _reachability(alphabet, dfg) -> dict[str, set[str]]:
    succ: dict[str, set[str]] = defaultdict(set)
    for a, b in dfg:
        succ[a].add(b)
    reach = {}
    for a in alphabet:
        seen: set[str] = set()
        stack = list(succ[a])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(succ[x])
        reach[a] = seen
    return reach


def _seq_cut(alphabet, dfg, starts, ends):
    reach = _reachability(alphabet, dfg)
    # same part iff mutually reachable or mutually unreachable
    same = [
        (a, b)
        for a, b in combinations(alphabet, 2)
        if (b in reach[a]) == (a in reach[b])
    ]
    groups = _components(alphabet, same)
    if len(groups) < 2:
        return None
    # order parts: a part comes first if it reaches the others
    def key(g):
        return -sum(1 for h in groups if h is not g and g[0] in reach and h[0] in reach[g[0]])

    groups.sort(key=lambda g: (key(g), g[0]))
    for i, gi in enumerate(groups):
        for gj in groups[i + 1 :]:
            for a in gi:
                for b in gj:
                    if b not in reach[a] or a in reach[b]:
                        return None
    return groups


def _and_cut(alphabet, dfg, starts, ends):
    not_parallel = [
        (a, b)
        for a, b in combinations(alphabet, 2)
        if not ((a, b) in dfg and (b, a) in dfg)
    ]
    groups = _components(alphabet, not_parallel)
    if len(groups) < 2:
        return None
    good = [g for g in groups if set(g) & starts and set(g) & ends]
    bad = [g for g in groups if g not in good]
    if not good:
        return None
    if bad:
        # parts lacking a start or end activity are merged into the first part
        merged = sorted(good[0] + [a for g in bad for a in g])
        good = [merged] + good[1:]
    if len(good) < 2:
        return None
    return sorted(good, key=lambda g: g[0])


def _loop_cut(alphabet, dfg, starts, ends):
    body = starts | ends
    rest = [a for a in alphabet if a not in body]
    if not rest:
        return None
    comps = _components(rest, [(a, b) for a, b in dfg if a in rest and b in rest])
    redo_parts = []
    for comp in comps:
        cs = set(comp)
        ok = True
        for a, b in dfg:
            if a in body and b in cs and a not in ends:
                ok = False  # entered from a non-end activity
            if a in cs and b in body and b not in starts:
                ok = False  # leaves to a non-start activity
        if ok:
            # a redo part is entered from every end and left towards every start
            entered_from = {a for a, b in dfg if b in cs and a in body}
            exits_to = {b for a, b in dfg if a in cs and b in body}
            ok = entered_from == ends and exits_to == starts
        if ok:
            redo_parts.append(comp)
        else:
            body |= cs
    if not redo_parts:
        return None
    return [sorted(body)] + redo_parts


def _split_xor(log: Log, cut) -> list[Log]:
    where = {a: i for i, g in enumerate(cut) for a in g}
    out = [Counter() for _ in cut]
    for t, n in log.items():
        out[where[t[0]]][t] += n
    return out


def _split_project(log: Log, cut) -> list[Log]:
    out = []
    for g in cut:
        gs = set(g)
        sub: Counter = Counter()
        for t, n in log.items():
            sub[tuple(a for a in t if a in gs)] += n
        out.append(sub)
    return out


def _split_loop(log: Log, cut) -> list[Log]:
    where = {a: i for i, g in enumerate(cut) for a in g}
    out = [Counter() for _ in cut]
    for t, n in log.items():
        seg: list[str] = []
        part = 0
        for a in t:
            p = where[a]
            if p != part and seg:
                out[part][tuple(seg)] += n
                seg = []
            part = p
            seg.append(a)
        out[part][tuple(seg)] += n
    return out
