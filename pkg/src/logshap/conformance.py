"""Replay-based quality metrics, complexity metrics and the per-log measurement."""

from __future__ import annotations

import math
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass, fields
from typing import Any, Mapping, Sequence

from .discovery import MINERS, UNKNOWN, DiscoveredModel, GatewayGraph, PetriNet, check_soundness
from .discovery.gateway import AND_SPLIT, XOR_SPLIT
from .discovery.petri import Marking, NetError
from .eventlog import EventLog, LogError, write_xes

SILENT_DEPTH = 16
_SILENT_STATES = 128
_PERFECT_STATES = 1_000

OK, TIMEOUT, RESOURCE_EXCEEDED, DISCOVERY_FAILED = "ok", "timeout", "resource_exceeded", "discovery_failed"
GENERATION_FAILED = "generation_failed"
METRICS = ("fitness", "precision", "fscore", "size", "cfc", "exec_time_ms")


class UnknownMiner(KeyError):
    pass


@dataclass
class MetricRecord:
    config_id: str
    miner: str
    status: str
    fitness: float | None = None
    precision: float | None = None
    fscore: float | None = None
    size: int | None = None
    cfc: int | None = None
    exec_time_ms: int = 0
    sound: str = UNKNOWN

    def metric(self, name: str) -> float | None:
        value = getattr(self, name)
        return None if value is None else float(value)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# --- token game ----------------------------------------------------------------

Vec = tuple[int, ...]


class _Replayer:
    """Token game on integer-vector markings (one slot per place)."""

    def __init__(self, net: PetriNet) -> None:
        try:
            net.validate_workflow()
        except NetError as exc:
            raise LogError(f"not a workflow net: {exc}") from exc
        self.net = net
        self.index = {p: i for i, p in enumerate(net.places)}
        self.pre = {t: tuple(self.index[p] for p in net.pre[t]) for t in net.transitions}
        self.post = {t: tuple(self.index[p] for p in net.post[t]) for t in net.transitions}
        self.silent = sorted(t for t, l in net.transitions.items() if l is None)
        self.visible = sorted(t for t, l in net.transitions.items() if l is not None)
        self.by_label: dict[str, list[str]] = {}
        for t in self.visible:
            self.by_label.setdefault(net.transitions[t], []).append(t)
        self.initial = self.vector(net.initial)
        self.final = self.vector(net.final)
        self.repeated_labels = any(len(ts) > 1 for ts in self.by_label.values())
        self._enabling: dict[tuple[Vec, str], list[str] | None] = {}
        self._options: dict[tuple[Vec, str], list[list[str]]] = {}
        self._closure: dict[Vec, frozenset[str]] = {}

    def vector(self, m: Marking) -> Vec:
        v = [0] * len(self.index)
        for p, n in m:
            v[self.index[p]] = n
        return tuple(v)

    def enabled(self, m: Vec, t: str) -> bool:
        return all(m[i] > 0 for i in self.pre[t])

    def fire(self, m: Vec, t: str) -> Vec:
        v = list(m)
        for i in self.pre[t]:
            v[i] -= 1
        for i in self.post[t]:
            v[i] += 1
        return tuple(v)

    def silent_path(self, m: Vec, goal) -> list[str] | None:
        """Shortest sequence of silent firings from ``m`` to a marking satisfying ``goal``."""
        if goal(m):
            return []
        seen = {m}
        todo = deque([(m, [])])
        while todo:
            cur, path = todo.popleft()
            if len(path) >= SILENT_DEPTH:
                continue
            for t in self.silent:
                if not self.enabled(cur, t):
                    continue
                nxt = self.fire(cur, t)
                if nxt in seen:
                    continue
                if goal(nxt):
                    return path + [t]
                if len(seen) >= _SILENT_STATES:
                    return None
                seen.add(nxt)
                todo.append((nxt, path + [t]))
        return None

    def silent_costs(self, m: Vec) -> list[float]:
        """Lower bound on silent firings needed to put a token in each place."""
        cost = [0.0 if k > 0 else math.inf for k in m]
        changed = True
        while changed:
            changed = False
            for t in self.silent:
                c = 1 + sum(cost[i] for i in self.pre[t])
                for o in self.post[t]:
                    if c < cost[o]:
                        cost[o] = c
                        changed = True
        return cost

    def plan(self, m: Vec, places: Sequence[int], depth: int = SILENT_DEPTH) -> list[str] | None:
        """Silent firings that mark every place in ``places``, found by backward chaining.

        Used when breadth-first search runs out of states, typically in wide
        parallel blocks where independent branches blow up the interleavings.
        """
        path: list[str] = []
        cur = m
        for p in places:
            if cur[p] > 0:
                continue
            cost = self.silent_costs(cur)
            if cost[p] > depth - len(path):
                return None
            producers = [t for t in self.silent if p in self.post[t]]
            t = min(producers, key=lambda t: (sum(cost[i] for i in self.pre[t]), t))
            sub = self.plan(cur, self.pre[t], depth - len(path) - 1)
            if sub is None:
                return None
            for u in sub:
                cur = self.fire(cur, u)
            if not self.enabled(cur, t):
                return None
            cur = self.fire(cur, t)
            path += sub + [t]
        if any(cur[p] == 0 for p in places):
            return None
        return path

    def enabling_path(self, m: Vec, candidates: Sequence[str]) -> list[str] | None:
        path = self.silent_path(m, lambda x: any(self.enabled(x, t) for t in candidates))
        if path is not None:
            return path
        plans = [self.plan(m, self.pre[t]) for t in candidates]
        plans = [p for p in plans if p is not None]
        return min(plans, key=len) if plans else None

    def step(self, m: Vec, activity: str, tally: list[int]) -> Vec:
        """Replay one event; ``tally`` accumulates [produced, consumed, missing, remaining]."""
        candidates = self.by_label.get(activity)
        if not candidates:
            # activity unknown to the model: one missing obligation
            tally[1] += 1
            tally[2] += 1
            return m
        chosen = next((t for t in candidates if self.enabled(m, t)), None)
        if chosen is None:
            key = (m, activity)
            if key not in self._enabling:
                self._enabling[key] = self.enabling_path(m, candidates)
            path = self._enabling[key]
            if path is not None:
                for t in path:
                    m = self._fire_counting(m, t, tally)
                chosen = next(t for t in candidates if self.enabled(m, t))
            else:
                chosen = candidates[0]
        return self._fire_counting(m, chosen, tally)

    def _fire_counting(self, m: Vec, t: str, tally: list[int]) -> Vec:
        v = list(m)
        for i in self.pre[t]:
            if v[i] < 1:
                tally[2] += 1
            else:
                v[i] -= 1
        tally[1] += len(self.pre[t])
        for i in self.post[t]:
            v[i] += 1
        tally[0] += len(self.post[t])
        return tuple(v)

    def finish(self, m: Vec, tally: list[int]) -> None:
        final = self.final
        if m != final:
            path = self.silent_path(m, lambda x: x == final)
            if path is None:
                marked = [i for i, k in enumerate(final) if k > 0]
                path = self.plan(m, marked)
            for t in path or ():
                m = self._fire_counting(m, t, tally)
        for have, need in zip(m, final):
            tally[1] += need
            if have < need:
                tally[2] += need - have
            else:
                tally[3] += have - need

    def enabled_labels(self, m: Vec) -> frozenset[str]:
        """Labels of visible transitions enabled from ``m`` or after silent firings."""
        cached = self._closure.get(m)
        if cached is not None:
            return cached
        labels: set[str] = set()
        seen = {m}
        todo = deque([(m, 0)])
        while todo:
            cur, depth = todo.popleft()
            for t in self.visible:
                if self.enabled(cur, t):
                    labels.add(self.net.transitions[t])
            if depth >= SILENT_DEPTH:
                continue
            for t in self.silent:
                if self.enabled(cur, t):
                    nxt = self.fire(cur, t)
                    if nxt not in seen and len(seen) < _SILENT_STATES:
                        seen.add(nxt)
                        todo.append((nxt, depth + 1))
        if len(seen) >= _SILENT_STATES:
            # search truncated: settle the remaining labels by backward chaining
            for t in self.visible:
                label = self.net.transitions[t]
                if label not in labels and self.plan(m, self.pre[t]) is not None:
                    labels.add(label)
        result = self._closure[m] = frozenset(labels)
        return result


    def perfect_run(self, seq: Sequence[str]) -> list[str] | None:
        """A firing sequence replaying ``seq`` exactly into the final marking, if one is found.

        Depth-first over (position, marking). Silent transitions are only
        fired on demand: each branch picks one transition labeled with the
        next activity and enables it through a planned silent sequence.
        Needed when labels repeat, where the greedy choice between equally
        labeled transitions can go wrong. Gives up after ``_PERFECT_STATES``
        states.
        """
        if any(a not in self.by_label for a in seq):
            return None
        n = len(seq)
        start = (0, self.initial)
        parent: dict[tuple[int, Vec], tuple[tuple[int, Vec], list[str]] | None] = {start: None}
        stack = [start]
        final = self.final
        marked = [i for i, k in enumerate(final) if k > 0]
        while stack:
            node = stack.pop()
            i, m = node
            moves: list[tuple[int, list[str]]] = []
            if i == n:
                path = self.plan(m, marked)
                if path is not None and self._run(m, path) == final:
                    moves.append((n + 1, path))
            else:
                for t in reversed(self.by_label[seq[i]]):
                    if self.enabled(m, t):
                        moves.append((i + 1, [t]))
                        continue
                    moves.extend((i + 1, path + [t]) for path in self._enabling_options(m, t))
            for j, path in moves:
                nxt = (j, self._run(m, path))
                if nxt in parent:
                    continue
                parent[nxt] = (node, path)
                if j > n:
                    out: list[str] = []
                    while parent[nxt] is not None:
                        nxt, step = parent[nxt]
                        out[:0] = step
                    return out
                if len(parent) >= _PERFECT_STATES:
                    return None
                stack.append(nxt)
        return None

    def _enabling_options(self, m: Vec, t: str) -> list[list[str]]:
        key = (m, t)
        if key not in self._options:
            planned = self.plan(m, self.pre[t])
            self._options[key] = [] if planned is None else [planned]
        return self._options[key]

    def _run(self, m: Vec, path: Sequence[str]) -> Vec:
        for t in path:
            m = self.fire(m, t)
        return m


def _replay_trace(rp: _Replayer, seq: Sequence[str]) -> list[int]:
    tally = [sum(rp.initial), 0, 0, 0]
    m = rp.initial
    for a in seq:
        m = rp.step(m, a, tally)
    rp.finish(m, tally)
    if (tally[2] or tally[3]) and rp.repeated_labels:
        path = rp.perfect_run(seq)
        if path is not None:
            tally = [sum(rp.initial), sum(rp.final), 0, 0]
            for t in path:
                tally[0] += len(rp.post[t])
                tally[1] += len(rp.pre[t])
    return tally


def token_replay_fitness(net: PetriNet, log: EventLog) -> float:
    if len(log) == 0:
        raise LogError("cannot replay an empty log")
    rp = _Replayer(net)
    totals = [0, 0, 0, 0]
    for seq, mult in Counter(log.sequences()).items():
        tally = _replay_trace(rp, seq)
        for i in range(4):
            totals[i] += tally[i] * mult
    p, c, missing, remaining = totals
    return 0.5 * (1 - missing / c) + 0.5 * (1 - remaining / p)


def escaping_edges_precision(net: PetriNet, log: EventLog) -> float:
    """Frequency-weighted share of model-enabled continuations that the log observes."""
    if len(log) == 0:
        raise LogError("cannot replay an empty log")
    rp = _Replayer(net)

    # prefix trie: node -> (count, children)
    root: dict = {}
    counts: Counter = Counter()
    for seq, mult in Counter(log.sequences()).items():
        node = root
        key: tuple[str, ...] = ()
        counts[key] += mult
        for a in seq:
            node = node.setdefault(a, {})
            key = key + (a,)
            counts[key] += mult

    num = den = 0.0
    stack = [((), root, rp.initial)]
    while stack:
        key, node, m = stack.pop()
        enabled = rp.enabled_labels(m)
        if enabled:
            observed = set(node) & enabled
            w = counts[key]
            num += w * len(observed) / len(enabled)
            den += w
        for a in sorted(node):
            tally = [0, 0, 0, 0]
            stack.append((key + (a,), node[a], rp.step(m, a, tally)))
    return 1.0 if den == 0 else num / den


def fscore(fitness: float, precision: float) -> float:
    if fitness + precision == 0:
        return 0.0
    return 2 * fitness * precision / (fitness + precision)


def complexity(graph: GatewayGraph) -> tuple[int, int]:
    """(size, control-flow complexity) of a gateway graph."""
    succ = graph.successors()
    cfc = 0
    for n, (kind, _) in graph.nodes.items():
        if kind == XOR_SPLIT:
            cfc += len(succ.get(n, ()))
        elif kind == AND_SPLIT:
            cfc += 1
    return len(graph.nodes), cfc


# --- measurement ------------------------------------------------------------------


@dataclass(frozen=True)
class Limits:
    timeout_ms: int = 300_000
    disk_cap_bytes: int = 19 * 10**9


def _evaluate(miner: str, log: EventLog, options: Mapping[str, Any], state_cap: int) -> dict:
    t0 = time.perf_counter()
    model: DiscoveredModel = MINERS[miner](log, **options)
    exec_ms = int(round((time.perf_counter() - t0) * 1000))
    fit = token_replay_fitness(model.net, log)
    prec = escaping_edges_precision(model.net, log)
    size, cfc = complexity(model.graph)
    return {
        "model": model,
        "exec_time_ms": exec_ms,
        "fitness": fit,
        "precision": prec,
        "fscore": fscore(fit, prec),
        "size": size,
        "cfc": cfc,
        "sound": check_soundness(model.net, state_cap),
    }


def measure(
    miner: str,
    log: EventLog,
    limits: Limits = Limits(),
    config_id: str = "",
    options: Mapping[str, Any] | None = None,
    state_cap: int = 100_000,
) -> MetricRecord:
    """Discover a model with ``miner`` and compute every metric under ``limits``.

    The work runs in a daemon thread; on timeout the thread is abandoned and
    the record carries status ``timeout``.
    """
    if miner not in MINERS:
        raise UnknownMiner(f"unknown miner {miner!r}; known: {sorted(MINERS)}")
    if limits.timeout_ms <= 0:
        return MetricRecord(config_id, miner, TIMEOUT)

    box: dict[str, Any] = {}

    def work() -> None:
        try:
            box["result"] = _evaluate(miner, log, options or {}, state_cap)
        except Exception as exc:  # noqa: BLE001 - adapter failures become a status
            box["error"] = exc

    worker = threading.Thread(target=work, daemon=True)
    t0 = time.perf_counter()
    worker.start()
    worker.join(limits.timeout_ms / 1000)
    elapsed = int(round((time.perf_counter() - t0) * 1000))
    if worker.is_alive():
        return MetricRecord(config_id, miner, TIMEOUT, exec_time_ms=elapsed)
    if "error" in box:
        return MetricRecord(config_id, miner, DISCOVERY_FAILED, exec_time_ms=elapsed)

    r = box["result"]
    artifact_bytes = len(r["model"].to_text().encode()) + len(write_xes(log).encode())
    if artifact_bytes > limits.disk_cap_bytes:
        return MetricRecord(config_id, miner, RESOURCE_EXCEEDED, exec_time_ms=r["exec_time_ms"])
    return MetricRecord(
        config_id,
        miner,
        OK,
        fitness=r["fitness"],
        precision=r["precision"],
        fscore=r["fscore"],
        size=r["size"],
        cfc=r["cfc"],
        exec_time_ms=r["exec_time_ms"],
        sound=r["sound"],
    )
