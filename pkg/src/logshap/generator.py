"""Target-conditioned log generation.

Random process trees are sampled and simulated; simulated annealing over
the sampler parameters searches for a log whose extracted features match a
(partial) target vector.
"""

from __future__ import annotations

import math
import random
import string
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

from .discovery.tree import AND, LOOP, SEQ, XOR, ProcessTree
from .eventlog import EventLog, Event, Trace
from .features import CATALOG, FeatureError, FeatureSpec, FeatureVector, extract_sequences

OPERATOR_KINDS = (SEQ, XOR, AND, LOOP)
OK, BUDGET_EXHAUSTED, INFEASIBLE = "ok", "budget_exhausted", "infeasible"

MAX_TRACE_LENGTH = 256
MIN_ARITY, MAX_ARITY = 2, 4

# search-space bounds for the calibrator
ACTIVITY_RANGE = (1, 40)
DEPTH_RANGE = (1, 6)
TRACE_RANGE = (2, 600)


class TargetError(ValueError):
    pass


def activity_names(n: int) -> list[str]:
    letters = string.ascii_lowercase
    names = []
    for i in range(n):
        names.append(letters[i] if i < 26 else letters[i // 26 - 1] + letters[i % 26])
    return names


@dataclass(frozen=True)
class GeneratorParams:
    activity_count: int = 5
    max_depth: int = 3
    operator_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 0.5)
    leaf_probability: float = 0.3
    loop_repeat_probability: float = 0.3
    trace_count: int = 100
    noise_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.activity_count < 1 or self.max_depth < 1 or self.trace_count < 1:
            raise ValueError("activity_count, max_depth and trace_count must be >= 1")
        if len(self.operator_weights) != 4 or min(self.operator_weights) < 0:
            raise ValueError("operator_weights needs four non-negative weights")
        if max(self.operator_weights) <= 0:
            raise ValueError("at least one operator weight must be positive")
        if not 0 < self.leaf_probability <= 1:
            raise ValueError("leaf_probability must lie in (0, 1]")
        if not 0 <= self.loop_repeat_probability < 1:
            raise ValueError("loop_repeat_probability must lie in [0, 1)")
        if not 0 <= self.noise_probability < 1:
            raise ValueError("noise_probability must lie in [0, 1)")


@dataclass(frozen=True)
class TargetConfiguration:
    id: str
    targets: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.targets:
            raise TargetError("a configuration needs at least one target")
        for f, v in self.targets.items():
            spec = CATALOG.get(f)
            if spec is None:
                raise TargetError(f"unknown feature {f!r}")
            if not spec.lo - 1e-9 <= v <= spec.hi + 1e-9:
                raise TargetError(f"target {f}={v} outside [{spec.lo}, {spec.hi}]")

    @property
    def dimensionality(self) -> int:
        return len(self.targets)

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(self.targets)


@dataclass
class GenerationOutcome:
    target: TargetConfiguration
    log: EventLog | None
    achieved: FeatureVector
    distance: float
    status: str
    iterations_used: int
    seed: int
    params: GeneratorParams | None = field(default=None, repr=False)


# --- sampling and simulation -----------------------------------------------------


def sample_tree(params: GeneratorParams, seed: int) -> ProcessTree:
    rng = random.Random(seed)
    labels = activity_names(params.activity_count)
    weights = params.operator_weights

    def grow(level: int) -> ProcessTree:
        if level >= params.max_depth or rng.random() < params.leaf_probability:
            return ProcessTree.leaf(rng.choice(labels))
        op = rng.choices(OPERATOR_KINDS, weights=weights)[0]
        if op == LOOP:
            return ProcessTree.op(LOOP, grow(level + 1), grow(level + 1))
        arity = rng.randint(MIN_ARITY, MAX_ARITY)
        return ProcessTree.op(op, *(grow(level + 1) for _ in range(arity)))

    return grow(1)


def _compile(node: ProcessTree, rng: random.Random, loop_p: float):
    """Turn the tree into nested closures ``play(out)`` that append one random walk."""
    cap = MAX_TRACE_LENGTH
    if node.is_leaf:
        label = node.label
        if label is None:
            return lambda out: None

        def leaf(out: list[str]) -> None:
            if len(out) <= cap:
                out.append(label)

        return leaf
    kids = [_compile(c, rng, loop_p) for c in node.children]
    rand = rng.random

    if node.operator == SEQ:

        def seq(out: list[str]) -> None:
            for k in kids:
                if len(out) > cap:
                    return
                k(out)

        return seq
    if node.operator == XOR:
        n = len(kids)

        def xor(out: list[str]) -> None:
            kids[rng.randrange(n)](out)

        return xor
    if node.operator == AND:

        def par(out: list[str]) -> None:
            if len(out) > cap:
                return
            runs = []
            for k in kids:
                sub: list[str] = []
                k(sub)
                runs.append(iter(sub))
                runs.append(len(sub))
            # sorting slots by random keys gives a uniform interleaving that keeps each child's order
            slots = sorted((rand(), i) for i in range(0, len(runs), 2) for _ in range(runs[i + 1]))
            out.extend(next(runs[i]) for _, i in slots)

        return par
    do, redo = kids

    def loop(out: list[str]) -> None:
        do(out)
        while len(out) <= cap and rand() < loop_p:
            redo(out)
            do(out)

    return loop


def _apply_noise(seq: list[str], alphabet: list[str], rng: random.Random) -> list[str]:
    kind = rng.randrange(3)
    seq = list(seq)
    if kind == 0 and len(seq) > 1:
        del seq[rng.randrange(len(seq))]
    elif kind == 1:
        seq.insert(rng.randrange(len(seq) + 1), rng.choice(alphabet))
    elif kind == 2 and len(seq) > 1:
        i = rng.randrange(len(seq) - 1)
        seq[i], seq[i + 1] = seq[i + 1], seq[i]
    return seq


def simulate_sequences(
    tree: ProcessTree,
    trace_count: int,
    noise_probability: float,
    seed: int,
    loop_repeat_probability: float = 0.3,
) -> list[list[str]]:
    rng = random.Random(seed)
    alphabet = sorted(tree.activities()) or ["a"]
    play = _compile(tree, rng, loop_repeat_probability)
    # an over-long walk is redrawn while the log's redraw allowance lasts, then truncated
    redraws = trace_count
    seqs = []
    while len(seqs) < trace_count:
        seq: list[str] = []
        play(seq)
        while len(seq) > MAX_TRACE_LENGTH and redraws > 0:
            redraws -= 1
            seq = []
            play(seq)
        del seq[MAX_TRACE_LENGTH:]
        if noise_probability > 0 and rng.random() < noise_probability:
            seq = _apply_noise(seq, alphabet, rng)
        if not seq:
            # only reachable for trees made of silent leaves; retry is pointless
            seq = [alphabet[0]]
        seqs.append(seq)
    return seqs


def simulate(
    tree: ProcessTree,
    trace_count: int,
    noise_probability: float,
    seed: int,
    loop_repeat_probability: float = 0.3,
) -> EventLog:
    """Random walks through the tree semantics.

    Timestamps are per-trace counters. A walk longer than
    ``MAX_TRACE_LENGTH`` events is redrawn, up to ``trace_count`` redraws
    per log; after that, over-long walks are truncated to that length.
    """
    if trace_count < 1:
        raise ValueError("trace_count must be >= 1")
    return to_log(simulate_sequences(tree, trace_count, noise_probability, seed, loop_repeat_probability))


def to_log(seqs: list[list[str]]) -> EventLog:
    trace_count = len(seqs)
    width = len(str(trace_count - 1))
    traces = []
    for i, seq in enumerate(seqs):
        cid = f"case{i:0{width}d}"
        traces.append(Trace(cid, tuple(Event(cid, a, t) for t, a in enumerate(seq))))
    return EventLog(tuple(traces))


def generate_sequences(params: GeneratorParams) -> list[list[str]]:
    tree = sample_tree(params, params.seed)
    return simulate_sequences(
        tree,
        params.trace_count,
        params.noise_probability,
        params.seed + 1,
        params.loop_repeat_probability,
    )


def generate(params: GeneratorParams) -> EventLog:
    return to_log(generate_sequences(params))


# --- calibration --------------------------------------------------------------------


def target_distance(
    achieved: FeatureVector,
    target: TargetConfiguration,
    catalog: Mapping[str, FeatureSpec] = CATALOG,
) -> float:
    """Mean range-normalized absolute error over the targeted features."""
    total = 0.0
    for f, want in target.targets.items():
        if f not in achieved.entries:
            raise FeatureError(f"achieved vector lacks targeted feature {f!r}")
        spec = catalog[f]
        total += abs(achieved.entries[f] - want) / spec.width
    return total / len(target.targets)


def random_params(rng: random.Random) -> GeneratorParams:
    return GeneratorParams(
        activity_count=rng.randint(2, 12),
        max_depth=rng.randint(2, 4),
        operator_weights=tuple(round(rng.uniform(0.05, 1.0), 3) for _ in range(4)),
        leaf_probability=round(rng.uniform(0.1, 0.6), 3),
        loop_repeat_probability=round(rng.uniform(0.0, 0.6), 3),
        trace_count=rng.randint(20, 200),
        noise_probability=round(rng.uniform(0.0, 0.3), 3),
        seed=rng.getrandbits(32),
    )


def _clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def neighbor(p: GeneratorParams, rng: random.Random) -> GeneratorParams:
    """Perturb exactly one parameter."""
    which = rng.randrange(8)
    if which == 0:
        step = rng.choice((-3, -2, -1, 1, 2, 3))
        return replace(p, activity_count=int(_clip(p.activity_count + step, *ACTIVITY_RANGE)))
    if which == 1:
        return replace(p, max_depth=int(_clip(p.max_depth + rng.choice((-1, 1)), *DEPTH_RANGE)))
    if which == 2:
        w = list(p.operator_weights)
        i = rng.randrange(4)
        w[i] = round(_clip(w[i] + rng.gauss(0, 0.3), 0.0, 1.0), 3)
        if max(w) <= 0:
            w[i] = 0.1
        return replace(p, operator_weights=tuple(w))
    if which == 3:
        v = _clip(p.leaf_probability + rng.gauss(0, 0.15), 0.02, 1.0)
        return replace(p, leaf_probability=round(v, 3))
    if which == 4:
        v = _clip(p.loop_repeat_probability + rng.gauss(0, 0.15), 0.0, 0.95)
        return replace(p, loop_repeat_probability=round(v, 3))
    if which == 5:
        v = p.trace_count * math.exp(rng.gauss(0, 0.4))
        return replace(p, trace_count=int(_clip(round(v), *TRACE_RANGE)))
    if which == 6:
        v = _clip(p.noise_probability + rng.gauss(0, 0.15), 0.0, 0.95)
        return replace(p, noise_probability=round(v, 3))
    return replace(p, seed=rng.getrandbits(32))


@dataclass(frozen=True)
class AnnealingSchedule:
    initial_temperature: float = 1.0
    decay: float = 0.995
    stagnation_window: int = 250
    max_restarts: int = 5


def calibrate(
    target: TargetConfiguration,
    budget: int = 2000,
    epsilon: float = 0.05,
    seed: int = 0,
    schedule: AnnealingSchedule = AnnealingSchedule(),
) -> GenerationOutcome:
    """Anneal generator parameters until the log's features hit ``target``.

    Each iteration evaluates one parameter set. The chain restarts from fresh
    random parameters after ``stagnation_window`` iterations without
    improving its own best; once ``max_restarts`` chains have stagnated the
    target is declared infeasible. The search stops early as soon as the
    best distance is within ``epsilon``. The trajectory never depends on
    ``budget``, so a larger budget can only lower the best distance.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = random.Random(seed)
    ids = target.features

    def evaluate(p: GeneratorParams) -> tuple[float, FeatureVector]:
        fv = extract_sequences(generate_sequences(p), ids)
        return target_distance(fv, target), fv

    current = random_params(rng)
    cur_d, cur_fv = evaluate(current)
    best = (cur_d, cur_fv, current)
    chain_best = cur_d
    since_improved = 0
    stagnated = 0
    temperature = schedule.initial_temperature
    used = 1
    status = None

    while best[0] > epsilon and used < budget:
        if since_improved >= schedule.stagnation_window:
            stagnated += 1
            if stagnated >= schedule.max_restarts:
                status = INFEASIBLE
                break
            current = random_params(rng)
            cur_d, cur_fv = evaluate(current)
            chain_best, since_improved = cur_d, 0
            temperature = schedule.initial_temperature
            if cur_d < best[0]:
                best = (cur_d, cur_fv, current)
        else:
            cand = neighbor(current, rng)
            d, fv = evaluate(cand)
            if d <= cur_d or rng.random() < math.exp(-(d - cur_d) / max(temperature, 1e-12)):
                current, cur_d = cand, d
            if d < chain_best:
                chain_best, since_improved = d, 0
            else:
                since_improved += 1
            if d < best[0]:
                best = (d, fv, cand)
            temperature *= schedule.decay
        used += 1

    d, fv, params = best
    if d <= epsilon:
        status = OK
    elif status is None:
        status = BUDGET_EXHAUSTED
    return GenerationOutcome(
        target=target,
        log=generate(params) if status == OK else None,
        achieved=fv,
        distance=d,
        status=status,
        iterations_used=used,
        seed=seed,
        params=params,
    )


def value_grid(spec: FeatureSpec, v: int) -> list[float]:
    if v == 1:
        return [(spec.lo + spec.hi) / 2]
    return [spec.lo + j * (spec.hi - spec.lo) / (v - 1) for j in range(v)]


def params_dict(p: GeneratorParams) -> dict:
    d = asdict(p)
    d["operator_weights"] = list(p.operator_weights)
    return d
