import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logshap.conformance import (
    DISCOVERY_FAILED,
    OK,
    RESOURCE_EXCEEDED,
    TIMEOUT,
    Limits,
    UnknownMiner,
    complexity,
    escaping_edges_precision,
    fscore,
    measure,
    token_replay_fitness,
)
from logshap.discovery import GatewayGraph, PetriNet, ProcessTree, parse_tree, register_miner, tree_to_gateway_graph, tree_to_petri
from logshap.eventlog import EventLog, LogError
from logshap.generator import GeneratorParams, sample_tree, simulate


def L(*seqs):
    return EventLog.from_sequences([list(s) for s in seqs])


def net(text):
    return tree_to_petri(parse_tree(text))


# Hand-played token game on source -(a)-> p -(b)-> sink for the trace <a>:
#   produced: 1 initial token + 1 by a            = 2
#   consumed: 1 by a + 1 final token               = 2
#   missing:  the final token on sink              = 1
#   remaining: the token stranded on p             = 1
HAND_SEQ_AB_ON_A = 0.5 * (1 - 1 / 2) + 0.5 * (1 - 1 / 2)


def test_hand_token_game_oracle():
    assert HAND_SEQ_AB_ON_A == 0.5
    assert token_replay_fitness(net("SEQ(a,b)"), L("a")) == pytest.approx(HAND_SEQ_AB_ON_A, abs=1e-12)


def test_fitness_examples():
    assert token_replay_fitness(net("SEQ(a,b)"), L("ab")) == 1.0
    assert token_replay_fitness(net("a"), L("a", "a", "a", "a")) == 1.0
    assert token_replay_fitness(net("LOOP(a,SEQ(b,tau))"), L("a", "aba", "ababa")) == 1.0
    assert token_replay_fitness(net("SEQ(a,XOR(tau,b),c)"), L("ac", "abc")) == 1.0


def test_fitness_penalizes_unknown_activity():
    assert token_replay_fitness(net("a"), L("ax")) < 1.0


def test_fitness_errors():
    with pytest.raises(LogError):
        token_replay_fitness(net("a"), EventLog(()))
    two_sources = PetriNet(("i", "o"), {"t": "a"}, {"t": ("i",)}, {"t": ("o",)}, (("i", 2),), (("o", 1),))
    with pytest.raises(LogError):
        token_replay_fitness(two_sources, L("a"))


def test_precision_examples():
    assert escaping_edges_precision(net("SEQ(a,b,c)"), L(*["abc"] * 4)) == 1.0
    flower = net("LOOP(XOR(a,b,c),tau)")
    flower_p = escaping_edges_precision(flower, L(*["abc"] * 4))
    assert flower_p < 1.0
    assert escaping_edges_precision(net("XOR(SEQ(a,b),SEQ(c,d))"), L("ab", "cd")) == 1.0


def test_fscore_examples():
    assert fscore(1.0, 1.0) == 1.0
    assert fscore(0.0, 0.7) == 0.0
    assert fscore(0.0, 0.0) == 0.0
    assert fscore(0.8, 0.4) == pytest.approx(0.533333333333, abs=1e-12)


def test_complexity_examples():
    assert complexity(tree_to_gateway_graph(parse_tree("a"))) == (3, 0)
    size, cfc = complexity(tree_to_gateway_graph(parse_tree("XOR(a,b,c)")))
    assert cfc == 3
    g = tree_to_gateway_graph(parse_tree("SEQ(XOR(a,b),AND(c,d))"))
    assert complexity(g) == (4 + 4 + 2, 3)


def test_measure_linear_log():
    rec = measure("inductive", L(*["abc"] * 5), config_id="c1")
    assert rec.status == OK and rec.fitness == 1.0 and rec.cfc == 0
    assert rec.fscore == pytest.approx(2 * rec.fitness * rec.precision / (rec.fitness + rec.precision), abs=1e-12)
    assert rec.sound == "sound"


def test_measure_limits_and_failures():
    log = L("ab", "ba")
    rec = measure("dfg", log, Limits(timeout_ms=0))
    assert rec.status == TIMEOUT and rec.fitness is None and rec.size is None
    rec = measure("dfg", log, Limits(disk_cap_bytes=10))
    assert rec.status == RESOURCE_EXCEEDED and rec.fitness is None

    def broken(log):
        raise RuntimeError("adapter crashed")

    register_miner("broken", broken)
    assert measure("broken", log).status == DISCOVERY_FAILED
    assert measure("ilp", log).status == DISCOVERY_FAILED
    with pytest.raises(UnknownMiner):
        measure("nope", log)


def test_measure_slow_miner_times_out():
    import time

    def slow(log):
        time.sleep(2)

    register_miner("slow", slow)
    rec = measure("slow", L("a"), Limits(timeout_ms=50))
    assert rec.status == TIMEOUT


def distinct_labels(tree, counter=None):
    counter = counter if counter is not None else [0]
    if tree.is_leaf:
        if tree.is_silent:
            return tree
        counter[0] += 1
        return ProcessTree.leaf(f"{tree.label}{counter[0]}")
    return ProcessTree.op(tree.operator, *(distinct_labels(c, counter) for c in tree.children))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_simulation_fits_own_net(seed):
    p = GeneratorParams(activity_count=6, max_depth=4, leaf_probability=0.3)
    tree = distinct_labels(sample_tree(p, seed))
    log = simulate(tree, 30, 0.0, seed)
    n = tree_to_petri(tree)
    assert token_replay_fitness(n, log) == 1.0
    prec = escaping_edges_precision(n, log)
    assert 0.0 <= prec <= 1.0


@pytest.mark.parametrize("seed", range(12))
def test_repeated_labels_still_fit(seed):
    # sampled trees reuse labels freely, e.g. AND(e,LOOP(LOOP(c,e),SEQ(c,b)),...) for seed 0
    p = GeneratorParams(activity_count=6, max_depth=4, leaf_probability=0.25)
    tree = sample_tree(p, seed)
    log = simulate(tree, 50, 0.0, seed)
    assert token_replay_fitness(tree_to_petri(tree), log) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.9))
def test_metrics_bounded_under_noise(seed, noise):
    p = GeneratorParams(activity_count=5, max_depth=3, leaf_probability=0.3)
    tree = sample_tree(p, seed)
    log = simulate(tree, 20, noise, seed)
    n = tree_to_petri(tree)
    f = token_replay_fitness(n, log)
    assert 0.0 <= f <= 1.0
    assert 0.0 <= escaping_edges_precision(n, log) <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_fscore_symmetric_and_bounded(f, p):
    assert fscore(f, p) == fscore(p, f)
    assert min(f, p) - 1e-12 <= fscore(f, p) <= max(f, p) + 1e-12
