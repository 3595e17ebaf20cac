import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logshap.shapley import (
    CoalitionGame,
    GameError,
    assemble_games,
    measurement_table,
    normalize,
    shapley_exact,
    shapley_permutation_oracle,
)


def players(k):
    return tuple((f"f{i}", float(i)) for i in range(k))


def table_game(k, table):
    values = {0: 0.0}
    for mask in range(1, 1 << k):
        members = frozenset(i + 1 for i in range(k) if mask >> i & 1)
        values[mask] = table[members]
    return CoalitionGame(players(k), values)


def random_game(k, rng):
    return CoalitionGame.from_function(players(k), lambda s: rng.uniform(-10, 10) if s else 0.0)


@pytest.mark.parametrize("solver", [shapley_exact, shapley_permutation_oracle])
def test_examples(solver):
    g = table_game(2, {frozenset({1}): 1, frozenset({2}): 0, frozenset({1, 2}): 1})
    assert solver(g).phi.tolist() == pytest.approx([1, 0], abs=1e-12)

    g = CoalitionGame.from_function(players(3), len)
    assert solver(g).phi.tolist() == pytest.approx([1, 1, 1], abs=1e-12)

    g = table_game(
        3,
        {
            frozenset({1}): 1, frozenset({2}): 2, frozenset({3}): 3,
            frozenset({1, 2}): 4, frozenset({1, 3}): 5, frozenset({2, 3}): 6,
            frozenset({1, 2, 3}): 9,
        },
    )
    assert solver(g).phi.tolist() == pytest.approx([2, 3, 4], abs=1e-12)

    g = CoalitionGame(players(1), {1: -2.5})
    assert solver(g).phi.tolist() == [-2.5]


def test_empty_coalition_is_zero():
    with pytest.raises(GameError):
        CoalitionGame(players(1), {0: 1.0, 1: 2.0})


def test_incomplete_game_rejected():
    g = CoalitionGame(players(2), {1: 1.0, 2: 1.0})
    assert not g.complete
    with pytest.raises(GameError, match="incomplete"):
        shapley_exact(g)
    with pytest.raises(GameError):
        shapley_permutation_oracle(g)


def test_normalize():
    shares, flag = normalize([2, 1, 1])
    assert shares.tolist() == [0.5, 0.25, 0.25] and not flag
    shares, flag = normalize([-2, 1, 1])
    assert shares.tolist() == [0.5, 0.25, 0.25]
    shares, flag = normalize([0, 0])
    assert shares.tolist() == [0, 0] and flag


def test_share_consistency():
    # a value of 3.4 carrying 22% of the total impact implies a total of 3.4 / 0.22
    total = 3.4 / 0.22
    assert total == pytest.approx(15.4545, abs=1e-4)
    shares, _ = normalize([3.4, total - 3.4])
    assert shares[0] == pytest.approx(0.22, abs=1e-12)


def test_attribution_flags_degenerate_game():
    att = shapley_exact(CoalitionGame.from_function(players(3), lambda s: 0.0))
    assert att.degenerate and att.phi_normalized.sum() == 0


def pairs(*items):
    return tuple(sorted(items))


def test_assemble_three_features_pairs():
    a, b, c = ("a", 1.0), ("b", 2.0), ("c", 3.0)
    meas = {}
    for coal, val in (((a,), 1), ((b,), 2), ((c,), 3), (pairs(a, b), 4), (pairs(a, c), 5), (pairs(b, c), 6)):
        meas[(coal, "im", "fitness")] = float(val)
    games = assemble_games(meas, [(a, b), (a, c), (b, c)], ["im"], ["fitness"])
    assert len(games) == 3 and all(g.complete for g in games)
    assert [g.v(3) for g in games] == [4, 5, 6]
    assert games[0].game_id == "a=1;b=2|im|fitness"


def test_assemble_triple_and_missing():
    a, b, c = ("a", 1.0), ("b", 2.0), ("c", 3.0)
    full = pairs(a, b, c)
    meas = {}
    for mask in range(1, 8):
        sub = tuple(p for i, p in enumerate(full) if mask >> i & 1)
        meas[(sub, "im", "f")] = float(mask)
        meas[(sub, "dfg", "f")] = float(mask)
    meas[(pairs(a, c), "dfg", "f")] = None
    del meas[(pairs(b, c), "im", "f")]
    games = assemble_games(meas, [full], ["im", "dfg"], ["f"])
    assert [g.complete for g in games] == [False, False]
    meas[(pairs(b, c), "im", "f")] = 6.0
    im, dfg = assemble_games(meas, [full], ["im", "dfg"], ["f"])
    assert im.complete and len(im.values) == 8 and not dfg.complete


def test_measurement_table_conflicts():
    rows = [([("b", 1.0), ("a", 2.0)], "im", "f", 0.5), ([("a", 2.0), ("b", 1.0)], "im", "f", 0.5)]
    table = measurement_table(rows)
    assert table == {((("a", 2.0), ("b", 1.0)), "im", "f"): 0.5}
    with pytest.raises(GameError, match="conflicting"):
        measurement_table(rows + [([("a", 2.0), ("b", 1.0)], "im", "f", 0.6)])


def test_oracle_limit():
    with pytest.raises(GameError):
        shapley_permutation_oracle(CoalitionGame.from_function(players(9), len))


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), seeds)
def test_efficiency_and_oracle(k, seed):
    g = random_game(k, np.random.default_rng(seed))
    phi = shapley_exact(g).phi
    assert abs(phi.sum() - g.v((1 << k) - 1)) <= 1e-9
    assert np.max(np.abs(phi - shapley_permutation_oracle(g).phi)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), seeds, st.floats(-5, 5))
def test_additivity(k, seed, a):
    rng = np.random.default_rng(seed)
    v, w = random_game(k, rng), random_game(k, rng)
    vw = CoalitionGame(v.players, {m: v.values[m] + w.values[m] for m in v.values})
    av = CoalitionGame(v.players, {m: a * v.values[m] for m in v.values})
    pv, pw = shapley_exact(v).phi, shapley_exact(w).phi
    assert np.max(np.abs(shapley_exact(vw).phi - (pv + pw))) <= 1e-9
    assert np.max(np.abs(shapley_exact(av).phi - a * pv)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 6), seeds)
def test_symmetry_and_null_player(k, seed):
    rng = np.random.default_rng(seed)
    base = {}

    def sym(s):
        # players 0 and 1 are interchangeable; the last player is null
        key = (len(s & {0, 1}), frozenset(s - {0, 1, k - 1}))
        if key not in base:
            base[key] = rng.uniform(-10, 10)
        return base[key] if s - {k - 1} else 0.0

    phi = shapley_exact(CoalitionGame.from_function(players(k), sym)).phi
    assert abs(phi[0] - phi[1]) <= 1e-9
    assert phi[k - 1] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), seeds, st.floats(0.01, 100))
def test_ranking_scale_invariant(k, seed, a):
    g = random_game(k, np.random.default_rng(seed))
    scaled = CoalitionGame(g.players, {m: a * x for m, x in g.values.items()})
    p, q = shapley_exact(g).phi, shapley_exact(scaled).phi
    order = np.argsort(-p, kind="stable")
    assert np.all(np.diff(q[order]) <= 1e-9 * max(1.0, a))


def test_weights_sum_to_one():
    k = 5
    total = sum(math.comb(k - 1, s) * math.factorial(s) * math.factorial(k - s - 1) / math.factorial(k) for s in range(k))
    assert total == pytest.approx(1.0)
