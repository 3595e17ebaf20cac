import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from logshap.analysis import (
    GRAY,
    INSIGNIFICANT,
    MEDIUM,
    STRONG,
    WEAK,
    AnalysisError,
    AttributionRow,
    classify_strength,
    correlations,
    feasibility,
    friedman_nemenyi,
    friedman_statistic,
    mean_attribution,
    nemenyi_cd,
    rank_rows,
    ranking_reports,
    robustness,
    spearman,
)

# 10 blocks x 3 treatments; column rank sums 15, 19, 26 give chi2 = 126.2 - 120
HAND_RANKS = np.array([[1, 2, 3]] * 4 + [[2, 1, 3]] * 3 + [[1, 3, 2]] * 2 + [[3, 2, 1]], dtype=float)
HAND_CHI2 = 6.2


def row(feature="a", phi=1.0, share=0.5, miner="im", metric="fitness", value=1.0, game="g"):
    return AttributionRow(game, miner, metric, feature, value, phi, share)


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == (1.0, 0.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == (-1.0, 0.0)
    rho, p = spearman([1, 2, 3, 4], [1, 3, 2, 4])
    assert rho == pytest.approx(0.8, abs=1e-12)
    t = 0.8 * math.sqrt(2 / (1 - 0.64))
    assert p == pytest.approx(2 * stats.t.sf(t, 2))


def test_spearman_errors():
    with pytest.raises(AnalysisError):
        spearman([1, 2], [1, 2])
    with pytest.raises(AnalysisError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(AnalysisError):
        spearman([1, 2, 3], [1, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=3, max_size=30), st.integers(0, 2**31))
def test_spearman_matches_scipy(xs, seed):
    ys = np.random.default_rng(seed).integers(-5, 5, len(xs))
    if len(set(xs)) < 2 or len(set(ys.tolist())) < 2:
        return
    rho, p = spearman(xs, ys)
    ref = stats.spearmanr(xs, ys)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)
    if abs(rho) < 1:
        assert p == pytest.approx(ref.pvalue, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=20, unique=True))
def test_spearman_monotone(xs):
    xs = sorted(xs)
    assert spearman(xs, xs)[0] == 1.0
    assert spearman(xs, xs[::-1])[0] == -1.0


def test_classify_examples_and_boundaries():
    assert classify_strength(0.6, 0.001) == STRONG
    assert classify_strength(0.05, 0.001) == GRAY
    assert classify_strength(0.9, 0.2) == INSIGNIFICANT
    eps = 1e-6
    for sign in (1, -1):
        assert classify_strength(sign * (0.1 - eps), 0.01) == GRAY
        assert classify_strength(sign * (0.1 + eps), 0.01) == WEAK
        assert classify_strength(sign * (0.3 - eps), 0.01) == WEAK
        assert classify_strength(sign * (0.3 + eps), 0.01) == MEDIUM
        assert classify_strength(sign * (0.5 - eps), 0.01) == MEDIUM
        assert classify_strength(sign * (0.5 + eps), 0.01) == STRONG
    assert classify_strength(0.9, 0.05 - eps) == STRONG
    assert classify_strength(0.9, 0.05) == STRONG
    assert classify_strength(0.9, 0.05 + eps) == INSIGNIFICANT


def test_classify_monotone():
    order = [GRAY, WEAK, MEDIUM, STRONG]
    classes = [order.index(classify_strength(r, 0.01)) for r in np.linspace(0, 1, 201)]
    assert classes == sorted(classes)


def test_friedman_hand_fixture():
    assert friedman_statistic(HAND_RANKS) == pytest.approx(HAND_CHI2, abs=1e-9)
    scores = 4 - HAND_RANKS
    assert np.array_equal(rank_rows(scores), HAND_RANKS)
    rep = friedman_nemenyi(scores, ["a", "b", "c"])
    assert rep.statistic == pytest.approx(HAND_CHI2, abs=1e-9)
    # two degrees of freedom: the chi-square survival function is exp(-x/2)
    assert rep.p_value == pytest.approx(math.exp(-3.1), abs=1e-12)
    assert rep.mean_ranks == pytest.approx({"a": 1.5, "b": 1.9, "c": 2.6})
    assert rep.critical_distance == pytest.approx(2.344 * math.sqrt(12 / 60))
    assert rep.cliques == [["a", "b"], ["b", "c"]]


def test_friedman_matches_scipy_without_ties():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=(12, 4))
    rep = friedman_nemenyi(scores, list("wxyz"))
    ref = stats.friedmanchisquare(*(-np.abs(scores)).T)
    assert rep.statistic == pytest.approx(ref.statistic)
    assert rep.p_value == pytest.approx(ref.pvalue)


def test_friedman_dominant_and_tied():
    scores = np.column_stack([np.full(30, 10.0), np.random.default_rng(1).uniform(0, 1, (30, 3))])
    rep = friedman_nemenyi(scores, ["a", "b", "c", "d"])
    assert rep.mean_ranks["a"] == 1.0
    assert all("a" not in c for c in rep.cliques if len(c) > 1)
    assert ["a"] in rep.cliques

    tied = friedman_nemenyi(np.ones((8, 4)), ["a", "b", "c", "d"])
    assert set(tied.mean_ranks.values()) == {2.5}
    assert tied.statistic == 0 and tied.p_value == pytest.approx(1.0)
    assert tied.cliques == [["a", "b", "c", "d"]]


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(2, 15), st.integers(0, 2**31))
def test_rank_rows_sum_and_clique_order(k, n, seed):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 4, (n, k)).astype(float)
    ranks = rank_rows(scores)
    assert np.allclose(ranks.sum(axis=1), k * (k + 1) / 2)
    names = [f"f{i}" for i in range(k)]
    perm = rng.permutation(k)
    a = friedman_nemenyi(scores, names)
    b = friedman_nemenyi(scores[:, perm], [names[i] for i in perm])
    assert sorted(map(sorted, a.cliques)) == sorted(map(sorted, b.cliques))
    assert all(1 <= m <= k for m in a.mean_ranks.values())


def test_nemenyi_errors():
    with pytest.raises(AnalysisError):
        nemenyi_cd(21, 10)
    with pytest.raises(AnalysisError):
        nemenyi_cd(3, 10, alpha=0.01)
    with pytest.raises(AnalysisError):
        friedman_nemenyi(np.ones((1, 3)), list("abc"))


def test_nemenyi_table_matches_studentized_range():
    from logshap.analysis import NEMENYI_Q

    for alpha, qs in NEMENYI_Q.items():
        for k, q in zip(range(2, 21), qs):
            ref = stats.studentized_range.ppf(1 - alpha, k, np.inf) / math.sqrt(2)
            assert q == pytest.approx(ref, abs=2e-3)


def test_mean_attribution():
    rows = [row(phi=1.0, game="g1"), row(phi=3.0, game="g2")]
    assert mean_attribution(rows)[0]["mean_phi"] == 2.0
    assert mean_attribution(rows[:1])[0]["mean_phi"] == 1.0
    grid = [row(miner=m, metric=t, phi=1.0) for m in ("im", "dfg") for t in ("fitness", "precision")]
    assert len(mean_attribution(grid)) == 4
    assert len(mean_attribution(grid, by_miner=False, by_metric=False)) == 1


def test_robustness():
    pts = robustness([row(share=0.2)] * 3)
    assert (pts[0].mean_norm_phi, pts[0].var_norm_phi) == pytest.approx((0.2, 0.0))
    pts = robustness([row(share=0.0), row(share=1.0)])
    assert (pts[0].mean_norm_phi, pts[0].var_norm_phi) == (0.5, 0.25)
    pts = robustness([row(share=0.3)])
    assert pts[0].singleton and pts[0].var_norm_phi == 0
    narrow = [row(miner="a", share=x) for x in (0.4, 0.6)]
    wide = [row(miner="b", share=x) for x in (0.0, 1.0)]
    a, b = robustness(narrow + wide)
    assert a.mean_norm_phi == b.mean_norm_phi and a.var_norm_phi < b.var_norm_phi


def test_feasibility_summary():
    statuses = {(f"c{i}", "im"): s for i, s in enumerate(["ok", "ok", "timeout", "ok"])}
    targets = {f"c{i}": {"tlv": 10.0 * i} for i in range(4)}
    summary, _ = feasibility(statuses, targets, [], ["fitness"])
    assert summary["miners"]["im"] == 75.0

    statuses = {("1", "A"): "ok", ("2", "A"): "ok", ("3", "A"): "timeout",
                ("1", "B"): "timeout", ("2", "B"): "ok", ("3", "B"): "ok"}
    targets = {c: {"tlv": 1.0} for c in "123"}
    summary, _ = feasibility(statuses, targets, [], ["fitness"])
    assert summary["overlap"] == pytest.approx(100 / 3)
    assert summary["overlap"] <= min(summary["miners"].values())
    with pytest.raises(AnalysisError):
        feasibility(statuses, targets, [], ["fitness"], bucket_count=0)


def test_feasibility_cells():
    statuses = {("c0", "im"): "ok", ("c1", "im"): "infeasible"}
    targets = {"c0": {"tlv": 1.0}, "c1": {"tlv": 130.0}}
    rows = [row(feature="tlv", value=1.0, share=0.4)]
    _, cells = feasibility(statuses, targets, rows, ["fitness"], bucket_count=10)
    by_lo = {round(c.bucket_lo, 2): c for c in cells}
    assert by_lo[0.0].success_fraction == 1.0 and by_lo[0.0].mean_norm_phi == 0.4
    assert by_lo[124.83].success_fraction == 0.0 and by_lo[124.83].mean_norm_phi is None
    assert by_lo[124.83].bucket_hi == pytest.approx(138.7)


def test_correlations_and_rankings():
    rows = []
    for i, v in enumerate(np.linspace(0, 100, 12)):
        rows.append(row(feature="tlv", value=float(v), phi=float(v) / 10, share=0.7, game=f"g{i}"))
        rows.append(row(feature="nusa", value=1.0 + i % 3, phi=0.1, share=0.3, game=f"g{i}"))
    recs = {r["feature"]: r for r in correlations(rows)}
    assert recs["tlv"]["rho"] == 1.0 and recs["tlv"]["strength_class"] == STRONG
    assert "nusa" not in recs  # constant phi
    reports = ranking_reports(rows)
    assert reports["fitness"].mean_ranks["tlv"] == 1.0
