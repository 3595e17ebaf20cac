"""Statistics over Shapley attributions: rankings, correlations, robustness, feasibility."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .features import CATALOG

# Nemenyi critical values q_alpha = studentized range(1 - alpha, k, inf) / sqrt(2), k = 2..20
NEMENYI_Q = {
    0.05: (1.960, 2.344, 2.569, 2.728, 2.850, 2.948, 3.031, 3.102, 3.164, 3.219,
           3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544),
    0.10: (1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978,
           3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319),
}

INSIGNIFICANT, GRAY, WEAK, MEDIUM, STRONG = "insignificant", "gray", "weak", "medium", "strong"


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class AttributionRow:
    """One player's Shapley value in one game (a row of ``shapley.csv``)."""

    game_id: str
    miner: str
    metric: str
    feature: str
    target_value: float
    phi: float
    phi_normalized: float


# --- rankings -----------------------------------------------------------------------


def mean_attribution(
    rows: Iterable[AttributionRow], by_miner: bool = True, by_metric: bool = True
) -> list[dict]:
    groups: dict[tuple, list[AttributionRow]] = defaultdict(list)
    for r in rows:
        key = (r.feature, r.miner if by_miner else "*", r.metric if by_metric else "*")
        groups[key].append(r)
    out = []
    for (feature, miner, metric), rs in sorted(groups.items()):
        out.append(
            {
                "feature": feature,
                "miner": miner,
                "metric": metric,
                "n": len(rs),
                "mean_phi": float(np.mean([r.phi for r in rs])),
                "mean_phi_normalized": float(np.mean([r.phi_normalized for r in rs])),
            }
        )
    return out


@dataclass
class RankReport:
    features: list[str]
    mean_ranks: dict[str, float]
    statistic: float
    p_value: float
    critical_distance: float
    cliques: list[list[str]]
    n_blocks: int


def rank_rows(scores: np.ndarray) -> np.ndarray:
    """Per-row ranks of |score| descending: 1 = largest, ties share the average rank."""
    a = np.abs(np.asarray(scores, dtype=float))
    return np.vstack([stats.rankdata(-row, method="average") for row in a])


def friedman_statistic(ranks: np.ndarray) -> float:
    """Friedman chi-square from a blocks x treatments rank matrix (no tie correction)."""
    n, k = ranks.shape
    mean = ranks.mean(axis=0)
    return float(12 * n / (k * (k + 1)) * (np.sum(mean**2) - k * (k + 1) ** 2 / 4))


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    if alpha not in NEMENYI_Q:
        raise AnalysisError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if not 2 <= k <= 20:
        raise AnalysisError("Nemenyi table covers 2 <= k <= 20")
    return NEMENYI_Q[alpha][k - 2] * float(np.sqrt(k * (k + 1) / (6 * n)))


def friedman_nemenyi(
    scores: np.ndarray, features: Sequence[str], alpha: float = 0.05
) -> RankReport:
    """Rank features by |score| per block, test with Friedman, group by Nemenyi CD."""
    scores = np.asarray(scores, dtype=float)
    n, k = scores.shape
    if k < 2 or n < 2:
        raise AnalysisError("need at least two features and two blocks")
    if len(features) != k:
        raise AnalysisError("feature names do not match score columns")
    ranks = rank_rows(scores)
    chi2 = friedman_statistic(ranks)
    p = float(stats.chi2.sf(chi2, k - 1))
    cd = nemenyi_cd(k, n, alpha)
    mean = dict(zip(features, (float(x) for x in ranks.mean(axis=0))))

    order = sorted(features, key=lambda f: (mean[f], f))
    cliques: list[list[str]] = []
    for i in range(len(order)):
        j = i
        while j + 1 < len(order) and mean[order[j + 1]] - mean[order[i]] < cd:
            j += 1
        window = order[i : j + 1]
        if not cliques or not set(window) <= set(cliques[-1]):
            cliques.append(window)
    return RankReport(list(features), mean, chi2, p, cd, cliques, n)


def ranking_reports(rows: Sequence[AttributionRow], alpha: float = 0.05) -> dict[str, RankReport]:
    """Rank reports over mean |normalized phi|.

    Scope ``all`` uses one block per (miner, metric); each metric scope uses
    one block per (miner, value index of the feature's target). Blocks that
    miss a feature are dropped.
    """
    features = sorted({r.feature for r in rows})
    reports: dict[str, RankReport] = {}
    if len(features) < 2:
        return reports

    def build(blocks: Mapping[tuple, Mapping[str, list[float]]]) -> RankReport | None:
        mat = [
            [float(np.mean(cells[f])) for f in features]
            for _, cells in sorted(blocks.items())
            if all(f in cells for f in features)
        ]
        if len(mat) < 2:
            return None
        return friedman_nemenyi(np.array(mat), features, alpha)

    overall: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        overall[(r.miner, r.metric)][r.feature].append(abs(r.phi_normalized))
    rep = build(overall)
    if rep is not None:
        reports["all"] = rep

    levels = {f: sorted({r.target_value for r in rows if r.feature == f}) for f in features}
    for metric in sorted({r.metric for r in rows}):
        blocks: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
        for r in rows:
            if r.metric == metric:
                level = levels[r.feature].index(r.target_value)
                blocks[(r.miner, level)][r.feature].append(abs(r.phi_normalized))
        rep = build(blocks)
        if rep is not None:
            reports[metric] = rep
    return reports


# --- correlations --------------------------------------------------------------------


def spearman(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Tie-corrected Spearman rho with a t-approximation p-value."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or len(x) < 3:
        raise AnalysisError("need two equally long samples of at least 3 values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise AnalysisError("correlation undefined for a constant sample")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) >= 1.0 - 1e-15:
        return float(np.sign(rho)), 0.0
    n = len(x)
    t = rho * np.sqrt((n - 2) / (1 - rho**2))
    return rho, float(2 * stats.t.sf(abs(t), n - 2))


def classify_strength(rho: float, p_value: float, alpha: float = 0.05) -> str:
    if p_value > alpha:
        return INSIGNIFICANT
    r = abs(rho)
    if r < 0.1:
        return GRAY
    if r <= 0.3:
        return WEAK
    if r <= 0.5:
        return MEDIUM
    return STRONG


def correlations(rows: Iterable[AttributionRow]) -> list[dict]:
    """Spearman correlation between a feature's target value and its phi per (miner, metric, feature)."""
    groups: dict[tuple, list[AttributionRow]] = defaultdict(list)
    for r in rows:
        groups[(r.miner, r.metric, r.feature)].append(r)
    out = []
    for (miner, metric, feature), rs in sorted(groups.items()):
        xs = [r.target_value for r in rs]
        ys = [r.phi for r in rs]
        try:
            rho, p = spearman(xs, ys)
        except AnalysisError:
            continue
        out.append(
            {
                "miner": miner,
                "metric": metric,
                "feature": feature,
                "n": len(rs),
                "rho": rho,
                "p_value": p,
                "strength_class": classify_strength(rho, p),
                "approximate": len(rs) < 10,
            }
        )
    return out


@dataclass(frozen=True)
class RobustnessPoint:
    miner: str
    metric: str
    mean_norm_phi: float
    var_norm_phi: float
    n: int
    singleton: bool


def robustness(rows: Iterable[AttributionRow]) -> list[RobustnessPoint]:
    pools: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        pools[(r.miner, r.metric)].append(r.phi_normalized)
    out = []
    for (miner, metric), xs in sorted(pools.items()):
        a = np.asarray(xs)
        out.append(
            RobustnessPoint(miner, metric, float(a.mean()), float(a.var()), len(a), len(a) < 2)
        )
    return out


# --- feasibility ---------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityCell:
    feature: str
    bucket_lo: float
    bucket_hi: float
    miner: str
    metric: str
    success_fraction: float
    mean_norm_phi: float | None


def bucket_of(feature: str, value: float, bucket_count: int) -> int:
    spec = CATALOG[feature]
    if spec.width == 0:
        return 0
    idx = int((value - spec.lo) / spec.width * bucket_count)
    return min(max(idx, 0), bucket_count - 1)


def feasibility(
    statuses: Mapping[tuple[str, str], str],
    targets: Mapping[str, Mapping[str, float]],
    rows: Iterable[AttributionRow],
    metrics: Sequence[str],
    bucket_count: int = 10,
) -> tuple[dict, list[FeasibilityCell]]:
    """Per-miner success percentages and per-bucket success/attribution cells.

    ``statuses`` maps (config_id, miner) to a measurement status and
    ``targets`` maps config_id to its feature->target mapping.
    """
    if bucket_count < 1:
        raise AnalysisError("bucket_count must be >= 1")
    miners = sorted({m for _, m in statuses})
    configs = sorted({c for c, _ in statuses})
    summary: dict = {"miners": {}, "configurations": len(configs)}
    ok_sets = {}
    for m in miners:
        ok = {c for c in configs if statuses.get((c, m)) == "ok"}
        ok_sets[m] = ok
        summary["miners"][m] = 100.0 * len(ok) / len(configs) if configs else 0.0
    overlap = set.intersection(*ok_sets.values()) if ok_sets else set()
    summary["overlap"] = 100.0 * len(overlap) / len(configs) if configs else 0.0

    attempts: dict[tuple, list[bool]] = defaultdict(list)
    for c in configs:
        for f, v in targets[c].items():
            b = bucket_of(f, v, bucket_count)
            for m in miners:
                attempts[(f, b, m)].append(statuses.get((c, m)) == "ok")
    phis: dict[tuple, list[float]] = defaultdict(list)
    for r in rows:
        phis[(r.feature, bucket_of(r.feature, r.target_value, bucket_count), r.miner, r.metric)].append(
            r.phi_normalized
        )

    cells = []
    for (f, b, m), oks in sorted(attempts.items()):
        spec = CATALOG[f]
        lo = spec.lo + b * spec.width / bucket_count
        hi = spec.lo + (b + 1) * spec.width / bucket_count
        frac = sum(oks) / len(oks)
        for metric in metrics:
            vals = phis.get((f, b, m, metric))
            cells.append(
                FeasibilityCell(f, lo, hi, m, metric, frac, float(np.mean(vals)) if vals else None)
            )
    return summary, cells
