"""Control-flow meta-features of event logs and greedy feature pre-selection."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .eventlog import EventLog, LogError


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    description: str
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo


CATALOG: dict[str, FeatureSpec] = {
    s.id: s
    for s in (
        FeatureSpec("aq1", "lower quartile of activity counts", 1.0, 79.92),
        FeatureSpec("nusa", "number of unique start activities", 1.0, 6.56),
        FeatureSpec("saq1", "lower quartile of start activity counts", 1.0, 174.79),
        FeatureSpec("ekbr3", "3-block entropy ratio", 0.0, 4.37),
        FeatureSpec("rt5v", "share of traces in the top 5% variants", 0.0, 0.38),
        FeatureSpec("svo", "skewness of variant occurrences", 1.54, 11.61),
        FeatureSpec("tlkh", "excess kurtosis of trace lengths", -0.97, 7.92),
        FeatureSpec("tlv", "variance of trace lengths", 0.0, 138.7),
    )
}
FEATURE_IDS: tuple[str, ...] = tuple(CATALOG)


@dataclass(frozen=True)
class FeatureVector:
    """Realized feature values.

    ``degenerate`` lists features whose moment was undefined and reported as 0.
    """

    entries: Mapping[str, float]
    degenerate: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for k, v in self.entries.items():
            if k not in CATALOG:
                raise FeatureError(f"unknown feature {k!r}")
            if not math.isfinite(v):
                raise FeatureError(f"feature {k} is not finite: {v}")

    def __getitem__(self, key: str) -> float:
        return self.entries[key]

    def out_of_range(self) -> list[str]:
        return [k for k, v in self.entries.items() if not CATALOG[k].lo <= v <= CATALOG[k].hi]


def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile on the sorted data."""
    if len(values) == 0:
        raise FeatureError("quantile of an empty sample")
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    if lo + 1 >= len(xs):
        return float(xs[-1])
    return float(xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo]))


def _central_moments(xs: Sequence[float]) -> tuple[float, float, float]:
    a = np.asarray(xs, dtype=float)
    d = a - a.mean()
    return float(np.mean(d**2)), float(np.mean(d**3)), float(np.mean(d**4))


def skewness(xs: Sequence[float]) -> float | None:
    """Fisher-Pearson g1 with population moments; None when undefined."""
    if len(xs) < 3:
        return None
    m2, m3, _ = _central_moments(xs)
    if m2 <= 1e-15:
        return None
    return m3 / m2**1.5


def excess_kurtosis(xs: Sequence[float]) -> float | None:
    if len(xs) < 3:
        return None
    m2, _, m4 = _central_moments(xs)
    if m2 <= 1e-15:
        return None
    return m4 / m2**2 - 3.0


def block_entropy_ratio(sequences: Iterable[Sequence[str]], k: int = 3) -> float:
    """Natural-log Shannon entropy of sliding k-grams divided by k."""
    grams: Counter = Counter()
    for seq in sequences:
        for i in range(len(seq) - k + 1):
            grams[tuple(seq[i : i + k])] += 1
    total = sum(grams.values())
    if total == 0:
        return 0.0
    p = np.fromiter(grams.values(), dtype=float) / total
    h = float(-(p * np.log(p)).sum())
    return max(h, 0.0) / k


def _top_variant_ratio(counts: Sequence[int], share: float = 0.05) -> float:
    top = max(1, math.ceil(share * len(counts)))
    return sum(sorted(counts, reverse=True)[:top]) / sum(counts)


def extract(log: EventLog, ids: Iterable[str] | None = None) -> FeatureVector:
    if len(log) == 0:
        raise LogError("cannot extract features from an empty log")
    return extract_sequences(log.sequences(), ids)


def extract_sequences(seqs: Sequence[Sequence[str]], ids: Iterable[str] | None = None) -> FeatureVector:
    """Same as :func:`extract`, on plain activity sequences."""
    wanted = list(FEATURE_IDS if ids is None else ids)
    for f in wanted:
        if f not in CATALOG:
            raise FeatureError(f"unknown feature {f!r}")
    if len(seqs) == 0:
        raise LogError("cannot extract features from an empty log")
    out: dict[str, float] = {}
    degenerate = set()
    lengths = [len(s) for s in seqs]
    variant_counts: list[int] | None = None

    for f in wanted:
        if f == "aq1":
            counts = Counter(a for s in seqs for a in s)
            out[f] = quantile(list(counts.values()), 0.25)
        elif f == "nusa":
            out[f] = float(len({s[0] for s in seqs}))
        elif f == "saq1":
            counts = Counter(s[0] for s in seqs)
            out[f] = quantile(list(counts.values()), 0.25)
        elif f == "ekbr3":
            out[f] = block_entropy_ratio(seqs, 3)
        elif f in ("rt5v", "svo"):
            if variant_counts is None:
                variant_counts = list(Counter(tuple(s) for s in seqs).values())
            if f == "rt5v":
                out[f] = _top_variant_ratio(variant_counts)
            else:
                g1 = skewness(variant_counts)
                if g1 is None:
                    degenerate.add(f)
                out[f] = 0.0 if g1 is None else g1
        elif f == "tlkh":
            g2 = excess_kurtosis(lengths)
            if g2 is None:
                degenerate.add(f)
            out[f] = 0.0 if g2 is None else g2
        elif f == "tlv":
            out[f] = float(np.var(lengths))
    return FeatureVector(out, frozenset(degenerate))


def extraction_report(rows: Iterable[tuple[str, FeatureVector]]) -> str:
    """CSV with columns log_id, feature, value, degenerate_flag."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["log_id", "feature", "value", "degenerate_flag"])
    for log_id, fv in rows:
        for f, v in fv.entries.items():
            w.writerow([log_id, f, repr(v), int(f in fv.degenerate)])
    return buf.getvalue()


def greedy_select(feature_matrix: Mapping[str, Sequence[float]], n: int) -> list[str]:
    """Pick ``n`` weakly correlated features.

    ``feature_matrix`` maps a feature identifier to its column of values (one
    value per log). The first pick has the lowest mean absolute Pearson
    correlation to all other candidates; every further pick minimizes its
    maximum absolute correlation to the features already selected.
    """
    names = sorted(feature_matrix)
    if n > len(names):
        raise FeatureError(f"cannot select {n} of {len(names)} candidates")
    cols = np.array([np.asarray(feature_matrix[k], dtype=float) for k in names])
    if cols.shape[1] < 2:
        raise FeatureError("need at least two rows")
    for name, col in zip(names, cols):
        if np.ptp(col) == 0:
            raise FeatureError(f"column {name!r} is constant; correlation undefined")
    if n <= 0:
        return []
    corr = np.abs(np.corrcoef(cols)) if len(names) > 1 else np.ones((1, 1))

    if len(names) == 1:
        mean_corr = np.zeros(1)
    else:
        mean_corr = (corr.sum(axis=1) - 1.0) / (len(names) - 1)
    first = min(range(len(names)), key=lambda i: (mean_corr[i], names[i]))
    chosen = [first]
    while len(chosen) < n:
        rest = [i for i in range(len(names)) if i not in chosen]
        nxt = min(rest, key=lambda i: (max(corr[i, j] for j in chosen), names[i]))
        chosen.append(nxt)
    return [names[i] for i in chosen]
