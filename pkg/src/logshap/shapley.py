"""Coalition games over feature-value players and exact Shapley values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Mapping, Sequence

import numpy as np

Player = tuple[str, float]


class GameError(ValueError):
    pass


@dataclass
class CoalitionGame:
    """Characteristic function over ``players`` stored by subset bitmask.

    Bit ``i`` of a mask stands for ``players[i]``. ``values[0]`` is 0.
    """

    players: tuple[Player, ...]
    values: dict[int, float]
    metric: str = ""
    miner: str = ""
    game_id: str = ""

    def __post_init__(self) -> None:
        if self.values.get(0, 0.0) != 0.0:
            raise GameError("v(empty set) must be 0")
        self.values[0] = 0.0

    @property
    def k(self) -> int:
        return len(self.players)

    @property
    def complete(self) -> bool:
        return all(m in self.values for m in range(1 << self.k))

    def v(self, mask: int) -> float:
        return self.values[mask]

    @classmethod
    def from_function(cls, players: Sequence[Player], fn, **kw) -> "CoalitionGame":
        """Build a complete game from ``fn(frozenset of player indices)``."""
        k = len(players)
        values = {}
        for mask in range(1, 1 << k):
            values[mask] = float(fn(frozenset(i for i in range(k) if mask >> i & 1)))
        return cls(tuple(players), values, **kw)


@dataclass
class ShapleyAttribution:
    game: CoalitionGame = field(repr=False)
    phi: np.ndarray
    phi_normalized: np.ndarray
    degenerate: bool = False


def _require_complete(game: CoalitionGame) -> None:
    if not game.complete:
        missing = [m for m in range(1, 1 << game.k) if m not in game.values]
        raise GameError(f"game {game.game_id!r} is incomplete; {len(missing)} coalitions missing")


def normalize(phi: Iterable[float]) -> tuple[np.ndarray, bool]:
    """Shares |phi_i| / sum |phi_j|; all-zero input gives zeros and the degeneracy flag."""
    a = np.abs(np.asarray(list(phi), dtype=float))
    total = a.sum()
    if total == 0:
        return np.zeros_like(a), True
    return a / total, False


def _attribution(game: CoalitionGame, phi: np.ndarray) -> ShapleyAttribution:
    shares, degenerate = normalize(phi)
    return ShapleyAttribution(game, phi, shares, degenerate)


def shapley_exact(game: CoalitionGame) -> ShapleyAttribution:
    _require_complete(game)
    k = game.k
    weight = [math.factorial(s) * math.factorial(k - s - 1) / math.factorial(k) for s in range(k)]
    phi = np.zeros(k)
    for i in range(k):
        bit = 1 << i
        total = 0.0
        for mask in range(1 << k):
            if mask & bit:
                continue
            total += weight[mask.bit_count()] * (game.values[mask | bit] - game.values[mask])
        phi[i] = total
    return _attribution(game, phi)


def shapley_permutation_oracle(game: CoalitionGame) -> ShapleyAttribution:
    """Average marginal contribution over all k! player orderings."""
    _require_complete(game)
    k = game.k
    if k > 8:
        raise GameError("permutation oracle is limited to k <= 8")
    phi = np.zeros(k)
    count = 0
    for order in permutations(range(k)):
        mask = 0
        for i in order:
            phi[i] += game.values[mask | 1 << i] - game.values[mask]
            mask |= 1 << i
        count += 1
    return _attribution(game, phi / count)


# --- assembling games from measurements -------------------------------------------


def assemble_games(
    measurements: Mapping[tuple[tuple[Player, ...], str, str], float | None],
    full_coalitions: Iterable[Sequence[Player]],
    miners: Sequence[str],
    metrics: Sequence[str],
) -> list[CoalitionGame]:
    """One game per (full coalition, miner, metric).

    ``measurements`` maps ``(sorted feature-value pairs, miner, metric)`` to
    the utility, or ``None`` when the configuration failed. Sub-coalition
    values are looked up under their own sorted pairs; any missing value
    leaves the game incomplete.
    """
    games = []
    for full in full_coalitions:
        players = tuple(sorted(full))
        k = len(players)
        cid = ";".join(f"{f}={v:.6g}" for f, v in players)
        for miner in miners:
            for metric in metrics:
                values: dict[int, float] = {0: 0.0}
                for mask in range(1, 1 << k):
                    sub = tuple(players[i] for i in range(k) if mask >> i & 1)
                    value = measurements.get((sub, miner, metric))
                    if value is not None:
                        values[mask] = float(value)
                games.append(CoalitionGame(players, values, metric, miner, f"{cid}|{miner}|{metric}"))
    return games


def measurement_table(
    rows: Iterable[tuple[Sequence[Player], str, str, float | None]],
) -> dict[tuple[tuple[Player, ...], str, str], float | None]:
    """Index measurement rows by coalition, rejecting conflicting duplicates."""
    table: dict[tuple[tuple[Player, ...], str, str], float | None] = {}
    for coalition, miner, metric, value in rows:
        key = (tuple(sorted(coalition)), miner, metric)
        if key in table and table[key] != value:
            raise GameError(f"conflicting measurements for {key}: {table[key]} vs {value}")
        table[key] = value
    return table
