"""Run orchestration: enumerate configurations, generate and measure, attribute, report.

An output directory holds everything needed to resume a run:

    config.json        snapshot of the RunConfig
    checkpoint.json    completed-configuration cursor and CSV byte offsets
    generation.csv     one row per configuration
    measurements.csv   one row per (configuration, miner)
    logs/<id>.xes      generated logs

After all configurations are processed the Shapley and analysis stages
write shapley.csv, ranking.csv, correlations.csv, robustness.csv,
feasibility.csv, mean_attribution.csv and summary.json.
"""

from __future__ import annotations

import csv
import gc
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations, product
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import analysis
from .conformance import GENERATION_FAILED, OK, Limits, MetricRecord, measure
from .discovery import BUILTIN_MINERS
from .eventlog import write_xes
from .features import CATALOG, FEATURE_IDS
from .generator import TargetConfiguration, calibrate, value_grid
from .shapley import assemble_games, measurement_table, shapley_exact

log = logging.getLogger(__name__)

WORKERS_ENV = "LOGSHAP_WORKERS"
DEFAULT_METRICS = ("fitness", "precision", "fscore", "size", "cfc")
TIMING_COLUMNS = ("exec_time_ms",)

GENERATION_COLUMNS = ["config_id", "features", "targets", "achieved", "distance", "status", "iterations", "seed"]
MEASUREMENT_COLUMNS = [
    "config_id", "features", "target_values", "miner", "status", "fitness", "precision",
    "fscore", "size", "cfc", "exec_time_ms", "sound",
]
SHAPLEY_COLUMNS = ["game_id", "miner", "metric", "feature", "target_value", "phi", "phi_normalized", "complete"]
RANKING_COLUMNS = ["scope", "feature", "mean_rank", "friedman_statistic", "p_value", "critical_distance", "clique", "n_blocks"]
CORRELATION_COLUMNS = ["miner", "metric", "feature", "n", "rho", "p_value", "strength_class", "approximate"]
ROBUSTNESS_COLUMNS = ["miner", "metric", "mean_norm_phi", "var_norm_phi", "n", "singleton"]
FEASIBILITY_COLUMNS = ["feature", "bucket_lo", "bucket_hi", "miner", "metric", "success_fraction", "mean_norm_phi"]
REPORT_FILES = (
    "measurements.csv", "shapley.csv", "ranking.csv", "correlations.csv", "robustness.csv", "feasibility.csv",
)


class ConfigError(ValueError):
    pass


class IntegrityError(RuntimeError):
    pass


class MissingStageError(RuntimeError):
    pass


@dataclass
class RunConfig:
    features: list[str] = field(default_factory=lambda: list(FEATURE_IDS))
    values_per_feature: int = 10
    k_max: int = 3
    miners: list[str] = field(default_factory=lambda: list(BUILTIN_MINERS))
    metrics: list[str] = field(default_factory=lambda: list(DEFAULT_METRICS))
    limits: dict = field(default_factory=lambda: {"timeout_ms": 300_000, "disk_cap_bytes": 19 * 10**9})
    generation: dict = field(default_factory=lambda: {"budget": 2000, "epsilon": 0.05})
    seed: int = 0
    parallelism: int = 0
    output_dir: str = ""
    value_grids: dict = field(default_factory=dict)
    dfg_eta: float = 0.0
    bucket_count: int = 10
    alpha: float = 0.05

    def __post_init__(self) -> None:
        unknown = [f for f in self.features if f not in CATALOG]
        if unknown:
            raise ConfigError(f"unknown features {unknown}")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("features must be distinct")
        if not 1 <= self.k_max <= len(self.features):
            raise ConfigError("k_max must lie in [1, number of features]")
        if self.values_per_feature < 1:
            raise ConfigError("values_per_feature must be >= 1")
        bad = [m for m in self.metrics if m not in (*DEFAULT_METRICS, "exec_time_ms")]
        if bad:
            raise ConfigError(f"unknown metrics {bad}")
        self.limits = {"timeout_ms": 300_000, "disk_cap_bytes": 19 * 10**9, **self.limits}
        self.generation = {"budget": 2000, "epsilon": 0.05, **self.generation}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self, feature: str) -> list[float]:
        if feature in self.value_grids:
            return [float(x) for x in self.value_grids[feature]]
        return value_grid(CATALOG[feature], self.values_per_feature)

    def workers(self) -> int:
        if self.parallelism > 0:
            return self.parallelism
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))


# --- configurations ----------------------------------------------------------------


class ConflictError(ValueError):
    pass


def join_configurations(a: TargetConfiguration, b: TargetConfiguration) -> TargetConfiguration:
    """Union of two partial targets; shared features must agree."""
    merged = dict(a.targets)
    for f, v in b.targets.items():
        if f in merged and merged[f] != v:
            raise ConflictError(f"feature {f} has values {merged[f]} and {v}")
        merged[f] = v
    ordered = {f: merged[f] for f in sorted(merged)}
    cid = "__".join(f"{f}={v:g}" for f, v in ordered.items())
    return TargetConfiguration(cid, ordered)


def configuration_count(n: int, v: int, k_max: int) -> int:
    return sum(math.comb(n, k) * v**k for k in range(1, k_max + 1))


def enumerate_configurations(config: RunConfig) -> list[TargetConfiguration]:
    # per feature: (id fragment, feature, value) for every grid point
    choices = {f: [(f"{f}-{j}", f, x) for j, x in enumerate(config.grid(f))] for f in config.features}
    out = []
    # tens of thousands of small acyclic objects; collector passes would dominate
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(1, config.k_max + 1):
            for subset in combinations(config.features, k):
                for picks in product(*(choices[f] for f in subset)):
                    cid = "__".join([p[0] for p in picks])
                    out.append(TargetConfiguration(cid, {p[1]: p[2] for p in picks}))
    finally:
        if was_enabled:
            gc.enable()
    return out


def config_seed(global_seed: int, config_id: str) -> int:
    digest = hashlib.blake2b(f"{global_seed}:{config_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


# --- per-configuration work --------------------------------------------------------------


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_line(values: Sequence[Any]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_fmt(v) for v in values])
    return buf.getvalue()


def process_configuration(target: TargetConfiguration, config: RunConfig) -> tuple[str, str, str | None]:
    """Calibrate, then measure every miner. Returns (generation row, measurement rows, xes)."""
    seed = config_seed(config.seed, target.id)
    gen = config.generation
    outcome = calibrate(target, budget=int(gen["budget"]), epsilon=float(gen["epsilon"]), seed=seed)
    features = "|".join(target.features)
    targets_json = json.dumps(dict(target.targets), sort_keys=True)
    gen_row = _csv_line(
        [
            target.id,
            features,
            targets_json,
            json.dumps(dict(outcome.achieved.entries), sort_keys=True),
            outcome.distance,
            outcome.status,
            outcome.iterations_used,
            seed,
        ]
    )
    limits = Limits(int(config.limits["timeout_ms"]), int(config.limits["disk_cap_bytes"]))
    rows = []
    for miner in config.miners:
        if outcome.status != OK or outcome.log is None:
            rec = MetricRecord(target.id, miner, GENERATION_FAILED)
        else:
            opts = {"eta": config.dfg_eta} if miner == "dfg" else {}
            rec = measure(miner, outcome.log, limits, target.id, options=opts)
        rows.append(
            _csv_line(
                [
                    target.id, features, targets_json, miner, rec.status, rec.fitness, rec.precision,
                    rec.fscore, rec.size, rec.cfc, rec.exec_time_ms, rec.sound,
                ]
            )
        )
    xes = write_xes(outcome.log) if outcome.log is not None else None
    return gen_row, "".join(rows), xes


def _process_star(args: tuple[TargetConfiguration, RunConfig]):
    return process_configuration(*args)


# --- run state ---------------------------------------------------------------------


@dataclass
class RunState:
    out: Path
    config: RunConfig
    configurations: list[TargetConfiguration]
    completed: int = 0
    offsets: dict[str, int] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.completed >= len(self.configurations)

    @property
    def pending(self) -> list[TargetConfiguration]:
        return self.configurations[self.completed :]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _config_hash(config: RunConfig) -> str:
    data = config.to_dict()
    data.pop("output_dir", None)
    data.pop("parallelism", None)
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _write_checkpoint(state: RunState) -> None:
    payload = {
        "completed": state.completed,
        "total": len(state.configurations),
        "offsets": state.offsets,
        "config_hash": _config_hash(state.config),
    }
    _atomic_write(state.out / "checkpoint.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _init_output(out: Path, config: RunConfig) -> RunState:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "logs").mkdir(exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    _atomic_write(out / "config.json", json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    for name, cols in (("generation.csv", GENERATION_COLUMNS), ("measurements.csv", MEASUREMENT_COLUMNS)):
        (out / name).write_text(_csv_line(cols))
    state = RunState(out, config, enumerate_configurations(config))
    state.offsets = {n: (out / n).stat().st_size for n in ("generation.csv", "measurements.csv")}
    _write_checkpoint(state)
    return state


def load_state(out: str | Path, config: RunConfig | None = None) -> RunState:
    out = Path(out)
    snap_path, ck_path = out / "config.json", out / "checkpoint.json"
    if not snap_path.exists() or not ck_path.exists():
        raise IntegrityError(f"{out} holds no run (config.json or checkpoint.json missing)")
    try:
        snapshot = RunConfig.from_dict(json.loads(snap_path.read_text()))
        ck = json.loads(ck_path.read_text())
        completed = int(ck["completed"])
        offsets = {k: int(v) for k, v in ck["offsets"].items()}
    except (ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"corrupt checkpoint in {out}: {exc}") from exc
    if config is not None and _config_hash(config) != _config_hash(snapshot):
        a, b = config.to_dict(), snapshot.to_dict()
        diff = {k: (b[k], a[k]) for k in a if k not in ("output_dir", "parallelism") and a[k] != b[k]}
        raise ConfigError(f"configuration differs from the snapshot in {out}: {diff}")
    if ck.get("config_hash") != _config_hash(snapshot):
        raise IntegrityError("checkpoint does not belong to config.json")
    configs = enumerate_configurations(snapshot)
    if not 0 <= completed <= len(configs):
        raise IntegrityError(f"checkpoint cursor {completed} out of range")
    for name, size in offsets.items():
        path = out / name
        if not path.exists() or path.stat().st_size < size:
            raise IntegrityError(f"{name} is shorter than the checkpoint records")
    if config is not None:
        snapshot.parallelism = config.parallelism
    return RunState(out, snapshot, configs, completed, offsets)


def _execute(state: RunState, stop_after: int | None = None) -> RunState:
    # drop rows written after the last checkpoint
    for name, size in state.offsets.items():
        with open(state.out / name, "r+b") as fh:
            fh.truncate(size)
    todo = state.pending
    if stop_after is not None:
        todo = todo[:stop_after]
    if not todo:
        return state
    workers = state.config.workers()
    jobs = [(t, state.config) for t in todo]

    def consume(results: Iterable[tuple[str, str, str | None]]) -> None:
        gen_path, meas_path = state.out / "generation.csv", state.out / "measurements.csv"
        for target, (gen_row, meas_rows, xes) in zip(todo, results):
            if xes is not None:
                _atomic_write(state.out / "logs" / f"{target.id}.xes", xes)
            with open(gen_path, "a") as fh:
                fh.write(gen_row)
            with open(meas_path, "a") as fh:
                fh.write(meas_rows)
            state.completed += 1
            state.offsets = {"generation.csv": gen_path.stat().st_size, "measurements.csv": meas_path.stat().st_size}
            _write_checkpoint(state)
            log.info("configuration %s done (%d/%d)", target.id, state.completed, len(state.configurations))

    if workers == 1:
        consume(_process_star(j) for j in jobs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            consume(pool.map(_process_star, jobs, chunksize=1))
    return state


def run(config: RunConfig, out: str | Path | None = None, stop_after: int | None = None) -> RunState:
    """Process every configuration, then attribute and report.

    ``stop_after`` processes at most that many configurations and returns
    without reporting, leaving a resumable directory.
    """
    out_dir = Path(out or config.output_dir or "run")
    t0 = time.perf_counter()
    if (out_dir / "checkpoint.json").exists():
        state = load_state(out_dir, config)
    else:
        state = _init_output(out_dir, config)
    _execute(state, stop_after)
    if state.done:
        report(state, wall_time_s=time.perf_counter() - t0)
    return state


def resume(out: str | Path, stop_after: int | None = None, parallelism: int = 0) -> RunState:
    t0 = time.perf_counter()
    state = load_state(out)
    if parallelism:
        state.config.parallelism = parallelism
    _execute(state, stop_after)
    if state.done:
        report(state, wall_time_s=time.perf_counter() - t0)
    return state


# --- step (iv) and reports -------------------------------------------------------------


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    lines = [_csv_line(columns)]
    for r in rows:
        lines.append(_csv_line(r))
    _atomic_write(path, "".join(lines))
    return len(lines) - 1


def compute_shapley(state: RunState) -> tuple[list[analysis.AttributionRow], int, int]:
    """Assemble games from measurements.csv and write shapley.csv.

    Returns (attribution rows of complete games, complete games, total games).
    """
    meas = _read_csv(state.out / "measurements.csv")
    metrics = state.config.metrics
    rows = []
    for r in meas:
        coalition = tuple(json.loads(r["target_values"]).items())
        for metric in metrics:
            value = float(r[metric]) if r["status"] == OK and r[metric] != "" else None
            rows.append((coalition, r["miner"], metric, value))
    table = measurement_table(rows)
    full = [tuple(t.targets.items()) for t in state.configurations if t.dimensionality == state.config.k_max]
    games = assemble_games(table, full, state.config.miners, metrics)

    attributions: list[analysis.AttributionRow] = []
    out_rows = []
    complete = 0
    for g in games:
        if not g.complete:
            for f, v in g.players:
                out_rows.append([g.game_id, g.miner, g.metric, f, v, None, None, 0])
            continue
        complete += 1
        att = shapley_exact(g)
        for (f, v), phi, share in zip(g.players, att.phi, att.phi_normalized):
            out_rows.append([g.game_id, g.miner, g.metric, f, v, float(phi), float(share), 1])
            attributions.append(analysis.AttributionRow(g.game_id, g.miner, g.metric, f, v, float(phi), float(share)))
    _write_csv(state.out / "shapley.csv", SHAPLEY_COLUMNS, out_rows)
    return attributions, complete, len(games)


def report(state: RunState, wall_time_s: float | None = None) -> dict:
    missing = [
        stage
        for stage, ok in (
            ("generation/measurement (run incomplete)", state.done),
            ("measurements.csv", (state.out / "measurements.csv").exists()),
        )
        if not ok
    ]
    if missing:
        raise MissingStageError(f"cannot report; absent stages: {missing}")

    attributions, complete, total = compute_shapley(state)
    cfg = state.config

    rank_rows = []
    for scope, rep in analysis.ranking_reports(attributions, cfg.alpha).items():
        clique_of = {f: ";".join(str(i) for i, c in enumerate(rep.cliques) if f in c) for f in rep.features}
        for f in sorted(rep.features, key=lambda f: (rep.mean_ranks[f], f)):
            rank_rows.append(
                [scope, f, rep.mean_ranks[f], rep.statistic, rep.p_value, rep.critical_distance, clique_of[f], rep.n_blocks]
            )
    _write_csv(state.out / "ranking.csv", RANKING_COLUMNS, rank_rows)

    corr = analysis.correlations(attributions)
    _write_csv(state.out / "correlations.csv", CORRELATION_COLUMNS, ([c[k] for k in CORRELATION_COLUMNS] for c in corr))

    rob = analysis.robustness(attributions)
    _write_csv(
        state.out / "robustness.csv",
        ROBUSTNESS_COLUMNS,
        ([p.miner, p.metric, p.mean_norm_phi, p.var_norm_phi, p.n, int(p.singleton)] for p in rob),
    )

    meas = _read_csv(state.out / "measurements.csv")
    statuses = {(r["config_id"], r["miner"]): r["status"] for r in meas}
    targets = {t.id: t.targets for t in state.configurations}
    feas_summary, cells = analysis.feasibility(statuses, targets, attributions, cfg.metrics, cfg.bucket_count)
    _write_csv(
        state.out / "feasibility.csv",
        FEASIBILITY_COLUMNS,
        ([c.feature, c.bucket_lo, c.bucket_hi, c.miner, c.metric, c.success_fraction, c.mean_norm_phi] for c in cells),
    )

    means = analysis.mean_attribution(attributions)
    _write_csv(
        state.out / "mean_attribution.csv",
        ["feature", "miner", "metric", "n", "mean_phi", "mean_phi_normalized"],
        ([m["feature"], m["miner"], m["metric"], m["n"], m["mean_phi"], m["mean_phi_normalized"]] for m in means),
    )

    gen = _read_csv(state.out / "generation.csv")
    gen_status: dict[str, int] = {}
    for r in gen:
        gen_status[r["status"]] = gen_status.get(r["status"], 0) + 1
    summary = {
        "configurations": len(state.configurations),
        "configurations_by_dimension": {
            str(k): sum(1 for t in state.configurations if t.dimensionality == k)
            for k in range(1, cfg.k_max + 1)
        },
        "generation_status": dict(sorted(gen_status.items())),
        "feasible_logs_percent": {**feas_summary["miners"], "overlap": feas_summary["overlap"]},
        "games_total": total,
        "games_complete": complete,
        "no_complete_games": complete == 0,
        "wall_time_s": wall_time_s,
    }
    _atomic_write(state.out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def recompute_shapley(out: str | Path) -> dict:
    """Redo step (iv) and every report from the stored measurements."""
    return report(load_state(out))


def feasibility_table(summary: dict) -> str:
    """Plain-text table: one row per miner plus the overlap row."""
    rows = summary["feasible_logs_percent"]
    width = max(len(k) for k in rows)
    lines = [f"{'miner'.ljust(width)}  feasible logs [%]"]
    for k, v in rows.items():
        lines.append(f"{k.ljust(width)}  {v:6.1f}")
    return "\n".join(lines)
