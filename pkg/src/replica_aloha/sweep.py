"""Sweep execution and CSV output.

Each sweep point is one (algorithm, M, lambda, gamma) cell of the grid,
replicated n_replications times and aggregated into one CSV row. Per-point
seeds are derived by hashing the point's content (not its position) through
splitmix64, so reordering the grids never changes a point's results, and the
whole CSV is byte-identical across runs of the same spec.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .asymptotics import UnstableLoadError, h1_limit, hk_limit
from .config import ExperimentSpec
from .engine import ReplicatedMetrics, run_replicated
from .occupancy import (
    PolicyTable,
    TableMismatchError,
    build_policy_table,
    load_policy_table,
    save_policy_table,
)

log = logging.getLogger(__name__)

CSV_FORMAT_LINE = "# replica-aloha results v1"
CSV_COLUMNS = [
    "algorithm",
    "M",
    "lambda",
    "gamma",
    "seed",
    "slots",
    "mean_backlog_per_channel",
    "ci95",
    "mean_delay_slots",
    "throughput_per_channel",
    "mean_replicas",
    "bound_eta_star",
    "bound_k_star",
]

_MASK64 = (1 << 64) - 1
_TABLE_ALGOS = ("hk", "ak", "ak_mod")


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given state (Steele et al. mixing)."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def derive_point_seed(
    base_seed: int, algorithm: str, m: int, lam: float, gamma: float
) -> int:
    """Deterministic per-point seed from the point's content."""
    state = splitmix64(base_seed & _MASK64)
    for token in (
        int.from_bytes(algorithm.encode("utf-8").ljust(8, b"\0")[:8], "little"),
        m,
        _float_bits(lam),
        _float_bits(gamma),
    ):
        state = splitmix64(state ^ (token & _MASK64))
    return state & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class SweepPoint:
    algorithm: str
    m: int
    lam: float
    gamma: float
    seed: int


@dataclass(frozen=True)
class ResultRow:
    """One CSV row: a sweep point aggregated over its replications."""

    point: SweepPoint
    slots: int
    mean_backlog_per_channel: float
    ci95: float
    mean_delay_slots: float
    throughput_per_channel: float
    mean_replicas: float
    bound_eta_star: float | None
    bound_k_star: int | None

    def as_csv_fields(self) -> list[str]:
        p = self.point
        return [
            p.algorithm,
            repr(p.m),
            repr(p.lam),
            repr(p.gamma),
            repr(p.seed),
            repr(self.slots),
            repr(self.mean_backlog_per_channel),
            repr(self.ci95),
            repr(self.mean_delay_slots),
            repr(self.throughput_per_channel),
            repr(self.mean_replicas),
            "" if self.bound_eta_star is None else repr(self.bound_eta_star),
            "" if self.bound_k_star is None else repr(self.bound_k_star),
        ]


def iter_points(spec: ExperimentSpec) -> list[SweepPoint]:
    """Grid order: m, then gamma, then lambda, then algorithm."""
    points = []
    for m in spec.m_grid:
        for gamma in spec.gamma_grid:
            for lam in spec.lambda_grid:
                for algorithm in spec.algorithms:
                    points.append(
                        SweepPoint(
                            algorithm=algorithm,
                            m=m,
                            lam=lam,
                            gamma=gamma,
                            seed=derive_point_seed(
                                spec.base.seed, algorithm, m, lam, gamma
                            ),
                        )
                    )
    return points


def point_bound(
    algorithm: str, lam: float, gamma: float, k_max: int = 32
) -> tuple[float | None, int | None]:
    """Limiting backlog intensity matching the algorithm's replica class,
    or (None, None) outside the stability region."""
    try:
        if algorithm in _TABLE_ALGOS:
            res = hk_limit(lam, gamma, k_max=k_max)
        else:
            res = h1_limit(lam, gamma)
    except UnstableLoadError:
        return None, None
    return res.eta_star, res.k_star


def _table_cache_path(cache_dir: Path, m: int, gamma: float) -> Path:
    return cache_dir / f"policy_M{m}_gamma{gamma!r}.json"


class TableStore:
    """Builds policy tables on demand, memoizing per (M, gamma) and
    optionally persisting to a cache directory."""

    def __init__(self, cache_dir: str | Path | None = None, n_max_factor: int = 4):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.n_max_factor = n_max_factor
        self._memo: dict[tuple[int, float], PolicyTable] = {}

    def get(self, m: int, gamma: float) -> PolicyTable:
        key = (m, gamma)
        if key in self._memo:
            return self._memo[key]
        n_max = self.n_max_factor * m
        table = None
        path = None
        if self.cache_dir is not None:
            path = _table_cache_path(self.cache_dir, m, gamma)
            if path.exists():
                try:
                    cached = load_policy_table(path)
                    if cached.matches(m, gamma) and cached.n_max >= n_max:
                        table = cached
                    else:
                        log.warning(
                            "cache %s does not match (M=%d, gamma=%r, "
                            "n_max>=%d); rebuilding",
                            path, m, gamma, n_max,
                        )
                except (TableMismatchError, KeyError, ValueError) as exc:
                    log.warning("ignoring unreadable cache %s: %s", path, exc)
        if table is None:
            table = build_policy_table(m, gamma, n_max=n_max)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_policy_table(table, path)
        self._memo[key] = table
        return table


def run_point(
    point: SweepPoint,
    spec: ExperimentSpec,
    table: PolicyTable | None,
) -> ResultRow:
    config = replace(
        spec.base,
        n_channels=point.m,
        load_per_channel=point.lam,
        erasure_prob=point.gamma,
        algorithm=point.algorithm,
        seed=point.seed,
    )
    agg: ReplicatedMetrics = run_replicated(config, spec.n_replications, table=table)
    eta_star, k_star = point_bound(point.algorithm, point.lam, point.gamma)
    log.info(
        "%s M=%d lam=%g gamma=%g: backlog/ch=%.4f +-%.4f thru=%.4f",
        point.algorithm, point.m, point.lam, point.gamma,
        agg.mean_backlog_per_channel, agg.ci95_backlog,
        agg.throughput_per_channel,
    )
    return ResultRow(
        point=point,
        slots=config.horizon_slots,
        mean_backlog_per_channel=agg.mean_backlog_per_channel,
        ci95=agg.ci95_backlog,
        mean_delay_slots=agg.mean_delay_slots,
        throughput_per_channel=agg.throughput_per_channel,
        mean_replicas=agg.mean_replicas,
        bound_eta_star=eta_star,
        bound_k_star=k_star,
    )


def _run_point_task(args: tuple) -> tuple[int, ResultRow]:
    index, point, spec, table = args
    return index, run_point(point, spec, table)


def execute(spec: ExperimentSpec, workers: int = 1) -> list[ResultRow]:
    """Run every sweep point; CSV row order always follows the grid order."""
    points = iter_points(spec)
    store = TableStore(spec.table_cache_dir)
    tasks = []
    for index, point in enumerate(points):
        table = (
            store.get(point.m, point.gamma)
            if point.algorithm in _TABLE_ALGOS
            else None
        )
        tasks.append((index, point, spec, table))
    rows: list[ResultRow | None] = [None] * len(points)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, row in pool.map(_run_point_task, tasks):
                rows[index] = row
    else:
        for task in tasks:
            index, row = _run_point_task(task)
            rows[index] = row
    return rows  # type: ignore[return-value]


def render_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(CSV_FORMAT_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv_fields())
    return buf.getvalue()


def write_csv(rows: list[ResultRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows), encoding="utf-8")
    return path


def read_results_csv(path: str | Path) -> list[dict]:
    """Read a results CSV back into dicts with typed numeric fields."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_FORMAT_LINE:
            raise ValueError(f"{path} is not a results CSV (header {first!r})")
        rows = []
        for record in csv.DictReader(fh):
            row: dict = dict(record)
            for key in (
                "lambda", "gamma", "mean_backlog_per_channel", "ci95",
                "mean_delay_slots", "throughput_per_channel", "mean_replicas",
            ):
                row[key] = float(row[key])
            for key in ("M", "seed", "slots"):
                row[key] = int(row[key])
            row["bound_eta_star"] = (
                float(record["bound_eta_star"]) if record["bound_eta_star"] else None
            )
            row["bound_k_star"] = (
                int(record["bound_k_star"]) if record["bound_k_star"] else None
            )
            rows.append(row)
    return rows


def stability_margin(lam: float, gamma: float) -> float:
    """How far below the single-replica stability limit the load sits."""
    return (1.0 - gamma) * math.exp(-1.0) - lam
