"""Benchmark harness: tree-count and direction-tries sweeps with run averaging.

Every (tree count, tries) cell is repeated ``runs`` times; each run's forest
is built from a seed derived from (master_seed, cell index, run index) and
logged in its report row, so any single run can be reconstructed exactly.
Metric columns are a pure function of data, config, and seed; only the
timing columns vary between invocations.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import Dataset, as_dataset, load_points, standardize
from .evaluation import ExactKnnTable, accuracy_report, exact_knn, exact_knn_cached
from .forest import BatchResult, RandomProjectionForest
from .rng import derive_seed

ORACLE_MAX_POINTS = 60_000
SCALING_TREES = 40


class ConfigError(Exception):
    """Unusable configuration; the CLI maps this to exit code 1."""


class InvariantError(Exception):
    """A result broke a property that holds by construction; exit code 3."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark invocation.

    Provide either ``input`` (a CSV path) or ``dataset`` (an in-memory
    Dataset).  ``runs`` defaults to a desk-scale 20; raise it to 100 to
    match long-form protocol.
    """

    input: str | None = None
    format: str = "csv"
    has_header: bool = False
    dataset: Dataset | None = None
    dataset_id: str = ""
    k: int = 5
    tree_counts: tuple[int, ...] = (10, 20, 40, 60, 80, 100)
    n_try_list: tuple[int, ...] = (1,)
    leaf_capacity: int = 20
    runs: int = 20
    master_seed: int = 0
    workers: int = 1
    standardize: bool = False
    no_oracle: bool = False
    oracle_cache: str | None = None
    max_retries: int = 3
    min_extent: float = 1e-12
    out: str | None = None
    out_format: str = "csv"

    def validate(self) -> None:
        if self.input is None and self.dataset is None:
            raise ConfigError("no dataset: provide an input path")
        if self.format != "csv":
            raise ConfigError(f"unsupported input format {self.format!r}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not self.tree_counts or any(t < 1 for t in self.tree_counts):
            raise ConfigError(f"tree counts must be a nonempty list of >= 1, got {self.tree_counts}")
        if not self.n_try_list or any(t < 1 for t in self.n_try_list):
            raise ConfigError(f"ntry list must be a nonempty list of >= 1, got {self.n_try_list}")
        if self.leaf_capacity < 2:
            raise ConfigError(f"leaf size must be >= 2, got {self.leaf_capacity}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.out_format not in ("csv", "json"):
            raise ConfigError(f"out format must be csv or json, got {self.out_format!r}")


@dataclass(frozen=True)
class ReportRow:
    """One report line; ``aggregate`` is 'run', 'mean', or 'scaling'.

    Mean rows average the per-run metric values of their cell and carry
    sample standard deviations (ddof=1, 0 for a single run); their
    ``shortfall_count`` is likewise the mean over runs.  Metric fields are
    empty when the exhaustive reference was disabled.
    """

    dataset_id: str
    n: int
    dim: int
    k: int
    n_trees: int
    n_try: int
    leaf_capacity: int
    workers: int
    aggregate: str
    run: int | None
    seed: int | None
    missing_rate: float | None
    missing_rate_std: float | None
    normalized_discrepancy: float | None
    normalized_discrepancy_std: float | None
    mean_exact_dk: float | None
    mean_approx_dk: float | None
    shortfall_count: float | None
    build_ms: float
    build_ms_std: float | None
    query_ms: float
    query_ms_std: float | None
    results_sha256: str | None


_ROW_FIELDS = [f.name for f in fields(ReportRow)]
_STR_FIELDS = {"dataset_id", "aggregate", "results_sha256"}
_INT_FIELDS = {"n", "dim", "k", "n_trees", "n_try", "leaf_capacity", "workers", "run", "seed"}


def digest_batch(batch: BatchResult) -> str:
    """SHA-256 over a batch's raw result arrays; timing-free identity."""
    h = hashlib.sha256()
    h.update(batch.indices.tobytes())
    h.update(batch.distances.tobytes())
    h.update(batch.candidate_counts.tobytes())
    h.update(batch.shortfalls.tobytes())
    return h.hexdigest()


def load_config_dataset(cfg: ExperimentConfig) -> tuple[Dataset, str]:
    """Resolve the config's dataset and a display id for report rows."""
    if cfg.dataset is not None:
        data = as_dataset(cfg.dataset)
        dataset_id = cfg.dataset_id or "memory"
    else:
        data = load_points(cfg.input, format=cfg.format, has_header=cfg.has_header)
        dataset_id = cfg.dataset_id or Path(cfg.input).name
    if cfg.standardize:
        data = standardize(data)
    return data, dataset_id


def _oracle_table(cfg: ExperimentConfig, data: Dataset) -> ExactKnnTable | None:
    if cfg.no_oracle:
        return None
    if data.n > ORACLE_MAX_POINTS:
        raise ConfigError(
            f"refusing the quadratic exhaustive reference for n={data.n} > "
            f"{ORACLE_MAX_POINTS}; pass --no-oracle for a timing-only run"
        )
    if cfg.k > data.n - 1:
        raise ConfigError(f"k={cfg.k} needs at least k+1={cfg.k + 1} points, got n={data.n}")
    if cfg.oracle_cache:
        return exact_knn_cached(data, cfg.k, cfg.oracle_cache, n_jobs=cfg.workers)
    return exact_knn(data, cfg.k, n_jobs=cfg.workers)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def _run_cell(
    cfg: ExperimentConfig,
    data: Dataset,
    dataset_id: str,
    table: ExactKnnTable | None,
    cell_index: int,
    n_trees: int,
    n_try: int,
) -> list[ReportRow]:
    common = dict(
        dataset_id=dataset_id,
        n=data.n,
        dim=data.dim,
        k=cfg.k,
        n_trees=n_trees,
        n_try=n_try,
        leaf_capacity=cfg.leaf_capacity,
        workers=cfg.workers,
    )
    rows: list[ReportRow] = []
    missing, gaps, builds, queries, shortfalls, digests = [], [], [], [], [], []
    mean_exacts, mean_approxes = [], []
    for run in range(cfg.runs):
        seed = derive_seed(cfg.master_seed, cell_index, run)
        forest = RandomProjectionForest(
            n_trees=n_trees,
            leaf_capacity=cfg.leaf_capacity,
            n_try=n_try,
            max_retries=cfg.max_retries,
            min_extent=cfg.min_extent,
            random_state=seed,
            n_jobs=cfg.workers,
        )
        t0 = time.perf_counter()
        forest.fit(data)
        t1 = time.perf_counter()
        batch = forest.batch_query_dataset(k=cfg.k)
        t2 = time.perf_counter()
        build_ms, query_ms = (t1 - t0) * 1e3, (t2 - t1) * 1e3
        digest = digest_batch(batch)
        report = None
        if table is not None:
            report = accuracy_report(
                batch, table, n_trees=n_trees, n_try=n_try,
                leaf_capacity=cfg.leaf_capacity, seed=seed,
            )
            if report.dominance_violations > 0:
                raise InvariantError(
                    f"{report.dominance_violations} queries returned a distance below "
                    f"the true one (cell {cell_index}, run {run}, seed {seed})"
                )
            if math.isfinite(report.normalized_discrepancy) and report.normalized_discrepancy < 0:
                raise InvariantError(
                    f"negative normalized discrepancy {report.normalized_discrepancy} "
                    f"(cell {cell_index}, run {run}, seed {seed})"
                )
        rows.append(
            ReportRow(
                **common,
                aggregate="run",
                run=run,
                seed=seed,
                missing_rate=None if report is None else report.missing_rate,
                missing_rate_std=None,
                normalized_discrepancy=None if report is None else report.normalized_discrepancy,
                normalized_discrepancy_std=None,
                mean_exact_dk=None if report is None else report.mean_exact_dk,
                mean_approx_dk=None if report is None else report.mean_approx_dk,
                shortfall_count=None if report is None else float(report.shortfall_count),
                build_ms=build_ms,
                build_ms_std=None,
                query_ms=query_ms,
                query_ms_std=None,
                results_sha256=digest,
            )
        )
        builds.append(build_ms)
        queries.append(query_ms)
        digests.append(digest)
        if report is not None:
            missing.append(report.missing_rate)
            gaps.append(report.normalized_discrepancy)
            shortfalls.append(float(report.shortfall_count))
            mean_exacts.append(report.mean_exact_dk)
            mean_approxes.append(report.mean_approx_dk)
    build_mean, build_std = _mean_std(builds)
    query_mean, query_std = _mean_std(queries)
    have_metrics = bool(missing)
    miss_mean, miss_std = _mean_std(missing) if have_metrics else (None, None)
    gap_mean, gap_std = _mean_std(gaps) if have_metrics else (None, None)
    rows.append(
        ReportRow(
            **common,
            aggregate="mean",
            run=None,
            seed=None,
            missing_rate=miss_mean,
            missing_rate_std=miss_std,
            normalized_discrepancy=gap_mean,
            normalized_discrepancy_std=gap_std,
            mean_exact_dk=_mean_std(mean_exacts)[0] if have_metrics else None,
            mean_approx_dk=_mean_std(mean_approxes)[0] if have_metrics else None,
            shortfall_count=_mean_std(shortfalls)[0] if have_metrics else None,
            build_ms=build_mean,
            build_ms_std=build_std,
            query_ms=query_mean,
            query_ms_std=query_std,
            results_sha256=hashlib.sha256("".join(digests).encode("ascii")).hexdigest(),
        )
    )
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[ReportRow]:
    """Full sweep over tree_counts x n_try_list, per-run plus mean rows."""
    cfg.validate()
    data, dataset_id = load_config_dataset(cfg)
    table = _oracle_table(cfg, data)
    rows: list[ReportRow] = []
    cell_index = 0
    for n_trees in cfg.tree_counts:
        for n_try in cfg.n_try_list:
            rows.extend(_run_cell(cfg, data, dataset_id, table, cell_index, n_trees, n_try))
            cell_index += 1
    return rows


def time_parallel_scaling(
    cfg: ExperimentConfig, worker_list, n_trees: int = SCALING_TREES
) -> list[ReportRow]:
    """Build+query wall time per worker count at a fixed tree count.

    Every worker count runs from the same derived seed, so the result
    digests must agree; only the timing columns may differ.
    """
    cfg.validate()
    workers = [int(w) for w in worker_list]
    if not workers or any(w < 1 for w in workers):
        raise ConfigError(f"worker list must be nonempty with entries >= 1, got {worker_list}")
    data, dataset_id = load_config_dataset(cfg)
    table = _oracle_table(cfg, data)
    seed = derive_seed(cfg.master_seed, 0, 0)
    rows: list[ReportRow] = []
    for w in workers:
        forest = RandomProjectionForest(
            n_trees=n_trees,
            leaf_capacity=cfg.leaf_capacity,
            n_try=cfg.n_try_list[0],
            max_retries=cfg.max_retries,
            min_extent=cfg.min_extent,
            random_state=seed,
            n_jobs=w,
        )
        t0 = time.perf_counter()
        forest.fit(data)
        t1 = time.perf_counter()
        batch = forest.batch_query_dataset(k=cfg.k, n_jobs=w)
        t2 = time.perf_counter()
        report = accuracy_report(batch, table) if table is not None else None
        rows.append(
            ReportRow(
                dataset_id=dataset_id,
                n=data.n,
                dim=data.dim,
                k=cfg.k,
                n_trees=n_trees,
                n_try=cfg.n_try_list[0],
                leaf_capacity=cfg.leaf_capacity,
                workers=w,
                aggregate="scaling",
                run=None,
                seed=seed,
                missing_rate=None if report is None else report.missing_rate,
                missing_rate_std=None,
                normalized_discrepancy=None if report is None else report.normalized_discrepancy,
                normalized_discrepancy_std=None,
                mean_exact_dk=None if report is None else report.mean_exact_dk,
                mean_approx_dk=None if report is None else report.mean_approx_dk,
                shortfall_count=None if report is None else float(report.shortfall_count),
                build_ms=(t1 - t0) * 1e3,
                build_ms_std=None,
                query_ms=(t2 - t1) * 1e3,
                query_ms_std=None,
                results_sha256=digest_batch(batch),
            )
        )
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def emit_report(rows: list[ReportRow], format: str = "csv", path=None) -> str:
    """Serialize rows with a stable column order; optionally write to path.

    CSV numeric cells use full-precision reprs and parse back to the exact
    same floats; the JSON document carries a schema version.
    """
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(_ROW_FIELDS)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, name)) for name in _ROW_FIELDS])
        text = buffer.getvalue()
    elif format == "json":
        payload = {
            "schema_version": 1,
            "rows": [{name: getattr(row, name) for name in _ROW_FIELDS} for row in rows],
        }
        text = json.dumps(payload, indent=2, allow_nan=True) + "\n"
    else:
        raise ConfigError(f"out format must be csv or json, got {format!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _parse_cell(name: str, text: str):
    if text == "":
        return None
    if name in _STR_FIELDS:
        return text
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def load_report(source, format: str = "csv") -> list[ReportRow]:
    """Parse a report emitted by :func:`emit_report` back to equal rows."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str) and "\n" not in source:
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    if format == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != _ROW_FIELDS:
            raise ValueError(f"unexpected report header: {header}")
        return [
            ReportRow(**{name: _parse_cell(name, cell) for name, cell in zip(header, cells)})
            for cells in reader
            if cells
        ]
    if format == "json":
        payload = json.loads(text)
        if payload.get("schema_version") != 1:
            raise ValueError(f"unsupported report schema {payload.get('schema_version')!r}")
        return [ReportRow(**row) for row in payload["rows"]]
    raise ValueError(f"format must be csv or json, got {format!r}")
