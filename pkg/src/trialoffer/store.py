"""Experiment execution and the on-disk result store.

A run writes one directory per (policy, continuation-cell) pair plus the
shared instance, two summary tables (absolute efficiencies and percentage
improvements over the no-continuation baseline), and a manifest with the
derived seeds.  Re-running the same experiment description reproduces
every CSV body byte for byte; only the manifest carries a timestamp.

CSV dialect everywhere: comma separated, dot decimal, one header row,
"\n" line endings, UTF-8.  Floats are written with repr so parsing them
back is exact.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SCATTER_COLUMNS, ImprovementRow, download_quality_scatter, improvement_table
from .instances import ConfigError, ExperimentSpec, load_market, save_market
from .market import ContinuationSpec, Market
from .policies import PolicyKind
from .simulation import SimConfig, SimResult, run_replications

__all__ = [
    "CellKey",
    "ExperimentRun",
    "emit_plot_data",
    "run_experiment",
]


@dataclass(frozen=True)
class CellKey:
    """One grid cell: a policy plus a continuation setting (None = baseline)."""

    policy: PolicyKind
    rho: float | None = None
    r: float | None = None

    @property
    def is_baseline(self) -> bool:
        return self.rho is None

    @property
    def tag(self) -> str:
        if self.is_baseline:
            return "none"
        return f"rho{self.rho:g}_r{self.r:g}"

    @property
    def name(self) -> str:
        return f"{self.policy.value}__{self.tag}"


@dataclass(frozen=True)
class ExperimentRun:
    """In-memory view of a finished run, alongside the on-disk store."""

    root: Path
    spec: ExperimentSpec
    configs: dict[CellKey, SimConfig]
    results: dict[CellKey, SimResult]
    improvements: list[ImprovementRow]


def _cell_seed(base_seed: int, policy_index: int, cell_index: int) -> int:
    ss = np.random.SeedSequence([base_seed, policy_index, cell_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _grid(spec: ExperimentSpec) -> dict[CellKey, SimConfig]:
    """All (policy, cell) configs including the per-policy baselines."""
    configs: dict[CellKey, SimConfig] = {}
    for p_idx, policy in enumerate(spec.policies):
        cells: list[tuple[float, float] | None] = [None, *spec.sweep]
        for c_idx, cell in enumerate(cells):
            if cell is None:
                key = CellKey(policy=policy)
                cont = ContinuationSpec.none()
            else:
                key = CellKey(policy=policy, rho=cell[0], r=cell[1])
                cont = ContinuationSpec.polynomial(*cell)
            if key in configs:
                raise ConfigError(f"experiment: sweep repeats cell {key.tag}")
            configs[key] = SimConfig(
                market=dataclasses.replace(spec.market, continuation=cont),
                policy=policy,
                steps=spec.steps,
                rerank_period=spec.rerank_period,
                replications=spec.replications,
                base_seed=_cell_seed(spec.base_seed, p_idx, c_idx),
                max_session_tries=spec.max_session_tries,
                social_influence=spec.social_influence,
                trajectory_interval=spec.trajectory_interval,
            )
    return configs


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(x) for x in row])


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cell_config_doc(key: CellKey, cfg: SimConfig) -> dict:
    cell: dict = {"kind": "none"} if key.is_baseline else {
        "kind": "polynomial",
        "rho": key.rho,
        "r": key.r,
    }
    return {
        "policy": key.policy.value,
        "continuation": cell,
        "steps": cfg.steps,
        "rerank_period": cfg.rerank_period,
        "replications": cfg.replications,
        "base_seed": cfg.base_seed,
        "social_influence": cfg.social_influence,
        "max_session_tries": cfg.max_session_tries,
        "trajectory_interval": cfg.effective_trajectory_interval,
    }


def _write_cell(cell_dir: Path, key: CellKey, cfg: SimConfig, result: SimResult) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cell_dir / "config.json", _cell_config_doc(key, cfg))
    market = cfg.market
    mean = result.downloads_final
    counts = np.stack([r.downloads for r in result.per_replication])
    _write_csv(
        cell_dir / "aggregate.csv",
        ("product_id", "quality", "appeal", "mean_downloads", "sd_downloads"),
        (
            (
                i + 1,
                float(market.quality[i]),
                float(market.appeal[i]),
                float(mean[i]),
                float(np.std(counts[:, i])),
            )
            for i in range(market.n)
        ),
    )
    _write_csv(
        cell_dir / "replications.csv",
        ("replication", "product_id", "downloads"),
        (
            (rep.replication, i + 1, int(rep.downloads[i]))
            for rep in result.per_replication
            for i in range(market.n)
        ),
    )
    _write_csv(
        cell_dir / "trajectory.csv",
        ("replication", "step", "cumulative_downloads"),
        (
            (rep.replication, int(step), int(total))
            for rep in result.per_replication
            for step, total in zip(rep.trajectory_steps, rep.trajectory_downloads)
        ),
    )
    _write_csv(
        cell_dir / "summary.csv",
        ("replication", "total_downloads", "tries_total", "truncated_sessions"),
        (
            (rep.replication, rep.total_downloads, rep.tries_total, rep.truncated_sessions)
            for rep in result.per_replication
        ),
    )


def _sweep_rows(spec: ExperimentSpec):
    yield None
    yield from spec.sweep


def _write_tables(root: Path, spec: ExperimentSpec, results: dict[CellKey, SimResult],
                  improvements: list[ImprovementRow]) -> None:
    tables = root / "tables"
    tables.mkdir(exist_ok=True)
    labels = [p.label for p in spec.policies]
    rows = []
    for cell in _sweep_rows(spec):
        if cell is None:
            row = ["none", "", ""]
            keys = [CellKey(policy=p) for p in spec.policies]
        else:
            row = [f"rho{cell[0]:g}_r{cell[1]:g}", cell[0], cell[1]]
            keys = [CellKey(policy=p, rho=cell[0], r=cell[1]) for p in spec.policies]
        row.extend(results[k].efficiency for k in keys)
        rows.append(row)
    _write_csv(tables / "efficiency.csv", ("cell", "rho", "r", *labels), rows)

    by_key = {(row.rho, row.r, row.policy): row for row in improvements}
    rows = []
    for rho, r in spec.sweep:
        row = [f"rho{rho:g}_r{r:g}", rho, r]
        row.extend(by_key[(rho, r, p)].improvement_pct for p in spec.policies)
        rows.append(row)
    _write_csv(tables / "improvement.csv", ("cell", "rho", "r", *labels), rows)


def _execute(cfg: SimConfig) -> SimResult:
    return run_replications(cfg)


def run_experiment(
    spec: ExperimentSpec,
    output_dir,
    workers: int = 1,
    progress=None,
) -> ExperimentRun:
    """Run the sweep-times-policy grid and persist the result store.

    Baseline (no continuation) cells are always run so the improvement
    table can be formed.  ``workers`` > 1 dispatches cells to a process
    pool; the output is identical for any worker count because every
    replication owns a seed derived from (base_seed, policy, cell,
    replication) alone.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    configs = _grid(spec)
    keys = list(configs)
    if progress:
        progress(f"running {len(keys)} cells ({spec.replications} replications each)")
    if workers == 1:
        results_list = [_execute(configs[k]) for k in keys]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results_list = list(pool.map(_execute, [configs[k] for k in keys]))
    results = dict(zip(keys, results_list))
    if progress:
        progress(f"writing result store to {root}")

    pairs = []
    for key, cfg in configs.items():
        if key.is_baseline:
            continue
        base_key = CellKey(policy=key.policy)
        pairs.append((cfg, results[key], configs[base_key], results[base_key]))
    improvements = improvement_table(pairs)

    save_market(spec.market, root / "market.json")
    for key in keys:
        _write_cell(root / "cells" / key.name, key, configs[key], results[key])
    _write_tables(root, spec, results, improvements)
    _write_json(
        root / "manifest.json",
        {
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "version": __version__,
            "base_seed": spec.base_seed,
            "steps": spec.steps,
            "rerank_period": spec.rerank_period,
            "replications": spec.replications,
            "social_influence": spec.social_influence,
            "max_session_tries": spec.max_session_tries,
            "policies": [p.value for p in spec.policies],
            "workers": workers,
            "cells": [
                {
                    "name": key.name,
                    "policy": key.policy.value,
                    "rho": key.rho,
                    "r": key.r,
                    "seed": configs[key].base_seed,
                }
                for key in keys
            ],
        },
    )
    return ExperimentRun(
        root=root, spec=spec, configs=configs, results=results, improvements=improvements
    )


def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"missing result file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _result_from_store(cell_dir: Path, market: Market) -> SimResult:
    """Rebuild enough of a SimResult from a cell's per-replication files."""
    from .simulation import ReplicationResult  # local to avoid import cycle noise

    config = json.loads((cell_dir / "config.json").read_text(encoding="utf-8"))
    downloads: dict[int, np.ndarray] = {}
    for row in _read_csv(cell_dir / "replications.csv"):
        w = int(row["replication"])
        downloads.setdefault(w, np.zeros(market.n, dtype=np.int64))
        downloads[w][int(row["product_id"]) - 1] = int(row["downloads"])
    trajectories: dict[int, list[tuple[int, int]]] = {}
    for row in _read_csv(cell_dir / "trajectory.csv"):
        trajectories.setdefault(int(row["replication"]), []).append(
            (int(row["step"]), int(row["cumulative_downloads"]))
        )
    reps = []
    for w in sorted(downloads):
        traj = trajectories.get(w, [])
        reps.append(
            ReplicationResult(
                replication=w,
                downloads=downloads[w],
                trajectory_steps=np.array([s for s, _ in traj], dtype=np.int64),
                trajectory_downloads=np.array([d for _, d in traj], dtype=np.int64),
                tries_total=0,  # not needed for plot emission
                truncated_sessions=0,
            )
        )
    return SimResult(
        policy=PolicyKind(config["policy"]),
        steps=int(config["steps"]),
        seed_used=int(config["base_seed"]),
        per_replication=tuple(reps),
    )


def emit_plot_data(store_root) -> list[Path]:
    """Emit scatter and mean-trajectory CSVs for every cell of a store.

    The scatter is the long-format downloads-versus-quality table (one row
    per product and replication, lowest quality first); the trajectory is
    the across-replication mean of cumulative downloads at each sampled
    step.  Returns the written paths.
    """
    root = Path(store_root)
    cells_dir = root / "cells"
    if not cells_dir.is_dir():
        raise FileNotFoundError(f"{root} does not look like a result store (no cells/)")
    market = load_market(root / "market.json")
    plots = root / "plots"
    plots.mkdir(exist_ok=True)
    written = []
    for cell_dir in sorted(cells_dir.iterdir()):
        if not cell_dir.is_dir():
            continue
        result = _result_from_store(cell_dir, market)
        scatter_path = plots / f"{cell_dir.name}__scatter.csv"
        _write_csv(scatter_path, SCATTER_COLUMNS, download_quality_scatter(result, market))
        steps = result.trajectory_steps
        mean_traj = result.downloads_trajectory
        traj_path = plots / f"{cell_dir.name}__trajectory.csv"
        _write_csv(
            traj_path,
            ("step", "mean_cumulative_downloads"),
            ((int(s), float(d)) for s, d in zip(steps, mean_traj)),
        )
        written.extend([scatter_path, traj_path])
    return written
