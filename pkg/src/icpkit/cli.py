"""Command-line front end.

Every command writes a `report.json` (config echo, version, payload)
plus command-specific CSVs into the output location, and is reproducible
from the echoed config and seed. Exit codes: 0 success, 2 validation
error (bad flags, unparsable input), 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .dataset import (
    DatasetTable,
    ParseError,
    build_aggregated_table,
    load_features_csv,
    load_grids_csv,
    load_obs_meta_csv,
    write_features_csv,
)
from .figures import emit_figure_data, write_csv
from .forest import ForestConfig
from .hsic import hsic_matrix, threshold_clusters
from .icp import cluster_icp, exhaustive_icp, extract_accepted_at_alpha, greedy_icp
from .invariance import event_folds, generalization_curve, spatial_folds
from .synth import ScmSpec, coverage_experiment, sample_scm

DEFAULT_SEED = 0
DEFAULT_ALPHA = 0.05
DEFAULT_K = 5
DEFAULT_THRESHOLD = 0.25

COMMANDS = ("aggregate", "folds", "greedy", "exhaustive", "cluster-icp", "hsic", "synth", "coverage")


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str
    grids: str | None = None
    events: str | None = None
    features: str | None = None
    clusters: str | None = None
    spec: str | None = None
    base: tuple[str, ...] | None = None
    scheme: str = "event"
    alpha: float = DEFAULT_ALPHA
    k_folds: int = DEFAULT_K
    min_size: int = 1
    threshold: float = DEFAULT_THRESHOLD
    seed: int = DEFAULT_SEED
    threads: int | None = None
    trees: int = 100
    max_depth: int = 10
    curve: bool = False
    n_events: int = 50
    obs_per_event: int = 10
    runs: int = 100

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")

    def forest_config(self) -> ForestConfig:
        return ForestConfig(n_trees=self.trees, max_depth=self.max_depth, seed=self.seed)


@dataclass(frozen=True)
class RunReport:
    command: str
    config: dict
    version: str
    elapsed_seconds: float
    warnings: tuple[str, ...]
    payload: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "elapsed_seconds": self.elapsed_seconds,
            "warnings": list(self.warnings),
            "payload": self.payload,
        }


def _load_table(config: RunConfig) -> DatasetTable:
    if config.features is None:
        raise ValueError("--features is required")
    return load_features_csv(config.features)


def _make_folds(table: DatasetTable, config: RunConfig):
    if config.scheme == "event":
        return event_folds(table, config.k_folds, config.seed)
    if config.scheme == "spatial":
        return spatial_folds(table, config.k_folds, config.seed)
    raise ValueError(f"unknown scheme {config.scheme!r}")


def _folds_payload(folds) -> dict:
    return {
        "scheme": folds.scheme,
        "k": folds.k,
        "seed": folds.seed,
        "assignment": {e: int(f) for e, f in sorted(folds.event_to_fold.items())},
    }


def _set_list(s) -> list[str]:
    return sorted(s)


def _icp_payload(outcome) -> dict:
    return {
        "alpha": outcome.alpha,
        "tested": [
            {
                "subset": _set_list(r.subset),
                "p_value": r.p_value,
                "auc_without_env": r.auc_without_env,
                "auc_with_env": r.auc_with_env,
                "z_statistic": r.z_statistic,
                "accepted": r.p_value > outcome.alpha,
            }
            for r in outcome.tested
        ],
        "accepted_sets": [_set_list(s) for s in outcome.accepted_sets],
        "intersection": _set_list(outcome.intersection),
        "defining_sets": [_set_list(s) for s in outcome.defining],
        "no_accepted": outcome.no_accepted,
    }


def _write_sets_csv(path: Path, outcome) -> Path:
    rows = [
        [" ".join(_set_list(r.subset)), repr(r.p_value), repr(r.auc_with_env),
         repr(r.auc_without_env), int(r.p_value > outcome.alpha)]
        for r in outcome.tested
    ]
    return write_csv(path, ["subset", "p_value", "auc_with_env", "auc_without_env", "accepted"], rows)


class _Outputs:
    """Tracks written files so a failed run leaves nothing partial behind."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path: Path) -> Path:
        self.paths.append(Path(path))
        return path

    def discard(self) -> None:
        for path in self.paths:
            try:
                path.unlink()
            except OSError:
                pass


def run(config: RunConfig) -> RunReport:
    """Execute one command; writes report.json and command CSVs under config.out."""
    started = time.monotonic()
    outputs = _Outputs()
    try:
        payload, warnings_ = _dispatch(config, outputs)
    except BaseException:
        outputs.discard()
        raise
    report = RunReport(
        command=config.command,
        config=asdict(config),
        version=__version__,
        elapsed_seconds=time.monotonic() - started,
        warnings=tuple(warnings_),
        payload=payload,
    )
    out_dir = Path(config.out).parent if config.command == "aggregate" else Path(config.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if report.command in ("greedy", "hsic"):
            for p in emit_figure_data(report, out_dir / "figures"):
                outputs.add(p)
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except BaseException:
        outputs.discard()
        raise
    return report


def _dispatch(config: RunConfig, outputs: _Outputs) -> tuple[dict, list[str]]:
    warnings_: list[str] = []
    threads = config.threads

    if config.command == "aggregate":
        if config.grids is None or config.events is None:
            raise ValueError("aggregate requires --grids and --events")
        grids = load_grids_csv(config.grids)
        meta = load_obs_meta_csv(config.events)
        table = build_aggregated_table(grids, meta)
        out_csv = Path(config.out)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        write_features_csv(table, outputs.add(out_csv))
        payload = {
            "n_obs": table.n,
            "n_columns": table.d,
            "groups": {g.name: {"columns": len(g.column_indices), "kind": g.kind}
                       for g in table.groups},
            "out": out_csv.name,
        }
        return payload, warnings_

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if config.command == "folds":
        table = _load_table(config)
        folds = _make_folds(table, config)
        outputs.add(write_csv(out_dir / "folds.csv", ["event_id", "fold"],
                               [[e, f] for e, f in sorted(folds.event_to_fold.items())]))
        return {"folds": _folds_payload(folds)}, warnings_

    if config.command == "greedy":
        table = _load_table(config)
        folds = _make_folds(table, config)
        forest = config.forest_config()
        trace = greedy_icp(table, folds, forest, threads=threads)
        steps = [
            {
                "step": i + 1,
                "removed": s.removed_group,
                "p_value": s.p_value_of_removal,
                "auc_with_env": s.auc_with_env,
                "auc_without_env": s.auc_without_env,
                "remaining_after": _set_list(s.remaining_after),
            }
            for i, s in enumerate(trace.steps)
        ]
        outputs.add(write_csv(
            out_dir / "trace.csv",
            ["step", "removed", "p_value", "auc_with_env", "auc_without_env"],
            [[s["step"], s["removed"], repr(s["p_value"]), repr(s["auc_with_env"]),
              repr(s["auc_without_env"])] for s in steps]))
        payload = {
            "alpha": config.alpha,
            "folds": _folds_payload(folds),
            "trace": {
                "initial_groups": list(trace.initial_groups),
                "steps": steps,
                "final_group": trace.final_group,
            },
            "accepted_at_alpha": _set_list(extract_accepted_at_alpha(trace, config.alpha)),
        }
        if config.curve:
            order = [s.removed_group for s in trace.steps]
            curve = generalization_curve(table, order, forest, seed=config.seed,
                                         k=config.k_folds, threads=threads)
            payload["curve"] = [asdict(c) for c in curve]
        return payload, warnings_

    if config.command == "exhaustive":
        table = _load_table(config)
        folds = _make_folds(table, config)
        base = list(config.base) if config.base else list(table.group_names)
        outcome = exhaustive_icp(table, base, config.min_size, folds,
                                 config.forest_config(), config.alpha, threads=threads)
        outputs.add(_write_sets_csv(out_dir / "sets.csv", outcome))
        payload = {"base": sorted(base), "min_size": config.min_size, **_icp_payload(outcome)}
        if outcome.no_accepted:
            warnings_.append("no accepted sets at this alpha")
        return payload, warnings_

    if config.command == "cluster-icp":
        if config.clusters is None:
            raise ValueError("cluster-icp requires --clusters")
        table = _load_table(config)
        folds = _make_folds(table, config)
        with open(config.clusters, "r", encoding="utf-8") as fh:
            clusters = json.load(fh)
        if not isinstance(clusters, list) or not all(isinstance(c, list) for c in clusters):
            raise ValueError("clusters file must be a JSON list of name lists")
        outcome = cluster_icp(table, clusters, config.min_size, folds,
                              config.forest_config(), config.alpha, threads=threads)
        outputs.add(_write_sets_csv(out_dir / "sets.csv", outcome))
        payload = {
            "clusters": [list(c) for c in clusters],
            "min_size": config.min_size,
            "n_unique_subsets": len(outcome.tested),
            **_icp_payload(outcome),
        }
        if outcome.no_accepted:
            warnings_.append("no accepted sets at this alpha")
        return payload, warnings_

    if config.command == "hsic":
        table = _load_table(config)
        matrix = hsic_matrix(table, threads=threads)
        clusters = threshold_clusters(matrix, config.threshold)
        outputs.add(write_csv(out_dir / "hsic_matrix.csv", list(matrix.group_names),
                               [[repr(v) for v in row] for row in matrix.values]))
        clusters_path = out_dir / "clusters.json"
        with open(outputs.add(clusters_path), "w", encoding="utf-8") as fh:
            json.dump([list(c) for c in clusters.clusters], fh, indent=2, sort_keys=True)
            fh.write("\n")
        payload = {
            "group_names": list(matrix.group_names),
            "matrix": [[float(v) for v in row] for row in matrix.values],
            "bandwidths": [float(b) for b in matrix.bandwidths],
            "threshold": config.threshold,
            "clusters": [list(c) for c in clusters.clusters],
        }
        return payload, warnings_

    if config.command == "synth":
        if config.spec is None:
            raise ValueError("synth requires --spec")
        spec = ScmSpec.from_json(Path(config.spec).read_text(encoding="utf-8"))
        result = sample_scm(spec, config.n_events, config.obs_per_event)
        write_features_csv(result.table, outputs.add(out_dir / "features.csv"))
        events = result.table.events()
        outputs.add(write_csv(out_dir / "events.csv", ["event_id", "lat", "lon"],
                               [[e, repr(result.table.event_coords[e][0]),
                                 repr(result.table.event_coords[e][1])] for e in events]))
        payload = {
            "spec": json.loads(spec.to_json()),
            "n_events": config.n_events,
            "obs_per_event": config.obs_per_event,
            "causal_groups": list(result.causal_groups),
            "y_descendant_groups": list(result.y_descendant_groups),
            "prevalence": float(result.table.target.mean()),
        }
        return payload, warnings_

    if config.command == "coverage":
        if config.spec is None:
            raise ValueError("coverage requires --spec")
        spec = ScmSpec.from_json(Path(config.spec).read_text(encoding="utf-8"))
        result = coverage_experiment(
            spec, config.runs, config.alpha, config.min_size, config.forest_config(),
            n_events=config.n_events, obs_per_event=config.obs_per_event,
            k_folds=config.k_folds, threads=threads,
        )
        outputs.add(write_csv(
            out_dir / "runs.csv", ["run", "covered", "intersection", "n_accepted"],
            [[o.run_index, int(o.covered), " ".join(_set_list(o.intersection)), o.n_accepted]
             for o in result.outcomes]))
        payload = {
            "spec": json.loads(spec.to_json()),
            "runs": config.runs,
            "alpha": config.alpha,
            "min_size": config.min_size,
            "coverage_fraction": result.coverage_fraction,
            "outcomes": [
                {"run": o.run_index, "covered": o.covered,
                 "intersection": _set_list(o.intersection), "n_accepted": o.n_accepted}
                for o in result.outcomes
            ],
        }
        return payload, warnings_

    raise ValueError(f"unknown command {config.command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icpkit",
        description="Invariant causal prediction toolkit for binary targets "
                    "with continuous environment variables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, features=True):
        p.add_argument("--out", default="icp_out", help="output directory")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (ICP_THREADS env var sets the default)")
        if features:
            p.add_argument("--features", required=True, help="feature table CSV")

    def folds_opts(p):
        p.add_argument("--scheme", choices=("event", "spatial"), default="event")
        p.add_argument("--k", dest="k_folds", type=int, default=DEFAULT_K)

    def forest_opts(p):
        p.add_argument("--trees", type=int, default=100)
        p.add_argument("--max-depth", type=int, default=10)

    p = sub.add_parser("aggregate", help="aggregate pixel grids into the 11-statistic feature table")
    p.add_argument("--grids", required=True, help="long-form grid CSV")
    p.add_argument("--events", required=True, help="per-observation metadata CSV (obs_id,event_id,label,env_*)")
    p.add_argument("--out", required=True, help="output feature CSV path")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("folds", help="build grouped cross-validation folds")
    common(p)
    folds_opts(p)

    p = sub.add_parser("greedy", help="greedy backward-elimination ICP trace")
    common(p)
    folds_opts(p)
    forest_opts(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--curve", action="store_true",
                   help="also compute event/spatial generalization curves along the trace")

    p = sub.add_parser("exhaustive", help="exhaustive ICP over subsets of a base set")
    common(p)
    folds_opts(p)
    forest_opts(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--base", type=lambda s: tuple(x for x in s.split(",") if x), default=None,
                   help="comma-separated group names (default: all groups)")
    p.add_argument("--min-size", dest="min_size", type=int, required=True)

    p = sub.add_parser("cluster-icp", help="exhaustive ICP over unions of variable clusters")
    common(p)
    folds_opts(p)
    forest_opts(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--clusters", required=True, help="JSON list of group-name lists")
    p.add_argument("--min-size", dest="min_size", type=int, required=True)

    p = sub.add_parser("hsic", help="pairwise normalized HSIC matrix and threshold clusters")
    common(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)

    p = sub.add_parser("synth", help="draw a synthetic SCM dataset with known causal set")
    common(p, features=False)
    p.add_argument("--spec", required=True, help="ScmSpec JSON file")
    p.add_argument("--events", dest="n_events", type=int, required=True)
    p.add_argument("--obs", dest="obs_per_event", type=int, required=True)

    p = sub.add_parser("coverage", help="Monte-Carlo check that the ICP intersection stays in S*")
    common(p, features=False)
    forest_opts(p)
    p.add_argument("--spec", required=True, help="ScmSpec JSON file")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--min-size", dest="min_size", type=int, default=1)
    p.add_argument("--events", dest="n_events", type=int, default=50)
    p.add_argument("--obs", dest="obs_per_event", type=int, default=10)

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(args).items() if v is not None}
    allowed = set(RunConfig.__dataclass_fields__)
    return RunConfig(**{k: v for k, v in fields.items() if k in allowed})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = config_from_args(args)
        report = run(config)
    except (ValueError, ParseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if report.warnings:
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
