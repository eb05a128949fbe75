"""Grouped feature tables, CSV ingestion, and grid aggregation.

An observation is a spatial grid of pixel values per variable; continuous
variables are aggregated into a fixed vector of 11 statistics, categorical
ones into their empirical distribution. Feature columns are named
``<group>__<stat>`` and all columns sharing the prefix before the double
underscore form one variable group, which is included or excluded jointly
by every model downstream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

#: The aggregation statistics, in output order.
STAT_NAMES = ("mean", "std", "min", "max", "q01", "q05", "q25", "q50", "q75", "q95", "q99")
QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

MANDATORY_COLUMNS = ("obs_id", "event_id", "label")
ENV_PREFIX = "env_"
GROUP_SEP = "__"


class ParseError(ValueError):
    """CSV input that violates the documented schema."""


@dataclass(frozen=True)
class AggregationSpec:
    """The fixed 11-statistic aggregation (mean, std, min, max, 7 quantiles)."""

    statistics: tuple[str, ...] = STAT_NAMES
    quantile_method: str = "linear"

    def __post_init__(self):
        if tuple(self.statistics) != STAT_NAMES:
            raise ValueError(f"statistics must be exactly {STAT_NAMES} in this order")
        if self.quantile_method != "linear":
            raise ValueError("only linear quantile interpolation is supported")


@dataclass(frozen=True)
class GridObservation:
    """One variable's flat pixel values for one observation."""

    obs_id: str
    variable: str
    values: tuple
    categorical: bool = False
    vocabulary: tuple[str, ...] | None = None


@dataclass(frozen=True)
class VariableGroup:
    """A vector-valued variable: the feature columns that move together."""

    name: str
    column_indices: tuple[int, ...]
    kind: str = CONTINUOUS

    def __post_init__(self):
        if len(self.column_indices) == 0:
            raise ValueError(f"group {self.name!r} has zero columns")
        if any(b <= a for a, b in zip(self.column_indices, self.column_indices[1:])):
            raise ValueError(f"group {self.name!r} column indices must be strictly increasing")
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown group kind {self.kind!r}")


def aggregate_grid(grid: GridObservation, spec: AggregationSpec | None = None) -> np.ndarray:
    """Aggregate a continuous grid into the 11-statistic vector.

    Returns [mean, std, min, max, q01, q05, q25, q50, q75, q95, q99]; the
    standard deviation uses the population divisor and quantiles linear
    interpolation between order statistics.
    """
    if spec is None:
        spec = AggregationSpec()
    if grid.categorical:
        raise ValueError(f"grid {grid.obs_id}/{grid.variable} is categorical")
    values = np.asarray(grid.values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty grid")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite pixel in {grid.obs_id}/{grid.variable}")
    out = np.empty(11)
    out[2] = values.min()
    out[3] = values.max()
    # summation rounding can push the mean an ulp outside [min, max]
    out[0] = min(max(values.mean(), out[2]), out[3])
    out[1] = values.std()
    out[4:] = np.quantile(values, QUANTILE_LEVELS, method="linear")
    return out


def aggregate_categorical(grid: GridObservation, vocabulary: Sequence[str]) -> np.ndarray:
    """Relative frequencies of the grid's values in vocabulary order."""
    vocabulary = list(vocabulary)
    if len(grid.values) == 0:
        raise ValueError("empty grid")
    index = {c: i for i, c in enumerate(vocabulary)}
    counts = np.zeros(len(vocabulary))
    for v in grid.values:
        key = str(v)
        if key not in index:
            raise ValueError(f"unknown category {key}")
        counts[index[key]] += 1.0
    return counts / counts.sum()


@dataclass(frozen=True)
class DatasetTable:
    """Immutable observations table: features X, binary target Y, environment E.

    Rows are observations; every observation belongs to an event (the
    grouping unit for cross-validation). ``event_coords`` maps event ids
    to (lat, lon) and may be None when no coordinates are known, in
    which case spatial folds are unavailable.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    groups: tuple[VariableGroup, ...]
    target: np.ndarray
    environment: np.ndarray
    env_names: tuple[str, ...]
    event_ids: tuple[str, ...]
    obs_ids: tuple[str, ...]
    event_coords: Mapping[str, tuple[float, float]] | None = None

    def __post_init__(self):
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        target = np.asarray(self.target, dtype=np.int8)
        environment = np.ascontiguousarray(np.asarray(self.environment, dtype=np.float64))
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = features.shape[0]
        if environment.ndim != 2 or environment.shape[0] != n:
            raise ValueError("environment must be a 2-D matrix with one row per observation")
        if target.shape != (n,) or len(self.event_ids) != n or len(self.obs_ids) != n:
            raise ValueError("features, target, event_ids, obs_ids must all have n rows")
        if not np.all(np.isfinite(features)) or not np.all(np.isfinite(environment)):
            raise ValueError("non-finite value in features or environment")
        if not np.isin(target, (0, 1)).all():
            raise ValueError("target must contain only 0/1 labels")
        if len(self.feature_names) != features.shape[1]:
            raise ValueError("feature_names must match the feature column count")
        if len(self.env_names) != environment.shape[1]:
            raise ValueError("env_names must match the environment column count")
        covered = sorted(i for g in self.groups for i in g.column_indices)
        if covered != list(range(features.shape[1])):
            raise ValueError("groups must cover every feature column exactly once")
        if len({g.name for g in self.groups}) != len(self.groups):
            raise ValueError("duplicate group name")
        if self.event_coords is not None:
            missing = [e for e in set(self.event_ids) if e not in self.event_coords]
            if missing:
                raise ValueError(f"events without coordinates: {sorted(missing)}")
        features.setflags(write=False)
        target.setflags(write=False)
        environment.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "environment", environment)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "env_names", tuple(self.env_names))
        object.__setattr__(self, "event_ids", tuple(self.event_ids))
        object.__setattr__(self, "obs_ids", tuple(self.obs_ids))
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def q(self) -> int:
        return self.environment.shape[1]

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    def group(self, name: str) -> VariableGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise ValueError(f"unknown group {name!r}")

    def events(self) -> tuple[str, ...]:
        """Distinct event ids in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.event_ids:
            seen.setdefault(e)
        return tuple(seen)


def select_columns(
    table: DatasetTable, group_names: Iterable[str], include_environment: bool = False
) -> np.ndarray:
    """Concatenate the named groups' columns (in table group order), then E.

    The empty selection is legal and yields a zero-width matrix, so an
    environment-only design is expressible.
    """
    wanted = set(group_names)
    unknown = wanted - set(table.group_names)
    if unknown:
        raise ValueError(f"unknown group {sorted(unknown)}")
    cols: list[int] = []
    for g in table.groups:
        if g.name in wanted:
            cols.extend(g.column_indices)
    parts = [table.features[:, cols]]
    if include_environment:
        parts.append(table.environment)
    return np.ascontiguousarray(np.hstack(parts))


# ----------------------------------------------------------------------
# CSV interfaces


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source


def _parse_float(token: str, what: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}, line {line}") from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite {what} {token!r}, line {line}")
    return value


def _infer_groups(feature_names: Sequence[str]) -> tuple[VariableGroup, ...]:
    order: dict[str, list[int]] = {}
    for j, name in enumerate(feature_names):
        if GROUP_SEP not in name:
            raise ParseError(f"feature column {name!r} lacks the group__stat separator")
        prefix = name.split(GROUP_SEP, 1)[0]
        if not prefix:
            raise ParseError(f"feature column {name!r} has an empty group name")
        order.setdefault(prefix, []).append(j)
    return tuple(VariableGroup(name, tuple(cols)) for name, cols in order.items())


def load_features_csv(source) -> DatasetTable:
    """Read a feature table CSV (header obs_id,event_id,label,env_*,group__stat,...).

    Groups are inferred from the column-name prefix before ``__``. Event
    coordinates are derived from env_lat/env_lon (first row per event)
    when both columns are present.
    """
    fh = _open_text(source)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, line 1") from None
    if tuple(header[:3]) != MANDATORY_COLUMNS:
        raise ParseError(f"header must start with {','.join(MANDATORY_COLUMNS)}, line 1")
    env_names: list[str] = []
    pos = 3
    while pos < len(header) and header[pos].startswith(ENV_PREFIX):
        env_names.append(header[pos][len(ENV_PREFIX):])
        pos += 1
    feature_names = tuple(header[pos:])
    if any(h.startswith(ENV_PREFIX) for h in feature_names):
        raise ParseError("env_* columns must precede feature columns, line 1")
    groups = _infer_groups(feature_names)

    obs_ids: list[str] = []
    event_ids: list[str] = []
    labels: list[int] = []
    env_rows: list[list[float]] = []
    feat_rows: list[list[float]] = []
    for line, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}, line {line}")
        obs_ids.append(row[0])
        event_ids.append(row[1])
        if row[2] not in ("0", "1"):
            raise ParseError(f"non-binary label, line {line}")
        labels.append(int(row[2]))
        env_rows.append([_parse_float(row[3 + j], f"env cell {env_names[j]}", line) for j in range(len(env_names))])
        feat_rows.append([_parse_float(tok, "feature cell", line) for tok in row[pos:]])

    n = len(obs_ids)
    features = np.array(feat_rows, dtype=np.float64).reshape(n, len(feature_names))
    environment = np.array(env_rows, dtype=np.float64).reshape(n, len(env_names))

    event_coords = None
    if "lat" in env_names and "lon" in env_names:
        la, lo = env_names.index("lat"), env_names.index("lon")
        event_coords = {}
        for i, e in enumerate(event_ids):
            event_coords.setdefault(e, (float(environment[i, la]), float(environment[i, lo])))

    return DatasetTable(
        features=features,
        feature_names=feature_names,
        groups=groups,
        target=np.array(labels),
        environment=environment,
        env_names=tuple(env_names),
        event_ids=tuple(event_ids),
        obs_ids=tuple(obs_ids),
        event_coords=event_coords,
    )


def write_features_csv(table: DatasetTable, target) -> None:
    """Write the table in the feature-CSV schema; numeric cells round-trip bitwise."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(
            list(MANDATORY_COLUMNS)
            + [ENV_PREFIX + e for e in table.env_names]
            + list(table.feature_names)
        )
        for i in range(table.n):
            writer.writerow(
                [table.obs_ids[i], table.event_ids[i], str(int(table.target[i]))]
                + [repr(float(v)) for v in table.environment[i]]
                + [repr(float(v)) for v in table.features[i]]
            )
    finally:
        if own:
            fh.close()


def load_event_coords_csv(source) -> dict[str, tuple[float, float]]:
    """Read the event-coordinates CSV (header event_id,lat,lon)."""
    fh = _open_text(source)
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["event_id", "lat", "lon"]:
        raise ParseError("header must be event_id,lat,lon, line 1")
    coords: dict[str, tuple[float, float]] = {}
    for line, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise ParseError(f"expected 3 cells, got {len(row)}, line {line}")
        coords[row[0]] = (_parse_float(row[1], "lat", line), _parse_float(row[2], "lon", line))
    return coords


def attach_event_coords(table: DatasetTable, coords: Mapping[str, tuple[float, float]]) -> DatasetTable:
    return replace(table, event_coords=dict(coords))


def load_grids_csv(source) -> list[GridObservation]:
    """Read the long-form grid CSV (header obs_id,variable,v0,...,v{m-1}).

    A variable is treated as categorical when any of its cells is not
    numeric; its vocabulary is the sorted set of distinct tokens.
    """
    fh = _open_text(source)
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or len(header) < 3 or header[:2] != ["obs_id", "variable"]:
        raise ParseError("header must be obs_id,variable,v0,..., line 1")
    m = len(header) - 2
    raw: list[tuple[str, str, list[str], int]] = []
    numeric: dict[str, bool] = {}
    for line, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}, line {line}")
        obs_id, variable, cells = row[0], row[1], row[2:]
        is_num = True
        for tok in cells:
            try:
                float(tok)
            except ValueError:
                is_num = False
                break
        numeric[variable] = numeric.get(variable, True) and is_num
        raw.append((obs_id, variable, cells, line))

    vocab: dict[str, tuple[str, ...]] = {}
    for _, variable, cells, _ in raw:
        if not numeric[variable]:
            vocab.setdefault(variable, ())
            vocab[variable] = tuple(sorted(set(vocab[variable]) | set(cells)))

    grids: list[GridObservation] = []
    for obs_id, variable, cells, line in raw:
        if numeric[variable]:
            values = tuple(_parse_float(tok, "pixel", line) for tok in cells)
            grids.append(GridObservation(obs_id, variable, values))
        else:
            grids.append(
                GridObservation(obs_id, variable, tuple(cells), categorical=True, vocabulary=vocab[variable])
            )
    if not grids:
        raise ParseError("no grid rows, line 2")
    if m == 0:
        raise ParseError("grid rows must have at least one pixel, line 1")
    return grids


@dataclass(frozen=True)
class ObsMeta:
    """Per-observation metadata used when assembling an aggregated table."""

    obs_ids: tuple[str, ...]
    event_ids: tuple[str, ...]
    labels: np.ndarray
    env_names: tuple[str, ...]
    environment: np.ndarray


def load_obs_meta_csv(source) -> ObsMeta:
    """Read per-observation metadata (header obs_id,event_id,label,env_*)."""
    fh = _open_text(source)
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(header[:3]) != MANDATORY_COLUMNS:
        raise ParseError(f"header must start with {','.join(MANDATORY_COLUMNS)}, line 1")
    if any(not h.startswith(ENV_PREFIX) for h in header[3:]):
        raise ParseError("metadata columns after label must be env_*, line 1")
    env_names = tuple(h[len(ENV_PREFIX):] for h in header[3:])
    obs_ids, event_ids, labels, env_rows = [], [], [], []
    for line, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}, line {line}")
        obs_ids.append(row[0])
        event_ids.append(row[1])
        if row[2] not in ("0", "1"):
            raise ParseError(f"non-binary label, line {line}")
        labels.append(int(row[2]))
        env_rows.append([_parse_float(tok, "env cell", line) for tok in row[3:]])
    return ObsMeta(
        obs_ids=tuple(obs_ids),
        event_ids=tuple(event_ids),
        labels=np.array(labels),
        env_names=env_names,
        environment=np.array(env_rows, dtype=np.float64).reshape(len(obs_ids), len(env_names)),
    )


def build_aggregated_table(grids: Sequence[GridObservation], meta: ObsMeta) -> DatasetTable:
    """Aggregate per-observation grids into a feature table aligned with `meta`.

    Every observation must supply every variable exactly once (missing
    grids are a hard error, there is no imputation). Variables appear in
    first-appearance order; continuous ones expand into the 11 statistics,
    categorical ones into one relative-frequency column per category.
    """
    by_obs: dict[str, dict[str, GridObservation]] = {}
    var_order: dict[str, GridObservation] = {}
    for g in grids:
        var_order.setdefault(g.variable, g)
        slot = by_obs.setdefault(g.obs_id, {})
        if g.variable in slot:
            raise ValueError(f"duplicate grid for {g.obs_id}/{g.variable}")
        slot[g.variable] = g

    names: list[str] = []
    for variable, first in var_order.items():
        if first.categorical:
            names.extend(f"{variable}{GROUP_SEP}p_{c}" for c in first.vocabulary)
        else:
            names.extend(f"{variable}{GROUP_SEP}{s}" for s in STAT_NAMES)

    rows = []
    for obs_id in meta.obs_ids:
        if obs_id not in by_obs:
            raise ValueError(f"missing grids for observation {obs_id}")
        cells: list[float] = []
        for variable, first in var_order.items():
            grid = by_obs[obs_id].get(variable)
            if grid is None:
                raise ValueError(f"missing grid for {obs_id}/{variable}")
            if first.categorical:
                cells.extend(aggregate_categorical(grid, first.vocabulary))
            else:
                cells.extend(aggregate_grid(grid))
        rows.append(cells)

    features = np.array(rows, dtype=np.float64).reshape(len(meta.obs_ids), len(names))
    groups = _infer_groups(names)
    groups = tuple(
        replace(g, kind=CATEGORICAL if var_order[g.name].categorical else CONTINUOUS) for g in groups
    )
    event_coords = None
    if "lat" in meta.env_names and "lon" in meta.env_names:
        la, lo = meta.env_names.index("lat"), meta.env_names.index("lon")
        event_coords = {}
        for i, e in enumerate(meta.event_ids):
            event_coords.setdefault(e, (float(meta.environment[i, la]), float(meta.environment[i, lo])))
    return DatasetTable(
        features=features,
        feature_names=tuple(names),
        groups=groups,
        target=meta.labels,
        environment=meta.environment,
        env_names=meta.env_names,
        event_ids=meta.event_ids,
        obs_ids=meta.obs_ids,
        event_coords=event_coords,
    )
