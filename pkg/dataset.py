"""
dataset.py

Domain types for mixed-regressor functional data:
- Curve / MixedObservation / Dataset (immutable)
- DiscreteKind (unordered -> Aitchison-Aitken, ordered -> Li-Racine)
- CSV ingestion driven by a JSON schema sidecar
- Train/test split and bootstrap resampling
"""

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils import DataError, rng_for


@dataclass(frozen=True)
class Curve:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        check_grid(grid)
        if values.shape != grid.shape:
            raise ValueError(f"Curve values length {values.size} != grid length {grid.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Curve values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def check_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 4:
        raise ValueError(f"Grid needs at least 4 points, got {grid.size}")
    if not np.all(np.isfinite(grid)) or not np.all(np.diff(grid) > 0):
        raise ValueError("Grid must be finite and strictly increasing")


@dataclass(frozen=True)
class DiscreteKind:
    ordered: bool
    levels: int

    def __post_init__(self):
        if int(self.levels) < 2:
            raise ValueError(f"Discrete regressor needs at least 2 levels, got {self.levels}")

    @property
    def bound(self) -> float:
        # upper end of the smoothing parameter range
        return 1.0 if self.ordered else 0.5

    @property
    def label(self) -> str:
        return f"{'ordered' if self.ordered else 'unordered'}:{self.levels}"

    @classmethod
    def unordered(cls, levels: int) -> "DiscreteKind":
        return cls(ordered=False, levels=levels)

    @classmethod
    def parse(cls, text: str) -> "DiscreteKind":
        name, _, levels = text.partition(":")
        name = name.strip().lower()
        if name not in ("ordered", "unordered") or not levels:
            raise ValueError(f"Discrete kind must be ordered:L or unordered:L, got {text!r}")
        return cls(ordered=(name == "ordered"), levels=int(levels))


@dataclass(frozen=True)
class MixedObservation:
    curve: Curve
    xc: Tuple[float, ...]
    xd: Tuple[int, ...]
    y: float = float("nan")


@dataclass(frozen=True)
class Dataset:
    """
    n observations sharing one grid, stored column-wise.
    curves: (n, G); xc: (n, p); xd: (n, q) integer codes; y: (n,)
    """

    grid: np.ndarray
    curves: np.ndarray
    xc: np.ndarray
    xd: np.ndarray
    y: np.ndarray
    kinds: Tuple[DiscreteKind, ...] = field(default_factory=tuple)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        check_grid(grid)
        curves = np.atleast_2d(np.array(self.curves, dtype=float))
        n = curves.shape[0]
        xc = np.array(self.xc, dtype=float).reshape(n, -1)
        xd = np.array(self.xd, dtype=np.int64).reshape(n, -1)
        y = np.array(self.y, dtype=float).reshape(n)
        kinds = tuple(self.kinds)

        if n < 1:
            raise DataError("Dataset needs at least one observation")
        if curves.shape[1] != grid.size:
            raise DataError(f"Curve length {curves.shape[1]} != grid length {grid.size}")
        if not np.all(np.isfinite(curves)) or not np.all(np.isfinite(xc)):
            raise DataError("Curves and continuous regressors must be finite")
        if xd.shape[1] != len(kinds):
            raise DataError(f"{xd.shape[1]} discrete columns but {len(kinds)} kinds")
        for s, kind in enumerate(kinds):
            col = xd[:, s]
            if col.size and (col.min() < 0 or col.max() >= kind.levels):
                raise DataError(f"Discrete regressor {s} has codes outside 0..{kind.levels - 1}")

        for name, arr in (("grid", grid), ("curves", curves), ("xc", xc), ("xd", xd), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def p(self) -> int:
        return self.xc.shape[1]

    @property
    def q(self) -> int:
        return self.xd.shape[1]

    def __len__(self) -> int:
        return self.n

    def observation(self, i: int) -> MixedObservation:
        return MixedObservation(
            curve=Curve(self.grid, self.curves[i]),
            xc=tuple(float(v) for v in self.xc[i]),
            xd=tuple(int(v) for v in self.xd[i]),
            y=float(self.y[i]),
        )

    def __iter__(self) -> Iterator[MixedObservation]:
        return (self.observation(i) for i in range(self.n))

    @cached_property
    def observations(self) -> Tuple[MixedObservation, ...]:
        return tuple(self)

    @classmethod
    def from_observations(cls, observations: Sequence[MixedObservation], kinds: Sequence[DiscreteKind]) -> "Dataset":
        if not observations:
            raise DataError("No observations")
        grid = observations[0].curve.grid
        for i, obs in enumerate(observations):
            if not np.array_equal(obs.curve.grid, grid):
                raise DataError(f"Observation {i} does not share the dataset grid")
        n = len(observations)
        return cls(
            grid=grid,
            curves=np.vstack([o.curve.values for o in observations]),
            xc=np.array([o.xc for o in observations], dtype=float).reshape(n, -1),
            xd=np.array([o.xd for o in observations], dtype=np.int64).reshape(n, -1),
            y=np.array([o.y for o in observations], dtype=float),
            kinds=tuple(kinds),
        )

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.grid, self.curves[idx], self.xc[idx], self.xd[idx], self.y[idx], self.kinds)

    def with_discrete(self, codes: np.ndarray, kind: DiscreteKind) -> "Dataset":
        codes = np.asarray(codes, dtype=np.int64).reshape(self.n, 1)
        return Dataset(self.grid, self.curves, self.xc, np.hstack([self.xd, codes]), self.y, self.kinds + (kind,))

    def drop_discrete(self) -> "Dataset":
        return Dataset(self.grid, self.curves, self.xc, np.empty((self.n, 0), dtype=np.int64), self.y, ())


# -----------------------
# Schema / CSV ingestion
# -----------------------
@dataclass(frozen=True)
class Schema:
    curve_cols: Tuple[str, ...] = ()
    continuous_cols: Tuple[str, ...] = ()
    discrete_cols: Tuple[str, ...] = ()
    discrete_kinds: Tuple[DiscreteKind, ...] = ()
    response_col: str = "y"
    curve_prefix: Optional[str] = None
    grid: Optional[Tuple[float, ...]] = None
    grid_range: Optional[Tuple[float, float]] = None
    group_threshold: Optional[float] = None

    def __post_init__(self):
        if len(self.discrete_cols) != len(self.discrete_kinds):
            raise DataError("discrete_cols and discrete_kinds must have the same length")
        if not self.curve_cols and not self.curve_prefix:
            raise DataError("Schema needs curve_cols or curve_prefix")

    def resolve_curve_cols(self, header: Sequence[str]) -> List[str]:
        if self.curve_cols:
            return list(self.curve_cols)
        cols = [c for c in header if c.startswith(self.curve_prefix)]
        if not cols:
            raise DataError(f"No columns start with curve_prefix {self.curve_prefix!r}")
        return cols

    def resolve_grid(self, n_points: int) -> np.ndarray:
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=float)
            if grid.size != n_points:
                raise DataError(f"Schema grid has {grid.size} points for {n_points} curve columns")
            return grid
        lo, hi = self.grid_range if self.grid_range is not None else (0.0, 1.0)
        return np.linspace(lo, hi, n_points)

    def to_dict(self) -> dict:
        out = {
            "continuous_cols": list(self.continuous_cols),
            "discrete_cols": list(self.discrete_cols),
            "discrete_kinds": [k.label for k in self.discrete_kinds],
            "response_col": self.response_col,
        }
        if self.curve_prefix:
            out["curve_prefix"] = self.curve_prefix
        else:
            out["curve_cols"] = list(self.curve_cols)
        if self.grid is not None:
            out["grid"] = list(self.grid)
        elif self.grid_range is not None:
            out["grid"] = f"{self.grid_range[0]}:{self.grid_range[1]}"
        if self.group_threshold is not None:
            out["derive_group"] = {"threshold": self.group_threshold}
        return out


def load_schema(path: Path) -> Schema:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read schema {path}: {e}") from e

    grid = raw.get("grid")
    grid_values, grid_range = None, None
    if isinstance(grid, str):
        lo, _, hi = grid.partition(":")
        grid_range = (float(lo), float(hi))
    elif grid is not None:
        grid_values = tuple(float(g) for g in grid)

    group = raw.get("derive_group") or {}
    try:
        return Schema(
            curve_cols=tuple(raw.get("curve_cols", ())),
            continuous_cols=tuple(raw.get("continuous_cols", ())),
            discrete_cols=tuple(raw.get("discrete_cols", ())),
            discrete_kinds=tuple(DiscreteKind.parse(k) for k in raw.get("discrete_kinds", ())),
            response_col=raw.get("response_col", "y"),
            curve_prefix=raw.get("curve_prefix"),
            grid=grid_values,
            grid_range=grid_range,
            group_threshold=group.get("threshold"),
        )
    except ValueError as e:
        raise DataError(f"Invalid schema {path}: {e}") from e


def save_schema(schema: Schema, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


def _numeric_block(df: pd.DataFrame, cols: Sequence[str], integer: bool = False, allow_empty: bool = False) -> np.ndarray:
    out = np.empty((len(df), len(cols)), dtype=float)
    for j, col in enumerate(cols):
        cells = df[col].str.strip()
        ok = pd.to_numeric(cells, errors="coerce").notna().to_numpy()
        vals = np.full(len(df), np.nan)
        # float() is correctly rounded, so %.17g text reads back bit for bit
        vals[ok] = cells[ok].astype(float).to_numpy()
        bad = ~np.isfinite(vals)
        if allow_empty:
            bad &= (cells != "").to_numpy()
        if integer:
            bad |= np.isfinite(vals) & (vals != np.round(vals))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"Malformed value {df[col].iloc[row]!r} at row {row}, column {col!r}")
        out[:, j] = vals
    return out


def load_csv(path: Path, schema: Schema, grid: Optional[np.ndarray] = None, require_response: bool = True) -> Dataset:
    """
    Read a comma-separated file with one header row into a Dataset.
    Rows are numbered from 0 (first data row) in error messages.
    require_response=False lets prediction targets omit the response (read as NaN).
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, comment="#", skipinitialspace=True)
    except FileNotFoundError as e:
        raise DataError(f"Data file not found: {path}") from e
    except pd.errors.ParserError as e:
        raise DataError(f"Inconsistent column count in {path}: {e}") from e

    curve_cols = schema.resolve_curve_cols(list(df.columns))
    wanted = curve_cols + list(schema.continuous_cols) + list(schema.discrete_cols)
    if require_response or schema.response_col in df.columns:
        wanted.append(schema.response_col)
    missing = [c for c in wanted if c not in df.columns]
    if missing:
        raise DataError(f"Missing columns in {path}: {missing}")
    # short rows come back as empty strings / NaN and fail the numeric check below
    df = df.fillna("")

    curves = _numeric_block(df, curve_cols)
    xc = _numeric_block(df, schema.continuous_cols)
    xd_float = _numeric_block(df, schema.discrete_cols, integer=True)
    if schema.response_col in df.columns:
        y = _numeric_block(df, [schema.response_col], allow_empty=not require_response)[:, 0]
    else:
        y = np.full(len(df), np.nan)

    xd = xd_float.astype(np.int64)
    for s, (col, kind) in enumerate(zip(schema.discrete_cols, schema.discrete_kinds)):
        bad = (xd[:, s] < 0) | (xd[:, s] >= kind.levels)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"Discrete code {xd[row, s]} out of range 0..{kind.levels - 1} at row {row}, column {col!r}")

    grid = np.asarray(grid, dtype=float) if grid is not None else schema.resolve_grid(len(curve_cols))
    ds = Dataset(grid, curves, xc, xd, y, schema.discrete_kinds)
    if schema.group_threshold is not None:
        if not np.all(np.isfinite(ds.y)):
            raise DataError(f"derive_group needs a response in every row of {path}")
        ds = derive_binary_group(ds, schema.group_threshold)
    return ds


def default_schema(ds: Dataset) -> Schema:
    return Schema(
        curve_cols=tuple(f"t{j}" for j in range(ds.grid.size)),
        continuous_cols=tuple(f"x{j}" for j in range(ds.p)),
        discrete_cols=tuple(f"d{s}" for s in range(ds.q)),
        discrete_kinds=ds.kinds,
        response_col="y",
        grid=tuple(float(g) for g in ds.grid),
    )


def to_frame(ds: Dataset, schema: Optional[Schema] = None) -> pd.DataFrame:
    schema = schema or default_schema(ds)
    curve_cols = schema.curve_cols or tuple(f"{schema.curve_prefix}{j}" for j in range(ds.grid.size))
    # derived groups are recomputed on load, so they are not written
    discrete_cols = list(schema.discrete_cols)
    data = {}
    for j, col in enumerate(curve_cols):
        data[col] = ds.curves[:, j]
    for j, col in enumerate(schema.continuous_cols):
        data[col] = ds.xc[:, j]
    for s, col in enumerate(discrete_cols):
        data[col] = ds.xd[:, s]
    data[schema.response_col] = ds.y
    return pd.DataFrame(data)


def save_csv(ds: Dataset, path: Path, schema: Optional[Schema] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_frame(ds, schema).to_csv(path, index=False, float_format="%.17g")


# -----------------------
# Derived groups / resampling
# -----------------------
def derive_binary_group(ds: Dataset, threshold: float) -> Dataset:
    # ties go to the upper group
    codes = (ds.y >= threshold).astype(np.int64)
    return ds.with_discrete(codes, DiscreteKind.unordered(2))


def split(ds: Dataset, n_train: int) -> Tuple[Dataset, Dataset]:
    if not 3 <= n_train < ds.n:
        raise DataError(f"n_train must satisfy 3 <= n_train < {ds.n}, got {n_train}")
    return ds.subset(np.arange(n_train)), ds.subset(np.arange(n_train, ds.n))


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    return rng_for(seed).integers(0, n, size=n)


def bootstrap_replicate(ds: Dataset, seed: int) -> Dataset:
    return ds.subset(bootstrap_indices(ds.n, seed))
