"""Dataset ingestion, result serialization and QQ plot data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .exceptions import DataParseError, SchemaError

__all__ = [
    "Dataset",
    "read_csv",
    "write_csv",
    "write_result",
    "read_result",
    "qq_points",
    "qq_data",
    "write_qq",
    "sup_deviation",
    "bundled_data",
]


@dataclass
class Dataset:
    """Response vector plus regressor matrix.

    Parameters
    ----------
    y : array of shape (n,)
    X : array of shape (n, p)
    response_name : str
    column_names : sequence of str, optional
        Defaults to ``x1 .. xp``.
    """

    y: np.ndarray
    X: np.ndarray
    response_name: str = "y"
    column_names: Sequence[str] = field(default=None)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        n = self.y.shape[0]
        if self.X.shape[0] != n:
            raise SchemaError(f"X has {self.X.shape[0]} rows but y has {n} entries")
        if n < 2:
            raise SchemaError("a dataset needs at least 2 observations")
        if not (np.isfinite(self.y).all() and np.isfinite(self.X).all()):
            raise DataParseError("dataset contains non-finite values")
        if self.column_names is None:
            self.column_names = [f"x{j + 1}" for j in range(self.X.shape[1])]
        self.column_names = list(self.column_names)
        if len(self.column_names) != self.X.shape[1]:
            raise SchemaError("column_names does not match the number of columns of X")
        if len(set(self.column_names)) != len(self.column_names):
            raise SchemaError("column names must be unique")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def design(self):
        from .lasso import LassoDesign

        return LassoDesign(self.X)

    def subset(self, rows) -> "Dataset":
        return Dataset(self.y[rows], self.X[rows], self.response_name, self.column_names)

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("design", None)
        return state


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataParseError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataParseError(f"non-finite value {text!r} at row {row}, column {col!r}")
    return value


def read_csv(path, response_column: str, drop_columns: Optional[Sequence[str]] = None) -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    Every retained column must be numeric; categorical variables have to be
    expanded to dummies beforehand. Rows are numbered from 1 (first data row).
    """
    path = Path(path)
    drop = set(drop_columns or ())
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataParseError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        seen = set()
        for h in header:
            if h in seen:
                raise SchemaError(f"duplicate column name {h!r}")
            seen.add(h)
        if response_column not in header:
            raise SchemaError(f"response column {response_column!r} not found")
        missing = drop - seen
        if missing:
            raise SchemaError(f"cannot drop unknown columns {sorted(missing)}")
        keep = [j for j, h in enumerate(header) if h != response_column and h not in drop]
        iy = header.index(response_column)
        ys, rows = [], []
        for i, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataParseError(f"row {i} has {len(record)} fields, expected {len(header)}")
            ys.append(_parse_float(record[iy], i, response_column))
            rows.append([_parse_float(record[j], i, header[j]) for j in keep])
    if len(ys) < 2:
        raise SchemaError("need at least 2 data rows")
    y = np.array(ys)
    if np.ptp(y) == 0:
        raise DataParseError(f"response column {response_column!r} is constant")
    X = np.array(rows, dtype=float).reshape(len(ys), len(keep))
    return Dataset(y, X, response_column, [header[j] for j in keep])


def write_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([dataset.response_name, *dataset.column_names])
        for yi, xi in zip(dataset.y, dataset.X):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_result(result, path, extra: Optional[dict] = None) -> None:
    """Write an :class:`~hdtrafo.estimator.EstimationResult` as JSON.

    Python's float repr is the shortest string that round-trips, so values
    survive a write/read cycle exactly.
    """
    doc = result.to_dict()
    if extra:
        doc.update(extra)
    try:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(_jsonable(doc), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise DataParseError(f"cannot write {path}: {exc.strerror}") from exc


def read_result(path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)


def qq_points(resid, scale: float, center: float = 0.0) -> np.ndarray:
    """Sorted standardized residuals against normal quantiles at ``(i - 0.5) / n``.

    Returns an array of shape (n, 2) with columns (theoretical, sample).
    """
    resid = np.asarray(resid, dtype=float)
    n = resid.size
    if n == 0:
        raise ValueError("no residuals")
    if not scale > 0:
        raise ValueError("scale must be positive")
    sample = np.sort((resid - center) / scale)
    theo = ndtri((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theo, sample])


def qq_data(y, family, theta: float, nuis) -> np.ndarray:
    """QQ points of the standardized residuals of a nuisance fit at ``theta``.

    Residuals are centered at their mean and scaled by the root of the fitted
    residual variance.
    """
    if nuis.theta != theta:
        raise ValueError("nuisance fit belongs to a different theta")
    resid = np.asarray(nuis.resid, dtype=float)
    if np.asarray(y).shape[0] != resid.shape[0]:
        raise ValueError("y and residuals differ in length")
    return qq_points(resid, math.sqrt(nuis.sigma2), center=float(resid.mean()))


def sup_deviation(points: np.ndarray) -> float:
    return float(np.max(np.abs(points[:, 1] - points[:, 0])))


def write_qq(points: np.ndarray, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["theoretical", "sample"])
        for t, s in points:
            w.writerow([repr(float(t)), repr(float(s))])


def bundled_data(name: str) -> Path:
    """Path of a CSV file shipped with the package (``wages.csv``, ``boxcox_theta0.csv``, ...)."""
    from importlib.resources import files

    path = Path(str(files("hdtrafo") / "data" / name))
    if not path.is_file():
        raise DataParseError(f"no bundled dataset named {name!r}")
    return path
