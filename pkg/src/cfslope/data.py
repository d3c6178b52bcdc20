"""Loading, validation, and filtering of analysis-ready tabular data.

A Dataset holds the outcome Y, the binary transition D, the real-valued
background score G, an optional prior binary transition P, and the covariate
matrix X. G is always part of the covariate set: if the declared covariate
list omits the background column it is appended automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataError

MISSING_MARKERS = ("", "NA")


@dataclass(frozen=True)
class VariableRoles:
    """Column-role declaration for an analysis-ready CSV."""

    outcome_col: str
    transition_col: str
    background_col: str
    prior_transition_col: Optional[str] = None
    covariate_cols: Sequence[str] = ()

    def __post_init__(self):
        core = [self.outcome_col, self.transition_col, self.background_col]
        if len(set(core)) != 3:
            raise ConfigurationError(
                "outcome, transition and background columns must be distinct, got "
                f"{core}"
            )
        if list(self.covariate_cols).count(self.background_col) > 1:
            raise ConfigurationError(
                f"background column {self.background_col!r} listed more than once "
                "in covariate_cols"
            )

    @property
    def effective_covariates(self) -> list[str]:
        """Covariate columns with the background column included exactly once."""
        cols = list(self.covariate_cols)
        if self.background_col not in cols:
            cols.append(self.background_col)
        return cols

    def all_columns(self) -> list[str]:
        cols = [self.outcome_col, self.transition_col, self.background_col]
        if self.prior_transition_col is not None:
            cols.append(self.prior_transition_col)
        for c in self.effective_covariates:
            if c not in cols:
                cols.append(c)
        return cols


@dataclass(frozen=True)
class FilterSpec:
    """Row filter: optionally drop rows with trim_col strictly below trim_min."""

    trim_col: Optional[str] = None
    trim_min: Optional[float] = None
    drop_missing: bool = True

    def __post_init__(self):
        if self.trim_col is not None:
            if self.trim_min is None or not np.isfinite(self.trim_min):
                raise ConfigurationError("trim_min must be finite when trim_col is set")


def _check_binary(values: np.ndarray, name: str) -> None:
    if not np.isin(values, (0.0, 1.0)).all():
        bad = np.unique(values[~np.isin(values, (0.0, 1.0))])
        raise DataError(f"column {name!r} must be binary 0/1, found values {bad}")


@dataclass
class Dataset:
    """Immutable column store for one analysis sample.

    x holds the effective covariates (categoricals pre-encoded); the background
    column appears in x exactly once and bitwise-equals g.
    """

    y: np.ndarray
    d: np.ndarray
    g: np.ndarray
    x: np.ndarray
    covariate_names: list[str]
    row_ids: np.ndarray
    p: Optional[np.ndarray] = None
    g_index: int = 0  # position of the background column inside x
    load_report: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("y", "d", "g", "x", "row_ids"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64)
                               if name != "row_ids" else np.asarray(self.row_ids))
        if self.p is not None:
            self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        n = self.y.shape[0]
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise DataError(f"x must be n×k with n={n}, got shape {self.x.shape}")
        if len(self.covariate_names) != self.x.shape[1]:
            raise DataError("covariate_names length does not match x")
        for arr, name in [(self.d, "d"), (self.g, "g"), (self.row_ids, "row_ids")]:
            if arr.shape[0] != n:
                raise DataError(f"column {name} has wrong length")
        if n == 0:
            raise DataError("dataset has zero rows")
        cols = [self.y, self.d, self.g, self.x] + ([self.p] if self.p is not None else [])
        for c in cols:
            if not np.isfinite(c).all():
                raise DataError("dataset contains missing or non-finite values")
        _check_binary(self.d, "d")
        if self.p is not None:
            _check_binary(self.p, "p")
            if np.any((self.p == 0.0) & (self.d == 1.0)):
                raise DataError("found rows with p=0 and d=1; the prior transition is a prerequisite")
        if np.var(self.g) <= 0.0:
            raise DataError("background column g has zero variance")
        gi = self.g_index
        if not (0 <= gi < self.x.shape[1]) or not np.array_equal(self.x[:, gi], self.g):
            raise DataError("x must contain the background column g at g_index")
        for arr in (self.y, self.d, self.g, self.x) + ((self.p,) if self.p is not None else ()):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        """Row subset preserving row_ids; mask is boolean or index array."""
        mask = np.asarray(mask)
        return Dataset(
            y=self.y[mask].copy(),
            d=self.d[mask].copy(),
            g=self.g[mask].copy(),
            x=self.x[mask].copy(),
            covariate_names=list(self.covariate_names),
            row_ids=self.row_ids[mask].copy(),
            p=self.p[mask].copy() if self.p is not None else None,
            g_index=self.g_index,
        )

    def to_frame(self, roles: Optional[VariableRoles] = None) -> pd.DataFrame:
        """Round-trip the dataset to a DataFrame (column names from roles or defaults)."""
        if roles is None:
            names = {"y": "y", "d": "d", "g": "g", "p": "p"}
        else:
            names = {
                "y": roles.outcome_col,
                "d": roles.transition_col,
                "g": roles.background_col,
                "p": roles.prior_transition_col or "p",
            }
        out = {names["y"]: self.y, names["d"]: self.d}
        if self.p is not None:
            out[names["p"]] = self.p
        for j, c in enumerate(self.covariate_names):
            out[c] = self.x[:, j]
        if names["g"] not in out:
            out[names["g"]] = self.g
        return pd.DataFrame(out)


def load_dataset(
    csv_path,
    roles: VariableRoles,
    filter_spec: Optional[FilterSpec] = None,
) -> Dataset:
    """Load a CSV, apply the optional trim filter, then complete-case deletion.

    Missing markers are the empty cell and "NA". Trimming runs before
    complete-case deletion; both dropped-row counts land in load_report.
    """
    try:
        frame = pd.read_csv(
            csv_path,
            na_values=list(MISSING_MARKERS),
            keep_default_na=False,
            skipinitialspace=True,
        )
    except FileNotFoundError:
        raise ConfigurationError(f"input file not found: {csv_path}")

    needed = roles.all_columns()
    missing_cols = [c for c in needed if c not in frame.columns]
    if missing_cols:
        raise ConfigurationError(f"input is missing required column(s): {missing_cols}")
    if filter_spec is not None and filter_spec.trim_col is not None:
        if filter_spec.trim_col not in frame.columns:
            raise ConfigurationError(f"trim column {filter_spec.trim_col!r} not in input")

    for c in needed:
        frame[c] = pd.to_numeric(frame[c], errors="raise")

    report: dict = {}
    if filter_spec is not None and filter_spec.trim_col is not None:
        col = frame[filter_spec.trim_col]
        keep = ~(col.notna() & (col < filter_spec.trim_min))
        report["trimmed_rows"] = int((~keep).sum())
        frame = frame.loc[keep]
        if len(frame) == 0:
            raise DataError("trim filter removed every row")

    dropped = {}
    present = frame[needed].notna()
    complete = present.all(axis=1)
    for c in needed:
        cnt = int((~present[c]).sum())
        if cnt:
            dropped[c] = cnt
    report["dropped_by_column"] = dropped
    report["dropped_rows"] = int((~complete).sum())
    frame = frame.loc[complete]
    if len(frame) == 0:
        raise DataError("no rows remain after complete-case deletion")

    cov_names = roles.effective_covariates
    data = Dataset(
        y=frame[roles.outcome_col].to_numpy(dtype=np.float64),
        d=frame[roles.transition_col].to_numpy(dtype=np.float64),
        g=frame[roles.background_col].to_numpy(dtype=np.float64),
        x=frame[cov_names].to_numpy(dtype=np.float64),
        covariate_names=list(cov_names),
        row_ids=frame.index.to_numpy(),
        p=(frame[roles.prior_transition_col].to_numpy(dtype=np.float64)
           if roles.prior_transition_col is not None else None),
        g_index=cov_names.index(roles.background_col),
    )
    data.load_report.update(report)
    return data


def apply_filter(data: Dataset, spec: FilterSpec) -> Dataset:
    """Drop rows with trim_col strictly below trim_min; no-op when unset."""
    if spec.trim_col is None:
        return data
    if spec.trim_col == "g" or spec.trim_col in data.covariate_names:
        col = data.g if spec.trim_col == "g" else data.x[:, data.covariate_names.index(spec.trim_col)]
    elif spec.trim_col == "y":
        col = data.y
    else:
        raise ConfigurationError(f"trim column {spec.trim_col!r} not found in dataset")
    keep = ~(col < spec.trim_min)
    if not keep.any():
        raise DataError("trim filter removed every row")
    out = data.subset(keep)
    out.load_report["trimmed_rows"] = int((~keep).sum())
    return out
