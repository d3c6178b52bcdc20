"""Design matrices for the parametric nuisance regressions.

Column layouts (fixed order):

* propensity_additive:  [1, X..., G^2]
* outcome_interacted:   [1, X..., G^2, D, D*X..., D*G^2]
* tau_quadratic:        [1, G, G^2]
* g_only:               [1, G, G^2]

X is the effective covariate block of the dataset (G included once). The G^2
column is dropped when include_g_squared is False, e.g. for binary G where it
would duplicate G. For outcome_interacted, passing target_d substitutes a
constant D=d into the D block, which is how predictions for a fixed transition
status are formed.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigurationError

DESIGNS = ("propensity_additive", "outcome_interacted", "tau_quadratic", "g_only")


def build_design(
    data: Dataset,
    design: str,
    target_d: Optional[int] = None,
    include_g_squared: bool = True,
    covariate_idx: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, list[str]]:
    """Return (matrix, column names) for one of the fixed layouts.

    covariate_idx restricts the X block to a subset of columns (used to induce
    omitted-variable misspecification in simulation experiments); the
    background column is always retained.
    """
    if design not in DESIGNS:
        raise ConfigurationError(f"unknown design {design!r}, expected one of {DESIGNS}")

    n = data.n
    ones = np.ones((n, 1))
    g = data.g[:, None]
    gsq = (data.g ** 2)[:, None]

    if design in ("tau_quadratic", "g_only"):
        cols = [ones, g] + ([gsq] if include_g_squared else [])
        names = ["const", "g"] + (["g_sq"] if include_g_squared else [])
        return np.hstack(cols), names

    if covariate_idx is None:
        idx = list(range(data.k))
    else:
        idx = list(covariate_idx)
        if data.g_index not in idx:
            idx = [data.g_index] + idx
    xblock = data.x[:, idx]
    xnames = [data.covariate_names[j] for j in idx]

    if design == "propensity_additive":
        cols = [ones, xblock] + ([gsq] if include_g_squared else [])
        names = ["const"] + xnames + (["g_sq"] if include_g_squared else [])
        return np.hstack(cols), names

    # outcome_interacted
    if target_d is None:
        dcol = data.d[:, None]
    else:
        if target_d not in (0, 1):
            raise ConfigurationError("target_d must be 0 or 1")
        dcol = np.full((n, 1), float(target_d))
    main = [ones, xblock] + ([gsq] if include_g_squared else [])
    inter = [dcol, dcol * xblock] + ([dcol * gsq] if include_g_squared else [])
    names = (
        ["const"] + xnames + (["g_sq"] if include_g_squared else [])
        + ["d"] + [f"d:{c}" for c in xnames] + (["d:g_sq"] if include_g_squared else [])
    )
    return np.hstack(main + inter), names
