"""Least-squares and IRLS logistic fitting with explicit diagnostics.

Both fitters perform a tolerance-based rank check up front (singular values
below 1e-10 of the largest are treated as zero) and report the offending
columns by name when the design is deficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import DegenerateFitError, InsufficientDataError

RANK_RTOL = 1e-10
SCORE_TOL = 1e-8  # sup-norm of the mean score at convergence
MAX_IRLS_ITER = 100
SEPARATION_PROB_EPS = 1e-10
SEPARATION_COEF_BOUND = 20.0


@dataclass
class FitDiagnostics:
    converged: bool
    iterations: int
    max_abs_score: float
    condition_warning: bool = False
    separation: bool = False
    notes: list = field(default_factory=list)


def _rank_check(X: np.ndarray, column_names: Optional[Sequence[str]]) -> None:
    n, q = X.shape
    sv = np.linalg.svd(X, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    if rank < q:
        # identify offending columns via pivoted QR: pivots beyond the rank
        _, _, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
        bad = sorted(piv[rank:])
        if column_names is not None:
            bad_desc = [column_names[j] for j in bad]
        else:
            bad_desc = [f"column {j}" for j in bad]
        raise DegenerateFitError(
            f"design matrix is rank deficient (rank {rank} < {q}); "
            f"offending column(s): {bad_desc}"
        )


def fit_ols(
    X: np.ndarray,
    y: np.ndarray,
    column_names: Optional[Sequence[str]] = None,
) -> tuple[np.ndarray, FitDiagnostics]:
    """Least squares with a rank check; residuals orthogonal to X on exit."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, q = X.shape
    if n <= q:
        raise InsufficientDataError(f"need more rows than columns, got n={n}, q={q}")
    _rank_check(X, column_names)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    score = np.max(np.abs(X.T @ resid)) / max(1.0, float(np.linalg.norm(y)))
    return beta, FitDiagnostics(converged=score <= SCORE_TOL, iterations=1, max_abs_score=float(score))


def _loglik(y: np.ndarray, eta: np.ndarray) -> float:
    # numerically stable Bernoulli log-likelihood: y*eta - log(1+exp(eta))
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    column_names: Optional[Sequence[str]] = None,
    tol: float = SCORE_TOL,
    max_iter: int = MAX_IRLS_ITER,
) -> tuple[np.ndarray, FitDiagnostics]:
    """Logistic MLE by iteratively reweighted least squares.

    Step-halving guards against likelihood decreases. Perfect separation
    (fitted probabilities within 1e-10 of 0/1 together with a diverging
    coefficient norm) stops the iteration at the last stable iterate and
    raises a warning instead of diverging.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, q = X.shape
    if n <= q:
        raise InsufficientDataError(f"need more rows than columns, got n={n}, q={q}")
    if np.all(y == y[0]):
        raise DegenerateFitError("response is constant; logistic fit is degenerate")
    _rank_check(X, column_names)

    beta = np.zeros(q)
    beta_safe = beta  # last iterate whose linear predictor keeps expit inside (0,1)
    ll = _loglik(y, X @ beta)
    diag = FitDiagnostics(converged=False, iterations=0, max_abs_score=np.inf)
    polished = False

    for it in range(1, max_iter + 1):
        eta = X @ beta
        p = expit(eta)
        score = X.T @ (y - p)
        diag.max_abs_score = float(np.max(np.abs(score)) / n)
        diag.iterations = it - 1
        if diag.max_abs_score <= tol and polished:
            diag.converged = True
            return beta, diag
        # one extra Newton step after reaching tolerance pins the optimum to
        # machine precision, so fits are invariant to design reparameterization
        polished = diag.max_abs_score <= tol

        w = np.maximum(p * (1.0 - p), 1e-12)
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
            diag.condition_warning = True

        # step-halving on likelihood decrease
        new_beta = beta + step
        new_ll = _loglik(y, X @ new_beta)
        halvings = 0
        while new_ll < ll - 1e-12 and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_ll = _loglik(y, X @ new_beta)
            halvings += 1

        new_eta = X @ new_beta
        new_p = expit(new_eta)
        extreme = float(np.min(np.minimum(new_p, 1.0 - new_p)))
        if extreme < SEPARATION_PROB_EPS and np.max(np.abs(new_beta)) > SEPARATION_COEF_BOUND:
            diag.separation = True
            diag.notes.append("separation detected; kept last stable iterate")
            warnings.warn(
                "perfect separation detected in logistic fit; coefficients "
                "clamped at the last stable iterate",
                RuntimeWarning,
            )
            return beta_safe, diag
        if float(np.max(np.abs(new_eta))) <= 30.0:
            beta_safe = new_beta

        beta, ll = new_beta, new_ll

    eta = X @ beta
    diag.max_abs_score = float(np.max(np.abs(X.T @ (y - expit(eta)))) / n)
    diag.iterations = max_iter
    diag.converged = diag.max_abs_score <= tol
    if not diag.converged:
        diag.notes.append("IRLS hit the iteration cap before the score tolerance")
    return beta, diag
