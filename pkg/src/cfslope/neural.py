"""Single-hidden-layer neural networks with weight decay and CV model selection.

The network has logistic-sigmoid hidden units and an identity (continuous) or
sigmoid (binary) output. Training minimises the mean squared error or the mean
Bernoulli deviance plus an L2 penalty 0.5*decay*||theta||^2/n, by full-batch
gradient descent with an Armijo backtracking line search, stopping when the
gradient sup-norm falls below 1e-5 or after 5000 iterations.

Hidden size 0 degenerates to the (ridge-penalised) linear or logistic model and
is solved exactly; including 0 in the size grid lets cross-validation fall back
to the parametric fit when the signal is linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, EstimationError, InsufficientDataError
from .glm import FitDiagnostics
from .rng import stream

GRAD_TOL = 1e-5
MAX_ITER = 5000


def _standardize(X, x_mean, x_sd):
    return (X - x_mean) / x_sd


@dataclass
class NeuralNet:
    """Fitted single-hidden-layer network (hidden=0 means a plain linear map)."""

    hidden: int
    theta: np.ndarray
    binary: bool
    x_mean: np.ndarray
    x_sd: np.ndarray
    n_inputs: int

    def _unpack(self):
        p1 = self.n_inputs + 1
        if self.hidden == 0:
            return None, self.theta
        W1 = self.theta[: self.hidden * p1].reshape(self.hidden, p1)
        w2 = self.theta[self.hidden * p1:]
        return W1, w2

    def linear_output(self, X: np.ndarray) -> np.ndarray:
        Xs = _standardize(np.asarray(X, dtype=np.float64), self.x_mean, self.x_sd)
        X1 = np.hstack([np.ones((Xs.shape[0], 1)), Xs])
        W1, w2 = self._unpack()
        if self.hidden == 0:
            return X1 @ w2
        A = expit(X1 @ W1.T)
        return w2[0] + A @ w2[1:]

    def predict(self, X: np.ndarray) -> np.ndarray:
        eta = self.linear_output(X)
        return expit(eta) if self.binary else eta


def pack_dims(n_inputs: int, hidden: int) -> int:
    p1 = n_inputs + 1
    return p1 if hidden == 0 else hidden * p1 + hidden + 1


def loss_and_grad(
    theta: np.ndarray,
    X1: np.ndarray,
    y: np.ndarray,
    hidden: int,
    decay: float,
    binary: bool,
) -> tuple[float, np.ndarray]:
    """Mean loss with L2 penalty and its analytic gradient.

    X1 is the standardized input with a leading column of ones. Exposed so the
    gradient can be verified against finite differences.
    """
    n, p1 = X1.shape
    if hidden == 0:
        eta = X1 @ theta
        if binary:
            loss = float(np.mean(np.logaddexp(0.0, eta) - y * eta))
            resid = expit(eta) - y
        else:
            resid = eta - y
            loss = float(0.5 * np.mean(resid ** 2))
        grad = X1.T @ resid / n
    else:
        W1 = theta[: hidden * p1].reshape(hidden, p1)
        w2 = theta[hidden * p1:]
        Z = X1 @ W1.T
        A = expit(Z)
        eta = w2[0] + A @ w2[1:]
        if binary:
            loss = float(np.mean(np.logaddexp(0.0, eta) - y * eta))
            resid = expit(eta) - y
        else:
            resid = eta - y
            loss = float(0.5 * np.mean(resid ** 2))
        gw2 = np.concatenate(([np.sum(resid)], A.T @ resid)) / n
        back = (resid[:, None] * w2[1:][None, :]) * (A * (1.0 - A))
        gW1 = back.T @ X1 / n
        grad = np.concatenate([gW1.ravel(), gw2])
    loss += 0.5 * decay * float(theta @ theta) / n
    grad = grad + decay * theta / n
    return loss, grad


def _exact_linear_fit(X1, y, decay, binary):
    """Closed-form ridge (continuous) or penalised IRLS (binary) for hidden=0."""
    n, p1 = X1.shape
    if not binary:
        H = X1.T @ X1 / n + (decay / n) * np.eye(p1)
        return np.linalg.solve(H, X1.T @ y / n), FitDiagnostics(True, 1, 0.0)
    beta = np.zeros(p1)
    for it in range(200):
        p = expit(X1 @ beta)
        grad = X1.T @ (p - y) / n + (decay / n) * beta
        if np.max(np.abs(grad)) < 1e-10:
            return beta, FitDiagnostics(True, it, float(np.max(np.abs(grad))))
        w = np.maximum(p * (1 - p), 1e-12)
        H = X1.T @ (X1 * w[:, None]) / n + (decay / n) * np.eye(p1)
        beta = beta - np.linalg.solve(H, grad)
    return beta, FitDiagnostics(False, 200, float(np.max(np.abs(grad))))


def fit_network(
    X: np.ndarray,
    y: np.ndarray,
    hidden: int,
    decay: float,
    binary: bool,
    seed: int,
    max_iter: int = MAX_ITER,
    grad_tol: float = GRAD_TOL,
) -> tuple[NeuralNet, FitDiagnostics]:
    """Train one network at fixed (hidden, decay)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    x_mean = X.mean(axis=0)
    x_sd = X.std(axis=0)
    x_sd[x_sd == 0.0] = 1.0
    X1 = np.hstack([np.ones((n, 1)), _standardize(X, x_mean, x_sd)])

    if hidden == 0:
        theta, diag = _exact_linear_fit(X1, y, decay, binary)
        return NeuralNet(0, theta, binary, x_mean, x_sd, p), diag

    rng = stream(seed, 77, hidden, int(decay * 1e9) & 0x7FFFFFFF)
    theta = rng.uniform(-0.5, 0.5, size=pack_dims(p, hidden))

    loss, grad = loss_and_grad(theta, X1, y, hidden, decay, binary)
    if not np.isfinite(loss):
        raise EstimationError(f"non-finite loss at initialisation (hidden={hidden}, decay={decay})")
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < grad_tol:
            return NeuralNet(hidden, theta, binary, x_mean, x_sd, p), FitDiagnostics(True, it - 1, gnorm)
        sq = float(grad @ grad)
        t = min(step * 2.0, 1e4)
        for _ in range(50):
            cand = theta - t * grad
            new_loss, new_grad = loss_and_grad(cand, X1, y, hidden, decay, binary)
            if np.isfinite(new_loss) and new_loss <= loss - 1e-4 * t * sq:
                break
            t *= 0.5
        else:
            # line search stalled: gradient step no longer improves the loss
            return NeuralNet(hidden, theta, binary, x_mean, x_sd, p), FitDiagnostics(False, it, gnorm)
        theta, loss, grad, step = cand, new_loss, new_grad, t
    if not np.isfinite(loss):
        raise EstimationError(f"non-finite loss during training (hidden={hidden}, decay={decay})")
    gnorm = float(np.max(np.abs(grad)))
    return NeuralNet(hidden, theta, binary, x_mean, x_sd, p), FitDiagnostics(gnorm < grad_tol, it, gnorm)


def _heldout_loss(net: NeuralNet, X, y, binary) -> float:
    if binary:
        eta = net.linear_output(X)
        return float(np.mean(np.logaddexp(0.0, eta) - y * eta))
    return float(0.5 * np.mean((net.predict(X) - y) ** 2))


def cross_validated_fit(
    X: np.ndarray,
    y: np.ndarray,
    hidden_sizes: Sequence[int],
    decay_grid: Sequence[float],
    cv_folds: int,
    binary: bool,
    seed: int,
    max_iter: int = MAX_ITER,
) -> tuple[NeuralNet, dict]:
    """Pick (hidden, decay) by cv_folds-fold cross-validation, then refit on all rows.

    Held-out loss is the mean deviance (binary) or MSE (continuous). Ties keep
    the earliest pair in grid order, so the selection is deterministic.
    """
    if len(hidden_sizes) == 0 or len(decay_grid) == 0:
        raise ConfigurationError("neural backend needs nonempty hidden size and decay grids")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2 * cv_folds:
        raise InsufficientDataError(f"{n} rows is too few for {cv_folds}-fold cross-validation")

    perm = stream(seed, 911).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % cv_folds

    cv_losses: dict = {}
    best = None
    for h in hidden_sizes:
        for dec in decay_grid:
            losses = []
            for f in range(cv_folds):
                tr = fold_of != f
                net, _ = fit_network(X[tr], y[tr], h, dec, binary, seed, max_iter=max_iter)
                losses.append(_heldout_loss(net, X[~tr], y[~tr], binary))
            mean_loss = float(np.mean(losses))
            cv_losses[(int(h), float(dec))] = mean_loss
            if best is None or mean_loss < best[0]:
                best = (mean_loss, int(h), float(dec))

    _, h, dec = best
    net, diag = fit_network(X, y, h, dec, binary, seed, max_iter=max_iter)
    info = {"hidden": h, "decay": dec, "cv_losses": cv_losses, "diagnostics": diag}
    return net, info
