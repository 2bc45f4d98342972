"""Weighted least squares and IRLS logistic regression.

Both fitters drop zero-weight rows before solving, so a weight vector that is
zero outside one treatment arm behaves like subsetting to that arm. Rank is
checked with an SVD before solving and a rank below the column count is an
error rather than a silent aliasing of columns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.special import expit as _expit

from .errors import (
    DimensionMismatch,
    NotConverged,
    OneClassOnly,
    RankDeficient,
    SeparationWarning,
)

Link = Literal["identity", "logit"]

MAX_ITER = 100
MAX_HALVINGS = 20
COEF_TOL = 1e-8
SCORE_TOL = 1e-8
SEPARATION_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class FittedGlm:
    """A fitted linear (identity link) or logistic (logit link) model."""

    coefficients: np.ndarray
    link: Link
    fit_weights: Optional[np.ndarray] = None
    converged: bool = True
    iterations: int = 0
    max_score_residual: float = 0.0
    separation: bool = False

    def predict(self, design) -> np.ndarray:
        return predict(self, design)


def expit(eta) -> np.ndarray:
    return _expit(np.asarray(eta, dtype=float))


def _prepare(design, y, weights):
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"design must be 2-dimensional, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(
            f"design has {X.shape[0]} rows but y has shape {y.shape}"
        )
    if weights is None:
        return X, y, None, None
    w = np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise DimensionMismatch(f"weights shape {w.shape} does not match y {y.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    keep = w > 0
    if not keep.any():
        raise ValueError("all weights are zero")
    return X[keep], y[keep], w[keep], w


def _check_rank(A: np.ndarray) -> None:
    if A.shape[0] < A.shape[1]:
        raise RankDeficient(f"{A.shape[0]} rows cannot identify {A.shape[1]} columns")
    rank = np.linalg.matrix_rank(A)
    if rank < A.shape[1]:
        raise RankDeficient(
            f"design has rank {rank} < {A.shape[1]} columns among positive-weight rows"
        )


def fit_linear(design, y, weights=None) -> FittedGlm:
    """Ordinary or weighted least squares.

    Rows with zero weight are excluded from the fit.
    """
    X, yv, w, w_full = _prepare(design, y, weights)
    if not np.all(np.isfinite(yv)):
        raise ValueError("y contains non-finite values among fitted rows")
    if w is None:
        A, b = X, yv
    else:
        sw = np.sqrt(w)
        A, b = X * sw[:, None], yv * sw
    _check_rank(A)
    coef = np.linalg.lstsq(A, b, rcond=None)[0]
    resid = yv - X @ coef
    score = X.T @ (resid if w is None else w * resid)
    return FittedGlm(
        coefficients=coef,
        link="identity",
        fit_weights=w_full,
        converged=True,
        iterations=1,
        max_score_residual=float(np.max(np.abs(score), initial=0.0)),
    )


def _loglik(eta, y, w):
    return float(np.dot(w, y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    design,
    y,
    weights=None,
    *,
    max_iter: int = MAX_ITER,
    tol: float = COEF_TOL,
    strict: bool = True,
) -> FittedGlm:
    """Logistic regression by IRLS (Newton-Raphson on the Bernoulli likelihood).

    With ``weights`` the weighted quasi-likelihood ``sum w_i l_i(beta)`` is
    maximised; weights need not be integers.

    Parameters
    ----------
    design : array, shape (n, p)
    y : array of 0/1, shape (n,)
    weights : optional nonnegative array, shape (n,)
    strict : if True (default) raise ``NotConverged`` after ``max_iter``
        iterations; otherwise return the last iterate with ``converged=False``.
    """
    X, yv, w, w_full = _prepare(design, y, weights)
    if not np.all((yv == 0) | (yv == 1)):
        raise ValueError("logistic outcome must be coded 0/1")
    n_pos = int(np.count_nonzero(yv))
    if n_pos == 0 or n_pos == yv.shape[0]:
        raise OneClassOnly("logistic outcome has a single class among fitted rows")
    # IRLS working weights stay positive away from separation, so the rank of
    # the (weighted) design decides identifiability for every Newton system.
    _check_rank(X if w is None else X * np.sqrt(w)[:, None])
    if w is None:
        w = np.ones_like(yv)

    wy_scale = 1.0 + float(np.max(np.abs(X.T @ (w * yv))))
    beta = np.zeros(X.shape[1])
    eta = np.zeros(X.shape[0])
    ll = _loglik(eta, yv, w)
    p = _expit(eta)
    converged = False
    it = 0
    score_norm = np.inf
    for it in range(1, max_iter + 1):
        score = X.T @ (w * (yv - p))
        info = X.T @ (X * (w * p * (1.0 - p))[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            eta_cand = X @ cand
            ll_cand = _loglik(eta_cand, yv, w)
            if ll_cand >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            cand, eta_cand, ll_cand = beta, eta, ll
        change = float(np.max(np.abs(cand - beta)))
        beta, eta, ll = cand, eta_cand, ll_cand
        p = _expit(eta)
        score_norm = float(np.max(np.abs(X.T @ (w * (yv - p)))))
        if change < tol and score_norm <= SCORE_TOL * wy_scale:
            converged = True
            break

    separation = bool(np.any(p < SEPARATION_EPS) or np.any(p > 1.0 - SEPARATION_EPS))
    fit = FittedGlm(
        coefficients=beta,
        link="logit",
        fit_weights=w_full,
        converged=converged,
        iterations=it,
        max_score_residual=score_norm,
        separation=separation,
    )
    if separation:
        warnings.warn(
            "fitted probabilities numerically 0 or 1: possible separation",
            SeparationWarning,
            stacklevel=2,
        )
    if not converged and strict:
        raise NotConverged(
            f"IRLS did not converge in {max_iter} iterations "
            f"(score residual {score_norm:.3g})",
            fit=fit,
        )
    return fit


def predict(model: FittedGlm, design) -> np.ndarray:
    X = np.asarray(design, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.coefficients.shape[0]:
        raise DimensionMismatch(
            f"design shape {X.shape} incompatible with "
            f"{model.coefficients.shape[0]} coefficients"
        )
    eta = X @ model.coefficients
    if model.link == "identity":
        return eta
    return _expit(eta)
