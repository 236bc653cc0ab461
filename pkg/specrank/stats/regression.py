"""
Ordinary least squares and logistic regression

Both model families report z statistics with normal-approximation two-sided
p-values. Logistic fits use iteratively reweighted least squares (Newton's
method on the log-likelihood) with step halving, so the log-likelihood never
decreases from one iteration to the next.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit

from specrank.errors import (
    DegenerateInput, NotNested, SeparationDetected, SingularDesign, ValidationError
)

logger = logging.getLogger(__name__)

OLS = 'ols'
LOGISTIC = 'logistic'

IRLS_MAX_ITER = 100
IRLS_GRAD_TOL = 1e-8
SEPARATION_NORM = 50.0
MAX_HALVINGS = 40
# Largest R^2 drop from reduced to full still read as rounding
R2_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RegressionFit:
    kind: str
    coefficient_names: Tuple[str, ...]
    beta: np.ndarray
    std_err: np.ndarray
    z_or_t: np.ndarray
    p_values: np.ndarray
    n_obs: int
    converged: bool
    response_digest: str
    r_squared: Optional[float] = None
    log_likelihood: Optional[float] = None
    iterations: int = 0
    log_likelihood_trace: Tuple[float, ...] = field(default=(), repr=False)

    def coefficient(self, name: str) -> Tuple[float, float, float, float]:
        """(beta, se, z, p) for one coefficient"""
        try:
            i = self.coefficient_names.index(name)
        except ValueError:
            raise KeyError(f"No coefficient named {name!r}; have {list(self.coefficient_names)}")
        return float(self.beta[i]), float(self.std_err[i]), float(self.z_or_t[i]), float(self.p_values[i])


def _digest(y: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=np.float64).tobytes()).hexdigest()


def _prepare(design, y, names) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"design must be 2-d, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError(f"y must be a vector of length {X.shape[0]}, got shape {y.shape}")
    n, p = X.shape
    if n <= p:
        raise ValidationError(f"Need more observations than coefficients (n={n}, p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("design and y must be finite")
    if names is None:
        names = tuple(f'x{i}' for i in range(p))
    names = tuple(names)
    if len(names) != p:
        raise ValidationError(f"{len(names)} coefficient names for {p} columns")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesign(f"Design matrix with {p} columns is rank deficient")
    return X, y, names


def _z_and_p(beta: np.ndarray, se: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(se > 0, beta / se, np.where(beta == 0, np.nan, np.copysign(np.inf, beta)))
    p = 2.0 * stats.norm.sf(np.abs(z))
    return z, p


def ols_fit(design, y, names: Optional[Sequence[str]] = None) -> RegressionFit:
    """
    Least-squares fit of y on design (which must include the intercept column)

    Standard errors come from sigma^2 (X'X)^-1 with sigma^2 = RSS / (n - p).

    Raises:
        SingularDesign: design is not full column rank
    """
    X, y, names = _prepare(design, y, names)
    n, p = X.shape

    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    sigma2 = rss / (n - p)
    xtx_inv = np.linalg.inv(X.T @ X)
    std_err = np.sqrt(np.clip(np.diag(xtx_inv) * sigma2, 0.0, None))
    z, p_values = _z_and_p(beta, std_err)

    centered = y - y.mean()
    tss = float(centered @ centered)
    if tss == 0.0:
        r_squared = 1.0 if rss == 0.0 else 0.0
    else:
        r_squared = float(min(1.0, max(0.0, 1.0 - rss / tss)))

    return RegressionFit(
        kind=OLS,
        coefficient_names=names,
        beta=beta,
        std_err=std_err,
        z_or_t=z,
        p_values=p_values,
        n_obs=n,
        converged=True,
        response_digest=_digest(y),
        r_squared=r_squared,
    )


def delta_r2(reduced: RegressionFit, full: RegressionFit) -> float:
    """
    R^2 gained by the predictors full adds on top of reduced

    Raises:
        NotNested: not both OLS on the same response with reduced's predictors a subset
            of full's, or full explains less than reduced (the shared names do not
            label the same columns)
    """
    if reduced.kind != OLS or full.kind != OLS:
        raise NotNested("delta_r2 compares two OLS fits")
    if reduced.response_digest != full.response_digest or reduced.n_obs != full.n_obs:
        raise NotNested("Fits were estimated on different responses")
    if not set(reduced.coefficient_names) <= set(full.coefficient_names):
        extra = sorted(set(reduced.coefficient_names) - set(full.coefficient_names))
        raise NotNested(f"Reduced model has predictors missing from the full model: {extra}")
    gain = full.r_squared - reduced.r_squared
    if gain < -R2_TOLERANCE:
        raise NotNested(
            f"Full model R^2 {full.r_squared:.6g} is below reduced model R^2 {reduced.r_squared:.6g}; "
            "the fits do not share their common predictors"
        )
    return max(0.0, gain)


def _log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _check_separation(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> None:
    margin = (2.0 * y - 1.0) * (X @ beta)
    if np.all(margin > 0):
        raise SeparationDetected("Linear predictor classifies every observation correctly: data are completely separated")


def logistic_fit(
    design,
    y,
    names: Optional[Sequence[str]] = None,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_GRAD_TOL,
) -> RegressionFit:
    """
    Maximum-likelihood logistic regression via IRLS

    Args:
        design: n x p design matrix (include an intercept column if wanted)
        y: Binary response (0/1)
        names: Coefficient names
        max_iter: Newton iterations before giving up (converged is then False)
        tol: Convergence threshold on the gradient infinity-norm

    Raises:
        DegenerateInput: y is not binary or has a single class
        SeparationDetected: complete separation
        SingularDesign: design or information matrix is singular
    """
    X, y, names = _prepare(design, y, names)
    if not np.all((y == 0) | (y == 1)):
        raise DegenerateInput("logistic response must be 0/1")
    if y.min() == y.max():
        raise DegenerateInput("logistic response needs both classes")

    beta = np.zeros(X.shape[1])
    ll = _log_likelihood(X, y, beta)
    trace = [ll]
    converged = False
    iterations = 0

    for iterations in range(max_iter + 1):
        mu = expit(X @ beta)
        gradient = X.T @ (y - mu)
        if np.max(np.abs(gradient)) <= tol:
            converged = True
            break
        if iterations == max_iter:
            break

        weights = mu * (1.0 - mu)
        information = X.T @ (X * weights[:, None])
        try:
            step = np.linalg.solve(information, gradient)
        except np.linalg.LinAlgError:
            raise SingularDesign("Fisher information matrix is singular")

        # Rounding slack: near the optimum the true gain is below float resolution of ll
        slack = 64 * np.finfo(float).eps * max(1.0, abs(ll))
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + scale * step
            candidate_ll = _log_likelihood(X, y, candidate)
            if candidate_ll >= ll - slack:
                break
            scale /= 2.0
        else:
            # No ascent direction left at machine precision
            logger.warning("IRLS step halving exhausted at iteration %d", iterations)
            break

        if np.linalg.norm(candidate) > SEPARATION_NORM and candidate_ll > ll:
            raise SeparationDetected(
                f"Coefficient norm exceeded {SEPARATION_NORM} with rising likelihood: data appear separated"
            )
        beta, ll = candidate, candidate_ll
        trace.append(ll)
        _check_separation(X, y, beta)

    if not converged:
        logger.warning("IRLS did not converge after %d iterations", iterations)

    mu = expit(X @ beta)
    information = X.T @ (X * (mu * (1.0 - mu))[:, None])
    try:
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        raise SingularDesign("Fisher information matrix is singular at the solution")
    std_err = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    z, p_values = _z_and_p(beta, std_err)

    return RegressionFit(
        kind=LOGISTIC,
        coefficient_names=names,
        beta=beta,
        std_err=std_err,
        z_or_t=z,
        p_values=p_values,
        n_obs=X.shape[0],
        converged=converged,
        response_digest=_digest(y),
        log_likelihood=ll,
        iterations=iterations,
        log_likelihood_trace=tuple(trace),
    )


def fit_table(fit: RegressionFit) -> pd.DataFrame:
    """Coefficient table with columns coefficient, beta, se, z, p"""
    return pd.DataFrame({
        'coefficient': list(fit.coefficient_names),
        'beta': fit.beta,
        'se': fit.std_err,
        'z': fit.z_or_t,
        'p': fit.p_values,
    })


def fit_tables(fits: List[Tuple[str, RegressionFit]]) -> pd.DataFrame:
    """Stack several fits into one table with a leading 'model' column"""
    frames = []
    for label, fit in fits:
        frame = fit_table(fit)
        frame.insert(0, 'model', label)
        frame['n_obs'] = fit.n_obs
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=['model', 'coefficient', 'beta', 'se', 'z', 'p', 'n_obs'])
    return pd.concat(frames, ignore_index=True)
