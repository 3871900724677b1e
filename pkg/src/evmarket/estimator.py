"""Linear estimators: OLS, two-stage least squares, and linear GMM.

All three report heteroskedasticity-robust (sandwich) standard errors and an
R-squared computed from structural residuals against the original
regressors. Solves go through pivoted QR rather than normal equations so
near-collinear census covariates fail loudly instead of silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ConditioningError,
    SingularDesignError,
    ValidationError,
)

INTERCEPT_NAME = "intercept"

#: first-stage F below this attaches a weak-instrument warning
WEAK_F_THRESHOLD = 10.0

#: condition number above which a weight/moment matrix is treated as singular
COND_LIMIT = 1e12


@dataclass
class DesignMatrix:
    """Stacked response, named regressors, and (optionally) instruments."""

    response: np.ndarray
    regressors: np.ndarray
    regressor_names: list[str]
    instruments: np.ndarray | None = None
    instrument_names: list[str] = field(default_factory=list)
    include_intercept: bool = True
    response_name: str = "y"

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float)
        self.regressors = np.asarray(self.regressors, dtype=float)
        if self.instruments is not None:
            self.instruments = np.asarray(self.instruments, dtype=float)

    @property
    def n(self) -> int:
        return self.regressors.shape[0]

    @property
    def k(self) -> int:
        return self.regressors.shape[1]

    def validate(self, require_instruments: bool = False) -> None:
        if self.response.ndim != 1 or self.regressors.ndim != 2:
            raise ValidationError("response must be 1-D and regressors 2-D")
        n, k = self.regressors.shape
        if self.response.shape[0] != n:
            raise ValidationError("response length does not match regressors")
        if len(self.regressor_names) != k:
            raise ValidationError("regressor_names length does not match k")
        if n <= k:
            raise ValidationError(f"need n > k, got n={n}, k={k}")
        if not np.isfinite(self.response).all() or not np.isfinite(self.regressors).all():
            raise ValidationError("design contains non-finite entries")
        constant = [
            name
            for j, name in enumerate(self.regressor_names)
            if name != INTERCEPT_NAME
            and self.regressors[:, j].max() == self.regressors[:, j].min()
        ]
        if constant:
            raise SingularDesignError(
                f"constant non-intercept column(s): {constant}", columns=constant)
        if require_instruments:
            if self.instruments is None:
                raise ValidationError("IV estimation requires instruments")
            if self.instruments.ndim != 2 or self.instruments.shape[0] != n:
                raise ValidationError("instruments must be n x m")
            if len(self.instrument_names) != self.instruments.shape[1]:
                raise ValidationError("instrument_names length does not match m")
            if self.instruments.shape[1] < k:
                raise ValidationError(
                    f"order condition fails: m={self.instruments.shape[1]} < k={k}")
            if not np.isfinite(self.instruments).all():
                raise ValidationError("instruments contain non-finite entries")


@dataclass
class EstimationResult:
    """Named coefficients with robust standard errors and fit statistics."""

    estimator: str
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    r_squared: float
    n_obs: int
    weight_matrix_kind: str = "not-applicable"
    warnings: list[str] = field(default_factory=list)
    first_stage_f: float | None = None

    def z_stats(self) -> dict[str, float]:
        return {
            name: (self.coefficients[name] / se if se > 0 else math.inf)
            for name, se in self.std_errors.items()
        }

    def p_values(self) -> dict[str, float]:
        # two-sided normal p from the robust z statistic
        return {
            name: math.erfc(abs(z) / math.sqrt(2.0))
            for name, z in self.z_stats().items()
        }

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "r_squared": self.r_squared,
            "n_obs": self.n_obs,
            "weight_matrix_kind": self.weight_matrix_kind,
            "warnings": list(self.warnings),
        }

    def to_table(self, title: str = "Regression results") -> str:
        pvals = self.p_values()
        width = max([len(n) for n in self.coefficients] + [22])
        lines = [title, "-" * (width + 24), f"{'Variable':<{width}}  {self.estimator}"]
        for name, coef in self.coefficients.items():
            star = "*" if pvals[name] <= 0.05 else " "
            se = self.std_errors[name]
            lines.append(f"{name:<{width}}  {coef:.4f}{star} ({se:.4f})")
        lines.append("-" * (width + 24))
        lines.append(f"{'R-squared':<{width}}  {self.r_squared:.4f}")
        lines.append(f"{'Number of observations':<{width}}  {self.n_obs}")
        if self.warnings:
            for w in self.warnings:
                lines.append(f"note: {w}")
        return "\n".join(lines)


def _qr_solve(X: np.ndarray, y: np.ndarray, names: list[str]
              ) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares solve via pivoted QR; returns (beta, (X'X)^-1).

    Raises SingularDesignError naming the columns the pivoting places in the
    rank-deficient tail.
    """
    n, k = X.shape
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = (diag[0] if diag.size else 0.0) * max(n, k) * np.finfo(float).eps
    rank = int((diag > tol).sum())
    if rank < k:
        dependent = [names[j] for j in piv[rank:]]
        raise SingularDesignError(
            f"rank-deficient design; dependent column(s): {dependent}",
            columns=dependent, rank=rank)
    beta = np.empty(k)
    beta[piv] = scipy.linalg.solve_triangular(R, Q.T @ y)
    r_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = r_inv @ r_inv.T
    return beta, xtx_inv


def _sandwich(bread: np.ndarray, score: np.ndarray, resid: np.ndarray,
              robust: str) -> np.ndarray:
    """HC sandwich covariance with per-row scores and residuals."""
    n, k = score.shape
    meat = (score.T * resid**2) @ score
    cov = bread @ meat @ bread
    if robust == "HC1":
        cov = cov * (n / (n - k))
    elif robust != "HC0":
        raise ValidationError(f"unknown robust flavor {robust!r}")
    return cov


def _r_squared(y: np.ndarray, resid: np.ndarray, centered: bool) -> float:
    ssr = float(resid @ resid)
    if centered:
        dev = y - y.mean()
    else:
        dev = y
    sst = float(dev @ dev)
    if sst == 0.0:
        return 0.0
    return 1.0 - ssr / sst


def fit_ols(design: DesignMatrix, robust: str = "HC0") -> EstimationResult:
    """Ordinary least squares with robust (HC0 by default) standard errors.

    Parameters
    ----------
    design : DesignMatrix
        Must satisfy the design invariants; instruments are ignored.
    robust : {"HC0", "HC1"}
        Sandwich flavor. HC0 applies no small-sample correction.
    """
    design.validate()
    X, y = design.regressors, design.response
    beta, xtx_inv = _qr_solve(X, y, design.regressor_names)
    resid = y - X @ beta
    cov = _sandwich(xtx_inv, X, resid, robust)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    r2 = _r_squared(y, resid, centered=design.include_intercept)
    return EstimationResult(
        estimator="OLS",
        coefficients=dict(zip(design.regressor_names, beta.tolist())),
        std_errors=dict(zip(design.regressor_names, se.tolist())),
        r_squared=r2,
        n_obs=design.n,
    )


def _split_instruments(design: DesignMatrix, endogenous: list[str]
                       ) -> tuple[list[int], list[int], list[int]]:
    """Indices of endogenous regressors, included and excluded instruments."""
    reg_names = design.regressor_names
    missing = [e for e in endogenous if e not in reg_names]
    if missing:
        raise ValidationError(f"endogenous column(s) not in design: {missing}")
    overlap = [e for e in endogenous if e in design.instrument_names]
    if overlap:
        raise ValidationError(
            f"instruments must exclude endogenous column(s): {overlap}")
    exog = [n for n in reg_names if n not in endogenous]
    absent = [n for n in exog if n not in design.instrument_names]
    if absent:
        raise ValidationError(
            f"exogenous regressor(s) missing from instruments: {absent}")
    endog_idx = [reg_names.index(e) for e in endogenous]
    included = [j for j, n in enumerate(design.instrument_names) if n in exog]
    excluded = [j for j, n in enumerate(design.instrument_names) if n not in exog]
    return endog_idx, included, excluded


def first_stage_f(design: DesignMatrix, endogenous: list[str]) -> float:
    """Smallest excluded-instrument F statistic across endogenous columns.

    Uses rank-tolerant least squares so degenerate instruments report a
    (near-)zero F instead of failing.
    """
    design.validate(require_instruments=True)
    endog_idx, included, excluded = _split_instruments(design, endogenous)
    if not excluded:
        raise ValidationError("no excluded instruments for first-stage F")
    Z = design.instruments
    Zr = Z[:, included]
    n, m = Z.shape
    q = len(excluded)
    f_min = math.inf
    for j in endog_idx:
        x = design.regressors[:, j]
        ssr_u = _lstsq_ssr(Z, x)
        ssr_r = _lstsq_ssr(Zr, x) if included else float(x @ x)
        dof = n - m
        if dof <= 0:
            raise ValidationError("not enough observations for first-stage F")
        if ssr_u <= 0:
            f = math.inf
        else:
            f = max((ssr_r - ssr_u) / q, 0.0) / (ssr_u / dof)
        f_min = min(f_min, f)
    return f_min


def _lstsq_ssr(A: np.ndarray, b: np.ndarray) -> float:
    coef, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    r = b - A @ coef
    return float(r @ r)


def fit_tsls(design: DesignMatrix, endogenous: list[str], robust: str = "HC0",
             weak_f_threshold: float = WEAK_F_THRESHOLD) -> EstimationResult:
    """Two-stage least squares.

    Stage one projects each endogenous regressor on the full instrument set;
    stage two regresses the response on the projected regressors. Residuals
    for the covariance and R-squared use the original regressors. A
    first-stage F below ``weak_f_threshold`` attaches a warning rather than
    failing the fit.
    """
    design.validate(require_instruments=True)
    endog_idx, _, _ = _split_instruments(design, endogenous)
    X, y, Z = design.regressors, design.response, design.instruments

    gamma = _project(Z, X[:, endog_idx], design.instrument_names)
    x_hat = X.copy()
    x_hat[:, endog_idx] = Z @ gamma

    beta, bread = _qr_solve(x_hat, y, design.regressor_names)
    resid = y - X @ beta
    cov = _sandwich(bread, x_hat, resid, robust)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    r2 = _r_squared(y, resid, centered=design.include_intercept)

    warnings = []
    if r2 < 0:
        warnings.append("IV r_squared is negative (structural residuals)")
    f = first_stage_f(design, endogenous)
    if f < weak_f_threshold:
        warnings.append(
            f"weak first stage: F = {f:.3f} < {weak_f_threshold:g}")
    return EstimationResult(
        estimator="TSLS",
        coefficients=dict(zip(design.regressor_names, beta.tolist())),
        std_errors=dict(zip(design.regressor_names, se.tolist())),
        r_squared=r2,
        n_obs=design.n,
        warnings=warnings,
        first_stage_f=f,
    )


def _project(Z: np.ndarray, cols: np.ndarray, names: list[str]) -> np.ndarray:
    """First-stage coefficients of each column on Z via pivoted QR."""
    gamma = np.empty((Z.shape[1], cols.shape[1]))
    for j in range(cols.shape[1]):
        gamma[:, j], _ = _qr_solve(Z, cols[:, j], names)
    return gamma


def fit_gmm(design: DesignMatrix, endogenous: list[str], steps: int = 2,
            robust: str = "HC0",
            weak_f_threshold: float = WEAK_F_THRESHOLD) -> EstimationResult:
    """Linear GMM on the instrument moment conditions.

    Step one uses the standard IV weight ``(Z'Z/n)^-1``; step two re-weights
    with the inverse of the robust moment covariance built from step-one
    residuals. With exactly as many instruments as regressors the moments are
    solved exactly and the result equals TSLS for any weight matrix.
    """
    if steps not in (1, 2):
        raise ValidationError(f"steps must be 1 or 2, got {steps}")
    design.validate(require_instruments=True)
    _split_instruments(design, endogenous)
    X, y, Z = design.regressors, design.response, design.instruments
    n = design.n

    ztz = Z.T @ Z / n
    weight = _safe_inverse(ztz, "instrument moment matrix Z'Z/n")
    beta = _gmm_solve(X, Z, y, weight, design.regressor_names)
    resid = y - X @ beta

    kind = "identity"
    if steps == 2:
        s1 = (Z.T * resid**2) @ Z / n
        weight = _safe_inverse(s1, "robust moment covariance")
        beta = _gmm_solve(X, Z, y, weight, design.regressor_names)
        resid = y - X @ beta
        kind = "two-step-robust"

    s_final = (Z.T * resid**2) @ Z / n
    sxz = X.T @ Z / n
    a = sxz @ weight @ sxz.T
    a_inv = _safe_inverse(a, "GMM bread")
    middle = sxz @ weight @ s_final @ weight @ sxz.T
    cov = a_inv @ middle @ a_inv / n
    if robust == "HC1":
        cov = cov * (n / (n - design.k))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    r2 = _r_squared(y, resid, centered=design.include_intercept)

    warnings = []
    if r2 < 0:
        warnings.append("IV r_squared is negative (structural residuals)")
    f = first_stage_f(design, endogenous)
    if f < weak_f_threshold:
        warnings.append(
            f"weak first stage: F = {f:.3f} < {weak_f_threshold:g}")
    return EstimationResult(
        estimator="GMM",
        coefficients=dict(zip(design.regressor_names, beta.tolist())),
        std_errors=dict(zip(design.regressor_names, se.tolist())),
        r_squared=r2,
        n_obs=n,
        weight_matrix_kind=kind,
        warnings=warnings,
        first_stage_f=f,
    )


def _gmm_solve(X, Z, y, weight, names) -> np.ndarray:
    n = X.shape[0]
    sxz = X.T @ Z / n
    szy = Z.T @ y / n
    a = sxz @ weight @ sxz.T
    b = sxz @ weight @ szy
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise SingularDesignError(
            "GMM moment cross-product is singular; check instrument relevance",
            columns=list(names))


def _safe_inverse(mat: np.ndarray, label: str) -> np.ndarray:
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(
            f"{label} is numerically non-invertible (cond ~ {cond:.3e})",
            cond=cond, matrix=label)
    return np.linalg.inv(mat)
