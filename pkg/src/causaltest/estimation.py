"""Regression-based causal effect estimation.

Effects are computed by G-computation: the fitted outcome model is evaluated
with the treatment forced to the control and to the treatment value for every
observed row, and the predictions are averaged over the empirical covariate
distribution.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg
from scipy import stats

from .scenario import CATEGORICAL, NUMERIC, DataTable, row_mask, parse_constraint

log = logging.getLogger(__name__)

ATE, RR, CATE = "ATE", "RR", "CATE"


class EstimationError(ValueError):
    pass


class FormulaError(EstimationError):
    pass


class RankDeficiencyError(EstimationError):
    def __init__(self, dependent: list[str], rank: int, p: int):
        self.dependent = dependent
        super().__init__(f"design matrix has rank {rank} < {p}; linearly dependent column(s): "
                         + ", ".join(dependent))


class BootstrapError(EstimationError):
    pass


# --- formula terms --------------------------------------------------------

@dataclass(frozen=True)
class Intercept:
    def variables(self):
        return ()

    def __str__(self):
        return "1"


@dataclass(frozen=True)
class Linear:
    var: str

    def variables(self):
        return (self.var,)

    def __str__(self):
        return self.var


@dataclass(frozen=True)
class Power:
    var: str
    exponent: int

    def __post_init__(self):
        if not (self.exponent >= 2 or self.exponent == -1):
            raise FormulaError(f"power exponent must be >= 2 or -1, got {self.exponent}")

    def variables(self):
        return (self.var,)

    def __str__(self):
        return f"{self.var}^{self.exponent}"


@dataclass(frozen=True)
class Interaction:
    a: str
    b: str

    def variables(self):
        return (self.a, self.b)

    def __str__(self):
        return f"{self.a}:{self.b}"


@dataclass(frozen=True)
class Categorical:
    var: str

    def variables(self):
        return (self.var,)

    def __str__(self):
        return f"C({self.var})"


FormulaTerm = Union[Intercept, Linear, Power, Interaction, Categorical]

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_TERM_PATTERNS = [
    (re.compile(r"^1$"), lambda m: Intercept()),
    (re.compile(rf"^C\(({_NAME})\)$"), lambda m: Categorical(m[1])),
    (re.compile(rf"^({_NAME})(?:\^|\*\*)\(?(-?\d+)\)?$"), lambda m: Power(m[1], int(m[2]))),
    (re.compile(rf"^({_NAME}):({_NAME})$"), lambda m: Interaction(m[1], m[2])),
    (re.compile(rf"^({_NAME})$"), lambda m: Linear(m[1])),
]


def parse_term(text: str) -> FormulaTerm:
    text = re.sub(r"\s+", "", text)
    for pattern, make in _TERM_PATTERNS:
        m = pattern.match(text)
        if m:
            term = make(m)
            if isinstance(term, Power) and term.exponent == 1:
                return Linear(term.var)
            return term
    raise FormulaError(f"cannot parse formula term {text!r}")


@dataclass(frozen=True)
class LinearModelSpec:
    outcome: str
    terms: tuple

    def __init__(self, outcome: str, terms):
        terms = tuple(parse_term(t) if isinstance(t, str) else t for t in terms)
        if not terms:
            raise FormulaError("model needs at least one term")
        if len(set(terms)) != len(terms):
            raise FormulaError("duplicate terms in model")
        if outcome in self._vars(terms):
            raise FormulaError(f"outcome {outcome!r} appears among the terms")
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "terms", terms)

    @staticmethod
    def _vars(terms):
        out = []
        for t in terms:
            for v in t.variables():
                if v not in out:
                    out.append(v)
        return out

    @property
    def variables(self) -> list[str]:
        return self._vars(self.terms)

    def __str__(self):
        return f"{self.outcome} ~ " + " + ".join(str(t) for t in self.terms)


def parse_formula(text: str) -> LinearModelSpec:
    """Parse ``Y ~ 1 + I + I^2 + W^-1 + C(loc) + W:H``. The intercept is only
    included when ``1`` is written explicitly."""
    if text.count("~") != 1:
        raise FormulaError(f"formula must contain exactly one '~': {text!r}")
    lhs, rhs = text.split("~")
    outcome = lhs.strip()
    if not re.fullmatch(_NAME, outcome):
        raise FormulaError(f"bad outcome name {outcome!r}")
    # split on '+' that is not part of an exponent such as W^+2
    parts = [p for p in re.split(r"(?<![\^*])\+", rhs) if p.strip()]
    if not parts:
        raise FormulaError(f"formula has no terms: {text!r}")
    return LinearModelSpec(outcome, [parse_term(p) for p in parts])


# --- design matrix --------------------------------------------------------

def categorical_levels(spec: LinearModelSpec, table: DataTable) -> dict[str, list[str]]:
    levels = {}
    for t in spec.terms:
        if isinstance(t, Categorical):
            _require(table, t.var)
            levels[t.var] = sorted(set(str(v) for v in table[t.var]))
    return levels


def _require(table, var):
    if var not in table:
        raise EstimationError(f"unknown variable {var!r} (not a data column)")


def _numeric(data, kinds, var, term):
    if kinds.get(var) == CATEGORICAL:
        raise EstimationError(f"term {term} needs numeric {var!r}, which is categorical; "
                              f"use C({var})")
    return np.asarray(data[var], dtype=float)


def design_columns(spec: LinearModelSpec, data, kinds: dict, levels: dict, n: int):
    """Design matrix and column labels for column-like ``data``."""
    cols, labels = [], []
    for t in spec.terms:
        for v in t.variables():
            if v not in data:
                raise EstimationError(f"unknown variable {v!r} (not a data column)")
        if isinstance(t, Intercept):
            cols.append(np.ones(n))
            labels.append("1")
        elif isinstance(t, Linear):
            cols.append(_numeric(data, kinds, t.var, t))
            labels.append(str(t))
        elif isinstance(t, Power):
            x = _numeric(data, kinds, t.var, t)
            if t.exponent < 0 and np.any(x == 0):
                raise EstimationError(f"term {t}: {t.var} is 0 in at least one row")
            cols.append(x ** t.exponent)
            labels.append(str(t))
        elif isinstance(t, Interaction):
            cols.append(_numeric(data, kinds, t.a, t) * _numeric(data, kinds, t.b, t))
            labels.append(str(t))
        elif isinstance(t, Categorical):
            vals = np.asarray([str(v) for v in np.broadcast_to(np.asarray(data[t.var], dtype=object), (n,))])
            lv = levels[t.var]
            unseen = set(vals) - set(lv)
            if unseen:
                raise EstimationError(f"unseen level(s) {sorted(unseen)} for C({t.var})")
            for level in lv[1:]:
                cols.append((vals == level).astype(float))
                labels.append(f"C({t.var})[{level}]")
    X = np.column_stack([np.broadcast_to(c, (n,)) for c in cols]) if cols else np.empty((n, 0))
    return X, labels


def build_design_matrix(spec: LinearModelSpec, table: DataTable, levels: dict | None = None):
    if levels is None:
        levels = categorical_levels(spec, table)
    data = {c: table[c] for c in table.columns}
    return design_columns(spec, data, table.kinds, levels, len(table))


# --- OLS ------------------------------------------------------------------

@dataclass
class FittedModel:
    coefficients: np.ndarray
    covariance: np.ndarray
    sigma2: float
    df: int
    n: int
    labels: list = field(default_factory=list)
    levels: dict = field(default_factory=dict)
    kinds: dict = field(default_factory=dict)
    rss: float = 0.0


def ols_fit(X, y, labels: list[str] | None = None) -> FittedModel:
    """Least squares via column-pivoted QR; errors on rank deficiency."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    labels = list(labels) if labels is not None else [f"x{j}" for j in range(p)]
    if n <= p:
        raise EstimationError(f"need more rows than coefficients (n={n}, p={p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise EstimationError("design matrix or outcome contains non-finite values")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, p) * np.finfo(float).eps if p else 0.0
    rank = int(np.sum(diag > tol))
    if rank < p:
        raise RankDeficiencyError(sorted(labels[j] for j in piv[rank:]), rank, p)
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = z
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - p
    sigma2 = rss / df
    Rinv = scipy.linalg.solve_triangular(R, np.eye(p))
    cov_piv = Rinv @ Rinv.T
    cov = np.empty((p, p))
    cov[np.ix_(piv, piv)] = cov_piv
    cov = sigma2 * 0.5 * (cov + cov.T)
    return FittedModel(beta, cov, sigma2, df, n, labels, rss=rss)


def fit(spec: LinearModelSpec, table: DataTable) -> FittedModel:
    _require(table, spec.outcome)
    if table.kinds[spec.outcome] != NUMERIC:
        raise EstimationError(f"outcome {spec.outcome!r} must be numeric")
    levels = categorical_levels(spec, table)
    X, labels = build_design_matrix(spec, table, levels)
    model = ols_fit(X, table[spec.outcome], labels)
    model.levels = levels
    model.kinds = table.kinds
    return model


def predict_mean(model: FittedModel, spec: LinearModelSpec, assignment: dict) -> tuple[float, float]:
    """Predicted mean outcome and its standard error at one assignment."""
    missing = [v for v in spec.variables if v not in assignment]
    if missing:
        raise EstimationError(f"assignment lacks term variable(s) {missing}")
    data = {k: np.asarray([v], dtype=object if isinstance(v, str) else float)
            for k, v in assignment.items()}
    row, _ = design_columns(spec, data, model.kinds, model.levels, 1)
    row = row[0]
    point = float(row @ model.coefficients)
    se = float(math.sqrt(max(row @ model.covariance @ row, 0.0)))
    return point, se


# --- estimates ------------------------------------------------------------

@dataclass
class CausalEstimate:
    metric: str
    point: float
    ci_low: float
    ci_high: float
    adjustment_set: tuple
    n_used: int
    stratum: str | None = None
    se: float | None = None
    treatment: str | None = None
    outcome: str | None = None
    control_value: object = None
    treatment_value: object = None

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adjustment_set"] = list(self.adjustment_set)
        return d


def check_coverage(spec: LinearModelSpec, treatment: str, adjustment, stratum=()) -> None:
    """The model must contain the treatment and every adjustment variable;
    an adjustment variable constrained by the stratum counts as covered."""
    covered = set(spec.variables)
    if treatment not in covered:
        raise EstimationError(f"model {spec} has no term for treatment {treatment!r}")
    in_stratum = set()
    for c in stratum:
        c = parse_constraint(c) if isinstance(c, str) else c
        in_stratum |= c.variables()
    missing = sorted(set(adjustment) - covered - in_stratum)
    if missing:
        raise EstimationError(f"model {spec} lacks term(s) for adjustment variable(s) "
                              + ", ".join(missing))


def _forced_designs(spec, table, model, treatment, x_c, x_t, fixed):
    data = {c: table[c] for c in table.columns}
    for k, v in (fixed or {}).items():
        _require(table, k)
        data[k] = np.full(len(table), v, dtype=object if isinstance(v, str) else float)
    n = len(table)
    _require(table, treatment)
    out = []
    for x in (x_c, x_t):
        forced = dict(data)
        forced[treatment] = np.full(n, x, dtype=object if isinstance(x, str) else float)
        X, _ = design_columns(spec, forced, model.kinds, model.levels, n)
        out.append(X)
    return out


class _Rows:
    """Aligned design matrices resampled together in the bootstrap."""

    def __init__(self, X, Xc, Xt, y):
        self.X, self.Xc, self.Xt, self.y = X, Xc, Xt, y

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        return _Rows(self.X[idx], self.Xc[idx], self.Xt[idx], self.y[idx])


def _prepare(spec, table, treatment, x_c, x_t, adjustment, fixed, stratum=()):
    check_coverage(spec, treatment, adjustment, stratum)
    if len(table) == 0:
        raise EstimationError("no rows to estimate from")
    model = fit(spec, table)
    Xc, Xt = _forced_designs(spec, table, model, treatment, x_c, x_t, fixed)
    return model, Xc, Xt


def _adj(adjustment):
    return tuple(sorted(adjustment or ()))


def _null_contrast(metric, spec, table, treatment, x_c, adjustment) -> CausalEstimate:
    # x_t == x_c: both forced predictions coincide whatever the fit, so the
    # contrast is exactly null even when the data cannot identify the model
    check_coverage(spec, treatment, adjustment)
    _require(table, treatment)
    if len(table) == 0:
        raise EstimationError("no rows to estimate from")
    null = 1.0 if metric == RR else 0.0
    return CausalEstimate(metric, null, null, null, _adj(adjustment), len(table),
                          se=0.0 if metric != RR else None, treatment=treatment,
                          outcome=spec.outcome, control_value=x_c, treatment_value=x_c)


def estimate_ate(spec: LinearModelSpec, table: DataTable, treatment: str, x_c, x_t,
                 adjustment=(), fixed: dict | None = None, confidence: float = 0.95) -> CausalEstimate:
    """Average treatment effect of moving ``treatment`` from ``x_c`` to ``x_t``.

    For a linear model the averaged contrast is ``d @ beta`` with ``d`` the mean
    difference of forced design rows, so its variance ``d' Cov d`` is exact and
    the interval uses the t distribution on the residual degrees of freedom.
    ``fixed`` holds other variables at given values in every prediction.
    """
    if x_c == x_t:
        return _null_contrast(ATE, spec, table, treatment, x_c, adjustment)
    model, Xc, Xt = _prepare(spec, table, treatment, x_c, x_t, adjustment, fixed)
    d = Xt.mean(axis=0) - Xc.mean(axis=0)
    point = float(d @ model.coefficients)
    se = float(math.sqrt(max(d @ model.covariance @ d, 0.0)))
    q = stats.t.ppf(0.5 + confidence / 2, model.df)
    return CausalEstimate(ATE, point, point - q * se, point + q * se, _adj(adjustment),
                          len(table), se=se, treatment=treatment, outcome=spec.outcome,
                          control_value=x_c, treatment_value=x_t)


def _rr_from_rows(rows: _Rows, scale: float) -> float:
    beta = ols_fit(rows.X, rows.y).coefficients
    den = float(rows.Xc.mean(axis=0) @ beta)
    if abs(den) <= 1e-9 * scale:
        raise EstimationError("mean predicted control outcome is 0; risk ratio undefined")
    return float(rows.Xt.mean(axis=0) @ beta) / den


def estimate_rr(spec: LinearModelSpec, table: DataTable, treatment: str, x_c, x_t,
                adjustment=(), fixed: dict | None = None, n_boot: int = 1000, seed: int = 0,
                confidence: float = 0.95, jobs: int = 1) -> CausalEstimate:
    """Risk ratio of mean predicted outcomes, with a percentile-bootstrap CI."""
    if x_c == x_t:
        return _null_contrast(RR, spec, table, treatment, x_c, adjustment)
    model, Xc, Xt = _prepare(spec, table, treatment, x_c, x_t, adjustment, fixed)
    X, _ = build_design_matrix(spec, table, model.levels)
    y = np.asarray(table[spec.outcome], dtype=float)
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    rows = _Rows(X, Xc, Xt, y)
    den = float(Xc.mean(axis=0) @ model.coefficients)
    if abs(den) <= 1e-9 * scale or scale == 0.0:
        raise EstimationError("mean predicted control outcome is 0; risk ratio undefined")
    point = float(Xt.mean(axis=0) @ model.coefficients) / den
    low, high = bootstrap_ci(lambda r: _rr_from_rows(r, scale), rows, n_boot, seed,
                             confidence=confidence, jobs=jobs)
    return CausalEstimate(RR, point, low, high, _adj(adjustment), len(table),
                          treatment=treatment, outcome=spec.outcome,
                          control_value=x_c, treatment_value=x_t)


def stratum_text(stratum) -> str:
    return " and ".join(str(parse_constraint(c) if isinstance(c, str) else c) for c in stratum)


def estimate_cate(spec: LinearModelSpec, table: DataTable, treatment: str, x_c, x_t,
                  adjustment=(), stratum=(), fixed: dict | None = None,
                  confidence: float = 0.95) -> CausalEstimate:
    stratum = list(stratum)
    check_coverage(spec, treatment, adjustment, stratum)
    sub = table.take(np.flatnonzero(row_mask(table, stratum)))
    if len(sub) == 0:
        raise EstimationError(f"stratum {stratum_text(stratum)!r} selects no rows")
    est = estimate_ate(spec, sub, treatment, x_c, x_t, adjustment=(), fixed=fixed,
                       confidence=confidence)
    est.metric = CATE
    est.adjustment_set = _adj(adjustment)
    est.stratum = stratum_text(stratum)
    return est


def bootstrap_ci(estimator: Callable, table, n_boot: int = 1000, seed: int = 0,
                 confidence: float = 0.95, jobs: int = 1,
                 max_failure_rate: float = 0.05) -> tuple[float, float]:
    """Percentile interval over ``n_boot`` row resamples.

    Resample ``b`` draws its indices from a generator seeded by ``(seed, b)``,
    so the interval is the same however the work is scheduled.
    """
    if n_boot < 100:
        raise ValueError("n_boot must be >= 100")
    n = len(table)
    if n == 0:
        raise BootstrapError("cannot bootstrap an empty table")

    def one(b):
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        try:
            return float(estimator(table.take(rng.integers(0, n, size=n))))
        except (EstimationError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
            return exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(n_boot)))
    else:
        results = [one(b) for b in range(n_boot)]
    values = np.array([r for r in results if not isinstance(r, Exception)])
    failures = [r for r in results if isinstance(r, Exception)]
    if len(failures) > max_failure_rate * n_boot:
        raise BootstrapError(f"estimator failed on {len(failures)}/{n_boot} resamples; "
                             f"first failure: {failures[0]}")
    alpha = (1 - confidence) / 2
    low, high = np.percentile(values, [100 * alpha, 100 * (1 - alpha)])
    return float(low), float(high)
