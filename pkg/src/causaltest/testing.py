"""Causal test cases, oracles, and the suite runner that joins
identification on the DAG to estimation on collected data."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import dag as dagmod
from .collect import experimental_collect
from .estimation import (ATE, CATE, RR, CausalEstimate, EstimationError, LinearModelSpec,
                         estimate_ate, estimate_cate, estimate_rr, parse_formula)
from .scenario import (CausalSpecification, DataTable, ModellingScenario, filter_data,
                       parse_constraint)

log = logging.getLogger(__name__)

PASS, FAIL, ERROR = "pass", "fail", "error"
EXPERIMENTAL, OBSERVATIONAL, COUNTERFACTUAL = "experimental", "observational", "counterfactual"

DEFAULT_ATOL_SCALE = 1e-6


class OracleError(ValueError):
    pass


class CaseSpecError(ValueError):
    pass


# --- interventions ----------------------------------------------------------

@dataclass(frozen=True)
class Intervention:
    assignments: dict

    def __post_init__(self):
        if not self.assignments:
            raise ValueError("an intervention must assign at least one variable")


def apply_intervention(x: dict, delta: Union[Intervention, dict]) -> dict:
    assignments = delta.assignments if isinstance(delta, Intervention) else delta
    unknown = sorted(set(assignments) - set(x))
    if unknown:
        raise KeyError(f"intervention on variable(s) absent from the valuation: {unknown}")
    out = dict(x)
    out.update(assignments)
    return out


# --- oracles ----------------------------------------------------------------

@dataclass(frozen=True)
class NoEffect:
    """Pass when the interval covers the null or the point is within ``atol``
    of it. ``atol=None`` means 1e-6 times the outcome scale."""

    atol: float | None = None


@dataclass(frozen=True)
class Positive:
    pass


@dataclass(frozen=True)
class Negative:
    pass


@dataclass(frozen=True)
class ExactValue:
    target: float
    atol: float = 0.0


CausalTestOracle = Union[NoEffect, Positive, Negative, ExactValue]


def oracle_from_dict(d: dict) -> CausalTestOracle:
    kind = d.get("type", "").lower().replace("_", "")
    if kind in ("noeffect", "zero"):
        return NoEffect(d.get("atol"))
    if kind == "positive":
        return Positive()
    if kind == "negative":
        return Negative()
    if kind in ("exactvalue", "exact"):
        return ExactValue(float(d["target"]), float(d.get("atol", 0.0)))
    raise CaseSpecError(f"unknown oracle type {d.get('type')!r}")


def oracle_to_dict(o: CausalTestOracle) -> dict:
    if isinstance(o, NoEffect):
        return {"type": "NoEffect", "atol": o.atol}
    if isinstance(o, ExactValue):
        return {"type": "ExactValue", "target": o.target, "atol": o.atol}
    return {"type": type(o).__name__}


def null_value(metric: str) -> float:
    return 1.0 if metric == RR else 0.0


def decide(oracle: CausalTestOracle, estimate: CausalEstimate, atol: float | None = None):
    """Return ``(verdict, deciding_branch)``."""
    point, lo, hi = estimate.point, estimate.ci_low, estimate.ci_high
    if not all(math.isfinite(v) for v in (point, lo, hi)):
        raise OracleError(f"non-finite estimate {point} [{lo}, {hi}]")
    null = null_value(estimate.metric)
    if isinstance(oracle, NoEffect):
        tol = oracle.atol if oracle.atol is not None else atol
        if tol is None:
            tol = 0.0
        if tol < 0:
            raise OracleError("atol must be >= 0")
        if lo <= null <= hi:
            return PASS, "ci-contains-null"
        if abs(point - null) <= tol:
            return PASS, "atol"
        return FAIL, "ci-excludes-null"
    if isinstance(oracle, Positive):
        return (PASS if lo > null else FAIL), "ci-low"
    if isinstance(oracle, Negative):
        return (PASS if hi < null else FAIL), "ci-high"
    if isinstance(oracle, ExactValue):
        if oracle.atol < 0:
            raise OracleError("atol must be >= 0")
        if abs(point - oracle.target) <= oracle.atol:
            return PASS, "atol"
        if lo <= oracle.target <= hi:
            return PASS, "ci-contains-target"
        return FAIL, "target-outside"
    raise OracleError(f"unknown oracle {oracle!r}")


def oracle_decide(oracle: CausalTestOracle, estimate: CausalEstimate) -> str:
    return decide(oracle, estimate)[0]


# --- test cases -------------------------------------------------------------

MINIMAL, NONE = "minimal", "none"


@dataclass
class CausalTestCase:
    name: str
    outcome: str
    treatment: str
    control: dict
    treatment_value: object
    oracle: CausalTestOracle
    model: LinearModelSpec
    metric: str = ATE
    adjustment: object = MINIMAL
    stratum: list = field(default_factory=list)
    n_boot: int = 1000

    def __post_init__(self):
        if self.metric not in (ATE, RR, CATE):
            raise CaseSpecError(f"unknown metric {self.metric!r}")
        if self.treatment not in self.control:
            raise CaseSpecError(f"{self.name}: control valuation lacks treatment {self.treatment!r}")
        if isinstance(self.adjustment, str) and self.adjustment not in (MINIMAL, NONE):
            raise CaseSpecError(f"{self.name}: adjustment must be 'minimal', 'none' or a list")
        if not isinstance(self.adjustment, str):
            self.adjustment = tuple(sorted(self.adjustment))
        self.stratum = [parse_constraint(c) if isinstance(c, str) else c for c in self.stratum]
        if self.metric == CATE and not self.stratum:
            raise CaseSpecError(f"{self.name}: CATE needs a stratum")

    @property
    def x_c(self):
        return self.control[self.treatment]

    @property
    def x_t(self):
        return self.treatment_value

    @property
    def intervention(self) -> Intervention:
        return Intervention({self.treatment: self.treatment_value})

    @property
    def treatment_valuation(self) -> dict:
        return apply_intervention(self.control, self.intervention)


def expand_intervention(name: str, control: dict, intervention: dict, **kwargs) -> list[CausalTestCase]:
    """One test case per intervened variable, each estimating its own contrast."""
    if len(intervention) == 1:
        (var, value), = intervention.items()
        return [CausalTestCase(name, treatment=var, control=control, treatment_value=value, **kwargs)]
    return [CausalTestCase(f"{name}[{var}]", treatment=var, control=control, treatment_value=value,
                           **kwargs)
            for var, value in sorted(intervention.items())]


def cases_from_dict(d: dict) -> list[CausalTestCase]:
    """Build test case(s) from one entry of a suite file's ``cases`` list."""
    try:
        name = d["name"]
        outcome = d["outcome"]
        model = parse_formula(d["formula"])
        oracle = oracle_from_dict(d["oracle"])
    except KeyError as exc:
        raise CaseSpecError(f"test case {d.get('name', '?')!r} lacks field {exc}") from None
    adjustment = d.get("adjustment", MINIMAL)
    common = dict(outcome=outcome, oracle=oracle, model=model, metric=d.get("metric", ATE).upper(),
                  adjustment=adjustment if isinstance(adjustment, str) else list(adjustment),
                  stratum=list(d.get("stratum", [])), n_boot=int(d.get("n_boot", 1000)))
    if "intervention" in d:
        control = dict(d["control"])
        return expand_intervention(name, control, dict(d["intervention"]), **common)
    treatment = d["treatment"]
    control = d["control"]
    if not isinstance(control, dict):
        control = {treatment: control}
    return [CausalTestCase(name, treatment=treatment, control=dict(control),
                           treatment_value=d["treatment_value"], **common)]


@dataclass
class CausalTestResult:
    name: str
    verdict: str
    mode: str
    estimate: CausalEstimate | None = None
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "mode": self.mode,
            "estimate": self.estimate.to_dict() if self.estimate else None,
            "diagnostics": self.diagnostics,
            "error": self.error,
        }


def resolve_adjustment(tc: CausalTestCase, dag: dagmod.CausalDag) -> tuple:
    if tc.adjustment == NONE:
        return ()
    if tc.adjustment == MINIMAL:
        return tuple(sorted(dagmod.minimal_adjustment_set(dag, tc.treatment, tc.outcome)))
    if not dagmod.satisfies_backdoor(dag, tc.treatment, tc.outcome, tc.adjustment):
        raise dagmod.DagError(f"{dagmod.format_set(tc.adjustment)} does not satisfy the back-door "
                              f"criterion for ({tc.treatment}, {tc.outcome})")
    return tuple(tc.adjustment)


def run_test_case(tc: CausalTestCase, dag: dagmod.CausalDag, table: DataTable,
                  mode: str = OBSERVATIONAL, counterfactual: bool = False, seed: int = 0,
                  diagnostics: dict | None = None) -> CausalTestResult:
    """Identify, estimate and judge one test case; failures become ``error``
    verdicts rather than exceptions."""
    diag = dict(diagnostics or {})
    result_mode = COUNTERFACTUAL if counterfactual else mode
    try:
        for v in (tc.treatment, tc.outcome):
            if v not in dag.nodes:
                raise dagmod.UnknownNodeError(f"{v!r} is not a DAG node")
        adjustment = resolve_adjustment(tc, dag)
        diag["adjustment_set"] = list(adjustment)
        diag["adjustment_policy"] = tc.adjustment if isinstance(tc.adjustment, str) else "explicit"
        if counterfactual:
            if tc.treatment not in table:
                raise EstimationError(f"no data column for treatment {tc.treatment!r}")
            keep = np.flatnonzero(table[tc.treatment] != tc.x_t)
            diag["rows_dropped_counterfactual"] = len(table) - len(keep)
            table = table.take(keep)
        diag["rows_used"] = len(table)
        fixed = {k: v for k, v in tc.control.items() if k != tc.treatment}
        if tc.metric == ATE:
            est = estimate_ate(tc.model, table, tc.treatment, tc.x_c, tc.x_t, adjustment, fixed=fixed)
        elif tc.metric == RR:
            est = estimate_rr(tc.model, table, tc.treatment, tc.x_c, tc.x_t, adjustment, fixed=fixed,
                              n_boot=tc.n_boot, seed=seed)
        else:
            est = estimate_cate(tc.model, table, tc.treatment, tc.x_c, tc.x_t, adjustment,
                                stratum=tc.stratum, fixed=fixed)
            diag["rows_used"] = est.n_used
        atol = None
        if isinstance(tc.oracle, NoEffect) and tc.oracle.atol is None and tc.outcome in table:
            scale = float(np.max(np.abs(table[tc.outcome]))) if len(table) else 0.0
            atol = DEFAULT_ATOL_SCALE * scale
        verdict, branch = decide(tc.oracle, est, atol)
        diag["deciding_branch"] = branch
        if branch == "atol" and atol is not None:
            diag["default_atol_decided"] = atol
        return CausalTestResult(tc.name, verdict, result_mode, est, diag)
    except (dagmod.DagError, EstimationError, OracleError, KeyError, ValueError) as exc:
        return CausalTestResult(tc.name, ERROR, result_mode, None, diag, str(exc))


# --- suites -----------------------------------------------------------------

@dataclass
class SuiteResult:
    results: list
    rows_total: int | None = None
    rows_filtered: int | None = None

    @property
    def summary(self) -> dict:
        out = {PASS: 0, FAIL: 0, ERROR: 0}
        for r in self.results:
            out[r.verdict] += 1
        return out

    @property
    def exit_code(self) -> int:
        s = self.summary
        if s[ERROR]:
            return 2
        return 1 if s[FAIL] else 0


def _experimental_table(spec: CausalSpecification, tc: CausalTestCase, runner, repeats, seed,
                        base: dict, jobs: int, allow_partial: bool) -> DataTable:
    control = {**base, **tc.control}
    missing = sorted(set(spec.scenario.inputs) - set(control))
    if missing:
        raise CaseSpecError(f"{tc.name}: control configuration lacks input(s) {missing}")
    control = {k: control[k] for k in spec.scenario.inputs}
    treated = apply_intervention(control, tc.intervention)
    return experimental_collect(runner, [control, treated], repeats=repeats, seed=seed, jobs=jobs,
                                allow_partial=allow_partial)


def run_suite(spec: CausalSpecification, cases: list[CausalTestCase], source,
              mode: str = OBSERVATIONAL, counterfactual: bool = False, seed: int = 0,
              jobs: int = 1, repeats: int = 30, base_config: dict | None = None,
              allow_partial: bool = False) -> SuiteResult:
    """Run every case against one data source.

    ``source`` is a DataTable (observational) or a runner with a ``run``
    method (experimental: each case executes its control and treatment
    configurations ``repeats`` times). Results keep input order.
    """
    if not cases:
        raise CaseSpecError("suite has no test cases")
    if isinstance(source, DataTable):
        table, removed = filter_data(source, spec.scenario)
        if removed:
            log.info("removed %d row(s) violating scenario constraints", removed)

        def one(tc):
            return run_test_case(tc, spec.dag, table, mode, counterfactual, seed,
                                 {"rows_filtered": removed})

        total = len(source)
    else:
        removed = 0

        def one(tc):
            data = _experimental_table(spec, tc, source, repeats, seed, base_config or {}, 1,
                                       allow_partial)
            data, dropped = filter_data(data, spec.scenario)
            return run_test_case(tc, spec.dag, data, EXPERIMENTAL, counterfactual, seed,
                                 {"rows_filtered": dropped, "rows_collected": len(data) + dropped})

        total = None
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, cases))
    else:
        results = [one(tc) for tc in cases]
    return SuiteResult(results, total, removed)


# --- suite files ------------------------------------------------------------

@dataclass
class SuiteFile:
    path: str
    dag_path: str
    spec: CausalSpecification
    cases: list
    data: dict
    raw: dict

    def resolve(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(os.path.dirname(self.path), p)


def load_suite(path: str) -> SuiteFile:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("dag", "scenario", "data", "cases"):
        if key not in raw:
            raise CaseSpecError(f"{path}: suite file lacks {key!r}")
    dag_path = raw["dag"] if os.path.isabs(raw["dag"]) else os.path.join(base, raw["dag"])
    dag = dagmod.read_dot(dag_path)
    scenario = ModellingScenario.from_dict(raw["scenario"])
    spec = CausalSpecification(scenario, dag)
    cases = []
    for entry in raw["cases"]:
        cases.extend(cases_from_dict(entry))
    return SuiteFile(os.path.abspath(path), dag_path, spec, cases, raw["data"], raw)
