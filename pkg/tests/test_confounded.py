import itertools

import numpy as np
import pytest
import sympy

from causaltest.confounded import (DEFAULT_LAW, DEFAULT_PROFILES, OutcomeLaw, VARIANT_BETAS,
                                   generate, true_ate, true_rr)
from causaltest.estimation import estimate_ate, parse_formula

BC, BT = VARIANT_BETAS["beta"], VARIANT_BETAS["gamma"]
BASE = "infections ~ 1 + beta + beta^2"


@pytest.fixture(scope="module")
def data():
    return generate(10000, seed=0)


def test_shape(data):
    assert len(data) == 10000
    assert set(data["location"]) == {p.name for p in DEFAULT_PROFILES}
    assert set(np.round(data["beta"], 6)) == set(VARIANT_BETAS.values())


def test_dominant_share(data):
    dominant = {p.name: p.dominant_beta for p in DEFAULT_PROFILES}
    hits = np.array([dominant[l] == b for l, b in zip(data["location"], data["beta"])])
    assert abs(hits.mean() - 0.75) < 0.03


def test_noiseless_is_law_mean():
    t = generate(200, law=OutcomeLaw(sigma=0.0), seed=1)
    np.testing.assert_array_equal(t["infections"],
                                  DEFAULT_LAW.mean(t["beta"], t["age"], t["contacts"]))


def test_deterministic():
    assert generate(500, seed=3) == generate(500, seed=3)
    assert generate(500, seed=3) != generate(500, seed=4)


def test_law_json_roundtrip():
    law = OutcomeLaw(c2=123.0, sigma=0.5)
    assert OutcomeLaw.from_json(law.to_json()) == law


def test_true_ate_symbolic():
    c1, c2, b0, b1 = sympy.symbols("c1 c2 b0 b1")
    expr = c1 * (b1 - b0) + c2 * (b1 ** 2 - b0 ** 2)
    exact = expr.subs({c1: 1000, c2: 50000, b0: sympy.Rational(16, 1000),
                       b1: sympy.Rational(32, 1000)})
    assert exact == sympy.Rational(272, 5)
    assert true_ate(DEFAULT_LAW, BC, BT) == pytest.approx(54.4, abs=1e-9)
    assert true_ate(DEFAULT_LAW, BC, BC) == 0
    assert true_ate(OutcomeLaw(c2=0.0), BC, BT) == pytest.approx(1000 * (BT - BC))


def test_true_rr():
    p = DEFAULT_PROFILES[0]
    assert true_rr(DEFAULT_LAW, BC, BC, p) == 1.0
    assert true_rr(DEFAULT_LAW, BC, BT, p) * true_rr(DEFAULT_LAW, BT, BC, p) == pytest.approx(1)


def test_naive_estimate_is_confounded(data):
    e = estimate_ate(parse_formula(BASE), data, "beta", BC, BT)
    assert abs(e.point - true_ate(DEFAULT_LAW, BC, BT)) > 5 * e.half_width


@pytest.mark.parametrize("extra,adj", [(" + age + contacts", {"age", "contacts"}),
                                       (" + C(location)", {"location"})])
def test_adjusted_estimate(data, extra, adj):
    e = estimate_ate(parse_formula(BASE + extra), data, "beta", BC, BT, adjustment=adj)
    assert abs(e.point - true_ate(DEFAULT_LAW, BC, BT)) <= 3 * e.se


def test_counterfactual_drop(data):
    kept = data.take(np.flatnonzero(data["beta"] != BT))
    assert len(kept) < len(data)
    e = estimate_ate(parse_formula(BASE + " + age + contacts"), kept, "beta", BC, BT,
                     adjustment={"age", "contacts"})
    assert abs(e.point - true_ate(DEFAULT_LAW, BC, BT)) <= 3 * e.se


def test_all_adjustment_sets_agree():
    # per-row jitter breaks the exact location/(age, contacts) collinearity
    t = generate(10000, seed=0, jitter=(1.0, 0.5))
    terms = {"A": "age", "C": "contacts", "L": "C(location)"}
    names = {"A": "age", "C": "contacts", "L": "location"}
    estimates = []
    for s in (("A", "C"), ("A", "C", "L"), ("L",), ("A", "L"), ("C", "L")):
        f = BASE + "".join(" + " + terms[v] for v in s)
        estimates.append(estimate_ate(parse_formula(f), t, "beta", BC, BT,
                                      adjustment={names[v] for v in s}))
    for a, b in itertools.combinations(estimates, 2):
        assert abs(a.point - b.point) <= 3 * max(a.se, b.se)
