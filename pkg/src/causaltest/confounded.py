"""Synthetic confounded execution data with a known causal effect.

Location drives both the dominant virus variant (hence infectiousness
``beta``) and the population's average age and household contacts, which in
turn drive cumulative infections. The naive association between ``beta`` and
infections is therefore biased, while adjusting for age and contacts (or for
location) recovers the true effect.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .scenario import CATEGORICAL, NUMERIC, DataTable

COLUMNS = ("location", "beta", "age", "contacts", "infections")

VARIANT_BETAS = {"alpha": 0.027, "beta": 0.016, "delta": 0.035, "gamma": 0.032}


@dataclass(frozen=True)
class LocationProfile:
    name: str
    age: float
    contacts: float
    dominant_beta: float


# Dominant variants are paired so that the oldest/most-connected locations
# carry the highest beta values, which maximises beta-location dependence.
DEFAULT_PROFILES = (
    LocationProfile("Bangladesh", 30.17, 3.47, VARIANT_BETAS["delta"]),
    LocationProfile("Gambia", 22.22, 7.23, VARIANT_BETAS["alpha"]),
    LocationProfile("Mozambique", 22.26, 3.37, VARIANT_BETAS["beta"]),
    LocationProfile("Oman", 29.98, 7.02, VARIANT_BETAS["gamma"]),
)


@dataclass(frozen=True)
class OutcomeLaw:
    """``I = c0 + c1*beta + c2*beta^2 + c3*age + c4*contacts + N(0, sigma^2)``."""

    c0: float = 100.0
    c1: float = 1000.0
    c2: float = 50000.0
    c3: float = 10.0
    c4: float = 20.0
    sigma: float = 5.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def mean(self, beta, age, contacts):
        return self.c0 + self.c1 * beta + self.c2 * beta ** 2 + self.c3 * age + self.c4 * contacts

    @classmethod
    def from_json(cls, text: str) -> "OutcomeLaw":
        return cls(**json.loads(text))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


DEFAULT_LAW = OutcomeLaw()


def generate(n: int, profiles=DEFAULT_PROFILES, law: OutcomeLaw = DEFAULT_LAW, seed: int = 0,
             jitter: tuple[float, float] = (0.0, 0.0), dominant_p: float = 0.75) -> DataTable:
    """Draw ``n`` executions.

    Each row picks a location uniformly, keeps its dominant beta with
    probability ``dominant_p`` and otherwise takes one of the other profiles'
    betas uniformly. Age and contacts are copied from the profile; a non-zero
    ``jitter`` adds per-row Gaussian noise with those standard deviations so
    that location and (age, contacts) are no longer collinear.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    profiles = list(profiles)
    rng = np.random.default_rng(seed)
    k = len(profiles)
    betas = np.array([p.dominant_beta for p in profiles])
    loc = rng.integers(0, k, size=n)
    keep = rng.uniform(size=n) < dominant_p
    # an offset in 1..k-1 picks uniformly among the other profiles
    other = (loc + rng.integers(1, k, size=n)) % k
    beta = np.where(keep, betas[loc], betas[other])
    age = np.array([p.age for p in profiles])[loc] + jitter[0] * rng.standard_normal(n)
    contacts = np.array([p.contacts for p in profiles])[loc] + jitter[1] * rng.standard_normal(n)
    infections = law.mean(beta, age, contacts) + law.sigma * rng.standard_normal(n)
    names = np.array([p.name for p in profiles], dtype=object)[loc]
    return DataTable(
        {"location": names, "beta": beta, "age": age, "contacts": contacts, "infections": infections},
        {"location": CATEGORICAL, "beta": NUMERIC, "age": NUMERIC, "contacts": NUMERIC,
         "infections": NUMERIC},
    )


def true_ate(law: OutcomeLaw, beta_c: float, beta_t: float) -> float:
    return law.c1 * (beta_t - beta_c) + law.c2 * (beta_t ** 2 - beta_c ** 2)


def true_rr(law: OutcomeLaw, beta_c: float, beta_t: float, profile: LocationProfile) -> float:
    """Risk ratio of expected infections within one location."""
    return (law.mean(beta_t, profile.age, profile.contacts)
            / law.mean(beta_c, profile.age, profile.contacts))
