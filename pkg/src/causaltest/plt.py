"""Poisson line tessellation subject system.

Lines are drawn from an isotropic Poisson line process and clipped to an
origin-centred ``W x H`` window. The model reports the number of lines hitting
the window and the number of polygons they cut it into, both as totals and per
unit area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PLT_COLUMNS = ("W", "H", "I", "L_t", "P_t", "L_u", "P_u", "seed")


@dataclass(frozen=True)
class PltConfig:
    W: float
    H: float
    I: float
    seed: int = 0

    def __post_init__(self):
        for name in ("W", "H", "I"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class LineParam:
    """The line ``{p : p . (cos phi, sin phi) = r}``."""

    r: float
    phi: float


@dataclass(frozen=True)
class PltRun:
    W: float
    H: float
    I: float
    L_t: int
    P_t: int
    L_u: float
    P_u: float
    seed: int = 0

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in PLT_COLUMNS}


def _support(phi, W, H):
    # distance from the origin to the window's supporting line with normal phi
    return 0.5 * W * np.abs(np.cos(phi)) + 0.5 * H * np.abs(np.sin(phi))


def sample_line_arrays(config: PltConfig, rng: np.random.Generator | None = None):
    """Vectorised sampler returning ``(r, phi)`` arrays of the retained lines."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    R = 0.5 * math.hypot(config.W, config.H)
    n = rng.poisson(2.0 * math.pi * config.I * R)
    r = rng.uniform(0.0, R, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    keep = r <= _support(phi, config.W, config.H)
    return r[keep], phi[keep]


def sample_lines(config: PltConfig) -> list[LineParam]:
    r, phi = sample_line_arrays(config)
    return [LineParam(float(a), float(b)) for a, b in zip(r, phi)]


def interior_intersections(r, phi, W: float, H: float) -> int:
    """Number of pairwise line intersections strictly inside the open window."""
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = r.size
    if n < 2:
        return 0
    i, j = np.triu_indices(n, k=1)
    c, s = np.cos(phi), np.sin(phi)
    det = c[i] * s[j] - s[i] * c[j]
    ok = det != 0.0
    i, j, det = i[ok], j[ok], det[ok]
    x = (r[i] * s[j] - r[j] * s[i]) / det
    y = (c[i] * r[j] - c[j] * r[i]) / det
    inside = (np.abs(x) < 0.5 * W) & (np.abs(y) < 0.5 * H)
    return int(np.count_nonzero(inside))


def count_outputs(lines, W: float, H: float) -> tuple[int, int]:
    """Return ``(L_t, P_t)`` for chords of the window.

    Each chord adds one region plus one per interior crossing, so
    ``P_t = 1 + L_t + K``.
    """
    lines = list(lines)
    r = np.array([ln.r for ln in lines], dtype=float)
    phi = np.array([ln.phi for ln in lines], dtype=float)
    k = interior_intersections(r, phi, W, H)
    return len(lines), 1 + len(lines) + k


def run_plt(config: PltConfig) -> PltRun:
    r, phi = sample_line_arrays(config)
    L_t = int(r.size)
    P_t = 1 + L_t + interior_intersections(r, phi, config.W, config.H)
    area = config.W * config.H
    return PltRun(config.W, config.H, config.I, L_t, P_t, L_t / area, P_t / area, config.seed)


def derive_seeds(seed: int, n: int) -> list[int]:
    """``n`` independent 32-bit seeds derived from one master seed.

    32 bits keep the seeds exact after a round trip through a float CSV column.
    """
    states = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)
    return [int(v) for v in states]


def latin_hypercube(n: int, ranges: dict, seed: int) -> list[dict]:
    """Latin hypercube sample of ``n`` points over independent uniform ranges.

    Each variable gets exactly one point in each of ``n`` equal-width strata,
    with stratum order shuffled independently per variable. Variables are
    drawn in sorted-name order so the result does not depend on dict order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    for name, (lo, hi) in ranges.items():
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid range for {name}: ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    columns = {}
    for name in sorted(ranges):
        lo, hi = ranges[name]
        u = (rng.permutation(n) + rng.uniform(size=n)) / n
        columns[name] = lo + (hi - lo) * u
    return [{name: float(columns[name][k]) for name in sorted(ranges)} for k in range(n)]


def lhs_configs(n: int, ranges: dict, seed: int) -> list[PltConfig]:
    points = latin_hypercube(n, ranges, seed)
    seeds = derive_seeds(seed, n)
    return [PltConfig(p["W"], p["H"], p["I"], s) for p, s in zip(points, seeds)]


def grid_configs(sides, intensities, repeats: int, seed: int) -> list[PltConfig]:
    """Square windows ``W = H = side`` crossed with intensities, repeated."""
    cells = [(float(w), float(i)) for w in sides for i in intensities]
    seeds = derive_seeds(seed, len(cells) * repeats)
    out = []
    for k, (w, i) in enumerate(cells):
        for rep in range(repeats):
            out.append(PltConfig(w, w, i, seeds[k * repeats + rep]))
    return out
