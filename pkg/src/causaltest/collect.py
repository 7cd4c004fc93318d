"""Experimental data collection: run a subject program under chosen input
configurations and gather its outputs into a DataTable."""

from __future__ import annotations

import csv
import io
import logging
import os
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .scenario import CATEGORICAL, NUMERIC, DataTable

log = logging.getLogger(__name__)


class SubjectError(RuntimeError):
    pass


class CollectionError(RuntimeError):
    def __init__(self, failures, table):
        self.failures = failures
        self.table = table
        super().__init__(f"{len(failures)} subject run(s) failed; first: {failures[0].error}")


@dataclass(frozen=True)
class RunFailure:
    config_index: int
    repeat: int
    seed: int
    error: str


def run_seed(seed: int, config_index: int, repeat: int) -> int:
    """Per-run seed; a 32-bit value so it survives a float64 CSV round trip."""
    ss = np.random.SeedSequence([seed, config_index, repeat])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def parse_output(text: str, header: list[str] | None = None) -> dict:
    """Parse the last non-empty stdout line: ``k=v`` pairs or a CSV row
    matching ``header``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SubjectError("subject produced no output")
    last = lines[-1].strip()
    if header is None:
        out = {}
        for tok in shlex.split(last.replace(",", " ")):
            if "=" not in tok:
                raise SubjectError(f"cannot parse subject output {last!r}: expected name=value pairs")
            k, v = tok.split("=", 1)
            out[k.strip()] = _coerce(v.strip())
        return out
    cells = next(csv.reader(io.StringIO(last)))
    if len(cells) != len(header):
        raise SubjectError(f"subject output {last!r} has {len(cells)} fields, expected {len(header)}")
    return {k: _coerce(v.strip()) for k, v in zip(header, cells)}


def _coerce(v: str):
    try:
        return float(v)
    except ValueError:
        return v


@dataclass
class SubjectRunner:
    """Runs an external program once per input assignment.

    ``command`` is a shell-style template; ``{name}`` placeholders are
    replaced by input values and ``{seed}`` by the per-run seed.
    """

    command: str
    outputs: list[str]
    cwd: str | None = None
    timeout: float = 60.0
    output_header: list[str] | None = None
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectRunner":
        return cls(command=d["command"], outputs=list(d["outputs"]), cwd=d.get("cwd"),
                   timeout=float(d.get("timeout", 60.0)), output_header=d.get("output_header"),
                   fixed=dict(d.get("fixed", {})))

    def tokens(self) -> list[str]:
        """The command template split into argv tokens; a list is taken as is."""
        if isinstance(self.command, str):
            return shlex.split(self.command)
        return [str(t) for t in self.command]

    def check_inputs(self, inputs):
        placeholders = set()
        for tok in self.tokens():
            for name in inputs:
                if "{" + name + "}" in tok:
                    placeholders.add(name)
        missing = sorted(set(inputs) - placeholders - set(self.fixed))
        if missing:
            raise ValueError(f"runner template has no placeholder for input(s) {missing}")

    def argv(self, assignment: dict, seed: int) -> list[str]:
        values = {**self.fixed, **assignment, "seed": seed}
        values = {k: _fmt_arg(v) for k, v in values.items()}
        try:
            return [tok.format(**values) for tok in self.tokens()]
        except KeyError as exc:
            raise SubjectError(f"no value for placeholder {exc}") from None

    def run(self, assignment: dict, seed: int) -> dict:
        argv = self.argv(assignment, seed)
        try:
            proc = subprocess.run(argv, cwd=self.cwd, capture_output=True, text=True,
                                  timeout=self.timeout, env=os.environ.copy())
        except subprocess.TimeoutExpired:
            raise SubjectError(f"timed out after {self.timeout}s: {shlex.join(argv)}") from None
        except OSError as exc:
            raise SubjectError(f"cannot execute {argv[0]!r}: {exc}") from None
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            raise SubjectError(f"exit status {proc.returncode}: {tail[0]}")
        return parse_output(proc.stdout, self.output_header)


def _fmt_arg(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


@dataclass
class FunctionSubject:
    """In-process subject: ``fn(assignment, seed) -> dict of outputs``."""

    fn: Callable[[dict, int], dict]
    outputs: list[str]

    def check_inputs(self, inputs):
        pass

    def run(self, assignment: dict, seed: int) -> dict:
        return self.fn(dict(assignment), seed)


def collect_runs(runner, configs: list[dict], repeats: int = 1, seed: int = 0,
                 jobs: int = 1) -> tuple[DataTable, list[RunFailure]]:
    """Execute every (config, repeat) pair; failed runs are returned, not raised."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not configs:
        raise ValueError("no input configurations given")
    inputs = list(configs[0])
    for k, cfg in enumerate(configs):
        if list(cfg) != inputs and set(cfg) != set(inputs):
            raise ValueError(f"config {k} assigns {sorted(cfg)}, expected {sorted(inputs)}")
    runner.check_inputs(inputs)
    tasks = [(ci, r, run_seed(seed, ci, r)) for ci in range(len(configs)) for r in range(repeats)]

    def one(task):
        ci, r, s = task
        try:
            out = runner.run(configs[ci], s)
            missing = [o for o in runner.outputs if o not in out]
            if missing:
                raise SubjectError(f"subject output lacks {missing}")
            return out
        except Exception as exc:  # row-level failure; collection carries on
            return RunFailure(ci, r, s, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]

    rows, failures = [], []
    for (ci, r, s), res in zip(tasks, results):
        if isinstance(res, RunFailure):
            failures.append(res)
            continue
        row = dict(configs[ci])
        row.update({o: res[o] for o in runner.outputs})
        row["seed"] = float(s)
        rows.append(row)
    columns = inputs + list(runner.outputs) + ["seed"]
    kinds = {}
    for c in columns:
        sample = rows[0][c] if rows else 0.0
        kinds[c] = CATEGORICAL if isinstance(sample, str) else NUMERIC
    table = DataTable({c: [row[c] for row in rows] for c in columns}, kinds)
    for f in failures:
        log.warning("run failed (config %d, repeat %d): %s", f.config_index, f.repeat, f.error)
    return table, failures


def experimental_collect(runner, configs: list[dict], repeats: int = 1, seed: int = 0,
                         jobs: int = 1, allow_partial: bool = False) -> DataTable:
    table, failures = collect_runs(runner, configs, repeats, seed, jobs)
    if failures and not allow_partial:
        raise CollectionError(failures, table)
    return table
