"""Command-line front end.

Exit codes: 0 all pass, 1 some test failed, 2 error, 3 effect unidentifiable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from . import confounded, dag as dagmod, plt, report as reportmod
from .collect import CollectionError, FunctionSubject, SubjectRunner, experimental_collect
from .scenario import DataError, DataTable, load_csv, read_csv_text
from .testing import OBSERVATIONAL, EXPERIMENTAL, CaseSpecError, load_suite, run_suite

EXIT_OK, EXIT_FAIL, EXIT_ERROR, EXIT_UNIDENTIFIABLE = 0, 1, 2, 3

log = logging.getLogger("causaltest")


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_validate_dag(args) -> int:
    try:
        g = dagmod.read_dot(args.dag)
    except (OSError, dagmod.DagError) as exc:
        _err(exc)
        return EXIT_ERROR
    code = EXIT_OK
    if args.roles:
        try:
            with open(args.roles, encoding="utf-8") as fh:
                roles = json.load(fh)
            violations = dagmod.validate_roles(g, roles)
        except (OSError, ValueError, dagmod.DagError) as exc:
            _err(exc)
            return EXIT_ERROR
        for v in violations:
            print(f"{v.severity}: assumption {v.assumption}: {v.message}")
            if v.severity == "error":
                code = EXIT_ERROR
    print(f"{'ok' if code == EXIT_OK else 'invalid'}: {len(g.nodes)} nodes, {len(g.edges)} edges")
    return code


def cmd_identify(args) -> int:
    try:
        g = dagmod.read_dot(args.dag)
        sets = dagmod.enumerate_adjustment_sets(g, args.treatment, args.outcome,
                                                max_nodes=args.max_nodes)
    except (OSError, dagmod.DagError) as exc:
        _err(exc)
        return EXIT_ERROR
    if not sets:
        print(f"no sufficient adjustment set for ({args.treatment}, {args.outcome})")
        return EXIT_UNIDENTIFIABLE
    for s in (sets[:1] if args.minimal else sets):
        print(dagmod.format_set(s))
    return EXIT_OK


def _builtin_runner(spec: dict):
    name = spec["builtin"]
    if name == "plt":
        def run(assignment, seed):
            return plt.run_plt(plt.PltConfig(float(assignment["W"]), float(assignment["H"]),
                                             float(assignment["I"]), seed)).as_row()
        return FunctionSubject(run, ["L_t", "P_t", "L_u", "P_u"])
    raise CaseSpecError(f"unknown builtin subject {name!r}")


def cmd_test(args) -> int:
    started = time.perf_counter()
    try:
        suite = load_suite(args.suite)
        data_spec = suite.data
        inputs = {
            "dag": {"path": suite.raw["dag"], "sha256": reportmod.sha256_file(suite.dag_path)},
            "scenario": {"sha256": reportmod.sha256_json(suite.raw["scenario"])},
        }
        mode = args.mode
        if "csv" in data_spec:
            csv_path = suite.resolve(data_spec["csv"])
            source = load_csv(csv_path, suite.spec.scenario)
            inputs["data"] = {"path": data_spec["csv"], "sha256": reportmod.sha256_file(csv_path)}
            mode = mode or OBSERVATIONAL
            if mode == EXPERIMENTAL:
                raise CaseSpecError("experimental mode needs a runner data source")
        elif "runner" in data_spec:
            rspec = data_spec["runner"]
            source = _builtin_runner(rspec) if "builtin" in rspec else SubjectRunner.from_dict(rspec)
            inputs["data"] = {"runner": rspec, "sha256": reportmod.sha256_json(rspec)}
            mode = mode or EXPERIMENTAL
            if mode == OBSERVATIONAL:
                raise CaseSpecError("observational mode needs a csv data source")
        else:
            raise CaseSpecError("data must give either 'csv' or 'runner'")
        result = run_suite(suite.spec, suite.cases, source, mode=mode,
                           counterfactual=args.counterfactual_drop, seed=args.seed, jobs=args.jobs,
                           repeats=int(data_spec.get("repeats", 30)),
                           base_config=data_spec.get("base_config"),
                           allow_partial=args.allow_partial)
    except (OSError, ValueError, KeyError, dagmod.DagError, DataError, CollectionError) as exc:
        _err(exc)
        return EXIT_ERROR
    for r in result.results:
        if r.estimate is not None:
            e = r.estimate
            print(f"{r.verdict.upper():5} {r.name}: {e.metric} {e.point:.6g} "
                  f"[{e.ci_low:.6g}, {e.ci_high:.6g}] adj={dagmod.format_set(e.adjustment_set)} "
                  f"n={e.n_used}")
        else:
            print(f"{r.verdict.upper():5} {r.name}: {r.error}")
    s = result.summary
    print(f"summary: {s['pass']} passed, {s['fail']} failed, {s['error']} errors")
    rep = reportmod.build_report(result, inputs, args.seed, mode, args.counterfactual_drop,
                                 time.perf_counter() - started if args.timing else None)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(reportmod.dumps(rep))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(reportmod.to_csv(rep))
    return result.exit_code


def _write_table(table: DataTable, out):
    if out in (None, "-"):
        sys.stdout.write(table.to_csv())
    else:
        table.to_csv(out)


def _runs_table(runs):
    rows = [r.as_row() for r in runs]
    return DataTable.from_rows(rows, columns=list(plt.PLT_COLUMNS))


def cmd_plt_generate(args) -> int:
    if args.lhs:
        ranges = {"W": tuple(args.w_range), "H": tuple(args.h_range), "I": tuple(args.i_range)}
        try:
            configs = plt.lhs_configs(args.lhs, ranges, args.seed)
        except ValueError as exc:
            _err(exc)
            return EXIT_ERROR
    else:
        configs = plt.grid_configs(args.sides, args.intensities, args.repeats, args.seed)
    _write_table(_runs_table([plt.run_plt(c) for c in configs]), args.out)
    return EXIT_OK


def cmd_plt_run(args) -> int:
    try:
        run = plt.run_plt(plt.PltConfig(args.W, args.H, args.I, args.seed))
    except ValueError as exc:
        _err(exc)
        return EXIT_ERROR
    row = run.as_row()
    print(" ".join(f"{k}={row[k]!r}" for k in ("L_t", "P_t", "L_u", "P_u")))
    return EXIT_OK


def cmd_confounded_generate(args) -> int:
    try:
        law = confounded.DEFAULT_LAW
        if args.law and os.path.exists(args.law):
            with open(args.law, encoding="utf-8") as fh:
                law = confounded.OutcomeLaw.from_json(fh.read())
        elif args.law:
            law = confounded.OutcomeLaw.from_json(args.law)
    except (ValueError, TypeError) as exc:
        _err(f"bad --law: {exc}")
        return EXIT_ERROR
    table = confounded.generate(args.n, law=law, seed=args.seed,
                                jitter=(args.age_jitter, args.contacts_jitter))
    _write_table(table, args.out)
    return EXIT_OK


def cmd_collect(args) -> int:
    try:
        with open(args.runner, encoding="utf-8") as fh:
            rspec = json.load(fh)
        runner = _builtin_runner(rspec) if "builtin" in rspec else SubjectRunner.from_dict(rspec)
        with open(args.configs, encoding="utf-8") as fh:
            text = fh.read()
        if args.configs.endswith(".json"):
            configs = json.loads(text)
        else:
            header = text.splitlines()[0].split(",")
            t = read_csv_text(text, {h.strip(): "numeric" for h in header}, source=args.configs)
            configs = list(t.rows())
        table = experimental_collect(runner, configs, repeats=args.repeats, seed=args.seed,
                                     jobs=args.jobs, allow_partial=args.allow_partial)
    except CollectionError as exc:
        for f in exc.failures:
            _err(f"config {f.config_index} repeat {f.repeat}: {f.error}")
        return EXIT_ERROR
    except (OSError, ValueError, KeyError, DataError) as exc:
        _err(exc)
        return EXIT_ERROR
    _write_table(table, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causaltest", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-dag", help="parse a DOT file and check variable roles")
    s.add_argument("dag")
    s.add_argument("--roles", help="JSON map of node to 'input'/'output'")
    s.set_defaults(func=cmd_validate_dag)

    s = sub.add_parser("identify", help="print sufficient adjustment sets")
    s.add_argument("dag")
    s.add_argument("treatment")
    s.add_argument("outcome")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--all", action="store_true", default=True)
    g.add_argument("--minimal", action="store_true")
    s.add_argument("--max-nodes", type=int, default=20)
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("test", help="run a causal test suite")
    s.add_argument("suite")
    s.add_argument("--mode", choices=[OBSERVATIONAL, EXPERIMENTAL])
    s.add_argument("--counterfactual-drop", action="store_true",
                   help="drop rows at each case's treatment value before estimating")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--csv", help="write a flat CSV of results here")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.add_argument("--allow-partial", action="store_true")
    s.add_argument("--timing", action="store_true", help="record wall time in the report")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("plt-generate", help="run the Poisson line tessellation model")
    s.add_argument("--lhs", type=int, help="number of Latin-hypercube configurations")
    s.add_argument("--w-range", type=float, nargs=2, default=[0.0, 10.0])
    s.add_argument("--h-range", type=float, nargs=2, default=[0.0, 10.0])
    s.add_argument("--i-range", type=float, nargs=2, default=[0.0, 16.0])
    s.add_argument("--sides", type=float, nargs="+", default=[float(w) for w in range(1, 11)])
    s.add_argument("--intensities", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0, 16.0])
    s.add_argument("--repeats", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_plt_generate)

    s = sub.add_parser("plt-run", help="one PLT run, printed as name=value pairs")
    s.add_argument("--W", type=float, required=True)
    s.add_argument("--H", type=float, required=True)
    s.add_argument("--I", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_plt_run)

    s = sub.add_parser("confounded-generate", help="synthetic confounded infection data")
    s.add_argument("--n", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--law", help="outcome law as JSON text or a JSON file path")
    s.add_argument("--age-jitter", type=float, default=0.0)
    s.add_argument("--contacts-jitter", type=float, default=0.0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_confounded_generate)

    s = sub.add_parser("collect", help="run a subject over input configurations")
    s.add_argument("--runner", required=True, help="runner JSON file")
    s.add_argument("--configs", required=True, help="CSV or JSON list of input assignments")
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.add_argument("--allow-partial", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_collect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
