"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (TOML).  Keys at the top level
or in a table named after the subcommand (dashes or underscores) become
flag defaults; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import harness as H

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def _out_path(args, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return H.default_output_dir() / default_name


def _emit(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def _parse_params(items: List[str]) -> dict:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError(f"parameter {it!r} is not key=value")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    params = dict(args.params_table or {})
    params.update(_parse_params(args.param))
    spec = H.ExperimentSpec(name=args.name or args.op, target=args.op, params=params, trials=args.trials,
                            master_seed=args.seed, output=str(_out_path(args, f"{args.op}.jsonl")),
                            workers=args.workers)
    rep = H.run_trials(spec)
    sys.stdout.write(H.csv_text(H.AGGREGATE_COLUMNS, [H.aggregate_row(rep)]))
    return 0


def cmd_favorites(args) -> int:
    from ._rng import trial_seed
    from .walk import LocalTimeLevel, favorite_event_scan, simulate_walk
    recs = []
    for i in range(args.trials):
        w = simulate_walk(args.dim, 0, trial_seed(args.seed, i), LocalTimeLevel(args.m + 1))
        log = favorite_event_scan(w, args.m)
        recs.append({"trial": i, "length": w.length, "m_max": log.m_max, "events": log.records()})
    path = _out_path(args, "favorites.jsonl")
    H.write_jsonl(recs, path, "favorites")
    print(f"wrote {path}")
    return 0


def cmd_decompose_check(args) -> int:
    from ._rng import trial_seed
    from .decomposition import decompose, identity_violations, prefix_identity_violations
    from .walk import local_time_profile, simulate_walk
    recs = []
    bad = 0
    for i in range(args.trials):
        w = simulate_walk(2, args.steps, trial_seed(args.seed, i))
        v = decompose(w, check=False)
        field = local_time_profile(w).counts
        nv = len(identity_violations(field, v))
        if args.all_prefixes:
            nv += prefix_identity_violations(w.path)
        bad += nv > 0
        recs.append({"trial": i, "n": w.length, "identity_ok": nv == 0,
                     "L_size": int(np.sum(v.L <= w.length + 1)), "Lp_size": int(np.sum(v.Lp <= w.length + 1)),
                     "violations": nv})
    path = _out_path(args, "decompose_check.jsonl")
    H.write_jsonl(recs, path, "decompose_check")
    print(f"wrote {path}; {bad} of {args.trials} walks with violations")
    return 0 if bad == 0 else 3


ANALYTICS_COLUMNS = ["quantity", "parameters", "formula_value", "exact_value", "rel_gap", "ci_low", "ci_high"]


def _row(quantity, parameters, formula=None, exact=None, ci=(None, None)):
    gap = None
    if formula is not None and exact not in (None, 0):
        gap = abs(formula - exact) / abs(exact)
    return {"quantity": quantity, "parameters": parameters, "formula_value": formula, "exact_value": exact,
            "rel_gap": gap, "ci_low": ci[0], "ci_high": ci[1]}


def cmd_analytics(args) -> int:
    from . import analytics as A
    rows = []
    if args.op == "gamma":
        if args.dim != 3:
            raise ConfigError("only --dim 3 is implemented")
        from .acceptance import escape_simulation
        ec = A.escape_constants(3)
        ci = (None, None)
        est = None
        if args.trials > 0:
            est, se, _ = escape_simulation(args.trials, args.seed)
            ci = (est - 1.959963984540054 * se, est + 1.959963984540054 * se)
        rows.append(_row("gamma", f"dim=3;trials={args.trials};seed={args.seed}", est, ec.gamma, ci))
        rows.append(_row("alpha", "dim=3", None, ec.alpha))
        rows.append(_row("beta", "dim=3", None, ec.beta))
        rows.append(_row("delta_star", f"dim=3;argmin={'/'.join(map(str, ec.argmin))}", None, ec.delta_star))
    elif args.op == "hitting":
        x0 = tuple(args.x0)
        c0 = A.fit_c0(tuple(args.c0_radii))["c0"]
        for v in ("escape", "hit_origin", "outer_first", "inner_first"):
            if v == "escape":
                h = A.hitting_probability(v, args.r, c0=c0)
                par = f"r={args.r}"
            elif v == "hit_origin":
                h = A.hitting_probability(v, args.r, tuple(args.x0_inner), c0=c0)
                par = f"r={args.r};x0={args.x0_inner[0]}/{args.x0_inner[1]}"
            else:
                h = A.hitting_probability(v, args.r, x0, R=args.R)
                par = f"r={args.r};R={args.R};x0={x0[0]}/{x0[1]}"
            rows.append(_row(v, par, h.formula, h.exact))
    elif args.op == "c0":
        fit = A.fit_c0(tuple(args.c0_radii))
        rows.append(_row("c0", "radii=" + "/".join(map(str, args.c0_radii)), None, fit["c0"],
                         (fit["c0"] - fit["uncertainty"], fit["c0"] + fit["uncertainty"])))
    elif args.op == "negbinom":
        i = args.i
        row = A.NegBinomTable().row(i)
        j = np.arange(len(row))
        mean = math.fsum(j * row)
        var = math.fsum((j - mean) ** 2 * row)
        m_cf, v_cf = A.negbinom_moments(i)
        rows.append(_row("normalization", f"i={i}", math.fsum(row), 1.0))
        rows.append(_row("mean", f"i={i}", m_cf, mean))
        rows.append(_row("variance", f"i={i}", v_cf, var))
    elif args.op == "clt":
        i = args.i
        centre = 16 * i / 15
        js = np.arange(math.ceil(centre - math.sqrt(i)), math.floor(centre + math.sqrt(i)) + 1)
        approx = A.local_clt_value(i, js)
        exact = A.negbinom_bar(i, js)
        k = int(np.argmax(np.abs(approx / exact - 1)))
        rows.append(_row("local_clt_worst", f"i={i};j={js[k]}", float(approx[k]), float(exact[k])))
        rows.append(_row("local_clt_rho", f"i={i};tol=0.05", None, A.calibrate_rho(i)))
    elif args.op == "moderate":
        n = args.i
        a = n**args.exponent
        for side in ("upper", "lower"):
            rows.append(_row(f"moderate_{side}", f"n={n};a_n=n^{args.exponent}", A.MODERATE_LIMIT,
                             A.moderate_tail_logratio(n, a, side)))
    else:
        raise ConfigError(f"unknown analytics op {args.op!r}")
    _emit(H.csv_text(ANALYTICS_COLUMNS, rows), Path(args.out) if args.out else None)
    return 0


def cmd_urn(args) -> int:
    from .urns import UrnConfig, _max_labels, simulate_urns_batch, urn_exact_conditional
    probs = tuple(args.probs)
    q = tuple(args.query)
    kind = q[0]
    query = (kind,) + tuple(int(v) for v in q[1:])
    exact = urn_exact_conditional(args.balls, probs, query)
    F = simulate_urns_batch(UrnConfig(probs, args.balls, args.seed), args.trials)
    X = _max_labels(F)
    if kind == "joint":
        _, m, h = query
        sim = float(np.mean((F[:, m - 1] == h) & (X == m)))
        n_used = args.trials
    elif kind == "conditional":
        _, m, h, s = query
        cond = (X <= m + 1) & (F[:, m - 1] + F[:, m] == s)
        n_used = int(cond.sum())
        sim = float(np.mean(F[cond, m - 1] == h)) if n_used else None
    elif kind == "window":
        _, m, g, f, J, j = query
        cond = (X == m) & (F[:, m - f: m].sum(axis=1) <= J)
        n_used = int(cond.sum())
        sim = float(np.mean(F[cond, m - g: m].sum(axis=1) == j + 1)) if n_used else None
    else:
        raise ConfigError(f"unknown query {kind!r}")
    row = {"query": " ".join(map(str, query)), "exact": exact, "simulated": sim, "n_trials": n_used}
    _emit(H.csv_text(["query", "exact", "simulated", "n_trials"], [row]), Path(args.out) if args.out else None)
    return 0


def cmd_mjp(args) -> int:
    from .excursions import AnnulusGeometry, _success, mjp_counts_batch
    g = AnnulusGeometry.desk(args.n)
    p_top = args.p_top if args.p_top is not None else g.top_up_probability
    ratio = (1 - p_top) / p_top
    counts, status = mjp_counts_batch(args.seed, 0, args.runs, args.n, p_top, 10**8)
    recs = []
    for i, c in enumerate(counts):
        if status[i] != 1:
            continue
        recs.append({"trial": i, "n": args.n, "counts": c.tolist(), "Y": bool(_success(c, args.n, args.delta, ratio)[0]),
                     "Yp": None, "source": "mjp"})
    path = _out_path(args, f"mjp_n{args.n}.jsonl")
    H.write_jsonl(recs, path, "excursion_ledger")
    print(f"wrote {path}")
    return 0


def cmd_excursions(args) -> int:
    from .excursions import AnnulusGeometry, count_excursions, replay_walk_path, successful_indicator
    g = AnnulusGeometry.desk(args.n)
    recs = []
    for i in range(args.walks):
        path = replay_walk_path(g, args.seed, i)
        led = count_excursions(path, g, from_outside=True)
        y, yp = successful_indicator(led, args.n, args.delta, xi_at_center=led.xi_center,
                                     K_n=g.outer, delta_prime=args.delta, top_ratio=g.top_ratio)
        recs.append({"trial": i, "n": args.n, "counts": [int(v) for v in led.counts], "Y": bool(y),
                     "Yp": None if yp is None else bool(yp), "source": "walk"})
    out = _out_path(args, f"excursions_n{args.n}.jsonl")
    H.write_jsonl(recs, out, "excursion_ledger")
    print(f"wrote {out}")
    return 0


def cmd_enumerate(args) -> int:
    from .walk import enumerate_exact_distribution
    ex = enumerate_exact_distribution(args.dim, args.steps)
    rows = [{"k": k, "count": c, "probability": c / ex.total} for k, c in sorted(ex.counts.items())]
    text = H.csv_text(["k", "count", "probability"], rows)
    text += f"# E[max local time] = {H.format_number(ex.mean_xi_star)}\n"
    _emit(text, Path(args.out) if args.out else None)
    return 0


def cmd_verify(args) -> int:
    from . import acceptance
    suite = args.suite_pos or args.suite
    if suite == "conditional-laws" and args.strata:
        return _verify_strata(args)
    results = acceptance.run_suite(suite)
    recs = []
    for r in results:
        print(r.line(), flush=True)
        recs.append({"name": r.name, "passed": bool(r.passed), "runtime": r.runtime, "budget": r.budget,
                     "reason": r.reason, "details": r.details})
    path = _out_path(args, f"verify_{suite}.jsonl")
    H.write_jsonl(recs, path, "criterion")
    return 0 if all(r.passed for r in results) else 1


def _verify_strata(args) -> int:
    from ._grid2d import Grid, origin_lazy_table, truncated_lazy_table
    from .samplers import stratified_truncated_test, stratified_untruncated_test
    tab_u = origin_lazy_table(args.seed, 0, args.trials, 1001, 60, 40)
    g = Grid(4096, 3)
    touched = np.zeros(1 << 22, dtype=np.int64)
    path = np.zeros(1 << 25, dtype=np.int64)
    tab_t, _, _ = truncated_lazy_table(args.seed + 1, 0, args.trials, 25, 4096, g.cells[0], g.cells[1],
                                       g.cells[2], touched, path)
    recs = []
    for law, res in (("untruncated", stratified_untruncated_test(tab_u)), ("truncated", stratified_truncated_test(tab_t))):
        for r in res:
            recs.append({"law": law, "stratum": r["stratum"], "n_samples": r["n_samples"],
                         "chi2": r.get("chi2"), "dof": r.get("dof"), "p": r.get("p"),
                         "skipped": bool(r.get("skipped"))})
    out = _out_path(args, "verify_conditional_laws.jsonl")
    H.write_jsonl(recs, out, "stratum")
    for r in recs:
        print(H.dumps(r))
    tested = [r for r in recs if not r["skipped"]]
    return 0 if tested and all(r["p"] > 0.01 for r in tested) else 1


def cmd_report(args) -> int:
    recs = H.read_jsonl(Path(args.input))
    for r in recs:
        H.validate_record(r, args.schema)
    if args.schema != "trial_record":
        print(f"{len(recs)} records valid against {args.schema}")
        return 0
    agg = H.aggregate(recs)
    ci = agg.get("ci95", [None, None])
    row = {"n": agg["n"], "failed": agg["failed"], "mean": agg.get("mean"), "variance": agg.get("variance"),
           "ci_low": ci[0], "ci_high": ci[1]}
    _emit(H.csv_text(["n", "failed", "mean", "variance", "ci_low", "ci_high"], [row]),
          Path(args.out) if args.out else None)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="favsites", description="Favorite-site experiments for lattice random walks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML file with defaults for this subcommand")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", help="output path (default: under $FAVSITES_OUTPUT_DIR)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("simulate", cmd_simulate, "run a registered trial operation through the harness")
    sp.add_argument("--op", default="walk.exit_time", choices=sorted(H.OPERATIONS))
    sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--name")
    sp.set_defaults(params_table=None)

    sp = add("favorites", cmd_favorites, "favorite-site stopping times and simultaneity events")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--m", type=int, default=5)
    sp.add_argument("--trials", type=int, default=10)

    sp = add("decompose-check", cmd_decompose_check, "check the jump-chain / holding decomposition")
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--steps", type=int, default=10**4)
    sp.add_argument("--all-prefixes", action="store_true", help="also check every prefix time")

    sp = add("analytics", cmd_analytics, "closed forms next to exact or simulated values (CSV)")
    sp.add_argument("--op", required=True, choices=["gamma", "hitting", "c0", "negbinom", "clt", "moderate"])
    sp.add_argument("--dim", type=int, default=3)
    sp.add_argument("--trials", type=int, default=10**4, help="simulation trials for the gamma CI (0: none)")
    sp.add_argument("--r", type=float, default=100)
    sp.add_argument("--R", type=float, default=400)
    sp.add_argument("--x0", type=int, nargs=2, default=[200, 0])
    sp.add_argument("--x0-inner", type=int, nargs=2, default=[5, 0])
    sp.add_argument("--c0-radii", type=float, nargs="+", default=[50, 200])
    sp.add_argument("--i", type=int, default=10**4)
    sp.add_argument("--exponent", type=float, default=0.7)

    sp = add("urn", cmd_urn, "exact urn probabilities next to simulation (CSV)")
    sp.add_argument("--probs", type=float, nargs="+", required=True)
    sp.add_argument("--balls", type=int, required=True)
    sp.add_argument("--query", nargs="+", required=True,
                    help="joint M H | conditional M H S | window M G F J j")
    sp.add_argument("--trials", type=int, default=10**5)

    sp = add("mjp", cmd_mjp, "upcrossing counts of the annulus jump process (JSONL)")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--runs", type=int, default=1000)
    sp.add_argument("--p-top", type=float)
    sp.add_argument("--delta", type=float, default=0.2)

    sp = add("excursions", cmd_excursions, "walk excursion counts across nested circles (JSONL)")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--walks", type=int, default=100)
    sp.add_argument("--delta", type=float, default=0.2)

    sp = add("enumerate", cmd_enumerate, "exact law of the number of favorite sites (CSV)")
    sp.add_argument("--dim", type=int, default=1)
    sp.add_argument("--steps", type=int, default=2)

    from .acceptance import SUITES
    sp = add("verify", cmd_verify, "run acceptance criteria; nonzero exit on failure")
    sp.add_argument("suite_pos", nargs="?", choices=sorted(SUITES), metavar="SUITE")
    sp.add_argument("--suite", default="all", choices=sorted(SUITES))
    sp.add_argument("--strata", action="store_true", help="conditional-laws only: emit per-stratum records")
    sp.add_argument("--trials", type=int, default=10**5, help="walks for --strata")

    sp = add("report", cmd_report, "validate a JSONL file and recompute its aggregate")
    sp.add_argument("input")
    sp.add_argument("--schema", default="trial_record")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: List[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    with open(args.config, "rb") as fh:
        cfg = tomllib.load(fh)
    section = {}
    for k, v in cfg.items():
        if not isinstance(v, dict):
            section[k] = v
    for key in (args.command, args.command.replace("-", "_")):
        if isinstance(cfg.get(key), dict):
            section.update(cfg[key])
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    known = {a.dest for a in sp._actions}
    defaults = {}
    for k, v in section.items():
        dest = k.replace("-", "_")
        if dest == "params" and args.command == "simulate":
            defaults["params_table"] = v
            continue
        if dest not in known:
            raise ConfigError(f"unknown config key {k!r} for {args.command}")
        defaults[dest] = v
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)  # explicit flags override the new defaults


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except (ConfigError, tomllib.TOMLDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"favsites: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"favsites: I/O error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except OSError as exc:
        print(f"favsites: I/O error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"favsites: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
