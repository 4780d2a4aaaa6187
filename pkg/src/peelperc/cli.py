"""Command-line front end: ``peelperc <subcommand> [flags]``.

Every report starts with its full configuration. In CSV that is a first
line ``# config: {...}`` followed by a header row; further ``#`` lines carry
summaries. In JSON the report is ``{"schema", "config", ...}``. Exact values
are written as ``"num/den"`` strings, floats in shortest round-trip form.

Exit status: 0 success, 1 usage error or failed oracle check, 2 domain
error, 3 budget exhausted (the partial report is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import random
import sys
import time
from fractions import Fraction

from . import combinatorics as C
from . import estimator as E
from . import mapstruct as M
from . import peeling as P
from . import percolation as R
from .errors import BudgetExhausted, DomainError

SCHEMA = "peelperc-report/1"
FLOAT_FORMAT = "float64, shortest round-trip decimal"

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# output


def _frac(x) -> str:
    return f"{x.numerator}/{x.denominator}"


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


class Report:
    """Table plus summary, rendered as CSV or JSON."""

    def __init__(self, config: dict, columns: list, rows: list | None = None, summary: dict | None = None):
        self.config = config
        self.columns = columns
        self.rows = rows if rows is not None else []
        self.summary = summary if summary is not None else {}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            body = {"schema": SCHEMA, "config": self.config, "summary": self.summary,
                    "columns": self.columns, "rows": self.rows}
            return json.dumps(_jsonable(body), sort_keys=True, indent=1) + "\n"
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(_jsonable(self.config), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(x) for x in row])
        for k in sorted(self.summary):
            buf.write(f"# {k}: {json.dumps(_jsonable(self.summary[k]), sort_keys=True)}\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_counts(a, cfg):
    rows = []
    for p in range(1, a.p + 1):
        z, c = C.z_value(p), C.c_ratio(p, 1)
        for n in range(0, a.n + 1):
            cnt, simple = C.quad_count(n, p), C.simple_quad_count(n, p)
            if a.decimal:
                rows.append([n, p, cnt, simple, float(z), float(c)])
            else:
                rows.append([n, p, cnt, simple, _frac(z), _frac(c)])
    return Report(cfg, ["n", "p", "a_np", "a_np_simple", "Z_p", "C_p_over_C_1"], rows)


def _cmd_pmf(a, cfg):
    if not a.events:
        law = P.increment_pmf(a.p)
        rows = [[d, int(pr.numerator), int(pr.denominator), float(pr)]
                for d, pr in sorted(law.items(), reverse=True)]
        return Report(cfg, ["delta", "prob_num", "prob_den", "prob_float"], rows)
    pmf = P.event_pmf(a.p)
    rows = [[ev.case.value, ev.i, ev.j, ev.delta_halfperimeter, int(pr.numerator), int(pr.denominator), float(pr)]
            for ev, pr in pmf.rows]
    return Report(cfg, ["case", "i", "j", "delta", "prob_num", "prob_den", "prob_float"], rows,
                  {"total": _frac(pmf.total())})


def _cmd_drift(a, cfg):
    q = Fraction(a.q)
    kind = R._as_primed(a.kind)
    val = R.prime_drift(kind, a.p, q)
    lim = R.prime_drift_limit(kind, q)
    row = [kind.value, a.p, str(q), _frac(val), float(val), _frac(lim), float(lim)]
    return Report(cfg, ["kind", "p", "q", "drift", "drift_float", "limit", "limit_float"], [row])


def _deadline(a):
    return None if a.time_budget is None else time.monotonic() + a.time_budget


def _cmd_peel(a, cfg):
    deadline = _deadline(a)
    rows = []
    columns = (["chain", "n", "p", "v"] if a.trajectory
               else ["chain", "steps", "final_p", "max_p", "final_v", "tail_fraction"])
    for c in range(a.chains):
        tr = P.simulate_peeling(a.p0, a.steps, a.volume, P.chain_rng(a.seed, c))
        if a.trajectory:
            for n in range(0, a.steps + 1, a.every):
                rows.append([c, n, int(tr.p[n]), int(tr.v[n]) if a.volume else None])
        else:
            rows.append([c, a.steps, int(tr.p[-1]), int(tr.p.max()),
                         int(tr.v[-1]) if a.volume else None, tr.tail_fraction])
        if deadline is not None and time.monotonic() > deadline and c + 1 < a.chains:
            raise BudgetExhausted(f"time budget exhausted after {c + 1} chains",
                                  Report(cfg, columns, rows, {"completed_chains": c + 1}))
    return Report(cfg, columns, rows)


def _cmd_percolate(a, cfg):
    deadline = _deadline(a)
    columns = ["chain", "status", "steps", "final_p", "final_value", "policy_resolved", "revivals", "clamps",
               "alive"]
    rows = []
    alive = 0
    for c in range(a.chains):
        o = R.run_exploration(a.kind, a.q, a.steps, policy=a.policy, rng=P.chain_rng(a.seed, c),
                              quiet_after=a.quiet_after)
        ok = o.alive_at(a.steps) if (o.survived or o.steps >= a.steps) else False
        alive += ok
        rows.append([c, o.status.value, o.steps, o.final_p, o.final_value, o.policy_resolved, o.revivals,
                     o.clamps, ok])
        if deadline is not None and time.monotonic() > deadline and c + 1 < a.chains:
            raise BudgetExhausted(f"time budget exhausted after {c + 1} chains",
                                  Report(cfg, columns, rows, _survival_summary(alive, c + 1)))
    return Report(cfg, columns, rows, _survival_summary(alive, a.chains))


def _survival_summary(alive, chains):
    lo, hi = E.wilson_interval(alive, chains)
    return {"chains": chains, "survivors": alive, "survival_fraction": alive / chains, "ci_low": lo, "ci_high": hi}


def _cmd_threshold(a, cfg):
    policies = None if a.policy is None else [a.policy]
    est = E.estimate_threshold(a.kind, tol=a.tol, max_steps=a.steps, chains=a.chains, seed=a.seed,
                               method=a.method, level=a.level, policies=policies, workers=a.workers,
                               time_budget=a.time_budget)
    rows = []
    for ev in sorted(est.evaluations, key=lambda e: (e.policy.value, e.q)):
        s = ev.counts[-1]
        lo, hi = E.wilson_interval(s, est.chains)
        rows.append([ev.policy.value, ev.q, est.chains, s, s / est.chains, lo, hi, ev.statistic,
                     ev.supercritical])
    summary = {
        "estimate": est.estimate,
        "bracket": list(est.bracket),
        "horizons": list(est.horizons),
        "policy_gap": est.policy_gap,
        "method": est.method,
        "warning": est.warning,
        "per_policy": {pol.value: {"estimate": pe.estimate, "low": pe.low, "high": pe.high,
                                   "converged": pe.converged,
                                   "level_crossings": {str(h): v for h, v in pe.level_crossings.items()}}
                       for pol, pe in est.per_policy.items()},
    }
    rep = Report(cfg, ["policy", "q", "chains", "survivors", "fraction", "ci_lo", "ci_hi", "statistic",
                       "supercritical"], rows, summary)
    if est.warning and a.time_budget is not None:
        raise BudgetExhausted("threshold search stopped by the time budget", rep)
    return rep


def _cmd_growth(a, cfg):
    g = E.growth_exponent(a.chains, a.steps, a.seed, a.observable, workers=a.workers)
    rows = [[c, s] for c, s in enumerate(g.slopes)]
    return Report(cfg, ["chain", "slope"], rows,
                  {"slope": g.slope, "stderr": g.stderr, "n_low": g.n_low, "n_high": g.n_high})


def _oracle_rows(check, seed):
    rows = []
    if check in ("counts", "all"):
        for n in range(1, 4):
            got = len(M.enumerate_rooted_maps(n))
            want = 2 * 3 ** n * math.factorial(2 * n) // (math.factorial(n) * math.factorial(n + 2))
            rows.append(["counts", f"maps n={n}", want, got, want == got])
        for n in range(0, 5):
            for p in range(1, 4):
                got = len(M.enumerate_quadrangulations(n, p))
                rows.append(["counts", f"quads n={n} p={p}", C.quad_count(n, p), got, got == C.quad_count(n, p)])
    if check in ("bijection", "all"):
        for n in range(1, 4):
            maps = M.enumerate_rooted_maps(n)
            rt = sum(M.quad_to_map(M.map_to_quad(m)) == m for m in maps)
            rows.append(["bijection", f"map->quad->map n={n}", len(maps), rt, rt == len(maps)])
            quads = M.enumerate_sphere_quadrangulations(n)
            rt = sum(M.map_to_quad(M.quad_to_map(q)) == q for q in quads)
            rows.append(["bijection", f"quad->map->quad n={n}", len(quads), rt, rt == len(quads)])
    if check in ("duality", "all"):
        for n in range(1, 4):
            maps = M.enumerate_rooted_maps(n)
            ok = sum(M.dual_map(M.dual_map(m)) == m and M.dual_map(m).n_edges == n for m in maps)
            rows.append(["duality", f"dual involution n={n}", len(maps), ok, ok == len(maps)])
    if check in ("balls", "all"):
        rng = random.Random(seed)
        pool = [q for n in range(1, 5) for q in M.enumerate_sphere_quadrangulations(n)]
        ok = 0
        for _ in range(100):
            q = rng.choice(pool)
            r = rng.randint(1, 4)
            ok += M.ball(q.map, r, "edge") <= M.ball(q.map, r, "face") <= M.ball(q.map, r + 2, "edge")
        rows.append(["balls", "B_r <= B*_r <= B_(r+2), 100 random", 100, ok, ok == 100])
    return rows


def _cmd_oracle(a, cfg):
    rows = _oracle_rows(a.check, a.seed)
    passed = all(r[-1] for r in rows)
    return Report(cfg, ["check", "case", "expected", "observed", "pass"], rows, {"all_passed": passed})


def _cmd_export_map(a, cfg):
    if a.object == "map":
        items = M.enumerate_rooted_maps(a.n)
    elif a.object == "sphere-quad":
        items = M.enumerate_sphere_quadrangulations(a.n)
    else:
        items = M.enumerate_quadrangulations(a.n, a.p)
    if not 0 <= a.index < len(items):
        raise DomainError(f"index {a.index} out of range for {len(items)} objects")
    obj = items[a.index]
    m = obj if isinstance(obj, M.HalfEdgeMap) else obj.map
    data = M.map_to_dict(m)
    if not isinstance(obj, M.HalfEdgeMap):
        data["boundary"] = obj.has_boundary
    return Report(cfg, ["darts", "alpha", "sigma", "root"],
                  [[" ".join(map(str, data["darts"])), " ".join(map(str, data["alpha"])),
                    " ".join(map(str, data["sigma"])), data["root"]]],
                  {"map": data, "count": len(items)})


# ---------------------------------------------------------------------------
# parser


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    return v


def build_parser() -> argparse.ArgumentParser:
    env_seed = os.environ.get("PEEL_SEED", "0")
    env_workers = os.environ.get("PEEL_WORKERS")
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--output", "-o", default=None, help="write here instead of standard output")
    common.add_argument("--seed", type=_seed, default=_seed(env_seed), help="64-bit unsigned seed (env PEEL_SEED)")
    common.add_argument("--workers", type=int, default=int(env_workers) if env_workers else (os.cpu_count() or 1),
                        help="worker processes (env PEEL_WORKERS)")
    common.add_argument("--time-budget", type=float, default=None, help="seconds before stopping with exit 3")

    parser = _Parser(prog="peelperc", description="Peeling process and percolation on random planar maps.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("counts", parents=[common], help="a_{n,p}, simple-boundary counts, Z_p, C-ratios")
    s.add_argument("--n", type=int, default=4, help="largest n")
    s.add_argument("--p", type=int, default=3, help="largest p")
    s.add_argument("--decimal", action="store_true", help="decimals instead of exact fractions")

    s = sub.add_parser("pmf", parents=[common], help="exact peeling event table at one half-perimeter")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--events", action="store_true",
                   help="full event table (case, i, j) instead of the law of the increment")

    s = sub.add_parser("drift", parents=[common], help="exact drift of a primed chain")
    s.add_argument("--kind", required=True, help="site, bond-map, bond-quad or B', W', A'-map, A'-quad, U'-quad")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--q", required=True, help="decimal or fraction, taken exactly")

    s = sub.add_parser("peel", parents=[common], help="boundary chain trajectories")
    s.add_argument("--p0", type=int, default=1)
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--volume", action="store_true", help="track inner-face counts")
    s.add_argument("--trajectory", action="store_true", help="emit (n, p, v) rows instead of summaries")
    s.add_argument("--every", type=int, default=1, help="trajectory thinning")

    s = sub.add_parser("percolate", parents=[common], help="percolation exploration chains")
    s.add_argument("--kind", required=True, choices=[k.value for k in R.Kind])
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--steps", type=int, default=E.DEFAULT_HORIZON)
    s.add_argument("--chains", type=int, default=100)
    s.add_argument("--policy", choices=[p.value for p in R.Policy], default="pessimistic")
    s.add_argument("--quiet-after", type=int, default=0,
                   help="policy-resolved branches after this step count as death for 'alive'")

    s = sub.add_parser("threshold", parents=[common], help="locate the percolation threshold")
    s.add_argument("--kind", required=True, choices=[k.value for k in R.Kind])
    s.add_argument("--tol", type=float, default=0.01)
    s.add_argument("--steps", type=int, default=E.DEFAULT_HORIZON)
    s.add_argument("--chains", type=int, default=1000)
    s.add_argument("--method", choices=["scaling", "level"], default="scaling")
    s.add_argument("--level", type=float, default=0.5)
    s.add_argument("--policy", choices=[p.value for p in R.Policy], default=None,
                   help="run one policy only (default: both for bond kinds)")

    s = sub.add_parser("growth", parents=[common], help="growth exponent of perimeter or volume")
    s.add_argument("--observable", choices=["perimeter", "volume"], default="perimeter")
    s.add_argument("--chains", type=int, default=100)
    s.add_argument("--steps", type=int, default=100_000)

    s = sub.add_parser("oracle", parents=[common], help="exhaustive enumeration checks")
    s.add_argument("--check", choices=["counts", "bijection", "duality", "balls", "all"], default="all")

    s = sub.add_parser("export-map", parents=[common], help="export an enumerated map as JSON")
    s.add_argument("--object", choices=["map", "quad", "sphere-quad"], default="map")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, default=1)
    s.add_argument("--index", type=int, default=0)
    return parser


_COMMANDS = {
    "counts": _cmd_counts, "pmf": _cmd_pmf, "drift": _cmd_drift, "peel": _cmd_peel,
    "percolate": _cmd_percolate, "threshold": _cmd_threshold, "growth": _cmd_growth,
    "oracle": _cmd_oracle, "export-map": _cmd_export_map,
}


def _config(a) -> dict:
    cfg = {k: v for k, v in sorted(vars(a).items()) if k != "output"}
    cfg["float_format"] = FLOAT_FORMAT
    return cfg


def _emit(report: Report, a, stdout):
    text = report.render(a.format)
    if a.output:
        with open(a.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        stderr.write(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        if not 0 <= a.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if a.workers < 1:
            raise DomainError("workers must be at least 1")
        report = _COMMANDS[a.subcommand](a, _config(a))
    except BudgetExhausted as exc:
        if isinstance(exc.partial, Report):
            _emit(exc.partial, a, stdout)
        stderr.write(f"budget exhausted: {exc}\n")
        return EXIT_BUDGET
    except (DomainError, ValueError, ZeroDivisionError) as exc:
        stderr.write(f"domain error: {exc}\n")
        return EXIT_DOMAIN
    _emit(report, a, stdout)
    if a.subcommand == "oracle" and not report.summary["all_passed"]:
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
