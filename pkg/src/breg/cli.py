"""Command line interface: ``breg <subcommand> ...``.

Exit codes: 0 success, 1 validation failure (a check failed or a solver
did not converge), 2 usage or input/output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as bio
from .ambiguity import AmbiguitySet, build_asymptotic, build_concentration, drso_demo
from .asymptotics import empirical_law_check, limit_spectrum, mc_quantile
from .concentration import empirical_tail_check, tail_bound
from .divergence import bregman
from .generators import BUILTINS, ConvergenceError, DomainError, generator_from_config
from .learn import ObjectiveError, PushforwardFamily, fit
from .transport import cost_matrix, solve_exact, solve_sinkhorn
from .validation import report, run_suite

log = logging.getLogger("breg")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DIRECTION_ALIASES = {"z": "empirical_first", "y": "true_first",
                     "empirical_first": "empirical_first", "true_first": "true_first"}
FORM_ALIASES = {"paper": "paper_stated", "mcdiarmid": "mcdiarmid_rederived",
                "paper_stated": "paper_stated", "mcdiarmid_rederived": "mcdiarmid_rederived"}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _float_list(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _generator(args, dimension):
    """Generator from ``--config`` or ``--generator`` plus its options."""
    if getattr(args, "config", None):
        cfg = bio.load_config(args.config)
    else:
        if not args.generator:
            raise UsageError("need --generator or --config")
        cfg = {"generator": args.generator}
        if args.delta is not None:
            cfg["delta"] = args.delta
        if args.scale is not None:
            cfg["scale"] = args.scale
        if args.matrix:
            cfg["mahalanobis_matrix"] = bio.read_matrix(args.matrix).tolist()
    return generator_from_config(cfg, dimension)


def _write(args, text):
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _seed_header(seed):
    return f"# seed={int(seed)}\n"


# ---------------------------------------------------------------- subcommands

def cmd_div(args):
    x, y = bio.read_vector(args.x), bio.read_vector(args.y)
    if x.shape != y.shape:
        raise UsageError("x and y have different lengths")
    g = _generator(args, x.size)
    value = bregman(g, x, y)
    if args.format == "json":
        return bio.dumps({"generator": g.name, "divergence": value})
    return bio.fmt_short(value) + "\n"


def cmd_ot(args):
    P, Q = bio.read_distribution(args.src), bio.read_distribution(args.dst)
    kind, _, spec = args.cost.partition(":")
    if kind == "lp":
        try:
            cost = float(spec)
        except ValueError:
            raise UsageError(f"bad --cost {args.cost!r}") from None
    elif kind == "bregman":
        args.generator = spec
        cost = _generator(args, P.dimension)
    else:
        raise UsageError("--cost must be bregman:G or lp:P")
    C = cost_matrix(cost, P, Q)
    if args.method == "exact":
        plan = solve_exact(C, P, Q)
    else:
        plan = solve_sinkhorn(C, P, Q, args.epsilon, max_iter=args.max_iter)
        if not plan.converged:
            print(f"breg: warning: sinkhorn stopped after {plan.n_iter} iterations with marginal error "
                  f"{plan.marginal_error:.3g}", file=sys.stderr)
    if args.format == "json":
        out = {"cost": plan.cost, "method": plan.method, "marginal_error": plan.marginal_error}
        if args.method == "sinkhorn":
            out.update(epsilon=plan.epsilon, n_iter=plan.n_iter, converged=plan.converged)
        if args.plan:
            out["plan"] = plan.coupling
        return bio.dumps(out)
    text = bio.fmt_short(plan.cost) + "\n"
    if args.plan:
        header = ["i"] + [f"j{j}" for j in range(plan.coupling.shape[1])]
        text += bio.format_csv(header, [[i, *map(float, row)] for i, row in enumerate(plan.coupling)])
    return text


def cmd_asymptotics(args):
    p = bio.read_vector(args.p)
    g = _generator(args, p.size)
    spec = limit_spectrum(g, p)
    q = mc_quantile(spec, args.alpha, args.K, args.seed)
    if args.format == "json":
        return bio.dumps({"seed": args.seed, "alpha": args.alpha, "K": args.K,
                          "beta": spec.eigenvalues, "rank": spec.rank, "quantile": q})
    rows = [["beta", *map(float, spec.eigenvalues)], ["rank", spec.rank], ["quantile", q]]
    return _seed_header(args.seed) + "\n".join(",".join(bio.fmt(v) if isinstance(v, float) else str(v)
                                                        for v in row) for row in rows) + "\n"


def cmd_validate_law(args):
    p = bio.read_vector(args.p)
    g = _generator(args, p.size)
    res = empirical_law_check(g, p, args.n, args.M, args.seed, K=args.K, full=True)
    if args.format == "json":
        text = bio.dumps({"seed": args.seed, "n": args.n, "M": args.M, "ks": res.ks,
                          "statistics": res.statistics})
    else:
        text = (_seed_header(args.seed) + f"# ks={bio.fmt(res.ks)}\n"
                + bio.format_csv(["statistic"], [[float(v)] for v in res.statistics]))
    if args.max_ks is not None and res.ks > args.max_ks:
        _write(args, text)
        raise CheckFailed(f"KS distance {res.ks:.6g} exceeds {args.max_ks:g}")
    return text


def cmd_bound(args):
    g = _generator(args, args.d)
    direction, form = DIRECTION_ALIASES[args.direction], FORM_ALIASES[args.form]
    value = tail_bound(form, direction, g, args.n, args.d, args.eps)
    if args.format == "json":
        return bio.dumps({"form": form, "direction": direction, "n": args.n, "d": args.d,
                          "eps": args.eps, "M_phi": g.grad_bound, "L_phi": g.grad_lipschitz,
                          "bound": value})
    return bio.fmt_short(value) + "\n"


def cmd_tailcheck(args):
    p = bio.read_vector(args.p)
    g = _generator(args, p.size)
    direction = DIRECTION_ALIASES[args.direction]
    table = empirical_tail_check(direction, g, p, args.n, args.M, args.eps, args.seed)
    if args.format == "json":
        text = bio.dumps({"seed": args.seed, "direction": direction, "mean": table.mean,
                          "rows": [dict(zip(("eps", "freq", "paper_bound", "mcdiarmid_bound"), map(float, r)))
                                   for r in table.rows()]})
    else:
        text = _seed_header(args.seed) + bio.format_csv(
            ["eps", "freq", "paper_bound", "mcdiarmid_bound"], [list(map(float, r)) for r in table.rows()])
    if args.strict and not table.holds().all():
        _write(args, text)
        raise CheckFailed("an empirical tail frequency exceeds the rederived bound")
    return text


def cmd_ambiguity(args):
    counts = bio.read_vector(args.counts)
    g = _generator(args, counts.size)
    if args.mode == "asymptotic":
        s = build_asymptotic(g, counts, alpha=args.alpha, K=args.K, seed=args.seed)
    else:
        s = build_concentration(g, counts, args.delta_conf, FORM_ALIASES[args.form])
    out = s.to_dict()
    if args.mode == "asymptotic":
        out["seed"] = args.seed
    return bio.dumps(out)


def cmd_drso(args):
    losses = bio.read_matrix(args.losses)
    try:
        s = AmbiguitySet.from_dict(json.loads(Path(args.set).read_text()))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.set}: not valid JSON ({exc})") from None
    best, values = drso_demo(losses, s)
    if args.format == "json":
        return bio.dumps({"best_action": best, "worst_case_values": values})
    return f"# best_action={best}\n" + bio.format_csv(
        ["action", "worst_case_value"], [[i, float(v)] for i, v in enumerate(values)])


def cmd_learn(args):
    Q = bio.read_distribution(args.target)
    base = bio.read_matrix(args.base)
    fam = PushforwardFamily(base)
    g = _generator(args, fam.dimension)
    theta0 = np.asarray(args.theta0, dtype=float)
    if theta0.size != fam.n_params:
        raise UsageError(f"--theta0 needs {fam.n_params} values (loc..., log_scale...)")
    rows = []
    fit(g, Q, fam, theta0, args.steps, args.lr,
        callback=lambda step, theta, value: rows.append([step, float(value), *map(float, theta)]))
    header = ["step", "objective"] + [f"theta{i + 1}" for i in range(fam.n_params)]
    return bio.format_csv(header, rows)


def cmd_validate(args):
    def progress(res):
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name} value={res.value:.6g} bound={res.bound}",
              file=sys.stderr, flush=True)

    results = run_suite(args.seed, args.quick, names=args.check, progress=None if args.silent else progress)
    text = bio.dumps(report(results, seed=args.seed, quick=args.quick, timings=args.timings))
    if args.report:
        try:
            Path(args.report).write_text(text)
        except OSError as exc:
            raise UsageError(f"cannot write report: {exc}") from None
    else:
        sys.stdout.write(text)
    if any(not r.passed for r in results):
        raise CheckFailed(f"{sum(not r.passed for r in results)} check(s) failed")
    return ""


# ---------------------------------------------------------------- parser

def _add_generator_options(p):
    p.add_argument("--generator", choices=BUILTINS, help="built-in generator")
    p.add_argument("--config", help="TOML or JSON generator configuration (instead of --generator)")
    p.add_argument("--delta", type=float, help="interior margin for neg_entropy / itakura_saito")
    p.add_argument("--scale", type=float, help="squared_l2 scale")
    p.add_argument("--matrix", help="file with the SPD matrix for mahalanobis")


def _add_output(p, formats=("csv", "json")):
    p.add_argument("--output", "-o", help="write the primary output here instead of stdout")
    p.add_argument("--format", choices=formats, default=formats[0])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="breg", description="Bregman divergence toolkit")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("div", help="Bregman divergence D(x, y)")
    _add_generator_options(p)
    p.add_argument("--x", required=True, help="vector file")
    p.add_argument("--y", required=True, help="vector file")
    _add_output(p, ("text", "json"))
    p.set_defaults(func=cmd_div)

    p = sub.add_parser("ot", help="optimal transport between two distribution files")
    p.add_argument("--cost", required=True, help="bregman:G or lp:P")
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--method", choices=("exact", "sinkhorn"), default="exact")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--plan", action="store_true", help="also print the coupling")
    for flag in ("--config", "--delta", "--scale", "--matrix"):
        p.add_argument(flag, type=float if flag in ("--delta", "--scale") else str)
    _add_output(p, ("text", "json"))
    p.set_defaults(func=cmd_ot)

    p = sub.add_parser("asymptotics", help="limit spectrum and Monte Carlo quantile")
    _add_generator_options(p)
    p.add_argument("--p", required=True, help="probability vector file")
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--K", type=int, default=10000)
    p.add_argument("--seed", type=int, default=42)
    _add_output(p)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("validate-law", help="KS distance to the weighted chi-square limit")
    _add_generator_options(p)
    p.add_argument("--p", required=True)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--M", type=int, default=20000)
    p.add_argument("--K", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--max-ks", type=float, help="exit 1 when the KS distance exceeds this")
    _add_output(p)
    p.set_defaults(func=cmd_validate_law)

    p = sub.add_parser("bound", help="closed-form concentration tail bound")
    _add_generator_options(p)
    p.add_argument("--direction", choices=tuple(DIRECTION_ALIASES), required=True,
                   help="z: D(p_hat, p); y: D(p, p_hat)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--form", choices=tuple(FORM_ALIASES), default="mcdiarmid")
    _add_output(p, ("text", "json"))
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("tailcheck", help="simulated tail frequencies against both bounds")
    _add_generator_options(p)
    p.add_argument("--direction", choices=tuple(DIRECTION_ALIASES), required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--M", type=int, default=50000)
    p.add_argument("--eps", type=_float_list, default=[0.02 * k for k in range(1, 16)],
                   help="comma separated grid")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--strict", action="store_true", help="exit 1 if any frequency exceeds bound + 3 sigma")
    _add_output(p)
    p.set_defaults(func=cmd_tailcheck)

    p = sub.add_parser("ambiguity", help="ambiguity sets")
    amb = p.add_subparsers(dest="action", metavar="ACTION", required=True)
    b = amb.add_parser("build", help="build a Bregman ball around the empirical distribution")
    _add_generator_options(b)
    b.add_argument("--mode", choices=("asymptotic", "concentration"), required=True)
    b.add_argument("--counts", required=True, help="category counts file")
    b.add_argument("--alpha", type=float, default=0.95)
    b.add_argument("--K", type=int, default=10000)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--delta-conf", type=float, default=0.05)
    b.add_argument("--form", choices=tuple(FORM_ALIASES), default="mcdiarmid")
    b.add_argument("--output", "-o")
    b.set_defaults(func=cmd_ambiguity)

    p = sub.add_parser("drso", help="pick the action with the smallest worst-case loss")
    p.add_argument("--losses", required=True, help="matrix file, one row per action")
    p.add_argument("--set", required=True, help="JSON written by 'breg ambiguity build'")
    _add_output(p)
    p.set_defaults(func=cmd_drso)

    p = sub.add_parser("learn", help="fit a location-scale pushforward by gradient descent")
    _add_generator_options(p)
    p.add_argument("--target", required=True, help="distribution file")
    p.add_argument("--base", required=True, help="base sample matrix file")
    p.add_argument("--theta0", type=float, nargs="+", required=True, help="loc..., log_scale...")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("validate", help="run the acceptance suite and write a JSON report")
    p.add_argument("--quick", action="store_true", help="reduced suite (under two minutes)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--report", help="report path (default stdout)")
    p.add_argument("--timings", action="store_true", help="include runtimes (breaks byte stability)")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.add_argument("--silent", action="store_true", help="no progress lines on stderr")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        text = args.func(args)
        if text:
            _write(args, text)
    except CheckFailed as exc:
        print(f"breg: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConvergenceError, ObjectiveError) as exc:
        print(f"breg: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, OSError, ValueError, DomainError) as exc:
        print(f"breg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
