"""Command-line entry point.

Each subcommand reads plain-text inputs, writes ``<prefix>.json`` (a report
with the configuration echoed back) and, where there is tabular data,
``<prefix>.tsv``.  Exit status: 0 when every embedded check passes, 2 for
usage or input errors, 3 for a failed check, 4 when a hypothesis of the
underlying result does not hold.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .core import (
    BoundViolation,
    HypothesisError,
    bmo_norm,
    dual_norm,
    jn_constant,
    jn_profile,
    oscillations,
)
from .maps import (
    PointMap,
    condition_i_fit,
    condition_ii_check,
    gotoh_roundtrip,
    operator_norm_estimate,
    pair_family,
)
from .space import SpaceError, build_space
from .uchiyama import (
    ConstructionError,
    ConstructionParams,
    UchiyamaHypothesisError,
    density_functional,
    level_bound_check,
    uchiyama_construct,
    verify_construction,
)

EXIT_OK, EXIT_USAGE, EXIT_ASSERT, EXIT_HYPOTHESIS = 0, 2, 3, 4


class CheckFailed(Exception):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _emit(args, report: dict, table=None) -> None:
    report = {"config": _config(args), **report}
    io.write_report(f"{args.out_prefix}.json", report)
    if table is not None:
        io.write_table(f"{args.out_prefix}.tsv", *table)


def _space(args):
    return io.read_space(args.space)


def _sets(args, space):
    paths = [p for p in args.sets.split(",") if p]
    return [io.read_set(p, space.n) for p in paths]


def cmd_gen_space(args):
    spec = {"name": args.generator, "normalize": args.normalize}
    if args.generator == "grid2d":
        spec.update(m=args.m, exponent=args.exponent, metric=args.metric)
    elif args.generator == "grid1d":
        spec.update(n=args.n, exponent=args.exponent)
    elif args.generator == "tree":
        spec.update(n=args.n, branching=args.branching, seed=args.tree_seed)
    else:
        spec.update(n=args.n)
    space = build_space(spec)
    io.write_space(args.out, space, explicit=args.explicit)
    c_mu, c_D = space.doubling
    print(f"{space.label}: n={space.n} balls={len(space.balls)} c_mu={io.fmt(c_mu)} c_D={io.fmt(c_D)}")
    return EXIT_OK


def cmd_bmo_norm(args):
    space = _space(args)
    f = io.read_field(args.field, space.n)
    value, ball = bmo_norm(space, f)
    osc = oscillations(space, f)
    rows = [(b.center, b.radius, space.ball_measures[i], osc[i]) for i, b in enumerate(space.balls)]
    _emit(args, {"bmo_norm": value, "witness": ball},
          (["center", "radius", "measure", "oscillation"], rows))
    print(io.fmt(value))
    return EXIT_OK


def cmd_dual_norm(args):
    space = _space(args)
    f = io.read_field(args.field, space.n)
    dual = dual_norm(space, f)
    norm, _ = bmo_norm(space, f)
    tol = args.tol if args.tol is not None else 1e-12
    ok = 0.5 * norm <= dual * (1 + tol) and dual <= norm * (1 + tol)
    _emit(args, {"dual_norm": dual, "bmo_norm": norm, "sandwich": ok})
    print(io.fmt(dual))
    if not ok:
        raise CheckFailed("sandwich inequality fails", {"dual": dual, "norm": norm})
    return EXIT_OK


def cmd_jn_profile(args):
    space = _space(args)
    f = io.read_field(args.field, space.n)
    lambdas = None if args.lambdas is None else [float(x) for x in args.lambdas.split(",")]
    prof = jn_profile(space, f, lambdas)
    A = jn_constant(space, f)
    _emit(args, {"bmo_norm": prof.norm, "jn_constant": A, "positive": A > 0})
    with open(f"{args.out_prefix}.tsv", "w") as fh:
        fh.write(prof.to_tsv(space))
    print(io.fmt(A))
    if not A > 0:
        raise CheckFailed("John-Nirenberg constant is not positive", {"A": A})
    return EXIT_OK


def cmd_density(args):
    space = _space(args)
    sets = _sets(args, space)
    value, lam_max = density_functional(space, sets, args.c_D)
    _emit(args, {"density": value, "lam_max": lam_max})
    print(f"{io.fmt(value)}\t{io.fmt(lam_max)}")
    return EXIT_OK


def cmd_uchiyama(args):
    space = _space(args)
    sets = _sets(args, space)
    params = ConstructionParams.for_space(space, args.lam, len(sets), q=args.q, c_D=args.c_D,
                                          depth=args.depth)
    try:
        fields, state = uchiyama_construct(space, sets, args.lam, params, strict=False,
                                           tol=args.tol if args.tol is not None else 1e-10)
    except UchiyamaHypothesisError as exc:
        _emit(args, {"hypothesis": "fail", "density": exc.density, "lam_max": exc.lam_max})
        raise
    for j, f in enumerate(fields, 1):
        io.write_field(f"{args.out_prefix}.f{j}.txt", f)
    rows = []
    for rec in state.levels:
        for j in range(len(sets)):
            for i in range(space.n):
                rows.append((rec.level, j + 1, i, rec.fields[j, i]))
    families = [{"level": r.level, "radius": r.radius, "families": r.families,
                 "owners": r.owners} for r in state.levels]
    verify = verify_construction(space, fields, sets, args.lam, params.c_D, tol=args.tol if args.tol is not None else 1e-12)
    level = level_bound_check(state, space, sets)
    report = {
        "route": state.route,
        "params": vars(params),
        "q_admissible": params.q_admissible,
        "q_override": args.q is not None,
        "lipschitz_checked": state.lipschitz_checked,
        "violations": state.violation_counts,
        "verify": verify,
        "level_bound": level.status,
        "families": families,
    }
    _emit(args, report, (["level", "j", "point", "value"], rows))
    print(f"route={state.route} q={params.q} depth={params.depth} "
          f"violations={sum(state.violation_counts.values())} "
          f"lam_norm={io.fmt(verify['lam_times_max_norm'])}")
    if not state.ok or not verify["ok"] or level.status == "fail":
        raise CheckFailed("construction checks failed",
                          {k: v for k, v in state.violations.items() if v})
    return EXIT_OK


def cmd_verify(args):
    space = _space(args)
    sets = _sets(args, space)
    fields = np.array([io.read_field(p, space.n) for p in args.fields.split(",")])
    report = verify_construction(space, fields, sets, args.lam, args.c_D, tol=args.tol if args.tol is not None else 1e-12)
    _emit(args, report)
    print(f"ok={report['ok']} lam_norm={io.fmt(report['lam_times_max_norm'])}")
    if not report["ok"]:
        raise CheckFailed("fields do not form the required partition of unity", report)
    return EXIT_OK


def _map(args, space):
    return PointMap(space, io.read_map(args.map, space.n))


def cmd_map_check(args):
    space = _space(args)
    F = _map(args, space)
    pairs = pair_family(space, args.trials, args.seed, args.exhaustive)
    K, alpha, report = condition_i_fit(space, F, pairs)
    verdict = None
    if args.gamma is not None:
        verdict = condition_ii_check(space, F, args.gamma, args.lam_thresh, report=report)
    rows = [(i, k, x, y) for i, (k, x, y) in enumerate(zip(report.kinds, report.x, report.y))]
    out = report.summary()
    out["K_grid"] = dict(zip(map(io.fmt, report.alpha_grid), report.K_grid.tolist()))
    if verdict is not None:
        out["condition_ii_detail"] = verdict.detail
    _emit(args, out, (["trial", "kind", "x", "y"], rows))
    print(f"K={io.fmt(K)} alpha={io.fmt(alpha)}")
    if verdict is not None and verdict.status == "fail":
        raise CheckFailed("condition (ii) fails", verdict.detail.get("witness"))
    return EXIT_OK


def cmd_compose_norm(args):
    space = _space(args)
    F = _map(args, space)
    if args.family != "default":
        raise ValueError(f"unknown field family {args.family!r}")
    norm, witness = operator_norm_estimate(space, F, seed=args.seed)
    _emit(args, {"operator_norm": norm, "witness": witness})
    print(io.fmt(norm))
    return EXIT_OK


def cmd_roundtrip(args):
    space = _space(args)
    F = _map(args, space)
    result = gotoh_roundtrip(space, F, trials=args.trials, seed=args.seed)
    rows = [(i, r["input_density"], r["preimage_density"], r["predicted"], r["holds"])
            for i, r in enumerate(result["runs"])]
    _emit(args, result, (["run", "input_density", "preimage_density", "predicted", "holds"], rows))
    print(f"runs={len(rows)} all_hold={result['all_hold']}")
    if not result["all_hold"]:
        raise CheckFailed("measured preimage density exceeds the predicted bound")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmokit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, func, help, prefix=True):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--tol", type=float, default=None,
                       help="slack for embedded checks (default: per-check)")
        if prefix:
            p.add_argument("--out-prefix", default=name)
        return p

    p = add("gen-space", cmd_gen_space, "write a generated space", prefix=False)
    p.add_argument("--generator", choices=["grid1d", "grid2d", "path", "tree"], required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--exponent", type=float, default=0.0)
    p.add_argument("--metric", default="euclidean")
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--tree-seed", type=int, default=None)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--explicit", action="store_true", help="write the distance matrix")
    p.add_argument("--out", required=True)

    for name, func, help in [
        ("bmo-norm", cmd_bmo_norm, "BMO norm of a field"),
        ("dual-norm", cmd_dual_norm, "median-based norm of a field"),
        ("jn-profile", cmd_jn_profile, "John-Nirenberg tails and constant"),
    ]:
        p = add(name, func, help)
        p.add_argument("--space", required=True)
        p.add_argument("--field", required=True)
        if name == "jn-profile":
            p.add_argument("--lambdas", default=None, help="comma-separated thresholds")

    p = add("density", cmd_density, "density functional of a set family")
    p.add_argument("--space", required=True)
    p.add_argument("--sets", required=True, help="comma-separated set files")
    p.add_argument("--c-D", dest="c_D", type=float, default=None)

    p = add("uchiyama", cmd_uchiyama, "build a partition of unity")
    p.add_argument("--space", required=True)
    p.add_argument("--sets", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--c-D", dest="c_D", type=float, default=None)

    p = add("verify-construction", cmd_verify, "check given fields")
    p.add_argument("--space", required=True)
    p.add_argument("--sets", required=True)
    p.add_argument("--fields", required=True, help="comma-separated field files")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--c-D", dest="c_D", type=float, default=None)

    p = add("map-check", cmd_map_check, "fit the two-set density distortion of a map")
    p.add_argument("--space", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lam-thresh", type=float, default=0.1)

    p = add("compose-norm", cmd_compose_norm, "estimate the composition operator norm")
    p.add_argument("--space", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--family", default="default")

    p = add("gotoh-roundtrip", cmd_roundtrip, "density transfer through the construction")
    p.add_argument("--space", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--trials", type=int, default=40)
    return parser


def _oneline(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UchiyamaHypothesisError, HypothesisError) as exc:
        print(f"hypothesis failure: {_oneline(exc)}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (CheckFailed, ConstructionError, BoundViolation, AssertionError) as exc:
        print(f"check failed: {_oneline(exc)}", file=sys.stderr)
        witness = getattr(exc, "witness", None) or getattr(exc, "violations", None)
        if witness:
            print(f"witness: {io.jsonable(witness)}", file=sys.stderr)
        return EXIT_ASSERT
    except (SpaceError, ValueError, OSError) as exc:
        print(f"error: {_oneline(exc)}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
