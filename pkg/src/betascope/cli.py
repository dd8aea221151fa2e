"""Command line driver.

Commands: ``generate`` emits reference measures; ``analyze``, ``lattice``,
``corona``, ``verify`` and ``capacity`` run the corresponding pipelines and
write JSON reports.  Exit codes: 0 success, 1 invalid input, 2 baseline
mismatch (argparse keeps its own code 2 for malformed command lines).

Reports are canonical JSON with no wall-clock content by default, so a
repeated run with the same flags produces the same bytes regardless of
thread count; pass --stamp to embed the current time.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from ._util import dump_json, parallel_map
from .beta import beta_profile_rows, condition_check
from .corona import (
    build_corona,
    corona_to_json,
    packing_audit,
    tree_density_audit,
)
from .generators import cantor4, lipschitz_graph, segment, square_area
from .lattice import (
    boundary_audit,
    build_lattice,
    check_lattice,
    lattice_to_json,
)
from .measure import (
    Ball,
    WeightedPointMeasure,
    load_csv,
    load_json,
    save_csv,
    save_json,
)
from .operators import BumpFamily, make_kernel
from .verify import (
    capacity_lower_bound,
    compare_baseline,
    cotlar_check,
    main_lemma_check,
    make_report,
    pointwise_domination_check,
    t1_ball_check,
)

AUDIT_LAMBDAS = (0.2, 0.1, 0.05, 0.02)


class InputError(Exception):
    pass


def _load_measure(path: str, r_min=None) -> WeightedPointMeasure:
    try:
        if path.endswith(".json"):
            measure = load_json(path)
        else:
            measure = load_csv(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if r_min is not None:
        measure = WeightedPointMeasure(
            measure.points, measure.weights, measure.target_dim, r_min=r_min
        )
    return measure


def _describe(path: str, measure: WeightedPointMeasure) -> dict:
    return {
        "path": path,
        "size": measure.size,
        "dim": measure.dim,
        "target_dim": measure.target_dim,
        "r_min": measure.r_min,
        "total_mass": measure.total_mass,
        "diameter": measure.diameter,
    }


def _write_report(args, input_desc, checks, config, baseline_failures=None):
    stamp = None
    if getattr(args, "stamp", False):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    report = make_report(input_desc, checks, config, baseline_failures, stamp)
    dump_json(report, args.out)
    return report


def _make_kernel(args, measure):
    if args.kernel == "riesz":
        return make_kernel("riesz", n=measure.target_dim, d=measure.dim)
    if measure.dim != 2 or measure.target_dim != 1:
        raise InputError(
            "cauchy kernel needs a planar measure with target dimension 1"
        )
    return make_kernel("cauchy")


def _cmd_generate(args) -> int:
    if args.kind == "segment":
        measure = segment(args.count)
    elif args.kind == "lipschitz-graph":
        measure = lipschitz_graph(args.count, args.slope_amp, args.seed)
    elif args.kind == "cantor4":
        measure = cantor4(args.generation)
    else:
        measure = square_area(args.side)
    if args.out.endswith(".json"):
        save_json(measure, args.out)
    else:
        save_csv(measure, args.out)
    return 0


def _cmd_analyze(args) -> int:
    measure = _load_measure(args.input, args.r_min)
    c0 = measure.growth_constant(exact=True)
    diam = max(measure.diameter, measure.r_min)
    centroid = measure.weights @ measure.points / measure.total_mass
    radius = max(
        float(np.max(np.linalg.norm(measure.points - centroid, axis=1))),
        measure.r_min,
    )
    cond = condition_check(measure, Ball(centroid, radius),
                           scales_per_octave=args.scales_per_octave)
    checks = [
        {
            "name": "growth_constant",
            "lhs": c0,
            "rhs": 1.0,
            "ratio": c0,
            "samples": measure.size,
            "params": {"exact": True, "floor": measure.r_min},
        },
        {
            "name": "flatness_condition",
            "lhs": cond["total"],
            "rhs": cond["mass"],
            "ratio": cond["ratio"],
            "samples": cond["atoms"],
            "params": {
                "ball_radius": cond["ball_radius"],
                "degenerate": cond["degenerate"],
                "scales_per_octave": args.scales_per_octave,
            },
        },
    ]
    if args.profile_csv:
        stride = max(1, measure.size // args.centers)
        centers = list(range(0, measure.size, stride))[: args.centers]
        rows_per_center = parallel_map(
            lambda i: beta_profile_rows(
                measure, measure.points[i], measure.r_min, diam,
                scales_per_octave=args.scales_per_octave,
            ),
            centers,
            args.threads,
        )
        with open(args.profile_csv, "w", encoding="ascii") as fh:
            fh.write("center_index,r,beta,theta,integrand\n")
            for center, rows in zip(centers, rows_per_center):
                for r, beta, theta in rows:
                    fh.write(
                        f"{center},{r!r},{beta!r},{theta!r},"
                        f"{beta * beta * theta!r}\n"
                    )
    config = {
        "command": "analyze",
        "scales_per_octave": args.scales_per_octave,
        "centers": args.centers,
    }
    _write_report(args, _describe(args.input, measure), checks, config)
    return 0


def _cmd_lattice(args) -> int:
    measure = _load_measure(args.input, args.r_min)
    lattice = build_lattice(measure, a0=args.a0, c0=args.c0,
                            max_depth=args.max_depth, strict=args.strict)
    audit = check_lattice(lattice)
    checks = [
        {
            "name": "lattice_invariants",
            "lhs": float(audit["nonconforming"]),
            "rhs": float(audit["cells"]),
            "ratio": audit["nonconforming_fraction"],
            "samples": audit["cells"],
            "params": audit,
        }
    ]
    if args.boundary_audit:
        worst = boundary_audit(lattice, AUDIT_LAMBDAS)
        checks.append({
            "name": "boundary_layers",
            "lhs": max(worst.values()),
            "rhs": 1.0,
            "ratio": max(worst.values()),
            "samples": audit["cells"] * len(AUDIT_LAMBDAS),
            "params": {str(k): v for k, v in worst.items()},
        })
    if args.dump:
        lattice_to_json(lattice, args.dump)
    config = {
        "command": "lattice",
        "a0": args.a0,
        "c0": args.c0,
        "max_depth": args.max_depth,
        "strict": args.strict,
    }
    _write_report(args, _describe(args.input, measure), checks, config)
    return 0


def _cmd_corona(args) -> int:
    measure = _load_measure(args.input, args.r_min)
    lattice = build_lattice(measure, a0=args.a0, c0=args.c0,
                            max_depth=args.max_depth)
    corona = build_corona(lattice, a_stop=args.a_stop, tau=args.tau)
    packing = packing_audit(corona, scales_per_octave=args.scales_per_octave)
    density = tree_density_audit(corona)
    checks = [
        {
            "name": "packing",
            "lhs": packing["lhs"],
            "rhs": packing["rhs"],
            "ratio": packing["ratio"],
            "samples": packing["tops"],
            "params": {
                "jones_energy": packing["jones_energy"],
                "scales_per_octave": args.scales_per_octave,
            },
        },
        {
            "name": "tree_density",
            "lhs": density["max_ratio"],
            "rhs": args.a_stop,
            "ratio": density["max_ratio"] / args.a_stop,
            "samples": len(corona.tops),
            "params": {"a_stop": args.a_stop, "tau": args.tau},
        },
    ]
    if args.dump:
        corona_to_json(corona, args.dump)
    config = {
        "command": "corona",
        "a0": args.a0,
        "c0": args.c0,
        "a_stop": args.a_stop,
        "tau": args.tau,
        "max_depth": args.max_depth,
        "scales_per_octave": args.scales_per_octave,
    }
    _write_report(args, _describe(args.input, measure), checks, config)
    return 0


def _cmd_verify(args) -> int:
    measure = _load_measure(args.input, args.r_min)
    kernel = _make_kernel(args, measure)
    lattice = build_lattice(measure, a0=args.a0, c0=args.c0,
                            max_depth=args.max_depth)
    corona = build_corona(lattice, a_stop=args.a_stop, tau=args.tau)
    bump = BumpFamily(args.a0)
    root = corona.root_id

    rng = np.random.default_rng(args.seed)
    n_balls = min(args.samples, measure.size)
    centers = np.sort(rng.choice(measure.size, size=n_balls, replace=False))
    lo = min(4.0 * measure.r_min, measure.diameter) or measure.r_min
    hi = max(measure.diameter, lo * (1 + 1e-9))
    radii = np.exp(rng.uniform(np.log(lo), np.log(hi), n_balls))
    balls = [Ball(measure.points[c], max(float(r), measure.r_min))
             for c, r in zip(centers, radii)]

    checks = [
        main_lemma_check(measure, kernel,
                         scales_per_octave=args.scales_per_octave,
                         threads=args.threads),
        t1_ball_check(measure, kernel, balls,
                      scales_per_octave=args.scales_per_octave,
                      threads=args.threads),
        cotlar_check(measure, kernel, corona, root, s=1.0,
                     max_samples=args.samples, threads=args.threads),
        pointwise_domination_check(measure, kernel, corona, bump, root,
                                   max_samples=args.samples,
                                   threads=args.threads),
    ]
    packing = packing_audit(corona, scales_per_octave=args.scales_per_octave)
    checks.append({
        "name": "packing",
        "lhs": packing["lhs"],
        "rhs": packing["rhs"],
        "ratio": packing["ratio"],
        "samples": packing["tops"],
        "params": {"scales_per_octave": args.scales_per_octave},
    })

    config = {
        "command": "verify",
        "kernel": args.kernel,
        "a0": args.a0,
        "c0": args.c0,
        "a_stop": args.a_stop,
        "tau": args.tau,
        "max_depth": args.max_depth,
        "scales_per_octave": args.scales_per_octave,
        "seed": args.seed,
        "samples": args.samples,
    }
    failures = None
    if args.baseline:
        try:
            with open(args.baseline, encoding="ascii") as fh:
                baseline = json.load(fh)
        except (OSError, ValueError) as exc:
            raise InputError(f"{args.baseline}: {exc}") from exc
        if not isinstance(baseline, dict) or \
                not isinstance(baseline.get("checks"), dict):
            raise InputError(
                f"{args.baseline}: not a baseline file "
                '(expected {"checks": {name: {"value": ..., ...}}})')
        report = make_report(_describe(args.input, measure), checks, config)
        try:
            failures = compare_baseline(report, baseline)
        except (KeyError, TypeError, AttributeError) as exc:
            raise InputError(
                f"{args.baseline}: not a baseline file "
                '(expected {"checks": {name: {"value": ..., ...}}})'
            ) from exc
    _write_report(args, _describe(args.input, measure), checks, config,
                  failures)
    if failures:
        for line in failures:
            print(f"baseline mismatch: {line}", file=sys.stderr)
        return 2
    return 0


def _cmd_capacity(args) -> int:
    measures = [_load_measure(path, args.r_min) for path in args.input]
    record = capacity_lower_bound(measures,
                                  scales_per_octave=args.scales_per_octave,
                                  threads=args.threads)
    config = {
        "command": "capacity",
        "scales_per_octave": args.scales_per_octave,
    }
    desc = {
        "inputs": [
            _describe(path, mu) for path, mu in zip(args.input, measures)
        ]
    }
    _write_report(args, desc, [record], config)
    return 0


def _add_common(parser, out_required=True):
    parser.add_argument("--out", required=out_required,
                        help="report JSON path")
    parser.add_argument("--r-min", type=float, default=None,
                        help="override the measure resolution")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--scales-per-octave", type=int, default=4)
    parser.add_argument("--stamp", action="store_true",
                        help="embed the wall-clock time (breaks determinism)")


def _add_lattice_params(parser):
    parser.add_argument("--a0", type=float, default=20.0)
    parser.add_argument("--c0", type=float, default=4.0)
    parser.add_argument("--max-depth", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betascope",
        description="multiscale flatness, cell lattices and singular "
                    "integral checks on weighted point measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a reference measure")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    seg = gen_sub.add_parser("segment")
    seg.add_argument("--count", type=int, required=True)
    graph = gen_sub.add_parser("lipschitz-graph")
    graph.add_argument("--count", type=int, required=True)
    graph.add_argument("--slope-amp", type=float, default=0.8)
    graph.add_argument("--seed", type=int, default=0)
    cantor = gen_sub.add_parser("cantor4")
    cantor.add_argument("--generation", type=int, required=True)
    square = gen_sub.add_parser("square-area")
    square.add_argument("--side", type=int, required=True)
    for sp in (seg, graph, cantor, square):
        sp.add_argument("--out", required=True, help="measure file (.csv or .json)")

    analyze = sub.add_parser("analyze", help="densities and flatness profiles")
    analyze.add_argument("--input", required=True)
    analyze.add_argument("--centers", type=int, default=12)
    analyze.add_argument("--profile-csv", default=None,
                         help="also export per-center flatness profiles")
    _add_common(analyze)

    lat = sub.add_parser("lattice", help="build the cell hierarchy and audit it")
    lat.add_argument("--input", required=True)
    lat.add_argument("--strict", action="store_true")
    lat.add_argument("--boundary-audit", action="store_true")
    lat.add_argument("--dump", default=None, help="cell tree JSON path")
    _add_lattice_params(lat)
    _add_common(lat)

    cor = sub.add_parser("corona", help="stopping-time decomposition")
    cor.add_argument("--input", required=True)
    cor.add_argument("--a-stop", type=float, default=30.0)
    cor.add_argument("--tau", type=float, default=0.12)
    cor.add_argument("--dump", default=None, help="decomposition JSON path")
    _add_lattice_params(cor)
    _add_common(cor)

    ver = sub.add_parser("verify", help="run the inequality checks")
    ver.add_argument("--input", required=True)
    ver.add_argument("--kernel", choices=("riesz", "cauchy"), default="riesz")
    ver.add_argument("--a-stop", type=float, default=30.0)
    ver.add_argument("--tau", type=float, default=0.12)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--samples", type=int, default=32)
    ver.add_argument("--baseline", default=None,
                     help="compare against stored regression values")
    _add_lattice_params(ver)
    _add_common(ver)

    cap = sub.add_parser("capacity", help="capacity lower bound of candidates")
    cap.add_argument("--input", required=True, nargs="+",
                     help="one or more candidate measure files")
    _add_common(cap)

    return parser


_DISPATCH = {
    "generate": _cmd_generate,
    "analyze": _cmd_analyze,
    "lattice": _cmd_lattice,
    "corona": _cmd_corona,
    "verify": _cmd_verify,
    "capacity": _cmd_capacity,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
