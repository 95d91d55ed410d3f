"""Command-line entry point: classify, limit, simulate, decompose, verify.

Structured results are JSON, curves are CSV; both are written only after a
command finishes, so malformed input never leaves partial output. Exit
codes: 0 success, 1 verification failure, 2 spec/parse error, 3 no
convergence within the depth budget, 4 indeterminate torus classification,
5 other domain errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConvLimitError,
    Indeterminate,
    InvalidSpec,
    NoConvergenceAtDepth,
)
from .limits import (
    DEFAULT_EPS_SHAPE,
    DEFAULT_MAX_DEPTH,
    LimitResult,
    compute_limit,
    noise_from_spec,
    strong_subgroup,
    verify_conjugacy_uniqueness,
)
from .measures import convolve, haar, measure_from_spec, tv_distance
from .solutions import (
    Ensemble,
    decompose_ensemble,
    extremal_ensemble,
    general_ensemble,
    uniform_ensemble,
)
from .stats import verify_theorems
from .torus import compute_p_mu, torus_noise_from_spec

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_INDETERMINATE = 4
EXIT_DOMAIN = 5

SCHEMA_VERSION = 1


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_json(path: Path, payload: dict) -> None:
    body = {"schema_version": SCHEMA_VERSION, "generated_at": _timestamp(), **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _load_input(args) -> dict:
    try:
        return json.loads(Path(args.input).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidSpec(f"input file not found: {args.input}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"input is not valid JSON: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _limit_from_args(args, noise) -> LimitResult:
    return compute_limit(
        noise,
        eps_shape=args.eps,
        max_depth=args.max_depth,
    )


def _subgroup_payload(result: LimitResult, members) -> dict:
    return {
        "members": [int(g) for g in members],
        "labels": [result.group.label(g) for g in members],
    }


def cmd_classify(args) -> int:
    spec = _load_input(args)
    out = _out_dir(args)
    if args.torus:
        noise = torus_noise_from_spec(spec)
        cls = compute_p_mu(noise, p_max=args.p_max)
        payload = {"command": "classify", "engine": "torus", **cls.to_json_dict()}
        table = [
            [p, b.upper, b.lower, b.decision]
            for p, b in sorted(cls.bounds.items())
        ]
        curves = [
            [p, i + 1, v]
            for p, b in sorted(cls.bounds.items())
            for i, v in enumerate(b.curve)
        ]
        _write_json(out / "classification.json", payload)
        _write_csv(out / "pi_table.csv", ["p", "upper", "lower", "decision"], table)
        _write_csv(out / "pi_curves.csv", ["p", "depth", "partial_product"], curves)
        print(f"case {cls.case}  p_mu = {cls.p_mu}")
        return EXIT_OK
    noise = noise_from_spec(spec)
    result = _limit_from_args(args, noise)
    strong = strong_subgroup(noise.group, result.subgroup)
    payload = {
        "command": "classify",
        "engine": "finite",
        "case": result.case,
        "group_order": noise.group.order,
        "subgroup": _subgroup_payload(result, result.subgroup.members),
        "strong_subgroup": _subgroup_payload(result, strong.members),
        "depth_used": result.depth_used,
        "residuals": dict(result.residuals),
    }
    _write_json(out / "classification.json", payload)
    print(f"case {result.case}  H = {list(result.subgroup.members)}")
    return EXIT_OK


def cmd_limit(args) -> int:
    spec = _load_input(args)
    out = _out_dir(args)
    noise = noise_from_spec(spec)
    result = _limit_from_args(args, noise)
    check = verify_conjugacy_uniqueness(noise, eps_shape=args.eps, max_depth=args.max_depth)
    payload = {
        "command": "limit",
        **result.to_json_dict(),
        "conjugacy_uniqueness": {
            "ok": check.ok,
            "witness": check.witness,
            "shape_gap": check.shape_gap,
        },
    }
    _write_json(out / "limit.json", payload)
    _write_csv(
        out / "shape_curve.csv",
        ["depth", "shape_distance"],
        [[-l, d] for l, d in result.shape_history],
    )
    rows = []
    for k in range(result.k_min + 1, 1):
        resid = tv_distance(
            result.lambdas[k], convolve(noise.measure_at(k), result.lambdas[k - 1])
        )
        rows.append([k, resid])
    _write_csv(out / "conv_residuals.csv", ["k", "conv_eq_residual"], rows)
    print(f"case {result.case}  depth_used = {result.depth_used}")
    return EXIT_OK


def _build_ensemble_for(args, noise, result, kind):
    depth = args.depth if args.depth is not None else 2 * result.depth_used
    if kind == "uniform":
        return uniform_ensemble(noise, depth, args.paths, args.seed)
    ens = extremal_ensemble(noise, result, depth, args.paths, args.seed)
    if kind == "extremal":
        return ens
    v_law = haar(noise.group)
    if args.v_law is not None:
        v_law = measure_from_spec(noise.group, json.loads(args.v_law))
    return general_ensemble(ens, v_law, args.seed + 1)


def cmd_simulate(args) -> int:
    spec = _load_input(args)
    out = _out_dir(args)
    noise = noise_from_spec(spec)
    result = _limit_from_args(args, noise)
    ens = _build_ensemble_for(args, noise, result, args.kind)
    payload = {
        "command": "simulate",
        "kind": ens.kind,
        "seed": ens.seed,
        "n_paths": ens.n_paths,
        "depth": ens.depth,
        "k_min": ens.k_min,
        "case": result.case,
        "paths": ens.to_records(),
    }
    _write_json(out / "ensemble.json", payload)
    print(f"simulated {ens.n_paths} {ens.kind} paths at depth {ens.depth}")
    return EXIT_OK


def _ensemble_from_file(path: str, group) -> Ensemble:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidSpec(f"ensemble file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"ensemble file is not valid JSON: {exc}") from None
    records = payload.get("paths")
    if not records:
        raise InvalidSpec("ensemble file holds no paths")
    k_min = int(payload["k_min"])
    depth = int(payload["depth"])
    xi = np.array([r["xi"] for r in records], dtype=np.int64)
    eta = np.array([r["eta"] for r in records], dtype=np.int64)
    if xi.shape[1] != depth + 1 or eta.shape[1] != -k_min + 1:
        raise InvalidSpec("ensemble file arrays do not match its window fields")
    return Ensemble(group=group, kind=payload.get("kind", "mixture"),
                    seed=int(payload.get("seed", 0)), depth=depth, k_min=k_min,
                    xi=xi, eta=eta)


def cmd_decompose(args) -> int:
    spec = _load_input(args)
    out = _out_dir(args)
    noise = noise_from_spec(spec)
    result = _limit_from_args(args, noise)
    if args.ensemble is not None:
        ens = _ensemble_from_file(args.ensemble, noise.group)
    else:
        kind = args.kind if args.kind != "uniform" else "mixture"
        ens = _build_ensemble_for(args, noise, result, kind)
    dec, audit = decompose_ensemble(ens, result, noise=noise)
    payload = {
        "command": "decompose",
        "kind": ens.kind,
        "seed": ens.seed,
        "n_paths": ens.n_paths,
        "audit": audit,
        "paths": dec.to_records(),
    }
    _write_json(out / "decomposition.json", payload)
    print(
        f"decomposed {audit['n_paths']} paths; exact reconstruction on "
        f"{audit['exact_reconstruction']}"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = _load_input(args)
    out = _out_dir(args)
    noise = noise_from_spec(spec)
    result = _limit_from_args(args, noise)
    depth = args.depth if args.depth is not None else 2 * result.depth_used
    ens = extremal_ensemble(noise, result, depth, args.paths, args.seed)
    report = verify_theorems(noise, result, ens, significance=args.significance)
    payload = {"command": "verify", "case": result.case, **report.to_json_dict()}
    _write_json(out / "report.json", payload)
    rows = [
        [c.k, c.tv_to_lambda, c.p_uniformity, c.p_independence_v]
        for c in report.per_k
    ]
    _write_csv(
        out / "report_curves.csv",
        ["k", "tv_to_lambda", "chisq_p_uniformity", "chisq_p_independence"],
        rows,
    )
    if report.passed:
        print("verification passed")
        return EXIT_OK
    print("verification FAILED:")
    for f in report.failures:
        print(f"  - {f}")
    return EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conv-limit",
        description="Limit laws, trichotomy classification and path decompositions "
        "for group-valued stochastic recursions indexed by negative integers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seeded: bool):
        p.add_argument("--input", required=True, help="path to the noise spec JSON")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--eps", type=float, default=DEFAULT_EPS_SHAPE,
                       help="shape stabilization tolerance")
        p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH,
                       help="certification depth budget")
        if seeded:
            p.add_argument("--seed", type=int, required=True,
                           help="RNG seed (required for reproducibility)")
            p.add_argument("--depth", type=int, default=None,
                           help="path window depth (default 2x certified depth)")
            p.add_argument("--paths", type=int, default=10_000,
                           help="number of sample paths")

    p = sub.add_parser("classify", help="trichotomy case and subgroup / lattice generator")
    common(p, seeded=False)
    p.add_argument("--torus", action="store_true", help="treat input as a torus noise spec")
    p.add_argument("--p-max", type=int, default=64, help="largest frequency examined")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("limit", help="limit laws, centerings and residual curves")
    common(p, seeded=False)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("simulate", help="sample an ensemble of solution paths")
    common(p, seeded=True)
    p.add_argument("--kind", choices=["uniform", "extremal", "mixture"],
                   default="extremal")
    p.add_argument("--v-law", default=None,
                   help="measure spec JSON for the mixture V law (default Haar)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decompose", help="factor paths into (phi, U, V) with an audit")
    common(p, seeded=True)
    p.add_argument("--kind", choices=["extremal", "mixture", "uniform"],
                   default="mixture")
    p.add_argument("--v-law", default=None,
                   help="measure spec JSON for the mixture V law (default Haar)")
    p.add_argument("--ensemble", default=None,
                   help="decompose a previously simulated ensemble.json instead "
                        "of running fresh paths")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("verify", help="run the statistical verification battery")
    common(p, seeded=True)
    p.add_argument("--significance", type=float, default=0.01)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NoConvergenceAtDepth as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except Indeterminate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE
    except ConvLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
