"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (malformed files,
dimension mismatches, invalid mechanism parameters).
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SpherePrivError
from .evaluation import averaging_attack_series, evaluate_mechanism, ldp_bound_check, privacy_utility_sweep
from .formats import atomic_write, read_database, read_embeddings, write_database, write_embeddings
from .mechanisms import MechanismKind, MechanismSpec, privatize_batch
from .remap import PcaRemapper, ReferenceSet, fit, privatize_remapped
from .streams import SEED_MASK, substream
from .synthdata import generate, split_query_gallery

log = logging.getLogger("spherepriv")

SEED_ENV = "SPHEREPRIV_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

KIND_ALIASES = {
    "ldp": MechanismKind.AVATAR_LDP,
    "rotation": MechanismKind.AVATAR_ROTATION,
    "compose": MechanismKind.COMPOSE_LDP_ROTATION,
    "uniform": MechanismKind.UNIFORM_BASELINE,
    "laplace": MechanismKind.LAPLACE_BASELINE,
    "identity": MechanismKind.IDENTITY,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(text):
    v = int(text, 0)
    if not 0 <= v <= SEED_MASK:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _add_mechanism(p):
    p.add_argument("--kind", choices=sorted(KIND_ALIASES), default="ldp")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--theta-degrees", type=float)
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None)


def build_parser():
    parser = _Parser(prog="spherepriv", description="Privatize and evaluate identity embeddings on the hypersphere.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=_seed, default=None, help=f"64-bit seed (default: ${SEED_ENV} or 0)")
        return p

    p = command("gen", "write a synthetic identity database")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--within-kappa", type=float, required=True)
    p.add_argument("--attributes", default="attr0,attr1,attr2")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "bin"])

    p = command("privatize", "apply a mechanism to every embedding in a file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "bin"])
    p.add_argument("--remap", help="fitted remapper document; privatize in its projected space")
    p.add_argument("--workers", type=int, default=1)
    _add_mechanism(p)

    p = command("fit-remap", "fit a PCA remapper on a reference embedding file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-dim", type=int, default=16)
    p.add_argument("--j", type=int, default=8)
    p.add_argument("--lambda", dest="lam", type=float, default=32.0)

    for name, help_text in (("eval", "evaluate one mechanism"), ("sweep", "evaluate a grid of mechanisms")):
        p = command(name, help_text)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--k", type=_int_list, default=[1, 50])
        p.add_argument("--queries-per-identity", type=int, default=1)
        p.add_argument("--draws", type=int, default=1, help="privatized releases per query")
        if name == "eval":
            _add_mechanism(p)
        else:
            p.add_argument("--epsilons", type=_float_list, default=[200.0, 100.0, 50.0, 10.0, 1.0])
            p.add_argument("--thetas", type=_float_list, default=[30.0, 60.0, 90.0, 120.0, 150.0])
            p.add_argument("--laplace-epsilons", type=_float_list, default=[])
            p.add_argument("--no-baselines", action="store_true", help="omit identity and uniform rows")

    p = command("attack", "averaging attack over a grid of observation counts")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--m-grid", type=_int_list, default=[1, 10, 100, 1000])
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--gallery", help="database whose records serve as attack targets")
    p.add_argument("--out", required=True)
    _add_mechanism(p)

    p = command("check-dp", "empirical check of the VMF density-ratio bound")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="re-run the command recorded in a report")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    return parser


def spec_from_args(args):
    kind = KIND_ALIASES[args.kind]
    theta = None if args.theta_degrees is None else math.radians(args.theta_degrees)
    renorm = args.renormalize
    if kind is MechanismKind.LAPLACE_BASELINE and renorm is None:
        renorm = True
    kwargs = {"kind": kind, "epsilon": args.epsilon, "theta": theta, "renormalize_output": renorm}
    if kind not in (MechanismKind.AVATAR_LDP, MechanismKind.COMPOSE_LDP_ROTATION, MechanismKind.LAPLACE_BASELINE):
        if args.epsilon is not None:
            raise UsageError(f"--epsilon does not apply to --kind {args.kind}")
    if kind not in (MechanismKind.AVATAR_ROTATION, MechanismKind.COMPOSE_LDP_ROTATION):
        if args.theta_degrees is not None:
            raise UsageError(f"--theta-degrees does not apply to --kind {args.kind}")
    if kind is not MechanismKind.LAPLACE_BASELINE and args.renormalize is not None:
        raise UsageError("--renormalize applies to --kind laplace only")
    return MechanismSpec(**kwargs)


def sweep_specs(args):
    specs = []
    if not args.no_baselines:
        specs.append(MechanismSpec.identity())
    specs += [MechanismSpec.ldp(e) for e in args.epsilons]
    specs += [MechanismSpec.rotation_degrees(t) for t in args.thetas]
    specs += [MechanismSpec.laplace(e) for e in args.laplace_epsilons]
    if not args.no_baselines:
        specs.append(MechanismSpec.uniform())
    return specs


def format_table(rows, k_values):
    """Plain-text table: method, rank-k columns, EER, then utility columns."""
    attr_names = sorted({a for r in rows for a in r["attribute_accuracy"]})
    header = ["Method"] + [f"Rank {k} (%)" for k in k_values] + ["EER (%)", "Mean disp. (deg)"]
    header += [f"{a} (%)" for a in attr_names]
    lines = []
    for r in rows:
        cells = [r["label"]] + [f"{100 * r['rank_k'][str(k)]:.2f}" for k in k_values]
        cells += [f"{100 * r['eer']:.2f}", f"{math.degrees(r['mean_displacement']):.2f}"]
        cells += [f"{100 * r['attribute_accuracy'][a]:.2f}" if a in r["attribute_accuracy"] else "-" for a in attr_names]
        lines.append(cells)
    widths = [max(len(str(c)) for c in col) for col in zip(header, *lines)]
    fmt = lambda cells: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep] + [fmt(c) for c in lines]) + "\n"


def _document(args, argv, results):
    # output location is not part of the experiment, so replays compare equal
    config = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    return {
        "tool": "spherepriv",
        "version": __version__,
        "command": args.command,
        "argv": argv,
        "config": config,
        "seed": args.seed,
        "results": results,
    }


def _write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=1) + "\n")


def _cmd_gen(args, argv):
    if args.identities < 1 or args.samples < 1 or args.dim < 2 or args.within_kappa < 0:
        raise UsageError("gen needs positive counts, dim >= 2 and within-kappa >= 0")
    names = [a for a in args.attributes.split(",") if a]
    db = generate(args.identities, args.samples, args.dim, args.within_kappa, names, substream(args.seed))
    write_database(args.out, db, args.format, provenance=_document(args, argv, None))
    print(f"wrote {len(db)} records to {args.out}")


def _cmd_privatize(args, argv):
    spec = spec_from_args(args)
    ids, vecs, attrs = read_embeddings(args.input)
    if args.remap:
        remapper = PcaRemapper.from_dict(json.loads(Path(args.remap).read_text()))
        out = np.stack([privatize_remapped(remapper, v, spec, substream(args.seed, i)) for i, v in enumerate(vecs)])
    else:
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise SpherePrivError("input embeddings must be unit norm (use --remap for raw embeddings)")
        out = privatize_batch(spec, vecs / norms[:, None], args.seed, workers=args.workers)
    write_embeddings(args.out, ids, out, attrs, args.format)
    doc = _document(args, argv, {"mechanism": spec.to_dict(), "records": len(ids)})
    _write_json(Path(str(args.out) + ".meta.json"), doc)
    print(f"privatized {len(ids)} records with {spec.label}")


def _cmd_fit_remap(args, argv):
    ids, vecs, _ = read_embeddings(args.input)
    remapper = fit(ReferenceSet(ids, vecs), args.target_dim, args.j, args.lam)
    doc = remapper.to_dict()
    doc["provenance"] = _document(args, argv, None)
    _write_json(args.out, doc)
    print(f"fitted {remapper.source_dim} -> {remapper.target_dim} remapper on {len(ids)} references")


def _eval_rows(args, specs):
    db = read_database(args.input)
    if args.draws < 1:
        raise UsageError("--draws must be >= 1")
    if any(k < 1 for k in args.k):
        raise UsageError("k values must be >= 1")
    if args.command == "sweep":
        reports = privacy_utility_sweep(db, specs, args.k, args.seed, args.queries_per_identity, args.draws)
    else:
        query, gallery = split_query_gallery(db, args.queries_per_identity, substream(args.seed, 0))
        reports = [evaluate_mechanism(query, gallery, specs[0], args.k, args.seed, args.draws, db)]
    return [r.to_dict() for r in reports]


def _cmd_eval(args, argv):
    specs = [spec_from_args(args)] if args.command == "eval" else sweep_specs(args)
    rows = _eval_rows(args, specs)
    _write_json(args.out, _document(args, argv, rows))
    table = format_table(rows, args.k)
    atomic_write(Path(str(args.out) + ".txt"), table)
    print(table, end="")


def _cmd_attack(args, argv):
    spec = spec_from_args(args)
    gallery = read_database(args.gallery) if args.gallery else None
    dim = gallery.dim if gallery is not None else args.dim
    rows = averaging_attack_series(spec, dim, args.m_grid, args.repetitions, args.seed, gallery)
    _write_json(args.out, _document(args, argv, {"mechanism": spec.to_dict(), "series": rows}))
    for r in rows:
        print(f"m={r['observations']:>6}  cosine_to_true={r['cosine_to_true']:.4f}")


def _cmd_check_dp(args, argv):
    if args.epsilon <= 0 or args.dim < 2 or args.trials < 1:
        raise UsageError("check-dp needs epsilon > 0, dim >= 2, trials >= 1")
    res = ldp_bound_check(args.dim, args.epsilon, args.trials, substream(args.seed))
    if args.out:
        _write_json(args.out, _document(args, argv, res))
    print(
        f"max slack vs eps*d2: {res['max_slack_d2']:.3e}  "
        f"vs eps*d_angle: {res['max_slack_angular']:.3e}  violations: {res['violations']}"
    )
    return EXIT_OK if res["violations"] == 0 else EXIT_DATA


def _cmd_replay(args):
    doc = json.loads(Path(args.report).read_text())
    argv = list(doc["argv"])
    if "--out" in argv:
        argv[argv.index("--out") + 1] = args.out
    else:
        argv += ["--out", args.out]
    return main(argv)


COMMANDS = {
    "gen": _cmd_gen,
    "privatize": _cmd_privatize,
    "fit-remap": _cmd_fit_remap,
    "eval": _cmd_eval,
    "sweep": _cmd_eval,
    "attack": _cmd_attack,
    "check-dp": _cmd_check_dp,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(format="%(name)s: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.seed is None:
            args.seed = _seed(os.environ.get(SEED_ENV, "0"))
            argv = argv + ["--seed", str(args.seed)]
        print(f"seed={args.seed}", file=sys.stderr)
        return COMMANDS[args.command](args, argv) or EXIT_OK
    except UsageError as exc:
        print(f"spherepriv: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpherePrivError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"spherepriv: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
