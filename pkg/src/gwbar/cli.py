"""Command-line surface for simulation, estimation, testing and MC checks.

Exit codes:
    0  success (for ``test``: no rejection)
    1  usage error (bad flags)
    2  invalid input file or parameters
    3  ``test`` rejected the no-aging hypothesis
    4  ``test`` could not decide (extinct tree or degenerate estimates)
    5  ``verify`` had at least one failing check

Data goes to files or standard output; diagnostics go to standard error.
All randomness flows from ``--seed``; there is no hidden entropy source.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .gw import w_laplace
from .harness import ExperimentSpec, run_experiment
from .inference import aging_test, estimate_kappa, estimate_report_dict, estimate_theta
from .model import InitialLaw, SimulationSpec, load_params
from .simulate import simulate
from .tree import read_jsonl, write_jsonl

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_REJECT = 3
EXIT_NO_DECISION = 4
EXIT_VERIFY_FAIL = 5


class _Parser(argparse.ArgumentParser):
    """argparse variant using exit code 1 for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_initial(text: str) -> InitialLaw:
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return InitialLaw.constant(float(rest))
    if kind == "normal":
        mean, _, sd = rest.partition(",")
        return InitialLaw.normal(float(mean), float(sd))
    raise ValueError(f"initial law must be constant:<x> or normal:<mean>,<sd>, got {text!r}")


def _write_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def build_parser() -> _Parser:
    parser = _Parser(prog="gwbar", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"gwbar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a lineage tree to JSON lines")
    p.add_argument("--params", required=True, help="model parameter JSON file")
    p.add_argument("--gens", required=True, type=int, help="deepest generation to simulate")
    p.add_argument("--seed", required=True, type=int, help="master seed (required; no hidden entropy)")
    p.add_argument("--replicate", type=int, default=0, help="replicate stream index (default 0)")
    p.add_argument("--initial", default="constant:1.0", help="root law, constant:<x> or normal:<mean>,<sd>")
    p.add_argument("--out", required=True, help="output lineage JSONL path")

    p = sub.add_parser("estimate", help="estimate model parameters from a lineage file")
    p.add_argument("--in", dest="infile", required=True, help="lineage JSONL path")
    p.add_argument("--n", type=int, default=None, help="mother generation cap (default: deepest generation - 1)")
    p.add_argument("--out", default="-", help="report JSON path, - for stdout")

    p = sub.add_parser("test", help="run the aging test on a lineage file")
    p.add_argument("--in", dest="infile", required=True, help="lineage JSONL path")
    p.add_argument("--n", type=int, default=None, help="mother generation cap (default: deepest generation - 1)")
    p.add_argument("--level", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--out", default="-", help="report JSON path, - for stdout")

    p = sub.add_parser("verify", help="run a Monte-Carlo verification experiment")
    p.add_argument("--kind", required=True, help="experiment kind (lln, clt, gen_independence, estimator_normality, test_level, misspecified, w_martingale, extinction)")
    p.add_argument("--params", required=True, help="model parameter JSON file")
    p.add_argument("--n", required=True, type=int, help="generation for the checks")
    p.add_argument("--replicates", required=True, type=int, help="number of replicates (>= 100)")
    p.add_argument("--seed", required=True, type=int, help="master seed (required; no hidden entropy)")
    p.add_argument("--level", type=float, default=0.05, help="test level where applicable")
    p.add_argument("--f", dest="fspecs", action="append", default=[], help="polynomial spec, repeatable")
    p.add_argument("--power-gaps", default=None, help="comma list of intercept gaps for the power grid")
    p.add_argument("--initial", default=None, help="root law override")
    p.add_argument(
        "--tolerance",
        dest="tolerances",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a tolerance entry, repeatable",
    )
    p.add_argument("--threads", type=int, default=1, help="worker threads (results are thread-count independent)")
    p.add_argument("--out-dir", default=None, help="directory for runs/<timestamp>-<kind> persistence")

    p = sub.add_parser("w-laplace", help="print the Laplace transform of the population limit W")
    p.add_argument("--params", required=True, help="model parameter JSON file")
    p.add_argument("--lambdas", default="0,0.25,0.5,1,2,4,8", help="comma list of lambda values")
    return parser


def _cmd_simulate(args) -> int:
    theta, kappa = load_params(args.params)
    initial = _parse_initial(args.initial)
    spec = SimulationSpec(max_generation=args.gens, seed=args.seed, initial=initial)
    tree = simulate(spec, theta, kappa, replicate=args.replicate)
    write_jsonl(tree, args.out)
    print(
        f"simulated {len(tree)} cells down to generation {tree.max_generation} -> {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _default_n(tree, n):
    if n is not None:
        return n
    if tree.max_generation < 1:
        raise ValueError("tree is too shallow: need daughters at generation >= 1")
    return tree.max_generation - 1


def _cmd_estimate(args) -> int:
    tree = read_jsonl(args.infile)
    n = _default_n(tree, args.n)
    theta_hat = estimate_theta(tree, n)
    kappa_hat = estimate_kappa(tree, n, theta_hat)
    _write_json(estimate_report_dict(tree, n, theta_hat, kappa_hat), args.out)
    return EXIT_OK


def _cmd_test(args) -> int:
    tree = read_jsonl(args.infile)
    n = _default_n(tree, args.n)
    report = aging_test(tree, n, args.level)
    _write_json(report.to_dict(), args.out)
    if report.reject is None:
        return EXIT_NO_DECISION
    return EXIT_REJECT if report.reject else EXIT_OK


def _cmd_verify(args) -> int:
    theta, kappa = load_params(args.params)
    gaps = None
    if args.power_gaps:
        gaps = tuple(float(g) for g in args.power_gaps.split(","))
    initial = _parse_initial(args.initial) if args.initial else None
    overrides = {}
    for item in args.tolerances:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--tolerance expects KEY=VALUE, got {item!r}")
        overrides[key] = float(value)
    spec = ExperimentSpec(
        kind=args.kind,
        theta=theta,
        kappa=kappa,
        n=args.n,
        replicates=args.replicates,
        seed=args.seed,
        fspecs=tuple(args.fspecs),
        level=args.level,
        tolerances=overrides,
        initial=initial,
        power_gaps=gaps,
    )
    report = run_experiment(spec, threads=args.threads, out_dir=args.out_dir)
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    print(
        f"{report.kind}: {report.survivors}/{report.replicates} survivors,"
        f" {report.elapsed_seconds:.2f}s, backend={report.backend}",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def _cmd_w_laplace(args) -> int:
    theta, _ = load_params(args.params)
    for part in args.lambdas.split(","):
        lam = float(part)
        print(f"{lam:.6g}\t{w_laplace(lam, theta):.12g}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "test": _cmd_test,
    "verify": _cmd_verify,
    "w-laplace": _cmd_w_laplace,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"gwbar {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
