import argparse
import contextlib
import io
import logging
from typing import List, Optional, Tuple

from cohist.builtins import build
from cohist.counterfactual import (
    CounterfactualQuery,
    UnreachableBranchError,
    counterfactual_query,
    sr_status,
)
from cohist.dsl import ScenarioSyntaxError, parse_scenario_file
from cohist.histories import (
    BranchTree,
    HistoryFamily,
    InconsistentFamilyError,
    ZeroConditionProbabilityError,
    branch_tree,
    check_consistency,
    history_table,
)
from cohist.params import EngineParams, activate
from cohist.render import (
    format_counterfactual,
    format_distribution,
    format_frameworks,
    format_report,
    format_sr,
    format_table,
    render_tree,
)
from cohist.scenarios.gunbeaker import ACTUAL, PIVOTS, SWAP, gun_beaker_family, gun_beaker_scenario
from cohist.scenarios.hardy import search_frameworks
from cohist.scenarios.locality import locality_audit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_USAGE = 2

BUILTIN_PREFIX = "builtin:"


class UsageError(Exception):
    """Raised for command-line arguments that parse but cannot be acted upon."""


def build_parser() -> argparse.ArgumentParser:
    """
    The argument parser of the `cohist` command.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with engine parameters")
    common.add_argument("--mode", choices=["medium", "weak"], help="consistency condition")
    common.add_argument("--tol", type=float, help="consistency tolerance")
    common.add_argument("--prune-tol", type=float, help="branches at or below this probability are omitted")
    common.add_argument("--notation", choices=["this-paper", "hardy", "stapp"], help="label scheme of the output")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log more (-v info, -vv debug)")

    target = argparse.ArgumentParser(add_help=False)
    target.add_argument("target", help="scenario file (.qh) or builtin:NAME")
    target.add_argument("--family", help="family name within a scenario file")
    target.add_argument("--t1", choices=["z", "x"], help="basis of particle a at t1 (two-sided builtin)")
    target.add_argument("--a-final", help="a-side final events: none, pointer, mqs, pointer-z, pointer-x, mqs-z, mqs-x")
    target.add_argument("--a-setting", choices=["coin", "Z", "X", "auto"], help="a-coin state (default auto)")
    target.add_argument("--b-setting", choices=["coin", "Z", "X"], help="b-coin state")
    target.add_argument("--order", choices=["a-first", "b-first"], help="temporal order of the a- and b-side")
    target.add_argument("--c-init", choices=["0", "1", "+"], help="initial state of particle c (locality builtin)")

    parser = argparse.ArgumentParser(prog="cohist", description="consistent histories and quantum counterfactuals")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", parents=[common, target], help="check the consistency of a family")
    sub.add_parser("probs", parents=[common, target], help="probabilities of all histories")

    tree = sub.add_parser("tree", parents=[common, target], help="branch tree of a family")
    tree.add_argument("--format", choices=["ascii", "dot"], default="ascii", help="output format")
    tree.add_argument("--out", help="write the tree to this file instead of stdout")

    cf = sub.add_parser("cf", parents=[common, target], help="counterfactual query")
    cf.add_argument("--actual", help="actual outcome event")
    cf.add_argument("--pivot", help="pivot slot, or 'root'")
    cf.add_argument("--swap", help="swapped event as SLOT=EVENT")
    cf.add_argument("--query", help="named query of a scenario file")

    sr = sub.add_parser("sr", parents=[common, target], help="derive SR in a framework")
    sr.add_argument("--actual", default="Z_b^-", help="actual outcome event")
    sr.add_argument("--pivot", default="t1", help="pivot slot")
    sr.add_argument("--swap", default="t2=X_b", help="swapped event as SLOT=EVENT")
    sr.add_argument("--outcome", default="X_b^+", help="event claimed to be certain")

    sub.add_parser("audit-locality", parents=[common], help="b-side statistics for each initial state of particle c")
    sub.add_parser("search-frameworks", parents=[common], help="SR across a-side final decompositions")

    gun = sub.add_parser("gun-beaker", parents=[common], help="classical counterfactual of the gun and the beaker")
    gun.add_argument("--pivot", choices=list(PIVOTS), action="append", help="pivot (repeatable, default both)")
    gun.add_argument("--quantum", action="store_true", help="use the diagonal quantum family instead of the tree")
    return parser


def load_params(args: argparse.Namespace) -> EngineParams:
    params = EngineParams.from_yaml(args.config) if args.config else EngineParams()
    overrides = {
        ("consistency", "mode"): args.mode,
        ("consistency", "tol"): args.tol,
        ("tree", "prune_tol"): args.prune_tol,
        ("output", "notation"): args.notation,
    }
    for (group, name), value in overrides.items():
        if value is not None:
            params.update({group: {name: value}})
    return params


def load_target(args: argparse.Namespace):
    """The family (or tree) named by the target argument, plus the parsed document for file targets."""
    if args.target.startswith(BUILTIN_PREFIX):
        name = args.target[len(BUILTIN_PREFIX) :]
        options = dict(
            t1=args.t1,
            a_final=args.a_final,
            a_setting=args.a_setting,
            b_setting=args.b_setting,
            order=args.order,
            c_init=args.c_init,
        )
        return build(name, **options), None
    doc = parse_scenario_file(args.target)
    return doc.family(args.family), doc


def _split_swap(text: str) -> Tuple[str, str]:
    slot, sep, event = text.partition("=")
    if not sep or not slot or not event:
        raise UsageError(f"Expected --swap SLOT=EVENT, got '{text}'.")
    return slot, event


def _require_family(source, command: str) -> HistoryFamily:
    if not isinstance(source, HistoryFamily):
        raise UsageError(f"'{command}' needs a history family, the target is a {type(source).__name__}.")
    return source


def run(args: argparse.Namespace) -> Tuple[int, str]:
    """Run a parsed command with its configuration active."""
    params = load_params(args)
    with activate(params):
        try:
            return _execute(args, params)
        except InconsistentFamilyError as e:
            report = format_report(e.report, params.output.digits.value, params.output.notation.value)
            return EXIT_INCONSISTENT, f"{e}\n{report}"


def _execute(args: argparse.Namespace, params: EngineParams) -> Tuple[int, str]:
    mode = params.consistency.mode.value
    tol = params.consistency.tol.value
    prune_tol = params.tree.prune_tol.value
    threshold = params.counterfactual.strict_threshold.value
    digits = params.output.digits.value
    notation = params.output.notation.value

    if args.command == "audit-locality":
        audits = {c: locality_audit(c, mode, tol) for c in ("0", "1")}
        lines = []
        for c, table in audits.items():
            lines.append(f"c = |{c}>:")
            lines.append(format_table(table, digits, notation, hide_below=prune_tol))
        diff = max(abs(audits["0"][h] - audits["1"][h]) for h in audits["0"])
        agree = diff <= 1e-12
        lines.append(f"{'agree' if agree else 'DIFFER'}: max difference {diff:.3e}")
        return EXIT_OK, "\n".join(lines)

    if args.command == "search-frameworks":
        rows = search_frameworks(mode, tol)
        return EXIT_OK, format_frameworks(rows, digits)

    if args.command == "gun-beaker":
        source = gun_beaker_family() if args.quantum else gun_beaker_scenario()
        lines = []
        for name in args.pivot or list(PIVOTS):
            pivot = PIVOTS[name]
            query = CounterfactualQuery(
                source, dict(zip(("aim", "block", "beaker"), ACTUAL)), "aim" if pivot else None, SWAP, mode=mode, tol=tol
            )
            result = counterfactual_query(query, threshold=threshold)
            lines.append(f"pivot {name}:")
            lines.append(format_distribution(result.outcome_distribution, digits))
        return EXIT_OK, "\n".join(lines)

    source, doc = load_target(args)

    if args.command == "check":
        report = check_consistency(_require_family(source, "check"), mode, tol)
        return (EXIT_OK if report.consistent else EXIT_INCONSISTENT), format_report(report, digits, notation)

    if args.command == "probs":
        table = history_table(_require_family(source, "probs"), mode, tol)
        return EXIT_OK, format_table(table, digits, notation, hide_below=prune_tol)

    if args.command == "tree":
        tree = source if isinstance(source, BranchTree) else branch_tree(source, prune_tol, mode, tol)
        text = render_tree(tree, args.format, digits, notation)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write(text + "\n")
            return EXIT_OK, f"wrote {args.out}"
        return EXIT_OK, text

    if args.command == "cf":
        if args.query:
            if doc is None:
                raise UsageError("--query needs a scenario file target.")
            query = doc.query(args.query)
            query = CounterfactualQuery(query.source, query.actual, query.pivot_slot, query.swap, mode=mode, tol=tol)
        else:
            if args.actual is None or args.pivot is None or args.swap is None:
                raise UsageError("cf needs --actual, --pivot and --swap (or --query).")
            pivot = None if args.pivot == "root" else args.pivot
            query = CounterfactualQuery(source, args.actual, pivot, _split_swap(args.swap), mode=mode, tol=tol)
        result = counterfactual_query(query, threshold=threshold)
        return EXIT_OK, format_counterfactual(result, digits, notation)

    if args.command == "sr":
        family = _require_family(source, "sr")
        pivot = None if args.pivot == "root" else args.pivot
        status = sr_status(family, args.actual, _split_swap(args.swap), pivot, args.outcome, threshold, mode, tol)
        return EXIT_OK, format_sr(status, digits, notation)

    raise UsageError(f"Unknown command '{args.command}'.")


def dispatch(argv: Optional[List[str]] = None) -> Tuple[int, str]:
    """
    Run one command and return its exit code and report.

    ### Parameters
    `argv` : Optional[List[str]]
        Command-line arguments without the program name. If `None`, uses `sys.argv[1:]`.

    ### Returns
    Tuple[int, str]
        0 on success, 1 if a consistency check failed or probabilities were refused, 2 for usage, parse or query
        errors; and the text to print.
    """
    parser = build_parser()
    stderr = io.StringIO()
    try:
        with contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as e:
        return (EXIT_OK if e.code == 0 else EXIT_USAGE), stderr.getvalue().strip()

    if args.verbose:
        logging.getLogger("cohist").setLevel(logging.DEBUG if args.verbose > 1 else logging.INFO)

    try:
        return run(args)
    except ScenarioSyntaxError as e:
        return EXIT_USAGE, f"{args.target}: {e.kind} error at {e}"
    except (ZeroConditionProbabilityError, UnreachableBranchError, UsageError) as e:
        return EXIT_USAGE, f"error: {e}"
    except (KeyError, ValueError, TypeError, FileNotFoundError) as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        return EXIT_USAGE, f"error: {message}"


def main(args=None):
    """
    This is the main entry point for cohist. It parses command line arguments, runs the command and exits with its
    exit code.

    ### Parameters
    `args` : list
        A list of arguments. If `None`, uses `sys.argv[1:]`.
    """
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    code, text = dispatch(args)
    if text:
        print(text)
    raise SystemExit(code)


if __name__ == "__main__":
    main()
