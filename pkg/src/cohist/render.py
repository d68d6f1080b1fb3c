"""
Text rendering of trees, decoherence reports and counterfactual results.
"""

import re
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pydot

from cohist.counterfactual import CounterfactualResult, SRKind, SRStatus
from cohist.histories import ROOT_LABEL, BranchTree, DecoherenceReport, History
from cohist.params import default
from cohist.scenarios.notation import translate

# magnitudes below this print as zero
_ZERO = 1e-15


def format_number(x: float, digits: Optional[int] = None) -> str:
    """
    Positional notation with a fixed number of significant digits.

    ### Parameters
    `x` : float
        The number.
    `digits` : Optional[int]
        Significant digits, defaults to the configured value.
    """
    digits = default("output", "digits") if digits is None else digits
    x = float(x)
    if abs(x) < _ZERO:
        x = 0.0
    return np.format_float_positional(x, precision=digits, unique=False, fractional=False)


def format_complex(z: complex, digits: Optional[int] = None) -> str:
    z = complex(z)
    if abs(z.imag) < _ZERO:
        return format_number(z.real, digits)
    sign = "-" if z.imag < 0 else "+"
    return f"{format_number(z.real, digits)} {sign} {format_number(abs(z.imag), digits)}i"


def _label(label: str, notation: str) -> str:
    return translate(label, notation)


def format_history(history: Sequence[str], notation: str = "this-paper") -> str:
    return "(" + ", ".join(_label(label, notation) for label in history) + ")"


def render_ascii(tree: BranchTree, digits: Optional[int] = None, notation: str = "this-paper") -> str:
    lines = []
    for node in tree.nodes():
        label = ROOT_LABEL if node == () else _label(tree.label(node), notation)
        p = format_number(tree.conditional(node), digits)
        P = format_number(tree.probability(node), digits)
        lines.append(f"{'  ' * len(node)}{label}  p={p}  P={P}")
    return "\n".join(lines)


def _dot_name(tree: BranchTree, node: History) -> str:
    return "r" + "".join(f"_{tree.labels_at(depth + 1).index(label)}" for depth, label in enumerate(node))


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_dot(tree: BranchTree, digits: Optional[int] = None, notation: str = "this-paper") -> str:
    """
    The tree as a DOT digraph. Nodes are named by the event indices along their path (`r`, `r_0`, `r_0_1`, ...) and
    labeled with the event and its absolute probability; edges are labeled with conditional probabilities.
    """
    graph = pydot.Dot(re.sub(r"\W", "_", tree.name) or "tree", graph_type="digraph")
    for node in tree.nodes():
        label = ROOT_LABEL if node == () else _label(tree.label(node), notation)
        text = f"{label}  P={format_number(tree.probability(node), digits)}"
        graph.add_node(pydot.Node(_dot_name(tree, node), label=_quote(text)))
        if node:
            conditional = format_number(tree.conditional(node), digits)
            graph.add_edge(pydot.Edge(_dot_name(tree, node[:-1]), _dot_name(tree, node), label=_quote(conditional)))
    return graph.to_string()


def render_tree(tree: BranchTree, format: str = "ascii", digits: Optional[int] = None, notation: str = "this-paper"):
    """
    Render a branch tree.

    ### Parameters
    `tree` : BranchTree
        The tree.
    `format` : str
        `ascii` for an indented listing (`label  p=<conditional>  P=<absolute>` per node) or `dot` for a DOT digraph.
    `digits` : Optional[int]
        Significant digits of probabilities.
    `notation` : str
        Label scheme.
    """
    if format == "ascii":
        return render_ascii(tree, digits, notation)
    if format == "dot":
        return render_dot(tree, digits, notation)
    raise ValueError(f"Unknown tree format '{format}', expected 'ascii' or 'dot'.")


def _unquote(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    if len(value) >= 2 and value[0] == value[-1] == '"':
        value = value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    return value


def parse_dot(text: str) -> Tuple[Dict[str, str], Set[Tuple[str, str, str]]]:
    """
    Read back a rendered DOT tree.

    ### Returns
    Tuple[Dict[str, str], Set[Tuple[str, str, str]]]
        Node labels keyed by node name, and `(source, target, label)` edges.
    """
    graphs = pydot.graph_from_dot_data(text)
    if not graphs:
        raise ValueError("No graph found in DOT text.")
    graph = graphs[0]
    nodes = {}
    for node in graph.get_nodes():
        name = node.get_name().strip('"')
        if name in ("node", "edge", "graph"):
            continue
        nodes[name] = _unquote(node.get("label"))
    edges = set()
    for edge in graph.get_edges():
        edges.add((edge.get_source().strip('"'), edge.get_destination().strip('"'), _unquote(edge.get("label"))))
    return nodes, edges


def format_report(report: DecoherenceReport, digits: Optional[int] = None, notation: str = "this-paper") -> str:
    """Consistency verdict followed by the violating pairs, largest first."""
    verdict = "consistent" if report.consistent else "INCONSISTENT"
    lines = [
        f"{report.family_name}: {verdict} ({report.mode.value}, tol={report.tol:g}, "
        f"{len(report.histories)} histories, max off-diagonal {format_number(report.max_off_diagonal, digits)})"
    ]
    for v in report.violations:
        lines.append(
            f"  D{format_history(v.first, notation)}{format_history(v.second, notation)} = "
            f"{format_complex(v.value, digits)}  |D|={format_number(v.magnitude, digits)}"
        )
    return "\n".join(lines)


def format_table(
    table: Mapping[History, float], digits: Optional[int] = None, notation: str = "this-paper", hide_below: float = 0.0
) -> str:
    """History probabilities, one per line, omitting those at or below `hide_below`, then their total."""
    lines = [
        f"{format_history(h, notation)}  {format_number(p, digits)}" for h, p in table.items() if p > hide_below
    ]
    lines.append(f"total  {format_number(sum(table.values()), digits)}")
    return "\n".join(lines)


def format_distribution(distribution: Mapping[str, float], digits: Optional[int] = None, notation: str = "this-paper"):
    return "\n".join(f"  {_label(label, notation)}  {format_number(p, digits)}" for label, p in distribution.items())


def format_sr(status: SRStatus, digits: Optional[int] = None, notation: str = "this-paper") -> str:
    """`STRICT: X_b^+ with probability 1.00000000000`, `WEAK: ...` or `UNDERIVABLE: <reason>`."""
    if status.kind is SRKind.UNDERIVABLE:
        return f"UNDERIVABLE: {status.reason}"
    probability = format_number(status.probability, digits)
    return f"{status.kind.value}: {_label(status.event, notation)} with probability {probability}"


def format_counterfactual(
    result: CounterfactualResult, digits: Optional[int] = None, notation: str = "this-paper"
) -> str:
    q = result.query
    pivot = q.pivot_slot if q.pivot_slot is not None else "root"
    lines = [f"pivot posterior ({pivot}):", format_distribution(result.pivot_posterior, digits, notation)]
    if result.dropped:
        lines.append("dropped unreachable prefixes: " + ", ".join(format_history(p, notation) for p in result.dropped))
    lines.append(f"counterfactual {q.swap[0]}={_label(q.swap[1], notation)}, outcome slot {result.outcome_slot}:")
    lines.append(format_distribution(result.outcome_distribution, digits, notation))
    if result.event is None:
        lines.append("UNDEFINED: the swapped branch is unreachable")
    else:
        lines.append(
            f"{result.classification.name}: {_label(result.event, notation)} with probability "
            f"{format_number(result.probability, digits)}"
        )
    return "\n".join(lines)


def format_frameworks(rows: Iterable, digits: Optional[int] = None) -> str:
    """One line per framework of the search, with per-setting SR verdicts and the hybrid/reversed marker."""
    lines = []
    for row in rows:
        verdicts: List[str] = []
        for branch in row.branches:
            state = "consistent" if branch.consistent else f"inconsistent({format_number(branch.max_violation, digits)})"
            sr = branch.sr.kind.value
            if branch.sr.kind is SRKind.WEAK:
                sr += f"({format_number(branch.sr.probability, digits)})"
            verdicts.append(f"{branch.setting.value}_a: {state} {sr}")
        overall = "consistent" if row.consistent else "inconsistent"
        marker = f"  [{row.pattern}]" if row.pattern else ""
        lines.append(f"t1={row.t1_basis}  {row.finals}  {overall}  |  " + "  |  ".join(verdicts) + marker)
    return "\n".join(lines)
