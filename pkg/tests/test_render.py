import pytest

from cohist.counterfactual import SRKind, SRStatus, sr_status
from cohist.histories import branch_tree, check_consistency, history_table
from cohist.render import (
    format_history,
    format_number,
    format_report,
    format_sr,
    format_table,
    parse_dot,
    render_tree,
)
from cohist.scenarios.hardy import family_eq6, family_eq7, two_sided_family


@pytest.mark.parametrize(
    "x,digits,expected",
    [
        (1.0, 12, "1.00000000000"),
        (0.7, 12, "0.700000000000"),
        (1 / 12, 12, "0.0833333333333"),
        (0.25, 4, "0.2500"),
    ],
)
def test_format_number(x, digits, expected):
    assert format_number(x, digits) == expected


def test_format_history_notation():
    assert format_history(("[0]_a", "Z_b", "Z_b^-")) == "([0]_a, Z_b, Z_b^-)"
    assert format_history(("[0]_a", "Z_b", "Z_b^-"), "hardy") == "([0]_a, U_2, U_2=1)"
    assert format_history(("X_b^+",), "stapp") == "(R2+)"


def test_format_sr():
    assert format_sr(sr_status(family_eq6())) == "STRICT: X_b^+ with probability 1.00000000000"
    assert format_sr(sr_status(family_eq7())) == "WEAK: X_b^+ with probability 0.700000000000"
    assert format_sr(sr_status(family_eq6()), notation="hardy") == "STRICT: D_2=0 with probability 1.00000000000"
    assert format_sr(SRStatus(SRKind.UNDERIVABLE, "X_b^+", reason="unreachable")) == "UNDERIVABLE: unreachable"


def test_format_report():
    consistent = format_report(check_consistency(family_eq6()))
    assert consistent.startswith("hardy-eq6: consistent (medium, tol=1e-10, ")
    assert len(consistent.splitlines()) == 1, "A consistent family has no violation lines."

    report = check_consistency(two_sided_family("z", True, "pointer-x", "X"))
    text = format_report(report)
    lines = text.splitlines()
    assert "INCONSISTENT" in lines[0]
    assert "max off-diagonal 0.0833333333333" in lines[0]
    assert len(lines) == 1 + len(report.violations)
    assert "|D|=0.0833333333333" in lines[1]


def test_format_table():
    text = format_table(history_table(family_eq6()), hide_below=1e-12)
    lines = text.splitlines()
    assert "([0]_a, X_b, X_b^+)  0.333333333333" in lines
    assert lines[-1] == "total  1.00000000000"
    assert len(lines) == 7, "Six nonzero histories plus the total."


def test_render_ascii():
    text = render_tree(branch_tree(family_eq6()))
    lines = text.splitlines()
    assert lines[0] == "Psi_0  p=1.00000000000  P=1.00000000000"
    assert lines[1] == "  [0]_a  p=0.666666666667  P=0.666666666667"
    assert "      X_b^+  p=0.500000000000  P=0.0833333333333" in lines


@pytest.mark.parametrize("builder,leaves", [(family_eq6, 6), (family_eq7, 7)])
def test_render_ascii_leaves(builder, leaves):
    lines = render_tree(branch_tree(builder())).splitlines()
    depths = [(len(line) - len(line.lstrip(" "))) // 2 for line in lines]
    assert depths.count(3) == leaves
    assert len(lines) == 1 + 2 + 4 + leaves, "Root, both t1 events and all four (t1, t2) prefixes are shown."


def test_render_dot_parses_back():
    tree = branch_tree(family_eq6())
    nodes, edges = parse_dot(render_tree(tree, "dot"))
    assert len(nodes) == len(tree)
    assert len(edges) == len(tree) - 1
    assert nodes["r"] == "Psi_0  P=1.00000000000"
    assert nodes["r_1_1"] == "X_b  P=0.166666666667"
    assert ("r_1", "r_1_1", "0.500000000000") in edges


def test_render_unknown_format():
    with pytest.raises(ValueError):
        render_tree(branch_tree(family_eq6()), "svg")
