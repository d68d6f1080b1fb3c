from importlib import resources

import pytest
import yaml

from cohist import cli
from cohist.cli import EXIT_INCONSISTENT, EXIT_OK, EXIT_USAGE, dispatch, main
from cohist.hilbert import tolerance
from cohist.render import parse_dot


def eq6_path() -> str:
    return str(resources.files("cohist.scenarios").joinpath("hardy_eq6.qh"))


def test_sr_eq6():
    code, text = dispatch(["sr", "builtin:hardy-eq6"])
    assert code == EXIT_OK
    assert text == "STRICT: X_b^+ with probability 1.00000000000"


def test_sr_eq7():
    code, text = dispatch(["sr", "builtin:hardy-eq7"])
    assert code == EXIT_OK
    assert text == "WEAK: X_b^+ with probability 0.700000000000"


def test_sr_notation():
    code, text = dispatch(["sr", "builtin:hardy-eq6", "--notation", "hardy"])
    assert code == EXIT_OK
    assert text == "STRICT: D_2=0 with probability 1.00000000000"


def test_sr_underivable():
    code, text = dispatch(["sr", "builtin:hardy-eq6", "--b-setting", "Z"])
    assert code == EXIT_OK
    assert text.startswith("UNDERIVABLE: ")


def test_check_consistent():
    code, text = dispatch(["check", "builtin:hardy-eq6"])
    assert code == EXIT_OK
    assert text.startswith("hardy-eq6: consistent")


def test_check_pointer_x_is_inconsistent():
    code, text = dispatch(["check", "builtin:hardy-two-sided", "--a-final", "pointer-x"])
    assert code == EXIT_INCONSISTENT
    assert "INCONSISTENT" in text
    assert "0.0833333333333" in text


def test_probs_refused_for_inconsistent_family():
    code, text = dispatch(["probs", "builtin:hardy-two-sided", "--a-final", "pointer-x"])
    assert code == EXIT_INCONSISTENT
    assert "violates the medium consistency condition" in text


def test_weak_mode_option():
    code, _ = dispatch(["check", "builtin:hardy-two-sided", "--a-final", "pointer-x", "--mode", "weak"])
    assert code == EXIT_INCONSISTENT, "The 1/12 entry is real, so the weak condition fails as well."
    code, _ = dispatch(["check", "builtin:hardy-two-sided", "--a-final", "pointer-x", "--tol", "0.1"])
    assert code == EXIT_OK


def test_probs():
    code, text = dispatch(["probs", "builtin:hardy-eq6"])
    assert code == EXIT_OK
    assert "([0]_a, X_b, X_b^+)  0.333333333333" in text.splitlines()
    assert text.splitlines()[-1] == "total  1.00000000000"


def test_tree_ascii():
    code, text = dispatch(["tree", "builtin:hardy-eq7"])
    assert code == EXIT_OK
    assert text.splitlines()[0] == "Psi_0  p=1.00000000000  P=1.00000000000"


def test_tree_dot_to_file(tmp_path):
    out = tmp_path / "eq6.dot"
    code, text = dispatch(["tree", "builtin:hardy-eq6", "--format", "dot", "--out", str(out)])
    assert code == EXIT_OK
    assert text == f"wrote {out}"
    nodes, edges = parse_dot(out.read_text())
    assert len(nodes) == 13
    assert len(edges) == 12


def test_tree_of_classical_builtin():
    code, text = dispatch(["tree", "builtin:gun-beaker"])
    assert code == EXIT_OK
    assert "shattered" in text


def test_cf_from_file_query():
    code, text = dispatch(["cf", eq6_path(), "--query", "sr"])
    assert code == EXIT_OK
    assert text.splitlines()[-1] == "STRICT: X_b^+ with probability 1.00000000000"


def test_cf_explicit():
    args = ["cf", "builtin:hardy-eq7", "--actual", "Z_b^-", "--pivot", "t1", "--swap", "t2=X_b"]
    code, text = dispatch(args)
    assert code == EXIT_OK
    assert "  [+]_a  0.500000000000" in text.splitlines()
    assert text.splitlines()[-1] == "WEAK: X_b^+ with probability 0.700000000000"


@pytest.mark.parametrize(
    "args",
    [
        ["cf", "builtin:hardy-eq7", "--actual", "Z_b^-", "--pivot", "t1"],
        ["cf", "builtin:hardy-eq7", "--actual", "Z_b^-", "--pivot", "t1", "--swap", "t2"],
        ["cf", "builtin:hardy-eq7", "--query", "sr"],
        ["cf", "builtin:hardy-eq6", "--actual", "Z_b^-", "--pivot", "t1", "--swap", "t2=X_b", "--b-setting", "Z"],
        ["cf", "builtin:hardy-eq6", "--actual", "Z_b^-", "--pivot", "t3", "--swap", "t2=X_b"],
        ["sr", "builtin:hardy-eq6", "--actual", "nonexistent"],
        ["check", "builtin:nonexistent"],
        ["check", "builtin:gun-beaker"],
        ["check", "builtin:hardy-two-sided", "--a-final", "sideways"],
        ["check", "does-not-exist.qh"],
        ["frobnicate"],
        ["check"],
    ],
)
def test_usage_errors(args):
    code, text = dispatch(args)
    assert code == EXIT_USAGE, f"Expected a usage error for {args}, got {code}: {text}"
    assert text, "Usage errors should explain themselves."


def test_syntax_error_in_file(tmp_path):
    path = tmp_path / "broken.qh"
    path.write_text("system a: dim 2 labels 0 1 ;\nstate s on (a) = |0> + |7> ;\n")
    code, text = dispatch(["check", str(path)])
    assert code == EXIT_USAGE
    assert "unknown-name error at line 2, column 24" in text


def test_gun_beaker():
    code, text = dispatch(["gun-beaker"])
    assert code == EXIT_OK
    lines = text.splitlines()
    after = lines.index("pivot after-aim:")
    before = lines.index("pivot before-aim:")
    assert "  shattered  1.00000000000" in lines[after:]
    assert before < after
    assert "  shattered  0.250000000000" in lines[before:after]


def test_gun_beaker_quantum_single_pivot():
    code, text = dispatch(["gun-beaker", "--quantum", "--pivot", "before-aim"])
    assert code == EXIT_OK
    assert text.splitlines()[0] == "pivot before-aim:"
    assert "  shattered  0.250000000000" in text.splitlines()


def test_audit_locality():
    code, text = dispatch(["audit-locality"])
    assert code == EXIT_OK
    assert text.splitlines()[-1].startswith("agree: ")
    assert text.count("(X_b, X_b^+)  0.416666666667") == 2


def test_search_frameworks():
    code, text = dispatch(["search-frameworks"])
    assert code == EXIT_OK
    lines = text.splitlines()
    assert len(lines) == 18
    assert sum("[hybrid]" in line for line in lines) >= 1
    assert sum("[reversed]" in line for line in lines) >= 1


def test_config_file(tmp_path):
    config = tmp_path / "engine.yml"
    config.write_text(yaml.safe_dump({"output": {"digits": 6}}))
    code, text = dispatch(["sr", "builtin:hardy-eq6", "--config", str(config)])
    assert code == EXIT_OK
    assert text == "STRICT: X_b^+ with probability 1.00000"


def test_main_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["sr", "builtin:hardy-eq7"])
    assert info.value.code == EXIT_OK
    assert capsys.readouterr().out.strip() == "WEAK: X_b^+ with probability 0.700000000000"

    with pytest.raises(SystemExit) as info:
        main(["check", "builtin:hardy-two-sided", "--a-final", "pointer-x"])
    assert info.value.code == EXIT_INCONSISTENT


def write_config(tmp_path, data) -> str:
    path = tmp_path / "engine.yml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_audit_locality_options(tmp_path):
    config = write_config(tmp_path, {"output": {"digits": 6}})
    code, text = dispatch(["audit-locality", "--config", config])
    assert code == EXIT_OK
    assert text.count("(X_b, X_b^+)  0.416667") == 2
    for option in (["--mode", "weak"], ["--tol", "1e-6"]):
        code, text = dispatch(["audit-locality", *option])
        assert code == EXIT_OK, f"audit-locality should accept {option}."
        assert text.splitlines()[-1].startswith("agree: ")


def test_config_is_active_while_running(tmp_path, monkeypatch):
    seen = {}

    def execute(args, params):
        seen["tol"] = tolerance()
        return EXIT_OK, ""

    monkeypatch.setattr(cli, "_execute", execute)
    config = write_config(tmp_path, {"hilbert": {"tol": 1e-3}})
    assert dispatch(["check", "builtin:hardy-eq6", "--config", config])[0] == EXIT_OK
    assert seen["tol"] == 1e-3
    assert tolerance() == 1e-12, "The configuration should be released after the command."


def test_refusal_report_uses_configured_digits(tmp_path):
    config = write_config(tmp_path, {"output": {"digits": 6}})
    code, text = dispatch(["probs", "builtin:hardy-two-sided", "--a-final", "pointer-x", "--config", config])
    assert code == EXIT_INCONSISTENT
    assert "|D|=0.0833333" in text
    assert "0.0833333333333" not in text
