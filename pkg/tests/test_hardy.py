import numpy as np
import pytest

from cohist.builtins import build
from cohist.counterfactual import SRKind, sr_status
from cohist.histories import HistoryFamily, chain_ket, check_consistency, decoherence_matrix, history_table
from cohist.hilbert import Ket, SystemLayout, is_projector, tensor
from cohist.scenarios.hardy import (
    METER,
    QUBIT,
    AFinal,
    AFinals,
    Setting,
    apparatus_unitary,
    family_eq6,
    family_eq7,
    hardy_family,
    hardy_state,
    local_projector,
    mqs_basis,
    mqs_kets,
    resolve_setting,
    search_frameworks,
    two_sided_family,
)
from cohist.scenarios.locality import locality_family

from .utils import nonzero


def test_hardy_state():
    psi = hardy_state()
    assert psi.norm == pytest.approx(1.0)
    assert psi.amplitude("1", "1") == 0
    assert abs(psi.amplitude("0", "1")) ** 2 == pytest.approx(1 / 3)


def test_apparatus_records_outcome():
    u = apparatus_unitary()
    assert u.is_unitary()
    layout = u.layout
    plus = (Ket.basis(layout, "0", "Xset", "rdy") + Ket.basis(layout, "1", "Xset", "rdy")) / np.sqrt(2)
    out = u @ plus
    assert abs(out.amplitude("0", "Xset", "p+")) ** 2 == pytest.approx(0.5)
    assert abs(out.amplitude("1", "Xset", "p+")) ** 2 == pytest.approx(0.5)
    assert (u @ Ket.basis(layout, "1", "Zset", "rdy")).amplitude("1", "Zset", "p-") == pytest.approx(1.0)


def test_x_setting_expands_in_z_basis():
    u = apparatus_unitary()
    out = u @ Ket.basis(u.layout, "0", "Xset", "rdy")
    expected = {
        ("0", "Xset", "p+"): 0.5,
        ("1", "Xset", "p+"): 0.5,
        ("0", "Xset", "p-"): 0.5,
        ("1", "Xset", "p-"): -0.5,
    }
    components = out.components(tol=1e-12)
    assert set(components) == set(expected)
    for labels, amplitude in expected.items():
        assert components[labels] == pytest.approx(amplitude, abs=1e-12), f"Wrong amplitude of {labels}."


def test_a_finals_parse():
    assert AFinals.parse("none") == AFinals()
    assert AFinals.parse("pointer") == AFinals(AFinal.POINTER, AFinal.POINTER)
    assert AFinals.parse("mqs-x") == AFinals(AFinal.NONE, AFinal.MQS)
    assert AFinals.parse("pointer-z") == AFinals(AFinal.POINTER, AFinal.NONE)
    assert str(AFinals.parse("mqs-z")) == "Z_a:mqs X_a:none"
    for bad in ("record", "none-x", "pointer-y"):
        with pytest.raises(ValueError):
            AFinals.parse(bad)


def test_resolve_setting():
    assert resolve_setting("coin") is None
    assert resolve_setting(None) is None
    assert resolve_setting("x") is Setting.X
    assert resolve_setting("auto", AFinals.parse("pointer-x")) is Setting.X
    assert resolve_setting("auto", AFinals.parse("mqs-z")) is Setting.Z
    assert resolve_setting("auto", AFinals.parse("pointer")) is None
    with pytest.raises(ValueError):
        resolve_setting("Y")


def test_mqs_basis():
    layout = SystemLayout.of(("m", METER))
    events = mqs_basis(Ket.basis(layout, "p+"), Ket.basis(layout, "p-"))
    assert [label for label, _ in events] == ["M+", "M-"]
    total = sum(p.matrix for _, p in events)
    assert np.allclose(total, np.diag([0, 1, 1]))
    for _, p in events:
        assert is_projector(p)

    with pytest.raises(ValueError):
        mqs_kets(Ket.basis(layout, "p+"), Ket.basis(layout, "p+"))


def test_mqs_kets_are_an_involution():
    layout = SystemLayout.of(("m", METER))
    pointers = Ket.basis(layout, "p+"), Ket.basis(layout, "p-")
    for twice, pointer in zip(mqs_kets(*mqs_kets(*pointers)), pointers):
        assert np.allclose(twice.amplitudes, pointer.amplitudes)


def test_hardy_state_in_x_basis():
    a = SystemLayout.of(("a", QUBIT))
    b = SystemLayout.of(("b", QUBIT))
    plus, minus = (Ket(a, vec) for vec in Setting.X.eigenvectors())
    expanded = tensor(plus, Ket(b, np.array([2.0, 1.0]) / np.sqrt(2))) + tensor(
        minus, Ket(b, np.array([0.0, 1.0]) / np.sqrt(2))
    )
    assert np.allclose((hardy_state() * np.sqrt(3)).amplitudes, expanded.amplitudes)


def test_one_sided_family_slots():
    family = hardy_family("z")
    assert family.slot_labels == ("t1", "t2", "t3")
    assert family.slot("t3").labels[:4] == ("Z_b^+", "Z_b^-", "X_b^+", "X_b^-")
    with pytest.raises(ValueError):
        hardy_family("y")


def test_two_sided_slot_layout():
    family = two_sided_family("z", True, "pointer")
    assert family.slot_labels == ("t1", "t2", "t3_a", "t3")
    assert family.slot("t2").resolve("X_b") == frozenset({"X_aX_b", "Z_aX_b"})
    assert family.slot("t2").resolve("Z_a") == frozenset({"Z_aX_b", "Z_aZ_b"})

    b_first = two_sided_family("z", True, "pointer", order="b-first")
    assert b_first.slot_labels == ("t1", "t2", "t3", "t3_a")

    plain = two_sided_family("z", False)
    assert plain.slot_labels == ("t1", "t2", "t3")
    assert plain.slot("t2").labels == ("Z_b", "X_b")

    with pytest.raises(ValueError):
        two_sided_family(order="simultaneous")


def test_pointer_x_violation():
    family = two_sided_family("z", True, "pointer-x", "auto")
    report = check_consistency(family)
    assert not report
    assert report.max_off_diagonal == pytest.approx(1 / 12, abs=1e-12)


def test_two_sided_setting_defaults_to_auto():
    assert check_consistency(two_sided_family("z", True, "pointer-x")).max_off_diagonal == pytest.approx(1 / 12)
    assert check_consistency(build("hardy-two-sided", a_final="pointer-x")).max_off_diagonal == pytest.approx(1 / 12)
    # with the a-coin in superposition only half of the weight reaches the X_a branch
    coin = two_sided_family("z", True, "pointer-x", "coin")
    assert check_consistency(coin).max_off_diagonal == pytest.approx(1 / 24, abs=1e-12)
    assert "a=coin" in coin.name


def pre_measurement_kets(family, interval):
    """Chain kets of all prefixes ending just before the unitary of `interval`."""
    if interval == 0:
        return [family.initial_state]
    head = HistoryFamily(
        family.layout, family.initial_state, family.slots[:interval], family.unitaries[:interval], "prefix"
    )
    return [chain_ket(head, h) for h in head.histories()]


@pytest.mark.parametrize(
    "family,meters",
    [
        (family_eq6(), [(2, "meter_b")]),
        (family_eq7(), [(2, "meter_b")]),
        (two_sided_family("z", True, "none", "coin"), [(2, "meter_a"), (2, "meter_b")]),
        (two_sided_family("x", True, "pointer", "coin"), [(2, "meter_a"), (3, "meter_b")]),
        (two_sided_family("z", True, "mqs", "coin", order="b-first"), [(2, "meter_b"), (3, "meter_a")]),
        (locality_family(1), [(0, "meter_a"), (1, "meter_b")]),
        (locality_family("+"), [(0, "meter_a"), (1, "meter_b")]),
    ],
    ids=lambda x: x.name if isinstance(x, HistoryFamily) else str(x),
)
def test_apparatus_only_sees_ready_meters(family, meters):
    # outside the rule-covered sector the apparatus unitary is an arbitrary completion
    for interval, meter in meters:
        labels = SystemLayout.of((meter, METER))
        fired = local_projector(family.layout, (meter,), [Ket.basis(labels, "p+"), Ket.basis(labels, "p-")])
        for ket in pre_measurement_kets(family, interval):
            assert (fired @ ket).norm < 1e-12, f"{meter} has fired before interval {interval} of {family.name}."


@pytest.mark.parametrize(
    "t1,a_final,a_setting",
    [("z", "pointer-z", "Z"), ("x", "pointer-z", "Z"), ("z", "pointer", "coin"), ("x", "pointer", "coin")],
)
def test_measurement_order_does_not_matter(t1, a_final, a_setting):
    a_first = decoherence_matrix(two_sided_family(t1, True, a_final, a_setting, order="a-first"))
    b_first = decoherence_matrix(two_sided_family(t1, True, a_final, a_setting, order="b-first"))

    def swapped(h):
        return (h[0], h[1], h[3], h[2])

    assert set(map(swapped, a_first.histories)) == set(b_first.histories)
    order = [b_first.histories.index(swapped(h)) for h in a_first.histories]
    np.testing.assert_allclose(b_first.matrix[np.ix_(order, order)], a_first.matrix, atol=1e-12)


def test_two_sided_b_statistics_match_one_sided():
    one_sided = nonzero(history_table(hardy_family("z", "Z")))
    two_sided = history_table(two_sided_family("z", True, "none", "Z", "Z"))
    marginal = {}
    for (t1_event, t2_event, b_event), p in two_sided.items():
        key = (t1_event, t2_event.replace("Z_a", ""), b_event)
        marginal[key] = marginal.get(key, 0.0) + p
    for h, p in one_sided.items():
        assert marginal[h] == pytest.approx(p, abs=1e-12)


def test_two_sided_with_both_coins_matches_eq6():
    two_sided = history_table(two_sided_family("z", True, "none", "coin", "coin"))
    marginal = {}
    for (t1_event, t2_event, b_event), p in two_sided.items():
        key = (t1_event, t2_event[len("Z_a") :], b_event)
        marginal[key] = marginal.get(key, 0.0) + p
    one_sided = history_table(family_eq6())
    assert set(marginal) == set(one_sided)
    for h, p in one_sided.items():
        assert marginal[h] == pytest.approx(p, abs=1e-12), f"The a-side changed the b-side statistics of {h}."


def framework(rows, t1, z, x):
    return next(r for r in rows if r.t1_basis == t1 and r.finals == AFinals(z, x))


@pytest.fixture(scope="module")
def rows():
    return search_frameworks()


def test_search_covers_all_frameworks(rows):
    assert len(rows) == 18
    assert {(r.t1_basis, r.finals) for r in rows} == {
        (t1, AFinals(z, x)) for t1 in ("z", "x") for z in AFinal for x in AFinal
    }


def test_search_hybrid_row(rows):
    row = framework(rows, "z", AFinal.POINTER, AFinal.POINTER)
    assert row.branch(Setting.Z).sr.kind is SRKind.STRICT
    assert row.branch(Setting.X).sr.kind is SRKind.UNDERIVABLE
    assert not row.branch(Setting.X).consistent
    assert row.branch(Setting.X).max_violation == pytest.approx(1 / 12, abs=1e-12)
    assert row.pattern == "hybrid"


def test_search_reversed_row(rows):
    row = framework(rows, "z", AFinal.MQS, AFinal.MQS)
    assert row.branch(Setting.Z).sr.kind is SRKind.UNDERIVABLE
    assert row.branch(Setting.X).sr.kind is SRKind.STRICT
    assert row.pattern == "reversed"


def test_search_plain_row(rows):
    row = framework(rows, "z", AFinal.NONE, AFinal.NONE)
    assert row.consistent
    assert all(b.sr.kind is SRKind.STRICT for b in row.branches)
    assert row.pattern == ""


def test_search_matches_direct_sr(rows):
    row = framework(rows, "z", AFinal.POINTER, AFinal.MQS)
    for setting in Setting:
        family = two_sided_family("z", True, row.finals, a_setting=setting)
        assert row.branch(setting).sr.kind is sr_status(family).kind
