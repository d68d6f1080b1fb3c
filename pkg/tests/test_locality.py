import numpy as np
import pytest

from cohist.hilbert import Ket, SystemLayout
from cohist.scenarios.locality import CONTROL, control_state, control_unitary, locality_audit, locality_family

from .utils import nonzero

# b-side marginal with the a-coin fixed at Zset: (coin, outcome) -> probability
B_MARGINAL = {
    ("Z_b", "Z_b^+"): 1 / 3,
    ("Z_b", "Z_b^-"): 1 / 6,
    ("X_b", "X_b^+"): 5 / 12,
    ("X_b", "X_b^-"): 1 / 12,
}


def test_control_unitary():
    u = control_unitary()
    assert u.is_unitary()
    flipped = u @ Ket.basis(CONTROL, "1", "Zset")
    assert flipped.amplitude("1", "Xset") == pytest.approx(1.0)
    kept = u @ Ket.basis(CONTROL, "0", "Zset")
    assert kept.amplitude("0", "Zset") == pytest.approx(1.0)


def test_control_state():
    assert control_state(0).amplitude("0") == 1
    assert control_state("1").amplitude("1") == 1
    assert abs(control_state("+").amplitude("0")) ** 2 == pytest.approx(0.5)
    explicit = Ket(SystemLayout.of(("q", ("0", "1"))), np.array([3, 4]))
    assert control_state(explicit).amplitude("1") == pytest.approx(0.8)
    with pytest.raises(ValueError):
        control_state("2")


@pytest.mark.parametrize("c_init", [0, 1, "+"])
def test_b_statistics(c_init):
    table = nonzero(locality_audit(c_init))
    assert set(table) == set(B_MARGINAL), f"Unexpected b-side histories for c={c_init}."
    for h, p in B_MARGINAL.items():
        assert table[h] == pytest.approx(p, abs=1e-12), f"Wrong probability of {h} for c={c_init}."


def test_audit_agrees_across_control_states():
    zero, one = locality_audit(0), locality_audit(1)
    assert zero.keys() == one.keys()
    assert max(abs(zero[h] - one[h]) for h in zero) <= 1e-12


def test_family_name_carries_control_state():
    assert locality_family(1).name == "locality-audit[c=1]"
