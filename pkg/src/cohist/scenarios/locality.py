"""
Einstein-locality audit: a third particle c decides the a-side setting after preparation, and the b-side statistics
must not depend on its initial state.
"""

import logging
from typing import Dict, Optional, Union

import numpy as np

from cohist.histories import History, HistoryFamily, TimeSlot, history_table
from cohist.hilbert import Ket, Operator, SystemLayout, complete_unitary, embed, tensor_all
from cohist.scenarios.hardy import (
    COIN,
    METER,
    QUBIT,
    Setting,
    b_final_events,
    coin_projector,
    coin_state,
    hardy_state,
    measurement_unitary,
    ready_state,
)

logger = logging.getLogger(__name__)

ControlState = Union[int, str, Ket]

CONTROL = SystemLayout.of(("c", QUBIT), ("coin_a", COIN))


def control_unitary() -> Operator:
    """On (c, coin_a): `|0, Zset> -> |0, Zset>` and `|1, Zset> -> |1, Xset>`."""
    rules = [
        (Ket.basis(CONTROL, "0", "Zset"), Ket.basis(CONTROL, "0", "Zset")),
        (Ket.basis(CONTROL, "1", "Zset"), Ket.basis(CONTROL, "1", "Xset")),
    ]
    return complete_unitary(rules, CONTROL)


def control_state(c_init: ControlState) -> Ket:
    """Initial state of particle c: `0`, `1`, `+` or an explicit qubit ket."""
    layout = SystemLayout.of(("c", QUBIT))
    if isinstance(c_init, Ket):
        if c_init.layout.dims != (2,):
            raise ValueError(f"Expected a qubit ket for particle c, got layout {c_init.layout}.")
        return Ket(layout, c_init.amplitudes).normalized()
    if str(c_init) in QUBIT:
        return Ket.basis(layout, str(c_init))
    if c_init == "+":
        return Ket(layout, np.array([1.0, 1.0]) / np.sqrt(2))
    raise ValueError(f"Unknown initial state '{c_init}' for particle c, expected 0, 1, + or a Ket.")


def locality_family(c_init: ControlState = 0) -> HistoryFamily:
    """
    Family with the a-coin fixed at `Zset` and flipped to `Xset` by particle c when c is `1`. The a-side is measured
    during the first interval; the slots only describe the b-side (coin at t2, outcome at t3).

    ### Parameters
    `c_init` : ControlState
        Initial state of particle c.
    """
    layout = SystemLayout.of(
        ("a", QUBIT),
        ("b", QUBIT),
        ("c", QUBIT),
        ("coin_a", COIN),
        ("meter_a", METER),
        ("coin_b", COIN),
        ("meter_b", METER),
    )
    initial = tensor_all(
        [
            hardy_state(),
            control_state(c_init),
            coin_state("coin_a", Setting.Z),
            ready_state("meter_a"),
            coin_state("coin_b"),
            ready_state("meter_b"),
        ]
    )
    u_c = embed(control_unitary(), ("c", "coin_a"), layout)
    u_a = measurement_unitary(layout, "a", "coin_a", "meter_a")
    u_b = measurement_unitary(layout, "b", "coin_b", "meter_b")
    slots = [
        TimeSlot("t2", [(f"{s.value}_b", coin_projector(layout, "coin_b", s)) for s in Setting]),
        TimeSlot("t3", b_final_events(layout)),
    ]
    return HistoryFamily(layout, initial, slots, [u_a @ u_c, u_b], f"locality-audit[c={c_init}]")


def locality_audit(
    c_init: ControlState = 0, mode: Optional[str] = None, tol: Optional[float] = None
) -> Dict[History, float]:
    """
    Distribution over b-side histories (coin setting, outcome) for a given initial state of particle c. `mode` and
    `tol` select the consistency condition, as in `check_consistency`.
    """
    table = history_table(locality_family(c_init), mode, tol)
    logger.debug(f"Locality audit for c={c_init}: {len(table)} b-side histories.")
    return table


BUILTINS = {
    "locality-audit": locality_family,
}
