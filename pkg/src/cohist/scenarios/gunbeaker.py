"""
A gun aimed at random in one of four directions, a block of wood that may be pushed out of the way, and a beaker
that shatters only if the gun points at it and the block is gone.
"""

from typing import Dict

import numpy as np

from cohist.counterfactual import ClassicalTree
from cohist.histories import History, HistoryFamily, TimeSlot
from cohist.hilbert import Ket, Operator, SystemLayout, complete_unitary, embed, projector_from_kets, tensor_all

AIM = ("at-beaker", "away-1", "away-2", "away-3")
BLOCK = ("in-place", "pushed-away")
BEAKER = ("unbroken", "shattered")

ACTUAL = ("at-beaker", "in-place", "unbroken")
SWAP = ("block", "pushed-away")
PIVOTS = {"before-aim": (), "after-aim": ("at-beaker",)}


def _beaker(prefix: History) -> Dict[str, float]:
    shattered = prefix == ("at-beaker", "pushed-away")
    return {"shattered": 1.0} if shattered else {"unbroken": 1.0}


def gun_beaker_scenario() -> ClassicalTree:
    """
    Classical tree: aim (four directions, 1/4 each), then block (in place or pushed away, 1/2 each), then the
    beaker, shattered iff the gun is aimed at it and the block is pushed away.
    """
    levels = [
        ("aim", {label: 0.25 for label in AIM}),
        ("block", {label: 0.5 for label in BLOCK}),
        ("beaker", _beaker, BEAKER),
    ]
    return ClassicalTree.from_branching(levels, name="gun-beaker")


def gun_beaker_family() -> HistoryFamily:
    """
    The same story as a closed quantum system: aim and block start in uniform superpositions and a controlled flip
    shatters the beaker. All events are diagonal in the product basis.
    """
    layout = SystemLayout.of(("aim", AIM), ("block", BLOCK), ("beaker", BEAKER))
    initial = tensor_all(
        [
            Ket(SystemLayout.of(("aim", AIM)), np.full(len(AIM), 0.5)),
            Ket(SystemLayout.of(("block", BLOCK)), np.full(len(BLOCK), 1 / np.sqrt(2))),
            Ket.basis(SystemLayout.of(("beaker", BEAKER)), "unbroken"),
        ]
    )
    hit = ("at-beaker", "pushed-away")
    intact, broken = Ket.basis(layout, *hit, "unbroken"), Ket.basis(layout, *hit, "shattered")
    fire = complete_unitary([(intact, broken), (broken, intact)], layout)

    def events(name, labels):
        sub = SystemLayout.of((name, labels))
        return [(label, embed(projector_from_kets([Ket.basis(sub, label)]), (name,), layout)) for label in labels]

    slots = [TimeSlot(name, events(name, labels)) for name, labels in (("aim", AIM), ("block", BLOCK), ("beaker", BEAKER))]
    identity = Operator.identity(layout)
    return HistoryFamily(layout, initial, slots, [identity, identity, fire], "gun-beaker-quantum")


BUILTINS = {
    "gun-beaker": gun_beaker_scenario,
    "gun-beaker-quantum": gun_beaker_family,
}
