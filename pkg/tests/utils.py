import inspect
from functools import reduce
from itertools import product
from typing import Dict, List, Tuple, Type

import numpy as np

from cohist import params
from cohist.histories import HistoryFamily
from cohist.params import Param

# Hardy-state family (6): particle a in the z-basis at t1
EQ6_LEAVES = {
    ("[0]_a", "Z_b", "Z_b^+"): 1 / 6,
    ("[0]_a", "Z_b", "Z_b^-"): 1 / 6,
    ("[1]_a", "Z_b", "Z_b^+"): 1 / 6,
    ("[0]_a", "X_b", "X_b^+"): 1 / 3,
    ("[1]_a", "X_b", "X_b^+"): 1 / 12,
    ("[1]_a", "X_b", "X_b^-"): 1 / 12,
}

# family (7): particle a in the x-basis at t1
EQ7_LEAVES = {
    ("[+]_a", "Z_b", "Z_b^+"): 1 / 3,
    ("[+]_a", "Z_b", "Z_b^-"): 1 / 12,
    ("[-]_a", "Z_b", "Z_b^-"): 1 / 12,
    ("[+]_a", "X_b", "X_b^+"): 3 / 8,
    ("[+]_a", "X_b", "X_b^-"): 1 / 24,
    ("[-]_a", "X_b", "X_b^+"): 1 / 24,
    ("[-]_a", "X_b", "X_b^-"): 1 / 24,
}


def list_param_types() -> List[Type[Param]]:
    """List all available parameter types."""
    return [cls for _, cls in inspect.getmembers(params, inspect.isclass) if issubclass(cls, Param) and cls is not Param]


def brute_force_chain_kets(family: HistoryFamily) -> Dict[Tuple[str, ...], np.ndarray]:
    """
    Chain kets computed history by history from the raw matrices, without sharing prefixes.
    """
    kets = {}
    slots = [[(ev.label, ev.projector.matrix) for ev in slot.events] for slot in family.slots]
    for choice in product(*slots):
        psi = family.initial_state.amplitudes.copy()
        for (label, projector), unitary in zip(choice, family.unitaries):
            psi = projector @ (unitary.matrix @ psi)
        kets[tuple(label for label, _ in choice)] = psi
    return kets


def brute_force_decoherence(family: HistoryFamily) -> Dict[Tuple[Tuple[str, ...], Tuple[str, ...]], complex]:
    """`D(alpha, beta) = <K(beta)|K(alpha)>` for every ordered pair of histories."""
    kets = brute_force_chain_kets(family)
    return {(a, b): complex(np.vdot(kets[b], kets[a])) for a in kets for b in kets}


def nonzero(table: Dict, tol: float = 1e-12) -> Dict:
    """Entries of a probability table above `tol`."""
    return {k: v for k, v in table.items() if v > tol}


def _projector(*vectors: np.ndarray) -> np.ndarray:
    return sum(np.outer(v, v.conj()) for v in vectors)


def _kron(*factors: np.ndarray) -> np.ndarray:
    return reduce(np.kron, factors)


def hardy_oracle(t1_basis: str) -> Dict[Tuple[str, ...], np.ndarray]:
    """
    Chain kets of the one-sided Hardy family on (a, b, coin_b, meter_b), written out with numpy Kronecker products
    only. The b-apparatus is the partial isometry given by its rules, so histories that reach its completed sector
    would disagree with the engine.
    """
    zero, one = np.eye(2)
    plus, minus = (zero + one) / np.sqrt(2), (zero - one) / np.sqrt(2)
    zset, xset = np.eye(2)
    rdy, p_plus, p_minus = np.eye(3)
    i2, i3 = np.eye(2), np.eye(3)

    psi = _kron(np.array([1.0, 1.0, 1.0, 0.0]) / np.sqrt(3), (zset + xset) / np.sqrt(2), rdy)

    # on (b, coin_b, meter_b): the coin picks the basis, the meter records the sign
    rules = [
        (zero, zset, p_plus),
        (one, zset, p_minus),
        (plus, xset, p_plus),
        (minus, xset, p_minus),
    ]
    isometry = sum(np.outer(_kron(s, c, m), _kron(s, c, rdy).conj()) for s, c, m in rules)
    measure_b = _kron(i2, isometry)

    t1 = {"[0]_a": zero, "[1]_a": one} if t1_basis == "z" else {"[+]_a": plus, "[-]_a": minus}
    t1 = {label: _kron(_projector(v), i2, i2, i3) for label, v in t1.items()}
    t2 = {"Z_b": _kron(i2, i2, _projector(zset), i3), "X_b": _kron(i2, i2, _projector(xset), i3)}
    t3 = {
        f"{s}_b^{sign}": _kron(i2, i2, _projector(coin), _projector(pointer))
        for s, coin in (("Z", zset), ("X", xset))
        for sign, pointer in (("+", p_plus), ("-", p_minus))
    }
    t3["REST"] = np.eye(24) - sum(t3.values())

    kets = {}
    for (l1, p1), (l2, p2), (l3, p3) in product(t1.items(), t2.items(), t3.items()):
        kets[(l1, l2, l3)] = p3 @ measure_b @ p2 @ p1 @ psi
    return kets
