"""
The Hardy experiment with coin-selected measurement settings.

Each side has a qubit particle, a coin qubit whose basis states `Zset`/`Xset` select the measured observable, and a
three-level meter (`rdy`, `p+`, `p-`). The measurement unitary is controlled by the coin: `Zset` records the
particle's z-basis value and `Xset` its x-basis value. Outcome events are joint coin and meter projectors, e.g.
`Z_b^- = [Zset]_coin_b [p-]_meter_b`.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from cohist.counterfactual import SRKind, SRStatus, sr_status
from cohist.histories import HistoryFamily, TimeSlot, check_consistency
from cohist.hilbert import (
    Ket,
    Operator,
    SystemLayout,
    complete_unitary,
    embed,
    projector_from_kets,
    tensor,
    tensor_all,
    tolerance,
)

logger = logging.getLogger(__name__)

QUBIT = ("0", "1")
COIN = ("Zset", "Xset")
METER = ("rdy", "p+", "p-")
SIGNS = ("+", "-")


class Setting(Enum):
    """Measurement setting selected by a coin."""

    Z = "Z"
    X = "X"

    @property
    def coin_label(self) -> str:
        return f"{self.value}set"

    def eigenvectors(self) -> Tuple[np.ndarray, np.ndarray]:
        """Qubit amplitudes of the `+` and `-` outcome states."""
        if self is Setting.Z:
            return np.array([1.0, 0.0]), np.array([0.0, 1.0])
        return np.array([1.0, 1.0]) / np.sqrt(2), np.array([1.0, -1.0]) / np.sqrt(2)


class AFinal(Enum):
    """Final-time decomposition of the a-side apparatus for one setting."""

    NONE = "none"
    POINTER = "pointer"
    MQS = "mqs"


@dataclass(frozen=True)
class AFinals:
    """
    The a-side final events per setting branch.

    ### Parameters
    `z` : AFinal
        Decomposition used when the a-coin shows `Zset`.
    `x` : AFinal
        Decomposition used when the a-coin shows `Xset`.
    """

    z: AFinal = AFinal.NONE
    x: AFinal = AFinal.NONE

    def __post_init__(self):
        object.__setattr__(self, "z", AFinal(self.z))
        object.__setattr__(self, "x", AFinal(self.x))

    @classmethod
    def parse(cls, spelling: Union[str, "AFinals"]) -> "AFinals":
        """
        Parse `none`, `pointer`, `mqs` (both settings) or `pointer-z`, `pointer-x`, `mqs-z`, `mqs-x` (one setting).
        """
        if isinstance(spelling, AFinals):
            return spelling
        kind, _, setting = spelling.partition("-")
        try:
            final = AFinal(kind)
        except ValueError:
            raise ValueError(f"Unknown a-side final basis '{spelling}'.")
        if setting == "":
            return cls(final, final)
        if final is AFinal.NONE or setting not in ("z", "x"):
            raise ValueError(f"Unknown a-side final basis '{spelling}'.")
        return cls(final, AFinal.NONE) if setting == "z" else cls(AFinal.NONE, final)

    def of(self, setting: Setting) -> AFinal:
        return self.z if setting is Setting.Z else self.x

    @property
    def empty(self) -> bool:
        return self.z is AFinal.NONE and self.x is AFinal.NONE

    def __str__(self) -> str:
        return f"Z_a:{self.z.value} X_a:{self.x.value}"


def resolve_setting(setting: Union[str, Setting, None], finals: Optional[AFinals] = None) -> Optional[Setting]:
    """
    Map a setting choice to a `Setting`, or None for the quantum coin. `auto` picks the only setting with a-side
    final events, if there is exactly one.
    """
    if setting is None or setting == "coin":
        return None
    if isinstance(setting, Setting):
        return setting
    if setting == "auto":
        if finals is None or (finals.z is AFinal.NONE) == (finals.x is AFinal.NONE):
            return None
        return Setting.Z if finals.x is AFinal.NONE else Setting.X
    try:
        return Setting(setting.upper())
    except ValueError:
        raise ValueError(f"Unknown setting '{setting}', expected one of coin, Z, X, auto.")


def _local(name: str, labels: Sequence[str], amplitudes) -> Ket:
    return Ket(SystemLayout.of((name, labels)), amplitudes)


def hardy_state(names: Tuple[str, str] = ("a", "b")) -> Ket:
    """
    The two-qubit state `(|00> + |01> + |10>)/sqrt(3)`.
    """
    layout = SystemLayout.of((names[0], QUBIT), (names[1], QUBIT))
    return Ket(layout, np.array([1.0, 1.0, 1.0, 0.0]) / np.sqrt(3))


def coin_state(name: str, setting: Union[str, Setting, None] = None) -> Ket:
    """The coin in equal superposition of both settings, or resolved to one of them."""
    setting = resolve_setting(setting)
    if setting is None:
        return _local(name, COIN, np.array([1.0, 1.0]) / np.sqrt(2))
    return Ket.basis(SystemLayout.of((name, COIN)), setting.coin_label)


def ready_state(name: str) -> Ket:
    return Ket.basis(SystemLayout.of((name, METER)), "rdy")


APPARATUS = SystemLayout.of(("particle", QUBIT), ("coin", COIN), ("meter", METER))


@lru_cache(maxsize=1)
def apparatus_unitary() -> Operator:
    """
    Coin-controlled measurement on (particle, coin, meter): `|s+, S, rdy> -> |s+, S, p+>` and
    `|s-, S, rdy> -> |s-, S, p->` for each setting S with outcome states `s+`, `s-`.
    """
    rules = []
    for setting in Setting:
        coin = Ket.basis(SystemLayout.of(("coin", COIN)), setting.coin_label)
        for sign, vec in zip(SIGNS, setting.eigenvectors()):
            particle = _local("particle", QUBIT, vec)
            before = tensor_all([particle, coin, Ket.basis(SystemLayout.of(("meter", METER)), "rdy")])
            after = tensor_all([particle, coin, Ket.basis(SystemLayout.of(("meter", METER)), f"p{sign}")])
            rules.append((before, after))
    return complete_unitary(rules, APPARATUS)


def measurement_unitary(layout: SystemLayout, particle: str, coin: str, meter: str) -> Operator:
    return embed(apparatus_unitary(), (particle, coin, meter), layout)


def local_projector(layout: SystemLayout, names: Sequence[str], kets: Sequence[Ket]) -> Operator:
    """Projector onto the span of `kets` on the subsystems `names`, identity elsewhere."""
    return embed(projector_from_kets(kets), tuple(names), layout)


def coin_projector(layout: SystemLayout, coin: str, setting: Setting) -> Operator:
    return local_projector(layout, (coin,), [Ket.basis(SystemLayout.of((coin, COIN)), setting.coin_label)])


def outcome_projector(layout: SystemLayout, coin: str, meter: str, setting: Setting, sign: str) -> Operator:
    pointer = Ket.basis(SystemLayout.of((meter, METER)), f"p{sign}")
    return coin_projector(layout, coin, setting) @ local_projector(layout, (meter,), [pointer])


def particle_events(layout: SystemLayout, basis: str, particle: str = "a") -> List[Tuple[str, Operator]]:
    """Events `[0]_a, [1]_a` (basis `z`) or `[+]_a, [-]_a` (basis `x`)."""
    if basis == "z":
        setting, names = Setting.Z, ("0", "1")
    elif basis == "x":
        setting, names = Setting.X, SIGNS
    else:
        raise ValueError(f"Unknown basis '{basis}', expected 'z' or 'x'.")
    return [
        (f"[{name}]_{particle}", local_projector(layout, (particle,), [_local(particle, QUBIT, vec)]))
        for name, vec in zip(names, setting.eigenvectors())
    ]


def b_final_events(layout: SystemLayout) -> List[Tuple[str, Operator]]:
    return [
        (f"{setting.value}_b^{sign}", outcome_projector(layout, "coin_b", "meter_b", setting, sign))
        for setting in Setting
        for sign in SIGNS
    ]


def mqs_kets(pointer_plus: Ket, pointer_minus: Ket) -> Tuple[Ket, Ket]:
    """The superpositions `(|p+> + |p->)/sqrt(2)` and `(|p+> - |p->)/sqrt(2)` of two orthonormal kets."""
    for ket in (pointer_plus, pointer_minus):
        if abs(ket.norm - 1.0) > tolerance():
            raise ValueError(f"Expected normalized pointer states, got norm {ket.norm:.12g}.")
    overlap = abs(pointer_plus.inner(pointer_minus))
    if overlap > tolerance():
        raise ValueError(f"Pointer states are not orthogonal (overlap {overlap:.3e}).")
    return (pointer_plus + pointer_minus) / np.sqrt(2), (pointer_plus - pointer_minus) / np.sqrt(2)


def mqs_basis(pointer_plus: Ket, pointer_minus: Ket) -> List[Tuple[str, Operator]]:
    """
    Rank-one projectors onto the macroscopic superpositions of two orthonormal pointer states.

    ### Parameters
    `pointer_plus` : Ket
        First pointer state.
    `pointer_minus` : Ket
        Second pointer state, orthogonal to the first.

    ### Returns
    List[Tuple[str, Operator]]
        Events `M+` and `M-`, summing to the projector onto the span of both pointers.
    """
    plus, minus = mqs_kets(pointer_plus, pointer_minus)
    return [("M+", projector_from_kets([plus])), ("M-", projector_from_kets([minus]))]


def a_final_events(layout: SystemLayout, finals: AFinals) -> List[Tuple[str, Operator]]:
    """
    a-side final events per setting branch: pointer outcomes `Z_a^+`, MQS events `Z_a^M+` over the records
    `|s, p_s>` of particle and meter, or the bare setting `Z_a`.
    """
    events = []
    for setting in Setting:
        coin = coin_projector(layout, "coin_a", setting)
        final = finals.of(setting)
        if final is AFinal.NONE:
            events.append((f"{setting.value}_a", coin))
        elif final is AFinal.POINTER:
            events.extend(
                (f"{setting.value}_a^{sign}", outcome_projector(layout, "coin_a", "meter_a", setting, sign))
                for sign in SIGNS
            )
        else:
            records = [
                tensor(_local("a", QUBIT, vec), Ket.basis(SystemLayout.of(("meter_a", METER)), f"p{sign}"))
                for sign, vec in zip(SIGNS, setting.eigenvectors())
            ]
            for label, projector in mqs_basis(*records):
                events.append((f"{setting.value}_a^{label}", coin @ embed(projector, ("a", "meter_a"), layout)))
    return events


def hardy_family(t1_basis: str = "z", b_setting: Union[str, Setting, None] = None, name: Optional[str] = None):
    """
    The one-sided family: particle a at t1, the b-coin at t2 and the b-apparatus outcomes at t3.

    ### Parameters
    `t1_basis` : str
        `z` for the events `[0]_a, [1]_a`, `x` for `[+]_a, [-]_a`.
    `b_setting` : Union[str, Setting, None]
        `coin` (default) for the quantum coin, or a resolved setting `Z`/`X`.
    `name` : Optional[str]
        Family name.
    """
    layout = SystemLayout.of(("a", QUBIT), ("b", QUBIT), ("coin_b", COIN), ("meter_b", METER))
    initial = tensor_all([hardy_state(), coin_state("coin_b", b_setting), ready_state("meter_b")])
    identity = Operator.identity(layout)
    slots = [
        TimeSlot("t1", particle_events(layout, t1_basis)),
        TimeSlot("t2", [(f"{s.value}_b", coin_projector(layout, "coin_b", s)) for s in Setting]),
        TimeSlot("t3", b_final_events(layout)),
    ]
    unitaries = [identity, identity, measurement_unitary(layout, "b", "coin_b", "meter_b")]
    return HistoryFamily(layout, initial, slots, unitaries, name or f"hardy-{t1_basis}")


def family_eq6() -> HistoryFamily:
    """Particle a in the z-basis at t1."""
    return hardy_family("z", name="hardy-eq6")


def family_eq7() -> HistoryFamily:
    """Particle a in the x-basis at t1."""
    return hardy_family("x", name="hardy-eq7")


def two_sided_family(
    t1_basis: str = "z",
    a_setting_slot: bool = True,
    a_final_basis: Union[str, AFinals] = "none",
    a_setting: Union[str, Setting, None] = "auto",
    b_setting: Union[str, Setting, None] = None,
    order: str = "a-first",
    name: Optional[str] = None,
) -> HistoryFamily:
    """
    The family with measurement apparatus on both sides.

    ### Parameters
    `t1_basis` : str
        `z` or `x`, the particle-a events at t1.
    `a_setting_slot` : bool
        If True, t2 holds the four joint settings `X_aX_b, X_aZ_b, Z_aX_b, Z_aZ_b` (with aliases `X_b`, `Z_b`,
        `X_a`, `Z_a` for the marginal settings); otherwise t2 holds only `Z_b`, `X_b`.
    `a_final_basis` : Union[str, AFinals]
        a-side final events per setting, see `AFinals.parse`. If both are `none` the a-side slot is omitted.
    `a_setting` : Union[str, Setting, None]
        `coin`, `Z`, `X` or `auto` (default) for the a-coin, see `resolve_setting`. None is the same as `coin`.
    `b_setting` : Union[str, Setting, None]
        `coin`, `Z` or `X` for the b-coin.
    `order` : str
        `a-first` places the a-side measurement and final slot before the b-side ones, `b-first` after them.
    `name` : Optional[str]
        Family name.
    """
    finals = AFinals.parse(a_final_basis)
    a_choice = resolve_setting(a_setting, finals)
    if order not in ("a-first", "b-first"):
        raise ValueError(f"Unknown order '{order}', expected 'a-first' or 'b-first'.")

    layout = SystemLayout.of(
        ("a", QUBIT), ("b", QUBIT), ("coin_a", COIN), ("meter_a", METER), ("coin_b", COIN), ("meter_b", METER)
    )
    initial = tensor_all(
        [
            hardy_state(),
            coin_state("coin_a", a_choice),
            ready_state("meter_a"),
            coin_state("coin_b", b_setting),
            ready_state("meter_b"),
        ]
    )

    if a_setting_slot:
        joint = {
            (sa, sb): coin_projector(layout, "coin_a", sa) @ coin_projector(layout, "coin_b", sb)
            for sa in (Setting.X, Setting.Z)
            for sb in (Setting.X, Setting.Z)
        }
        events = [(f"{sa.value}_a{sb.value}_b", p) for (sa, sb), p in joint.items()]
        aliases = {}
        for s in (Setting.X, Setting.Z):
            aliases[f"{s.value}_b"] = tuple(f"{sa.value}_a{s.value}_b" for sa in (Setting.X, Setting.Z))
            aliases[f"{s.value}_a"] = tuple(f"{s.value}_a{sb.value}_b" for sb in (Setting.X, Setting.Z))
        t2 = TimeSlot("t2", events, aliases)
    else:
        t2 = TimeSlot("t2", [(f"{s.value}_b", coin_projector(layout, "coin_b", s)) for s in Setting])

    identity = Operator.identity(layout)
    u_a = measurement_unitary(layout, "a", "coin_a", "meter_a")
    u_b = measurement_unitary(layout, "b", "coin_b", "meter_b")
    t1 = TimeSlot("t1", particle_events(layout, t1_basis))
    t3_b = TimeSlot("t3", b_final_events(layout))

    if finals.empty:
        slots, unitaries = [t1, t2, t3_b], [identity, identity, u_a @ u_b]
    else:
        t3_a = TimeSlot("t3_a", a_final_events(layout, finals))
        if order == "a-first":
            slots, unitaries = [t1, t2, t3_a, t3_b], [identity, identity, u_a, u_b]
        else:
            slots, unitaries = [t1, t2, t3_b, t3_a], [identity, identity, u_b, u_a]

    setting_name = "coin" if a_choice is None else a_choice.value
    name = name or f"hardy-two-sided[t1={t1_basis}, {finals}, a={setting_name}, {order}]"
    return HistoryFamily(layout, initial, slots, unitaries, name)


@dataclass(frozen=True)
class BranchVerdict:
    """Consistency and SR status of one a-setting branch of a framework."""

    setting: Setting
    consistent: bool
    max_violation: float
    sr: SRStatus


@dataclass(frozen=True)
class FrameworkRow:
    """
    One framework of the search: a t1 basis and a-side final events per setting.

    ### Parameters
    `t1_basis` : str
        `z` or `x`.
    `finals` : AFinals
        a-side final decomposition per setting.
    `consistent` : bool
        Consistency of the family with the a-coin in superposition.
    `max_violation` : float
        Largest off-diagonal decoherence entry of that family.
    `branches` : Tuple[BranchVerdict, ...]
        Verdicts with the a-coin resolved to `Z` and to `X`.
    """

    t1_basis: str
    finals: AFinals
    consistent: bool
    max_violation: float
    branches: Tuple[BranchVerdict, ...]

    def branch(self, setting: Setting) -> BranchVerdict:
        return next(b for b in self.branches if b.setting is setting)

    @property
    def pattern(self) -> str:
        """`hybrid` if SR holds strictly only under Z_a, `reversed` if only under X_a, empty otherwise."""
        z, x = self.branch(Setting.Z).sr.kind, self.branch(Setting.X).sr.kind
        if z is SRKind.STRICT and x is SRKind.UNDERIVABLE:
            return "hybrid"
        if z is SRKind.UNDERIVABLE and x is SRKind.STRICT:
            return "reversed"
        return ""


def search_frameworks(mode: Optional[str] = None, tol: Optional[float] = None) -> List[FrameworkRow]:
    """
    Check every combination of t1 basis and per-setting a-side final decomposition for consistency and derive SR in
    each a-setting branch.

    ### Returns
    List[FrameworkRow]
        Rows ordered by t1 basis, then the Z_a decomposition, then the X_a decomposition.
    """
    rows = []
    for t1_basis in ("z", "x"):
        for final_z in AFinal:
            for final_x in AFinal:
                finals = AFinals(final_z, final_x)
                overall = check_consistency(two_sided_family(t1_basis, True, finals, a_setting="coin"), mode, tol)
                branches = []
                for setting in Setting:
                    family = two_sided_family(t1_basis, True, finals, a_setting=setting)
                    report = check_consistency(family, mode, tol)
                    status = sr_status(family, mode=mode, tol=tol)
                    branches.append(BranchVerdict(setting, report.consistent, report.max_off_diagonal, status))
                row = FrameworkRow(t1_basis, finals, overall.consistent, overall.max_off_diagonal, tuple(branches))
                logger.debug(f"Framework t1={t1_basis} {finals}: consistent={row.consistent} {row.pattern}")
                rows.append(row)
    return rows


def _two_sided(
    t1: str = "z",
    a_final: str = "none",
    a_setting: str = "auto",
    b_setting: str = "coin",
    order: str = "a-first",
    a_setting_slot: bool = True,
) -> HistoryFamily:
    return two_sided_family(t1, a_setting_slot, a_final, a_setting, b_setting, order)


def _eq6(b_setting: str = "coin") -> HistoryFamily:
    return hardy_family("z", b_setting, "hardy-eq6")


def _eq7(b_setting: str = "coin") -> HistoryFamily:
    return hardy_family("x", b_setting, "hardy-eq7")


BUILTINS = {
    "hardy-eq6": _eq6,
    "hardy-eq7": _eq7,
    "hardy-two-sided": _two_sided,
}
