"""
Families of histories, chain kets and the decoherence functional.

A `HistoryFamily` starts from a pure initial state and alternates unitary time development with a decomposition of
the identity at each time slot. The chain ket of a history `h = (e_1, ..., e_n)` is

    K(h) = P_n U_n ... P_1 U_1 |Psi_0>

and the decoherence functional is `D(alpha, beta) = <K(beta)|K(alpha)>`. Probabilities are only assigned to
families whose off-diagonal decoherence entries vanish (within a tolerance).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from cohist.hilbert import Ket, LayoutError, Operator, SystemLayout, is_projector, tolerance
from cohist.params import default

logger = logging.getLogger(__name__)

History = Tuple[str, ...]

REST = "REST"
ROOT_LABEL = "Psi_0"


class InconsistentFamilyError(Exception):
    """
    Raised when probabilities are requested from a family that fails the consistency condition. The failing
    `DecoherenceReport` is available as `report`.
    """

    def __init__(self, report: "DecoherenceReport"):
        self.report = report
        worst = report.violations[0]
        super().__init__(
            f"Family '{report.family_name}' violates the {report.mode.value} consistency condition: "
            f"{len(report.violations)} off-diagonal entries exceed {report.tol:g} "
            f"(largest {worst.magnitude:.6g} between {format_history(worst.first)} and {format_history(worst.second)})."
        )


class ZeroConditionProbabilityError(Exception):
    """Raised when conditioning on events that have zero probability."""


class ConsistencyMode(Enum):
    """
    The condition imposed on off-diagonal entries of the decoherence functional.
    """

    MEDIUM = "medium"
    WEAK = "weak"

    def measure(self, value: Union[complex, np.ndarray]) -> Union[float, np.ndarray]:
        """Magnitude of an off-diagonal entry that must not exceed the tolerance."""
        if self is ConsistencyMode.MEDIUM:
            return np.abs(value)
        return np.abs(np.real(value))


def format_history(history: Sequence[str]) -> str:
    return "(" + ", ".join(history) + ")"


@dataclass(frozen=True, eq=False)
class Event:
    """
    A labeled projector on the full layout.

    ### Parameters
    `label` : str
        Event label, unique within its time slot.
    `projector` : Operator
        Projector on the layout of the family.
    `synthetic` : bool
        True for the remainder event that completes a slot to the identity.
    """

    label: str
    projector: Operator
    synthetic: bool = False

    def __post_init__(self):
        if not isinstance(self.label, str) or len(self.label) == 0:
            raise ValueError(f"Expected event label to be a non-empty string, got {self.label!r}.")
        if not isinstance(self.projector, Operator):
            raise TypeError(f"Expected Operator for event '{self.label}', got {type(self.projector)}.")


@dataclass(frozen=True, eq=False)
class TimeSlot:
    """
    A set of mutually orthogonal events at one time. If the event projectors do not sum to the identity, a synthetic
    `REST` event with the remaining projector is appended.

    ### Parameters
    `label` : str
        Slot label, e.g. `t1`.
    `events` : Sequence[Union[Event, Tuple[str, Operator]]]
        The events, as `Event` objects or `(label, projector)` pairs.
    `aliases` : Mapping[str, Sequence[str]]
        Coarse-grained names for unions of events in this slot, e.g. `X_b -> (X_aX_b, Z_aX_b)`.
    `tol` : Optional[float]
        Tolerance of the projector and orthogonality checks. Defaults to `hilbert.tol`.
    """

    label: str
    events: Tuple[Event, ...]
    aliases: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    tol: Optional[float] = None

    def __post_init__(self):
        if self.tol is None:
            object.__setattr__(self, "tol", tolerance())
        if not isinstance(self.label, str) or len(self.label) == 0:
            raise ValueError(f"Expected slot label to be a non-empty string, got {self.label!r}.")
        events = [ev if isinstance(ev, Event) else Event(*ev) for ev in self.events]
        if len(events) == 0:
            raise ValueError(f"Slot '{self.label}' has no events.")

        layout = events[0].projector.layout
        labels = [ev.label for ev in events]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Event labels of slot '{self.label}' must be unique, got {labels}.")
        for ev in events:
            if ev.projector.layout != layout:
                raise LayoutError(f"Event '{ev.label}' of slot '{self.label}' lives on a different layout.")
            check = is_projector(ev.projector, self.tol)
            if not check:
                raise ValueError(
                    f"Event '{ev.label}' of slot '{self.label}' is not a projector "
                    f"(deviation {check.max_deviation:.3e})."
                )
        for i, j in product(range(len(events)), repeat=2):
            if i < j:
                overlap = float(np.abs(events[i].projector.matrix @ events[j].projector.matrix).max())
                if overlap > self.tol:
                    raise ValueError(
                        f"Events '{events[i].label}' and '{events[j].label}' of slot '{self.label}' are not "
                        f"orthogonal (overlap {overlap:.3e})."
                    )

        remainder = np.eye(layout.total_dim) - sum(ev.projector.matrix for ev in events)
        if np.abs(remainder).max() > self.tol:
            rest = Operator(layout, remainder)
            if not is_projector(rest, self.tol):
                raise ValueError(f"Events of slot '{self.label}' sum to more than the identity.")
            if REST in labels:
                raise ValueError(f"Slot '{self.label}' uses the reserved label '{REST}' but does not sum to the identity.")
            events.append(Event(REST, rest, synthetic=True))
            logger.debug(f"Slot '{self.label}' completed with a '{REST}' event of rank {round(rest.trace.real)}.")
        object.__setattr__(self, "events", tuple(events))

        aliases = {}
        for name, members in dict(self.aliases).items():
            members = (members,) if isinstance(members, str) else tuple(members)
            if name in self.labels:
                raise ValueError(f"Alias '{name}' of slot '{self.label}' shadows an event label.")
            unknown = [m for m in members if m not in self.labels]
            if unknown or len(members) == 0:
                raise KeyError(f"Alias '{name}' of slot '{self.label}' refers to unknown events {unknown}.")
            aliases[name] = members
        object.__setattr__(self, "aliases", aliases)

    @property
    def layout(self) -> SystemLayout:
        return self.events[0].projector.layout

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(ev.label for ev in self.events)

    @property
    def has_rest(self) -> bool:
        return self.events[-1].synthetic

    def event(self, label: str) -> Event:
        for ev in self.events:
            if ev.label == label:
                return ev
        raise KeyError(f"Unknown event '{label}' in slot '{self.label}', expected one of {list(self.labels)}.")

    def __contains__(self, label: str) -> bool:
        return label in self.labels or label in self.aliases

    def resolve(self, label: str) -> FrozenSet[str]:
        """The event labels a label or alias stands for."""
        if label in self.aliases:
            return frozenset(self.aliases[label])
        self.event(label)
        return frozenset([label])


@dataclass(frozen=True, eq=False)
class HistoryFamily:
    """
    A family of histories: an initial state followed by alternating unitary steps and time slots.

    ### Parameters
    `layout` : SystemLayout
        The composite system.
    `initial_state` : Ket
        Normalized initial state.
    `slots` : Sequence[TimeSlot]
        Time slots in temporal order.
    `unitaries` : Sequence[Operator]
        One unitary per interval; `unitaries[k]` acts just before `slots[k]`.
    `name` : str
        Name used in reports.
    """

    layout: SystemLayout
    initial_state: Ket
    slots: Tuple[TimeSlot, ...]
    unitaries: Tuple[Operator, ...]
    name: str = "family"

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "unitaries", tuple(self.unitaries))
        if len(self.slots) < 1:
            raise ValueError("A history family needs at least one time slot.")
        if len(self.unitaries) != len(self.slots):
            raise ValueError(f"Expected {len(self.slots)} unitaries (one per interval), got {len(self.unitaries)}.")
        if self.initial_state.layout != self.layout:
            raise LayoutError(f"Initial state lives on {self.initial_state.layout}, expected {self.layout}.")
        if abs(self.initial_state.norm - 1.0) > tolerance():
            raise ValueError(f"Initial state must be normalized, got norm {self.initial_state.norm:.12g}.")
        for k, u in enumerate(self.unitaries):
            if u.layout != self.layout:
                raise LayoutError(f"Unitary {k} lives on {u.layout}, expected {self.layout}.")
            deviation = u.unitary_deviation()
            if deviation > tolerance():
                raise ValueError(f"Operator {k} is not unitary (deviation {deviation:.3e}).")
        labels = [slot.label for slot in self.slots]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Slot labels must be unique, got {labels}.")
        for slot in self.slots:
            if slot.layout != self.layout:
                raise LayoutError(f"Slot '{slot.label}' lives on {slot.layout}, expected {self.layout}.")

    @property
    def slot_labels(self) -> Tuple[str, ...]:
        return tuple(slot.label for slot in self.slots)

    def slot_index(self, label: str) -> int:
        try:
            return self.slot_labels.index(label)
        except ValueError:
            raise KeyError(f"Unknown slot '{label}' in family '{self.name}', expected one of {list(self.slot_labels)}.")

    def slot(self, label: str) -> TimeSlot:
        return self.slots[self.slot_index(label)]

    def histories(self) -> Iterator[History]:
        """All histories in lexicographic slot order."""
        return product(*(slot.labels for slot in self.slots))

    def check_history(self, history: Sequence[str]) -> History:
        history = tuple(history)
        if len(history) != len(self.slots):
            raise ValueError(f"Expected a history with {len(self.slots)} events, got {format_history(history)}.")
        for slot, label in zip(self.slots, history):
            slot.event(label)
        return history

    def locate(self, label: str) -> str:
        """Label of the latest slot holding an event or alias called `label`."""
        for slot in reversed(self.slots):
            if label in slot:
                return slot.label
        raise KeyError(f"No slot of family '{self.name}' has an event called '{label}'.")

    def __repr__(self) -> str:
        return f"HistoryFamily(name={self.name!r}, layout={self.layout}, slots={list(self.slot_labels)})"


@lru_cache(maxsize=64)
def _prefix_kets(family: HistoryFamily) -> Dict[History, np.ndarray]:
    """Chain kets of every history prefix, sharing work between histories with a common prefix."""
    kets = {(): family.initial_state.amplitudes}
    frontier: List[History] = [()]
    for slot, unitary in zip(family.slots, family.unitaries):
        next_frontier = []
        for prefix in frontier:
            evolved = unitary.matrix @ kets[prefix]
            for ev in slot.events:
                kets[prefix + (ev.label,)] = ev.projector.matrix @ evolved
                next_frontier.append(prefix + (ev.label,))
        frontier = next_frontier
    logger.debug(f"Computed {len(frontier)} chain kets of dimension {family.layout.total_dim} for '{family.name}'.")
    return kets


def chain_ket(family: HistoryFamily, h: Sequence[str]) -> Ket:
    """
    The chain ket `K(h) = P_n U_n ... P_1 U_1 |Psi_0>` of a history.

    ### Parameters
    `family` : HistoryFamily
        The family the history belongs to.
    `h` : Sequence[str]
        One event label per slot.
    """
    h = family.check_history(h)
    return Ket(family.layout, _prefix_kets(family)[h])


def prefix_probability(family: HistoryFamily, prefix: Sequence[str]) -> float:
    """Squared norm of the chain ket of a history prefix."""
    prefix = tuple(prefix)
    if len(prefix) > len(family.slots):
        raise ValueError(f"Prefix {format_history(prefix)} is longer than the family.")
    for slot, label in zip(family.slots, prefix):
        slot.event(label)
    return float(np.vdot(_prefix_kets(family)[prefix], _prefix_kets(family)[prefix]).real)


@dataclass(frozen=True)
class Violation:
    """An off-diagonal decoherence entry above the tolerance."""

    first: History
    second: History
    value: complex
    magnitude: float


@dataclass(frozen=True, eq=False)
class DecoherenceReport:
    """
    The decoherence functional of a family together with the outcome of a consistency check.

    ### Parameters
    `family_name` : str
        Name of the checked family.
    `histories` : Tuple[History, ...]
        Row and column order of `matrix`.
    `matrix` : np.ndarray
        `matrix[i, j] = D(histories[i], histories[j]) = <K(histories[j])|K(histories[i])>`.
    `mode` : ConsistencyMode
        Condition used for the check.
    `tol` : float
        Tolerance used for the check.
    `violations` : Tuple[Violation, ...]
        Offending pairs `i < j`, largest first.
    """

    family_name: str
    histories: Tuple[History, ...]
    matrix: np.ndarray
    mode: ConsistencyMode
    tol: float
    violations: Tuple[Violation, ...]

    @property
    def consistent(self) -> bool:
        return len(self.violations) == 0

    def __bool__(self) -> bool:
        return self.consistent

    @property
    def max_off_diagonal(self) -> float:
        off = self.mode.measure(self.matrix - np.diag(np.diag(self.matrix)))
        return float(off.max()) if off.size else 0.0

    def entry(self, alpha: Sequence[str], beta: Sequence[str]) -> complex:
        return complex(self.matrix[self.histories.index(tuple(alpha)), self.histories.index(tuple(beta))])

    def probabilities(self) -> Dict[History, float]:
        """Diagonal entries, i.e. the history weights."""
        return {h: float(self.matrix[i, i].real) for i, h in enumerate(self.histories)}


@lru_cache(maxsize=64)
def _gram(family: HistoryFamily) -> Tuple[Tuple[History, ...], np.ndarray]:
    histories = tuple(family.histories())
    kets = _prefix_kets(family)
    columns = np.column_stack([kets[h] for h in histories])
    # row alpha, column beta holds <K(beta)|K(alpha)>
    matrix = (columns.conj().T @ columns).T
    matrix.flags.writeable = False
    logger.debug(f"Decoherence matrix of '{family.name}' has shape {matrix.shape}.")
    return histories, matrix


def _resolve_mode(mode: Optional[Union[str, ConsistencyMode]]) -> ConsistencyMode:
    if mode is None:
        mode = default("consistency", "mode")
    if isinstance(mode, ConsistencyMode):
        return mode
    try:
        return ConsistencyMode(mode)
    except ValueError:
        raise ValueError(f"Unknown consistency mode '{mode}', expected one of {[m.value for m in ConsistencyMode]}.")


@lru_cache(maxsize=256)
def _report(family: HistoryFamily, mode: ConsistencyMode, tol: float) -> DecoherenceReport:
    histories, matrix = _gram(family)
    measure = mode.measure(matrix)
    rows, cols = np.triu_indices(len(histories), k=1)
    offending = [(float(measure[i, j]), i, j) for i, j in zip(rows, cols) if measure[i, j] > tol]
    offending.sort(key=lambda item: (-item[0], item[1], item[2]))
    violations = tuple(
        Violation(histories[i], histories[j], complex(matrix[i, j]), magnitude) for magnitude, i, j in offending
    )
    return DecoherenceReport(family.name, histories, matrix, mode, tol, violations)


def decoherence_matrix(family: HistoryFamily) -> DecoherenceReport:
    """
    The full decoherence functional of a family, evaluated against the configured default condition.
    """
    return check_consistency(family)


def check_consistency(
    family: HistoryFamily, mode: Optional[Union[str, ConsistencyMode]] = None, tol: Optional[float] = None
) -> DecoherenceReport:
    """
    Check that every off-diagonal entry of the decoherence functional vanishes.

    ### Parameters
    `family` : HistoryFamily
        The family to check.
    `mode` : Optional[Union[str, ConsistencyMode]]
        `medium` bounds `|D|`, `weak` bounds `|Re D|`. Defaults to the configured mode.
    `tol` : Optional[float]
        Largest accepted off-diagonal magnitude. Defaults to the configured tolerance.

    ### Returns
    `DecoherenceReport`
        Truthy iff the family is consistent; violations sorted by magnitude, largest first.
    """
    mode = _resolve_mode(mode)
    tol = float(default("consistency", "tol") if tol is None else tol)
    if tol < 0:
        raise ValueError(f"Tolerance must be non-negative, got {tol}.")
    report = _report(family, mode, tol)
    if report.consistent:
        logger.debug(f"Family '{family.name}' is consistent ({mode.value}, tol={tol:g}).")
    else:
        logger.info(f"Family '{family.name}' has {len(report.violations)} consistency violations ({mode.value}).")
    return report


def _require_consistent(family: HistoryFamily, mode, tol) -> DecoherenceReport:
    report = check_consistency(family, mode, tol)
    if not report.consistent:
        raise InconsistentFamilyError(report)
    return report


def history_probability(
    family: HistoryFamily,
    h: Sequence[str],
    mode: Optional[Union[str, ConsistencyMode]] = None,
    tol: Optional[float] = None,
) -> float:
    """
    Probability `||K(h)||^2` of a history. Refused with `InconsistentFamilyError` if the family is not consistent.
    """
    h = family.check_history(h)
    _require_consistent(family, mode, tol)
    ket = _prefix_kets(family)[h]
    return float(np.vdot(ket, ket).real)


def history_table(
    family: HistoryFamily, mode: Optional[Union[str, ConsistencyMode]] = None, tol: Optional[float] = None
) -> Dict[History, float]:
    """
    Probabilities of all histories of a consistent family, in lexicographic slot order.
    """
    probabilities = _require_consistent(family, mode, tol).probabilities()
    rest_weight = sum(p for h, p in probabilities.items() if REST in h)
    if rest_weight > default("tree", "prune_tol"):
        logger.warning(f"Synthesized '{REST}' events of family '{family.name}' carry probability {rest_weight:.6g}.")
    return probabilities


def conditional_weights(
    probabilities: Mapping[History, float],
    given: Mapping[int, FrozenSet[str]],
    target: int,
    labels: Sequence[str],
) -> Dict[str, float]:
    """
    Unnormalized weights of each label at position `target`, summed over histories matching `given`.

    ### Parameters
    `probabilities` : Mapping[History, float]
        Probability of each full history.
    `given` : Mapping[int, FrozenSet[str]]
        Allowed labels per slot position.
    `target` : int
        Slot position to marginalize onto.
    `labels` : Sequence[str]
        Labels of the target slot, fixing the order of the result.
    """
    weights = {label: 0.0 for label in labels}
    for history, p in probabilities.items():
        if all(history[k] in allowed for k, allowed in given.items()):
            weights[history[target]] += p
    return weights


def normalize(weights: Mapping[str, float], what: str) -> Dict[str, float]:
    total = sum(weights.values())
    if total <= default("tree", "prune_tol"):
        raise ZeroConditionProbabilityError(f"The condition {what} has zero probability.")
    return {label: w / total for label, w in weights.items()}


def resolve_given(family: HistoryFamily, given: Mapping[str, str]) -> Dict[int, FrozenSet[str]]:
    """Map `{slot label: event label or alias}` to allowed event labels per slot position."""
    return {family.slot_index(slot): family.slot(slot).resolve(label) for slot, label in given.items()}


def conditional_distribution(
    family: HistoryFamily,
    given: Mapping[str, str],
    target_slot: str,
    mode: Optional[Union[str, ConsistencyMode]] = None,
    tol: Optional[float] = None,
) -> Dict[str, float]:
    """
    Distribution over the events of `target_slot` conditioned on a partial event assignment.

    ### Parameters
    `family` : HistoryFamily
        A consistent family.
    `given` : Mapping[str, str]
        Slot label to event label (or alias) for each conditioning event. May be empty.
    `target_slot` : str
        The slot whose distribution is returned.
    """
    allowed = resolve_given(family, given)
    target = family.slot_index(target_slot)
    weights = conditional_weights(history_table(family, mode, tol), allowed, target, family.slot(target_slot).labels)
    return normalize(weights, "{" + ", ".join(f"{s}={e}" for s, e in given.items()) + "}")


class BranchTree:
    """
    Tree of history prefixes stored as a `networkx.DiGraph`. Nodes are keyed by prefix tuples (the root is the empty
    tuple) and carry the attributes `label`, `slot` and `probability` (absolute). Edges carry the conditional
    probability of the child given its parent as `conditional`.

    ### Parameters
    `graph` : nx.DiGraph
        The tree.
    `slots` : Sequence[str]
        Slot labels, one per tree level below the root.
    `name` : str
        Name used in reports.
    """

    def __init__(self, graph: nx.DiGraph, slots: Sequence[str], name: str = "tree"):
        if graph.number_of_nodes() > 0 and (() not in graph or not nx.is_arborescence(graph)):
            raise ValueError("Expected a tree rooted at the empty prefix.")
        self.graph = graph
        self.slots = tuple(slots)
        self.name = name

    root: History = ()

    def __contains__(self, prefix: Sequence[str]) -> bool:
        return tuple(prefix) in self.graph

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def children(self, prefix: Sequence[str]) -> List[History]:
        return list(self.graph.successors(tuple(prefix)))

    def probability(self, prefix: Sequence[str]) -> float:
        return self.graph.nodes[tuple(prefix)]["probability"]

    def conditional(self, prefix: Sequence[str]) -> float:
        prefix = tuple(prefix)
        if prefix == ():
            return 1.0
        return self.graph.edges[prefix[:-1], prefix]["conditional"]

    def label(self, prefix: Sequence[str]) -> str:
        return self.graph.nodes[tuple(prefix)]["label"]

    def nodes(self) -> Iterator[History]:
        """Prefixes in depth-first order, children in slot order."""
        return nx.dfs_preorder_nodes(self.graph, source=())

    def leaves(self) -> List[History]:
        return [node for node in self.nodes() if self.graph.out_degree(node) == 0]

    def labels_at(self, depth: int) -> Tuple[str, ...]:
        """Distinct labels of the nodes at a depth (1 is the first slot), in depth-first order."""
        labels: List[str] = []
        for node in self.nodes():
            if len(node) == depth and node[-1] not in labels:
                labels.append(node[-1])
        return tuple(labels)

    def leaf_probabilities(self) -> Dict[History, float]:
        """Absolute probabilities of the full-depth leaves."""
        return {leaf: self.probability(leaf) for leaf in self.leaves() if len(leaf) == len(self.slots)}

    def add_node(self, prefix: History, probability: float, conditional: float):
        label = prefix[-1] if prefix else ROOT_LABEL
        slot = self.slots[len(prefix) - 1] if prefix else None
        self.graph.add_node(prefix, label=label, slot=slot, probability=probability)
        if prefix:
            self.graph.add_edge(prefix[:-1], prefix, conditional=conditional)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, nodes={len(self)}, slots={list(self.slots)})"


def branch_tree(
    family: HistoryFamily,
    prune_tol: Optional[float] = None,
    mode: Optional[Union[str, ConsistencyMode]] = None,
    tol: Optional[float] = None,
) -> BranchTree:
    """
    Tree of all history prefixes of a consistent family whose probability exceeds `prune_tol`.

    ### Parameters
    `family` : HistoryFamily
        A consistent family.
    `prune_tol` : Optional[float]
        Prefixes with probability at or below this value are omitted. Defaults to the configured value.
    """
    prune_tol = default("tree", "prune_tol") if prune_tol is None else prune_tol
    _require_consistent(family, mode, tol)
    kets = _prefix_kets(family)

    tree = BranchTree(nx.DiGraph(), family.slot_labels, family.name)
    tree.add_node((), 1.0, 1.0)
    if 1.0 <= prune_tol:
        return tree

    frontier: List[History] = [()]
    for slot in family.slots:
        next_frontier = []
        for prefix in frontier:
            parent_p = tree.probability(prefix)
            for ev in slot.events:
                child = prefix + (ev.label,)
                p = float(np.vdot(kets[child], kets[child]).real)
                if p <= prune_tol:
                    continue
                if ev.synthetic:
                    logger.warning(f"'{REST}' branch after {format_history(prefix)} has probability {p:.6g}.")
                tree.add_node(child, p, p / parent_p)
                next_frontier.append(child)
        frontier = next_frontier
    logger.debug(f"Branch tree of '{family.name}' has {len(tree)} nodes.")
    return tree
