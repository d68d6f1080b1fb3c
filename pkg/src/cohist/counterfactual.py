"""
Pivot-based counterfactual reasoning over consistent families and classical trees.

The actual world and the counterfactual world share every event up to and including the pivot slot. The actual
outcome fixes a posterior over those shared prefixes; the counterfactual branch then replaces the event of a later
slot (the swap) and the outcome distribution is propagated forward from each prefix, weighted by its posterior.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx

from cohist.histories import (
    ROOT_LABEL,
    BranchTree,
    ConsistencyMode,
    History,
    HistoryFamily,
    InconsistentFamilyError,
    ZeroConditionProbabilityError,
    conditional_weights,
    format_history,
    history_table,
    normalize,
)
from cohist.params import default
from cohist.scenarios.notation import canonical_label, normalize_label

logger = logging.getLogger(__name__)

Source = Union[HistoryFamily, BranchTree]


class UnreachableBranchError(Exception):
    """Raised when the swapped branch has zero probability from every pivot prefix the actual outcome supports."""


class Classification(Enum):
    STRICT = "strict"
    WEAK = "weak"
    UNDEFINED = "undefined"


class SRKind(Enum):
    STRICT = "STRICT"
    WEAK = "WEAK"
    UNDERIVABLE = "UNDERIVABLE"

    @property
    def derivable(self) -> bool:
        return self is not SRKind.UNDERIVABLE


@dataclass(frozen=True)
class _Worlds:
    """Probabilities of complete histories together with the slot structure needed to condition on them."""

    name: str
    slots: Tuple[str, ...]
    labels: Tuple[Tuple[str, ...], ...]
    aliases: Tuple[Mapping[str, Tuple[str, ...]], ...]
    probabilities: Mapping[History, float]

    def index(self, slot: str) -> int:
        try:
            return self.slots.index(slot)
        except ValueError:
            raise KeyError(f"Unknown slot '{slot}' in '{self.name}', expected one of {list(self.slots)}.")

    def resolve(self, k: int, label: str) -> FrozenSet[str]:
        label = normalize_label(label)
        if label in self.aliases[k]:
            return frozenset(self.aliases[k][label])
        if label in self.labels[k]:
            return frozenset([label])
        raise KeyError(f"Unknown event '{label}' in slot '{self.slots[k]}', expected one of {list(self.labels[k])}.")

    def locate(self, label: str) -> int:
        label = normalize_label(label)
        for k in reversed(range(len(self.slots))):
            if label in self.labels[k] or label in self.aliases[k]:
                return k
        raise KeyError(f"No slot of '{self.name}' has an event called '{label}'.")

    def assignment(self, actual: Union[str, Mapping[str, str]]) -> Dict[int, FrozenSet[str]]:
        if isinstance(actual, str):
            k = self.locate(actual)
            return {k: self.resolve(k, actual)}
        if len(actual) == 0:
            raise ValueError("The actual world needs at least one event.")
        return {self.index(slot): self.resolve(self.index(slot), label) for slot, label in actual.items()}

    @classmethod
    def of(cls, source: Source, mode=None, tol=None) -> "_Worlds":
        if isinstance(source, HistoryFamily):
            return cls(
                source.name,
                source.slot_labels,
                tuple(slot.labels for slot in source.slots),
                tuple(slot.aliases for slot in source.slots),
                history_table(source, mode, tol),
            )
        if isinstance(source, BranchTree):
            depth = len(source.slots)
            return cls(
                source.name,
                source.slots,
                tuple(source.labels_at(k + 1) for k in range(depth)),
                tuple({} for _ in range(depth)),
                source.leaf_probabilities(),
            )
        raise TypeError(f"Expected HistoryFamily or BranchTree, got {type(source)}.")


@dataclass(frozen=True)
class CounterfactualQuery:
    """
    A counterfactual question about a family or tree.

    ### Parameters
    `source` : Union[HistoryFamily, BranchTree]
        The consistent family (or tree) both worlds belong to.
    `actual` : Union[str, Mapping[str, str]]
        The actual outcome, either an event label (located in the latest slot holding it) or a partial assignment
        `{slot: event}`.
    `pivot_slot` : Optional[str]
        Last slot shared by both worlds. `None` shares only the initial state.
    `swap` : Tuple[str, str]
        `(slot, event)` replacing the actual event of that slot in the counterfactual world.
    `outcome_slot` : Optional[str]
        Slot whose distribution is reported. Defaults to the latest slot of the actual outcome.
    `mode` : Optional[str]
        Consistency condition, defaults to the configured one.
    `tol` : Optional[float]
        Consistency tolerance, defaults to the configured one.
    """

    source: Source
    actual: Union[str, Mapping[str, str]]
    pivot_slot: Optional[str]
    swap: Tuple[str, str]
    outcome_slot: Optional[str] = None
    mode: Optional[Union[str, ConsistencyMode]] = None
    tol: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.source, (HistoryFamily, BranchTree)):
            raise TypeError(f"Expected HistoryFamily or BranchTree, got {type(self.source)}.")
        swap = tuple(self.swap)
        if len(swap) != 2 or not all(isinstance(s, str) for s in swap):
            raise ValueError(f"Expected swap as (slot, event), got {self.swap!r}.")
        object.__setattr__(self, "swap", swap)
        if not isinstance(self.actual, str):
            object.__setattr__(self, "actual", dict(self.actual))


@dataclass(frozen=True)
class CounterfactualResult:
    """
    Outcome of a `CounterfactualQuery`.

    ### Parameters
    `pivot_posterior` : Dict[str, float]
        Distribution over the pivot slot's events given the actual outcome (`{Psi_0: 1}` for the root pivot).
    `prefix_posterior` : Dict[History, float]
        Posterior over shared prefixes actually propagated, after dropping unreachable ones.
    `outcome_slot` : str
        Slot of `outcome_distribution`.
    `outcome_distribution` : Dict[str, float]
        Distribution over the outcome slot's events in the counterfactual world. Empty if undefined.
    `classification` : Classification
        STRICT if `probability >= 1 - threshold`, WEAK otherwise, UNDEFINED if the swapped branch is unreachable.
    `event` : Optional[str]
        The most probable outcome event.
    `probability` : Optional[float]
        Its probability.
    `dropped` : Tuple[History, ...]
        Prefixes from which the swapped branch is unreachable.
    """

    query: CounterfactualQuery
    pivot_posterior: Dict[str, float]
    prefix_posterior: Dict[History, float]
    outcome_slot: str
    outcome_distribution: Dict[str, float]
    classification: Classification
    event: Optional[str] = None
    probability: Optional[float] = None
    dropped: Tuple[History, ...] = ()


def _pivot_marginal(worlds: _Worlds, pivot: int, posterior: Mapping[History, float]) -> Dict[str, float]:
    if pivot < 0:
        return {ROOT_LABEL: 1.0}
    marginal = {label: 0.0 for label in worlds.labels[pivot]}
    for prefix, p in posterior.items():
        marginal[prefix[pivot]] += p
    return marginal


def pivot_posterior(
    source: Source,
    actual: Union[str, Mapping[str, str]],
    pivot_slot: str,
    mode: Optional[Union[str, ConsistencyMode]] = None,
    tol: Optional[float] = None,
) -> Dict[str, float]:
    """
    Distribution over the events of `pivot_slot` given the actual outcome.

    ### Parameters
    `source` : Union[HistoryFamily, BranchTree]
        A consistent family or a tree.
    `actual` : Union[str, Mapping[str, str]]
        The actual outcome as an event label or a partial assignment.
    `pivot_slot` : str
        The slot to trace back to.
    """
    worlds = _Worlds.of(source, mode, tol)
    given = worlds.assignment(actual)
    pivot = worlds.index(pivot_slot)
    weights = conditional_weights(worlds.probabilities, given, pivot, worlds.labels[pivot])
    return normalize(weights, f"{actual!r}")


def counterfactual_query(q: CounterfactualQuery, raise_unreachable: bool = True, threshold: Optional[float] = None):
    """
    Answer a counterfactual query: trace the actual outcome back to the pivot, switch to the swapped branch and
    propagate forward.

    ### Parameters
    `q` : CounterfactualQuery
        The query.
    `raise_unreachable` : bool
        If True, an unreachable swapped branch raises `UnreachableBranchError`; otherwise the result is UNDEFINED.
    `threshold` : Optional[float]
        An outcome with probability at least `1 - threshold` is certain. Defaults to the configured value.

    ### Returns
    `CounterfactualResult`
    """
    threshold = default("counterfactual", "strict_threshold") if threshold is None else threshold
    zero = default("tree", "prune_tol")

    worlds = _Worlds.of(q.source, q.mode, q.tol)
    actual = worlds.assignment(q.actual)
    outcome = worlds.index(q.outcome_slot) if q.outcome_slot is not None else max(actual)
    pivot = worlds.index(q.pivot_slot) if q.pivot_slot is not None else -1
    swap_slot = worlds.index(q.swap[0])
    swap_events = worlds.resolve(swap_slot, q.swap[1])

    if not pivot < swap_slot:
        raise ValueError(f"The pivot slot '{q.pivot_slot}' must come strictly before the swap slot '{q.swap[0]}'.")
    if swap_slot > outcome:
        raise ValueError(f"The swap slot '{q.swap[0]}' must not come after the outcome slot '{worlds.slots[outcome]}'.")

    # backward step: posterior over the prefixes both worlds share
    weights: Dict[History, float] = defaultdict(float)
    for history, p in worlds.probabilities.items():
        if all(history[k] in allowed for k, allowed in actual.items()):
            weights[history[: pivot + 1]] += p
    total = sum(weights.values())
    if total <= zero:
        raise ZeroConditionProbabilityError(f"The actual outcome {q.actual!r} has zero probability in '{worlds.name}'.")
    posterior = {prefix: w / total for prefix, w in weights.items() if w > zero}
    pivot_marginal = _pivot_marginal(worlds, pivot, {prefix: w / total for prefix, w in weights.items()})

    # forward step from each prefix into the swapped branch
    outcome_labels = worlds.labels[outcome]
    forward: Dict[History, Dict[str, float]] = {}
    dropped: List[History] = []
    for prefix in posterior:
        given = {k: frozenset([label]) for k, label in enumerate(prefix)}
        given[swap_slot] = swap_events
        branch = conditional_weights(worlds.probabilities, given, outcome, outcome_labels)
        branch_total = sum(branch.values())
        if branch_total <= zero:
            dropped.append(prefix)
            continue
        forward[prefix] = {label: w / branch_total for label, w in branch.items()}

    if len(forward) == 0:
        message = (
            f"The swapped branch {q.swap[0]}={q.swap[1]} of '{worlds.name}' is unreachable from every pivot prefix "
            f"{[format_history(p) for p in posterior]}."
        )
        if raise_unreachable:
            raise UnreachableBranchError(message)
        logger.warning(message)
        return CounterfactualResult(
            q, pivot_marginal, {}, worlds.slots[outcome], {}, Classification.UNDEFINED, dropped=tuple(dropped)
        )

    if dropped:
        logger.warning(
            f"Dropped unreachable pivot prefixes {[format_history(p) for p in dropped]}; renormalizing the posterior."
        )
    kept = sum(posterior[prefix] for prefix in forward)
    posterior = {prefix: posterior[prefix] / kept for prefix in forward}

    distribution = {label: 0.0 for label in outcome_labels}
    for prefix, p in posterior.items():
        for label, pe in forward[prefix].items():
            distribution[label] += p * pe

    event = max(distribution, key=distribution.get)
    probability = distribution[event]
    classification = Classification.STRICT if probability >= 1.0 - threshold else Classification.WEAK
    logger.debug(f"Counterfactual on '{worlds.name}': {classification.value} {event} with probability {probability:.12g}.")
    return CounterfactualResult(
        q,
        pivot_marginal,
        posterior,
        worlds.slots[outcome],
        distribution,
        classification,
        event,
        probability,
        tuple(dropped),
    )


@dataclass(frozen=True)
class SRStatus:
    """
    Whether a family supports the claim "had the other setting been chosen, the outcome would have been X_b^+".

    ### Parameters
    `kind` : SRKind
        STRICT, WEAK or UNDERIVABLE.
    `event` : str
        The outcome event the claim is about.
    `probability` : Optional[float]
        Counterfactual probability of `event`, None if underivable.
    `reason` : Optional[str]
        Why the claim is underivable.
    """

    kind: SRKind
    event: str
    probability: Optional[float] = None
    reason: Optional[str] = None

    @property
    def derivable(self) -> bool:
        return self.kind.derivable

    def __str__(self) -> str:
        if self.kind is SRKind.UNDERIVABLE:
            return f"UNDERIVABLE: {self.reason}"
        return f"{self.kind.value}: {self.event} with probability {self.probability:.12g}"


def _family_label(family: HistoryFamily, label: str) -> str:
    label = normalize_label(label)
    if any(label in slot for slot in family.slots):
        return label
    alias = canonical_label(label)
    if alias is not None and any(alias in slot for slot in family.slots):
        return alias
    raise KeyError(f"Family '{family.name}' has no event '{label}'.")


def sr_status(
    family: HistoryFamily,
    actual: str = "Z_b^-",
    swap: Tuple[str, str] = ("t2", "X_b"),
    pivot_slot: Optional[str] = "t1",
    outcome: str = "X_b^+",
    threshold: Optional[float] = None,
    mode: Optional[Union[str, ConsistencyMode]] = None,
    tol: Optional[float] = None,
) -> SRStatus:
    """
    Classify the claim that, given the actual outcome, the swapped setting would have produced `outcome`.

    Labels may be given in any supported notation. A query that cannot be carried out because the family is
    inconsistent, the actual outcome is impossible, or the swapped branch is unreachable makes the claim UNDERIVABLE.

    ### Parameters
    `family` : HistoryFamily
        The framework.
    `actual` : str
        The actual outcome event.
    `swap` : Tuple[str, str]
        `(slot, event)` of the counterfactual setting.
    `pivot_slot` : Optional[str]
        The pivot slot.
    `outcome` : str
        The event whose counterfactual certainty is tested.
    `threshold` : Optional[float]
        STRICT iff the probability of `outcome` is at least `1 - threshold`.

    ### Raises
    `KeyError`
        If a slot or event label does not exist in the family.
    """
    threshold = default("counterfactual", "strict_threshold") if threshold is None else threshold
    actual = _family_label(family, actual)
    outcome = _family_label(family, outcome)
    swap_slot = family.slot(swap[0])
    swap_event = normalize_label(swap[1])
    if swap_event not in swap_slot:
        swap_event = _family_label(family, swap_event)
        swap_slot.resolve(swap_event)
    if pivot_slot is not None:
        family.slot(pivot_slot)

    query = CounterfactualQuery(family, actual, pivot_slot, (swap[0], swap_event), mode=mode, tol=tol)
    try:
        result = counterfactual_query(query, threshold=threshold)
    except (InconsistentFamilyError, ZeroConditionProbabilityError, UnreachableBranchError) as e:
        logger.info(f"SR is underivable in '{family.name}': {e}")
        return SRStatus(SRKind.UNDERIVABLE, outcome, reason=str(e))

    outcome_slot = family.slot(result.outcome_slot)
    if outcome not in outcome_slot:
        raise KeyError(f"Event '{outcome}' is not an outcome of slot '{result.outcome_slot}'.")
    p = sum(result.outcome_distribution[label] for label in outcome_slot.resolve(outcome))
    kind = SRKind.STRICT if p >= 1.0 - threshold else SRKind.WEAK
    return SRStatus(kind, outcome, p)


@dataclass(frozen=True)
class FrameworkConventionReport:
    """
    SR statuses of several frameworks, aggregated under the convention that a counterfactual holds if at least one
    framework and pivot justify it.
    """

    statuses: Mapping[str, SRStatus]
    strict: Tuple[str, ...] = field(init=False)
    weak: Tuple[str, ...] = field(init=False)
    underivable: Tuple[str, ...] = field(init=False)

    def __post_init__(self):
        for kind, attr in ((SRKind.STRICT, "strict"), (SRKind.WEAK, "weak"), (SRKind.UNDERIVABLE, "underivable")):
            object.__setattr__(self, attr, tuple(name for name, s in self.statuses.items() if s.kind is kind))

    @property
    def holds(self) -> bool:
        return len(self.strict) > 0


def at_least_one_framework(statuses: Mapping[str, SRStatus]) -> FrameworkConventionReport:
    """
    Aggregate per-framework SR statuses. Per-framework results are reported unchanged.

    ### Parameters
    `statuses` : Mapping[str, SRStatus]
        SR status per framework name.
    """
    if len(statuses) == 0:
        raise ValueError("Expected at least one framework.")
    return FrameworkConventionReport(dict(statuses))


Branching = Union[Mapping[str, float], Callable[[History], Mapping[str, float]]]


class ClassicalTree(BranchTree):
    """
    A `BranchTree` built directly from stated branching probabilities, without a Hilbert space.
    """

    def __init__(self, graph: nx.DiGraph, slots: Sequence[str], level_labels: Sequence[Sequence[str]], name: str):
        super().__init__(graph, slots, name)
        self.level_labels = tuple(tuple(labels) for labels in level_labels)

    def labels_at(self, depth: int) -> Tuple[str, ...]:
        return self.level_labels[depth - 1]

    @classmethod
    def from_branching(cls, levels: Sequence[Tuple], name: str = "classical") -> "ClassicalTree":
        """
        Build a tree level by level.

        ### Parameters
        `levels` : Sequence[Tuple]
            `(level_name, branching)` or `(level_name, branching, labels)` per level. `branching` maps each child
            label to its conditional probability, or is a callable returning that mapping for a given prefix.
            `labels` fixes the order of the level's labels; by default they are listed in order of appearance.
        `name` : str
            Name used in reports.
        """
        slots = [level[0] for level in levels]
        level_labels: List[List[str]] = []
        tree = cls(nx.DiGraph(), slots, [], name)
        tree.add_node((), 1.0, 1.0)
        frontier: List[History] = [()]
        for level in levels:
            if len(level) not in (2, 3):
                raise ValueError(f"Expected (name, branching[, labels]) per level, got {level!r}.")
            slot, branching = level[0], level[1]
            labels: List[str] = list(level[2]) if len(level) == 3 else []
            next_frontier = []
            for prefix in frontier:
                children = branching(prefix) if callable(branching) else branching
                _check_branching(slot, prefix, children)
                for label, p in children.items():
                    if label not in labels:
                        if len(level) == 3:
                            raise KeyError(f"Label '{label}' is not declared for level '{slot}'.")
                        labels.append(label)
                    if p <= 0:
                        continue
                    child = prefix + (label,)
                    tree.add_node(child, tree.probability(prefix) * p, p)
                    next_frontier.append(child)
            level_labels.append(labels)
            frontier = next_frontier
        tree.level_labels = tuple(tuple(labels) for labels in level_labels)
        return tree


def _check_branching(slot: str, prefix: History, children: Mapping[str, float]):
    if len(children) == 0:
        raise ValueError(f"Level '{slot}' has no children after {format_history(prefix)}.")
    if any(p < 0 for p in children.values()):
        raise ValueError(f"Negative branching probability at level '{slot}' after {format_history(prefix)}.")
    total = sum(children.values())
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"Branching probabilities at level '{slot}' after {format_history(prefix)} sum to {total}.")


def classical_counterfactual(
    tree: BranchTree, actual_leaf: Sequence[str], pivot: Sequence[str], swap: Tuple[str, str]
) -> Dict[str, float]:
    """
    Counterfactual outcome distribution in a classical tree.

    ### Parameters
    `tree` : BranchTree
        The stochastic tree.
    `actual_leaf` : Sequence[str]
        The actual full path from the root.
    `pivot` : Sequence[str]
        A node (path prefix) on the actual path shared by both worlds; `()` is the root.
    `swap` : Tuple[str, str]
        `(level, label)` replaced in the counterfactual world.

    ### Returns
    Dict[str, float]
        Distribution over the labels of the last level.
    """
    actual_leaf, pivot = tuple(actual_leaf), tuple(pivot)
    if actual_leaf not in tree or len(actual_leaf) != len(tree.slots):
        raise KeyError(f"{format_history(actual_leaf)} is not a leaf of '{tree.name}'.")
    if actual_leaf[: len(pivot)] != pivot or len(pivot) >= len(actual_leaf):
        raise ValueError(f"Pivot {format_history(pivot)} is not an ancestor of {format_history(actual_leaf)}.")
    pivot_slot = tree.slots[len(pivot) - 1] if pivot else None
    query = CounterfactualQuery(tree, dict(zip(tree.slots, actual_leaf)), pivot_slot, swap)
    return counterfactual_query(query).outcome_distribution
