"""
Parser and printer for scenario documents (`.qh` files).

A document is a sequence of `;`-terminated declarations:

    system a: dim 2 labels 0 1 ;
    state psi0 on (a, b) = (|0,0> + |0,1> + |1,0>)/sqrt(3) ;
    unitary flip on (a) { |0> -> |1> ; } complete ;
    family f: initial psi0 ; interval flip ; slot t1 { up = proj(|0>) on (a) ; } ;
    query q: counterfactual family f actual up pivot root swap t1=up ;

Comments run from `#` to the end of the line. Basis kets `|l1,l2,...>` take the layout of the enclosing
declaration (the `on (...)` list); `*` between two kets is the tensor product.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from cohist.counterfactual import CounterfactualQuery
from cohist.histories import HistoryFamily, TimeSlot
from cohist.hilbert import (
    Ket,
    LayoutError,
    Operator,
    Subsystem,
    SystemLayout,
    complete_unitary,
    embed,
    projector_from_kets,
    tensor,
)

logger = logging.getLogger(__name__)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_LABEL = re.compile(r"[^\s=;{}(),|]+")
_NUMBER = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

ERROR_KINDS = ("syntax", "unknown-name", "dimension", "rules", "invalid")


class ScenarioSyntaxError(ValueError):
    """
    A scenario document could not be parsed or evaluated.

    ### Parameters
    `message` : str
        What went wrong.
    `line` : int
        1-based line of the offending position.
    `column` : int
        1-based column of the offending position.
    `kind` : str
        One of `syntax`, `unknown-name`, `dimension`, `rules`, `invalid`.
    """

    def __init__(self, message: str, line: int, column: int, kind: str = "syntax"):
        if kind not in ERROR_KINDS:
            raise ValueError(f"Unknown error kind '{kind}', expected one of {ERROR_KINDS}.")
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.kind = kind


# expression tree


@dataclass(frozen=True)
class _Num:
    value: float
    pos: int


@dataclass(frozen=True)
class _Imag:
    pos: int


@dataclass(frozen=True)
class _Sqrt:
    arg: "_Node"
    pos: int


@dataclass(frozen=True)
class _KetLit:
    labels: Tuple[str, ...]
    pos: int


@dataclass(frozen=True)
class _Ref:
    name: str
    pos: int


@dataclass(frozen=True)
class _Unary:
    op: str
    operand: "_Node"
    pos: int


@dataclass(frozen=True)
class _Binary:
    op: str
    left: "_Node"
    right: "_Node"
    pos: int


_Node = Union[_Num, _Imag, _Sqrt, _KetLit, _Ref, _Unary, _Binary]


# document


@dataclass(frozen=True)
class StateDecl:
    name: str
    names: Tuple[str, ...]
    ket: Ket


@dataclass(frozen=True)
class UnitaryDecl:
    name: str
    names: Tuple[str, ...]
    rules: Tuple[Tuple[Ket, Ket], ...]
    operator: Operator


@dataclass(frozen=True)
class ProjectorFactor:
    """`proj(kets) on (names)`, or the identity if `names` is empty."""

    kets: Tuple[Ket, ...]
    names: Tuple[str, ...]


@dataclass(frozen=True)
class SlotDecl:
    label: str
    events: Tuple[Tuple[str, Tuple[ProjectorFactor, ...]], ...]
    aliases: Dict[str, Tuple[str, ...]]


@dataclass(frozen=True)
class FamilyDecl:
    """
    A family declaration with the names it was written with, and the family it builds.

    ### Parameters
    `steps` : Tuple[Tuple[Tuple[str, ...], SlotDecl], ...]
        Per slot, the unitary names of the preceding interval (`()` for the identity) and the slot.
    """

    name: str
    initial: str
    steps: Tuple[Tuple[Tuple[str, ...], SlotDecl], ...]
    family: HistoryFamily


@dataclass(frozen=True)
class QueryDecl:
    name: str
    family: str
    actual: str
    pivot: Optional[str]
    swap: Tuple[str, str]
    query: CounterfactualQuery


@dataclass
class ScenarioDocument:
    """
    All declarations of a scenario document, keyed by name in declaration order.
    """

    systems: Dict[str, Subsystem] = field(default_factory=dict)
    states: Dict[str, StateDecl] = field(default_factory=dict)
    unitaries: Dict[str, UnitaryDecl] = field(default_factory=dict)
    families: Dict[str, FamilyDecl] = field(default_factory=dict)
    queries: Dict[str, QueryDecl] = field(default_factory=dict)

    def family(self, name: Optional[str] = None) -> HistoryFamily:
        """The family called `name`, or the only family of the document."""
        if name is None:
            if len(self.families) != 1:
                raise KeyError(f"Expected exactly one family, the document has {list(self.families)}; pick one by name.")
            return next(iter(self.families.values())).family
        if name not in self.families:
            raise KeyError(f"Unknown family '{name}', expected one of {list(self.families)}.")
        return self.families[name].family

    def query(self, name: str) -> CounterfactualQuery:
        if name not in self.queries:
            raise KeyError(f"Unknown query '{name}', expected one of {list(self.queries)}.")
        return self.queries[name].query

    def __len__(self) -> int:
        return sum(map(len, (self.systems, self.states, self.unitaries, self.families, self.queries)))


class _Parser:
    def __init__(self, text: str):
        self.text = text.replace("−", "-")
        self.pos = 0
        self.doc = ScenarioDocument()

    # low-level scanning

    def error(self, message: str, pos: Optional[int] = None, kind: str = "syntax") -> ScenarioSyntaxError:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        column = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return ScenarioSyntaxError(message, line, column, kind)

    def skip(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "#":
                end = self.text.find("\n", self.pos)
                self.pos = len(self.text) if end < 0 else end
            else:
                break

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)

    def peek(self, literal: str) -> bool:
        self.skip()
        return self.text.startswith(literal, self.pos)

    def accept(self, literal: str) -> bool:
        if self.peek(literal):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.accept(literal):
            raise self.error(f"Expected '{literal}'.")

    def peek_keyword(self, word: str) -> bool:
        self.skip()
        match = _IDENT.match(self.text, self.pos)
        return match is not None and match.group() == word

    def keyword(self, word: str):
        if not self.peek_keyword(word):
            raise self.error(f"Expected '{word}'.")
        self.pos += len(word)

    def ident(self) -> Tuple[str, int]:
        self.skip()
        match = _IDENT.match(self.text, self.pos)
        if match is None:
            raise self.error("Expected a name.")
        self.pos = match.end()
        return match.group(), match.start()

    def label(self) -> Tuple[str, int]:
        self.skip()
        match = _LABEL.match(self.text, self.pos)
        if match is None:
            raise self.error("Expected a label.")
        self.pos = match.end()
        return match.group(), match.start()

    def names(self) -> Tuple[Tuple[str, ...], int]:
        self.skip()
        start = self.pos
        self.expect("(")
        names = [self.ident()[0]]
        while self.accept(","):
            names.append(self.ident()[0])
        self.expect(")")
        return tuple(names), start

    # expressions

    def peek_minus(self) -> bool:
        return self.peek("-") and not self.peek("->")

    def expr(self) -> _Node:
        node = self.term()
        while True:
            self.skip()
            pos = self.pos
            if self.accept("+"):
                node = _Binary("+", node, self.term(), pos)
            elif self.peek_minus():
                self.pos += 1
                node = _Binary("-", node, self.term(), pos)
            else:
                return node

    def term(self) -> _Node:
        node = self.unary()
        while True:
            self.skip()
            pos = self.pos
            if self.accept("*"):
                node = _Binary("*", node, self.unary(), pos)
            elif self.accept("/"):
                node = _Binary("/", node, self.unary(), pos)
            else:
                return node

    def unary(self) -> _Node:
        self.skip()
        pos = self.pos
        if self.peek_minus():
            self.pos += 1
            return _Unary("-", self.unary(), pos)
        if self.accept("+"):
            return self.unary()
        return self.primary()

    def primary(self) -> _Node:
        self.skip()
        pos = self.pos
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.accept("|"):
            end = self.text.find(">", self.pos)
            newline = self.text.find("\n", self.pos)
            if end < 0 or (0 <= newline < end):
                raise self.error("Unterminated basis ket.", pos)
            labels = tuple(part.strip() for part in self.text[self.pos : end].split(","))
            if any(len(label) == 0 or any(ch.isspace() for ch in label) for label in labels):
                raise self.error("Malformed basis ket.", pos)
            self.pos = end + 1
            return _KetLit(labels, pos)
        number = _NUMBER.match(self.text, self.pos)
        if number is not None:
            self.pos = number.end()
            return _Num(float(number.group()), pos)
        if _IDENT.match(self.text, self.pos) is not None:
            name, _ = self.ident()
            if name == "sqrt":
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return _Sqrt(arg, pos)
            if name == "i" and "i" not in self.doc.states:
                return _Imag(pos)
            return _Ref(name, pos)
        raise self.error("Expected an expression.")

    def evaluate(self, node: _Node, layout: Optional[SystemLayout]) -> Union[complex, Ket]:
        if isinstance(node, _Num):
            return complex(node.value)
        if isinstance(node, _Imag):
            return 1j
        if isinstance(node, _Sqrt):
            arg = self.evaluate(node.arg, layout)
            if isinstance(arg, Ket):
                raise self.error("sqrt() expects a number.", node.pos, "invalid")
            return complex(np.sqrt(arg))
        if isinstance(node, _KetLit):
            if layout is None:
                raise self.error("Basis kets need an enclosing layout.", node.pos, "invalid")
            if len(node.labels) != len(layout):
                raise self.error(
                    f"Basis ket has {len(node.labels)} labels but the layout {layout} has {len(layout)} subsystems.",
                    node.pos,
                    "dimension",
                )
            try:
                return Ket.basis(layout, *node.labels)
            except KeyError as e:
                raise self.error(str(e.args[0]), node.pos, "unknown-name")
        if isinstance(node, _Ref):
            if node.name not in self.doc.states:
                raise self.error(f"Unknown state '{node.name}'.", node.pos, "unknown-name")
            return self.doc.states[node.name].ket
        if isinstance(node, _Unary):
            return -self.evaluate(node.operand, layout)

        left = self.evaluate(node.left, layout)
        right = self.evaluate(node.right, layout)
        left_ket, right_ket = isinstance(left, Ket), isinstance(right, Ket)
        try:
            if node.op in "+-":
                if left_ket != right_ket:
                    raise self.error("Cannot add a number and a ket.", node.right.pos, "dimension")
                return left + right if node.op == "+" else left - right
            if node.op == "*":
                if left_ket and right_ket:
                    return tensor(left, right)
                return left * right
            if right_ket:
                raise self.error("Cannot divide by a ket.", node.right.pos, "invalid")
            if right == 0:
                raise self.error("Division by zero.", node.right.pos, "invalid")
            return left / right
        except LayoutError as e:
            raise self.error(str(e), node.right.pos, "dimension")

    def ket(self, node: _Node, layout: SystemLayout) -> Ket:
        value = self.evaluate(node, layout)
        if not isinstance(value, Ket):
            raise self.error("Expected a ket, got a number.", node.pos, "invalid")
        if value.layout.names == layout.names:
            return value
        if sorted(value.layout.names) == sorted(layout.names):
            return value.reorder(layout.names)
        raise self.error(f"Ket lives on {value.layout}, expected {layout}.", node.pos, "dimension")

    # declarations

    def layout(self, names: Sequence[str], pos: int) -> SystemLayout:
        for name in names:
            if name not in self.doc.systems:
                raise self.error(f"Unknown system '{name}'.", pos, "unknown-name")
        try:
            return SystemLayout(tuple(self.doc.systems[name] for name in names))
        except LayoutError as e:
            raise self.error(str(e), pos, "dimension")

    def declare(self, name: str, pos: int):
        for existing in (self.doc.systems, self.doc.states, self.doc.unitaries, self.doc.families, self.doc.queries):
            if name in existing:
                raise self.error(f"'{name}' is already declared.", pos, "invalid")

    def document(self) -> ScenarioDocument:
        while not self.at_end():
            if self.peek_keyword("system"):
                self.system()
            elif self.peek_keyword("state"):
                self.state()
            elif self.peek_keyword("unitary"):
                self.unitary()
            elif self.peek_keyword("family"):
                self.family()
            elif self.peek_keyword("query"):
                self.query()
            else:
                raise self.error("Expected 'system', 'state', 'unitary', 'family' or 'query'.")
        return self.doc

    def system(self):
        self.keyword("system")
        name, pos = self.ident()
        self.declare(name, pos)
        self.expect(":")
        self.keyword("dim")
        self.skip()
        dim_pos = self.pos
        match = re.compile(r"\d+").match(self.text, self.pos)
        if match is None:
            raise self.error("Expected a dimension.")
        self.pos = match.end()
        dim = int(match.group())
        if dim < 1:
            raise self.error("Dimensions must be at least 1.", dim_pos, "dimension")
        labels = tuple(str(k) for k in range(dim))
        if self.peek_keyword("labels"):
            self.keyword("labels")
            labels = []
            while not self.peek(";"):
                labels.append(self.label()[0])
            if len(labels) != dim:
                raise self.error(f"System '{name}' has dim {dim} but {len(labels)} labels.", dim_pos, "dimension")
        self.expect(";")
        try:
            self.doc.systems[name] = Subsystem(name, tuple(labels))
        except ValueError as e:
            raise self.error(str(e), pos, "invalid")

    def state(self):
        self.keyword("state")
        name, pos = self.ident()
        self.declare(name, pos)
        self.keyword("on")
        names, names_pos = self.names()
        layout = self.layout(names, names_pos)
        self.expect("=")
        node = self.expr()
        self.expect(";")
        self.doc.states[name] = StateDecl(name, names, self.ket(node, layout))

    def unitary(self):
        self.keyword("unitary")
        name, pos = self.ident()
        self.declare(name, pos)
        self.keyword("on")
        names, names_pos = self.names()
        layout = self.layout(names, names_pos)
        self.expect("{")
        rules = []
        while not self.accept("}"):
            before = self.ket(self.expr(), layout)
            self.expect("->")
            after = self.ket(self.expr(), layout)
            self.expect(";")
            rules.append((before, after))
        self.keyword("complete")
        self.expect(";")
        try:
            operator = complete_unitary(rules, layout)
        except ValueError as e:
            raise self.error(f"Unitary '{name}': {e}", pos, "rules")
        self.doc.unitaries[name] = UnitaryDecl(name, names, tuple(rules), operator)

    def interval(self, layout: SystemLayout) -> Tuple[Tuple[str, ...], Operator]:
        names = []
        operator = Operator.identity(layout)
        while True:
            name, pos = self.ident()
            if name != "id":
                if name not in self.doc.unitaries:
                    raise self.error(f"Unknown unitary '{name}'.", pos, "unknown-name")
                decl = self.doc.unitaries[name]
                try:
                    operator = operator @ embed(decl.operator, decl.names, layout)
                except LayoutError as e:
                    raise self.error(str(e), pos, "dimension")
                names.append(name)
            if not self.accept("*"):
                return tuple(names), operator

    def factor(self, layout: SystemLayout) -> Tuple[ProjectorFactor, Operator]:
        if self.peek_keyword("id"):
            self.keyword("id")
            return ProjectorFactor((), ()), Operator.identity(layout)
        self.keyword("proj")
        self.expect("(")
        nodes = [self.expr()]
        while self.accept(","):
            nodes.append(self.expr())
        self.expect(")")
        self.keyword("on")
        names, names_pos = self.names()
        sublayout = self.layout(names, names_pos)
        kets = tuple(self.ket(node, sublayout) for node in nodes)
        try:
            projector = embed(projector_from_kets(kets), names, layout)
        except LayoutError as e:
            raise self.error(str(e), names_pos, "dimension")
        except ValueError as e:
            raise self.error(str(e), nodes[0].pos, "invalid")
        return ProjectorFactor(kets, names), projector

    def slot(self, layout: SystemLayout) -> Tuple[SlotDecl, TimeSlot]:
        self.keyword("slot")
        label, pos = self.label()
        self.expect("{")
        events, aliases, projectors = [], {}, []
        while not self.accept("}"):
            if self.peek_keyword("alias"):
                self.keyword("alias")
                alias, _ = self.label()
                self.expect("=")
                members = [self.label()[0]]
                while self.accept("|"):
                    members.append(self.label()[0])
                self.expect(";")
                aliases[alias] = tuple(members)
                continue
            event, _ = self.label()
            self.expect("=")
            factor, operator = self.factor(layout)
            factors = [factor]
            while self.accept("&"):
                factor, next_operator = self.factor(layout)
                factors.append(factor)
                operator = operator @ next_operator
            self.expect(";")
            events.append((event, tuple(factors)))
            projectors.append((event, operator))
        try:
            time_slot = TimeSlot(label, projectors, aliases)
        except (ValueError, KeyError, LayoutError) as e:
            raise self.error(f"Slot '{label}': {e}", pos, "invalid")
        return SlotDecl(label, tuple(events), aliases), time_slot

    def family(self):
        self.keyword("family")
        name, pos = self.ident()
        self.declare(name, pos)
        self.expect(":")
        self.keyword("initial")
        initial, initial_pos = self.ident()
        if initial not in self.doc.states:
            raise self.error(f"Unknown state '{initial}'.", initial_pos, "unknown-name")
        self.expect(";")
        state = self.doc.states[initial].ket
        layout = state.layout

        steps, slots, unitaries = [], [], []
        pending_names: Tuple[str, ...] = ()
        pending = Operator.identity(layout)
        while not self.accept(";"):
            if self.peek_keyword("interval"):
                self.keyword("interval")
                names, operator = self.interval(layout)
                self.expect(";")
                pending_names, pending = names + pending_names, operator @ pending
            elif self.peek_keyword("slot"):
                decl, time_slot = self.slot(layout)
                steps.append((pending_names, decl))
                slots.append(time_slot)
                unitaries.append(pending)
                pending_names, pending = (), Operator.identity(layout)
            else:
                raise self.error("Expected 'interval', 'slot' or ';'.")
        if pending_names:
            raise self.error(f"Family '{name}' ends with an interval that has no slot.", pos, "invalid")
        try:
            family = HistoryFamily(layout, state, slots, unitaries, name)
        except (ValueError, LayoutError) as e:
            raise self.error(f"Family '{name}': {e}", pos, "invalid")
        self.doc.families[name] = FamilyDecl(name, initial, tuple(steps), family)
        logger.debug(f"Parsed family '{name}' with {len(slots)} slots.")

    def query(self):
        self.keyword("query")
        name, pos = self.ident()
        self.declare(name, pos)
        self.expect(":")
        self.keyword("counterfactual")
        self.keyword("family")
        family_name, family_pos = self.ident()
        if family_name not in self.doc.families:
            raise self.error(f"Unknown family '{family_name}'.", family_pos, "unknown-name")
        family = self.doc.families[family_name].family
        self.keyword("actual")
        actual, actual_pos = self.label()
        self.keyword("pivot")
        pivot, pivot_pos = self.label()
        self.keyword("swap")
        swap_slot, swap_pos = self.label()
        self.expect("=")
        swap_event, _ = self.label()
        self.expect(";")

        pivot = None if pivot == "root" else pivot
        try:
            family.locate(actual)
        except KeyError as e:
            raise self.error(str(e.args[0]), actual_pos, "unknown-name")
        try:
            if pivot is not None:
                family.slot(pivot)
        except KeyError as e:
            raise self.error(str(e.args[0]), pivot_pos, "unknown-name")
        try:
            family.slot(swap_slot).resolve(swap_event)
        except KeyError as e:
            raise self.error(str(e.args[0]), swap_pos, "unknown-name")
        query = CounterfactualQuery(family, actual, pivot, (swap_slot, swap_event))
        self.doc.queries[name] = QueryDecl(name, family_name, actual, pivot, (swap_slot, swap_event), query)


def parse_scenario(text: str) -> ScenarioDocument:
    """
    Parse a scenario document.

    ### Parameters
    `text` : str
        The document source.

    ### Raises
    `ScenarioSyntaxError`
        With the line, column and kind of the first error.
    """
    return _Parser(text).document()


def parse_scenario_file(filepath: str) -> ScenarioDocument:
    with open(filepath, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


def format_ket(ket: Ket) -> str:
    """A ket as a sum of `(re + im*i)*|labels>` terms that parses back to the same amplitudes."""
    terms = []
    for labels, amp in ket.components().items():
        terms.append(f"({float(amp.real)!r} + {float(amp.imag)!r}*i)*|{','.join(labels)}>")
    if not terms:
        return f"0*|{','.join(ket.layout.labels_of(0))}>"
    return " + ".join(terms)


def _format_factor(factor: ProjectorFactor) -> str:
    if not factor.names:
        return "id"
    return f"proj({', '.join(format_ket(ket) for ket in factor.kets)}) on ({', '.join(factor.names)})"


def format_scenario(doc: ScenarioDocument) -> str:
    """
    Print a document in the scenario language. Parsing the output yields an equivalent document.
    """
    lines = []
    for sub in doc.systems.values():
        lines.append(f"system {sub.name}: dim {sub.dim} labels {' '.join(sub.labels)} ;")
    for decl in doc.states.values():
        lines.append(f"state {decl.name} on ({', '.join(decl.names)}) = {format_ket(decl.ket)} ;")
    for decl in doc.unitaries.values():
        lines.append(f"unitary {decl.name} on ({', '.join(decl.names)}) {{")
        for before, after in decl.rules:
            lines.append(f"  {format_ket(before)} -> {format_ket(after)} ;")
        lines.append("} complete ;")
    for decl in doc.families.values():
        lines.append(f"family {decl.name}: initial {decl.initial} ;")
        for names, slot in decl.steps:
            if names:
                lines.append(f"  interval {' * '.join(names)} ;")
            lines.append(f"  slot {slot.label} {{")
            for event, factors in slot.events:
                lines.append(f"    {event} = {' & '.join(map(_format_factor, factors))} ;")
            for alias, members in slot.aliases.items():
                lines.append(f"    alias {alias} = {' | '.join(members)} ;")
            lines.append("  }")
        lines.append(";")
    for decl in doc.queries.values():
        pivot = "root" if decl.pivot is None else decl.pivot
        lines.append(
            f"query {decl.name}: counterfactual family {decl.family} actual {decl.actual} pivot {pivot} "
            f"swap {decl.swap[0]}={decl.swap[1]} ;"
        )
    return "\n".join(lines) + ("\n" if lines else "")
