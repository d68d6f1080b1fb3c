"""
Finite-dimensional complex linear algebra over labeled composite bases.

A `SystemLayout` names the subsystems of a composite system together with their ordered basis labels. The
composite basis index is the mixed-radix encoding of the per-subsystem indices in declaration order, so the first
declared subsystem is the most significant digit. Kets and operators are dense numpy arrays tied to a layout, and
are immutable once constructed.
"""

import logging
from dataclasses import dataclass
from math import prod
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import orth

from cohist.params import default

logger = logging.getLogger(__name__)


def tolerance() -> float:
    """Entrywise tolerance of the projector, unitarity and normalization checks (`hilbert.tol`)."""
    return default("hilbert", "tol")


# vectors shorter than this after projection are treated as lying in the span
_SPAN_EPS = 1e-10


class LayoutError(ValueError):
    """Raised when subsystems collide, are unknown, or have mismatched dimensions."""


@dataclass(frozen=True)
class Subsystem:
    """
    A named tensor factor with an ordered list of basis labels.

    ### Parameters
    `name` : str
        Unique name of the subsystem within a layout (e.g. `a`, `coin_b`).
    `labels` : Tuple[str, ...]
        Basis labels in index order. The dimension is the number of labels.
    """

    name: str
    labels: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        if not isinstance(self.name, str) or len(self.name) == 0:
            raise ValueError(f"Expected subsystem name to be a non-empty string, got {self.name!r}.")
        if len(self.labels) < 1:
            raise ValueError(f"Subsystem '{self.name}' needs at least one basis label.")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"Basis labels of subsystem '{self.name}' must be unique, got {self.labels}.")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"Unknown label '{label}' for subsystem '{self.name}', expected one of {self.labels}.")


@dataclass(frozen=True)
class SystemLayout:
    """
    Ordered collection of subsystems forming a composite Hilbert space.

    ### Parameters
    `subsystems` : Tuple[Subsystem, ...]
        The subsystems in declaration order.
    """

    subsystems: Tuple[Subsystem, ...]

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        for sub in self.subsystems:
            if not isinstance(sub, Subsystem):
                raise TypeError(f"Expected Subsystem, got {type(sub)}.")
        names = [sub.name for sub in self.subsystems]
        if len(set(names)) != len(names):
            raise LayoutError(f"Subsystem names must be unique, got {names}.")

    @classmethod
    def of(cls, *specs: Tuple[str, Sequence[str]]) -> "SystemLayout":
        """Build a layout from `(name, labels)` pairs."""
        return cls(tuple(Subsystem(name, tuple(labels)) for name, labels in specs))

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(sub.name for sub in self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(sub.dim for sub in self.subsystems)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    def subsystem(self, name: str) -> Subsystem:
        for sub in self.subsystems:
            if sub.name == name:
                return sub
        raise LayoutError(f"Unknown subsystem '{name}', layout has {list(self.names)}.")

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.subsystems)

    def index(self, labels: Sequence[str]) -> int:
        """
        Composite basis index of a tuple of labels, one per subsystem in declaration order.
        """
        labels = tuple(labels)
        if len(labels) != len(self.subsystems):
            raise LayoutError(f"Expected {len(self.subsystems)} labels for layout {list(self.names)}, got {len(labels)}.")
        idx = 0
        for sub, label in zip(self.subsystems, labels):
            idx = idx * sub.dim + sub.index(label)
        return idx

    def labels_of(self, index: int) -> Tuple[str, ...]:
        if not 0 <= index < self.total_dim:
            raise IndexError(f"Basis index {index} out of range for dimension {self.total_dim}.")
        digits = np.unravel_index(index, self.dims)
        return tuple(sub.labels[int(d)] for sub, d in zip(self.subsystems, digits))

    def basis_labels(self) -> Iterator[Tuple[str, ...]]:
        """Composite basis labels in index (lexicographic) order."""
        for i in range(self.total_dim):
            yield self.labels_of(i)

    def concat(self, other: "SystemLayout") -> "SystemLayout":
        collisions = set(self.names) & set(other.names)
        if collisions:
            raise LayoutError(f"Cannot combine layouts sharing subsystems {sorted(collisions)}.")
        return SystemLayout(self.subsystems + other.subsystems)

    def sublayout(self, names: Sequence[str]) -> "SystemLayout":
        return SystemLayout(tuple(self.subsystem(name) for name in names))

    def __str__(self) -> str:
        return "(" + ", ".join(f"{sub.name}:{sub.dim}" for sub in self.subsystems) + ")"


def format_basis(labels: Sequence[str]) -> str:
    return "|" + ",".join(labels) + ">"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Ket:
    """
    A vector of complex amplitudes over the composite basis of a layout.

    ### Parameters
    `layout` : SystemLayout
        The layout the amplitudes refer to.
    `amplitudes` : np.ndarray
        Dense complex vector of length `layout.total_dim`.
    """

    layout: SystemLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        if not isinstance(self.layout, SystemLayout):
            raise TypeError(f"Expected SystemLayout, got {type(self.layout)}.")
        amps = _frozen(self.amplitudes)
        if amps.shape != (self.layout.total_dim,):
            raise LayoutError(f"Expected {self.layout.total_dim} amplitudes for layout {self.layout}, got shape {amps.shape}.")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, layout: SystemLayout, *labels: str) -> "Ket":
        """The basis ket `|labels>` of a layout."""
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[layout.index(labels)] = 1.0
        return cls(layout, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        norm = self.norm
        if norm <= tolerance():
            raise ValueError("Cannot normalize a zero ket.")
        return Ket(self.layout, self.amplitudes / norm)

    def inner(self, other: "Ket") -> complex:
        """The inner product <self|other>."""
        self._check_layout(other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def amplitude(self, *labels: str) -> complex:
        return complex(self.amplitudes[self.layout.index(labels)])

    def reorder(self, names: Sequence[str]) -> "Ket":
        """The same ket with its subsystems permuted into the given order."""
        names = tuple(names)
        if sorted(names) != sorted(self.layout.names):
            raise LayoutError(f"Cannot reorder {list(self.layout.names)} into {list(names)}.")
        perm = [self.layout.names.index(name) for name in names]
        amps = self.amplitudes.reshape(self.layout.dims).transpose(perm).reshape(-1)
        return Ket(self.layout.sublayout(names), amps)

    def components(self, tol: float = 0.0) -> Dict[Tuple[str, ...], complex]:
        """Nonzero amplitudes keyed by basis labels, in index order."""
        return {
            self.layout.labels_of(i): complex(amp) for i, amp in enumerate(self.amplitudes) if abs(amp) > tol
        }

    def _check_layout(self, other: "Ket"):
        if not isinstance(other, Ket):
            raise TypeError(f"Expected Ket, got {type(other)}.")
        if other.layout != self.layout:
            raise LayoutError(f"Layout mismatch: {self.layout} vs {other.layout}.")

    def __add__(self, other: "Ket") -> "Ket":
        self._check_layout(other)
        return Ket(self.layout, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "Ket") -> "Ket":
        self._check_layout(other)
        return Ket(self.layout, self.amplitudes - other.amplitudes)

    def __neg__(self) -> "Ket":
        return Ket(self.layout, -self.amplitudes)

    def __mul__(self, scalar: complex) -> "Ket":
        if not np.isscalar(scalar):
            return NotImplemented
        return Ket(self.layout, self.amplitudes * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "Ket":
        if not np.isscalar(scalar):
            return NotImplemented
        return Ket(self.layout, self.amplitudes / scalar)

    def __repr__(self) -> str:
        terms = [f"({amp:.6g}){format_basis(labels)}" for labels, amp in self.components(tolerance()).items()]
        return f"Ket[{' + '.join(terms) or '0'}]"


@dataclass(frozen=True, eq=False)
class Operator:
    """
    A dense complex square matrix acting on the composite space of a layout.

    ### Parameters
    `layout` : SystemLayout
        The layout the matrix refers to.
    `matrix` : np.ndarray
        Complex matrix of shape `(total_dim, total_dim)`.
    """

    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        if not isinstance(self.layout, SystemLayout):
            raise TypeError(f"Expected SystemLayout, got {type(self.layout)}.")
        matrix = _frozen(self.matrix)
        n = self.layout.total_dim
        if matrix.shape != (n, n):
            raise LayoutError(f"Expected a {n}x{n} matrix for layout {self.layout}, got shape {matrix.shape}.")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls, layout: SystemLayout) -> "Operator":
        return cls(layout, np.eye(layout.total_dim, dtype=complex))

    @property
    def dagger(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def unitary_deviation(self) -> float:
        """Largest entrywise deviation of U^dagger U from the identity."""
        gram = self.matrix.conj().T @ self.matrix
        return float(np.abs(gram - np.eye(self.layout.total_dim)).max())

    def is_unitary(self, tol: Optional[float] = None) -> bool:
        return self.unitary_deviation() <= (tolerance() if tol is None else tol)

    def _check_layout(self, other: Union["Operator", Ket]):
        if other.layout != self.layout:
            raise LayoutError(f"Layout mismatch: {self.layout} vs {other.layout}.")

    def __matmul__(self, other: Union["Operator", Ket]) -> Union["Operator", Ket]:
        if isinstance(other, Ket):
            self._check_layout(other)
            return Ket(self.layout, self.matrix @ other.amplitudes)
        if isinstance(other, Operator):
            self._check_layout(other)
            return Operator(self.layout, self.matrix @ other.matrix)
        return NotImplemented

    def __add__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Operator(layout={self.layout}, rank~{np.linalg.matrix_rank(self.matrix)})"


@dataclass(frozen=True)
class ProjectorCheck:
    """
    Result of `is_projector`. Truthy iff both deviations are within the tolerance.
    """

    is_projector: bool
    hermiticity_deviation: float
    idempotence_deviation: float
    tol: float

    def __bool__(self) -> bool:
        return self.is_projector

    @property
    def max_deviation(self) -> float:
        return max(self.hermiticity_deviation, self.idempotence_deviation)


def tensor(u: Ket, v: Ket) -> Ket:
    """
    Kronecker product of two kets. The resulting layout lists the subsystems of `u` followed by those of `v`.

    ### Parameters
    `u` : Ket
        Left factor.
    `v` : Ket
        Right factor, whose subsystem names must not occur in `u`.
    """
    layout = u.layout.concat(v.layout)
    return Ket(layout, np.kron(u.amplitudes, v.amplitudes))


def tensor_all(kets: Sequence[Ket]) -> Ket:
    if len(kets) == 0:
        raise ValueError("Expected at least one ket.")
    result = kets[0]
    for ket in kets[1:]:
        result = tensor(result, ket)
    return result


def projector_from_kets(kets: Sequence[Ket]) -> Operator:
    """
    Projector onto the span of the given kets. The kets need not be orthogonal or normalized; they are
    orthonormalized internally.

    ### Parameters
    `kets` : Sequence[Ket]
        Nonzero kets on a common layout.

    ### Returns
    `Operator`
        A Hermitian idempotent operator whose range is the span of `kets`.
    """
    kets = list(kets)
    if len(kets) == 0:
        raise ValueError("Expected at least one ket to span a projector.")
    layout = kets[0].layout
    for ket in kets:
        if ket.layout != layout:
            raise LayoutError(f"Layout mismatch: {layout} vs {ket.layout}.")
        if ket.norm <= tolerance():
            raise ValueError("Cannot build a projector from a zero vector.")

    basis = orth(np.column_stack([ket.amplitudes for ket in kets]))
    matrix = basis @ basis.conj().T
    # remove the antihermitian rounding noise of the outer product
    matrix = (matrix + matrix.conj().T) / 2
    return Operator(layout, matrix)


def is_projector(op: Operator, tol: Optional[float] = None) -> ProjectorCheck:
    """
    Check hermiticity (P = P^dagger) and idempotence (P^2 = P) entrywise.

    ### Parameters
    `op` : Operator
        The operator to check.
    `tol` : Optional[float]
        Largest accepted entrywise deviation. Defaults to `hilbert.tol`.
    """
    tol = tolerance() if tol is None else tol
    m = op.matrix
    herm = float(np.abs(m - m.conj().T).max())
    idem = float(np.abs(m @ m - m).max())
    return ProjectorCheck(herm <= tol and idem <= tol, herm, idem, tol)


def embed(op: Operator, target_subsystems: Optional[Sequence[str]], full_layout: SystemLayout) -> Operator:
    """
    Pad an operator with identities so it acts on `full_layout`. The i-th subsystem of `op` is placed onto the
    i-th name in `target_subsystems`, which may be non-adjacent and in any order within `full_layout`.

    ### Parameters
    `op` : Operator
        Operator on a (small) layout.
    `target_subsystems` : Optional[Sequence[str]]
        Names in `full_layout` the subsystems of `op` are mapped to. Defaults to the names of `op.layout`.
    `full_layout` : SystemLayout
        The layout of the result.
    """
    targets = tuple(target_subsystems) if target_subsystems is not None else op.layout.names
    if len(targets) != len(op.layout):
        raise LayoutError(f"Expected {len(op.layout)} target subsystems, got {list(targets)}.")
    if len(set(targets)) != len(targets):
        raise LayoutError(f"Target subsystems must be distinct, got {list(targets)}.")
    for name, sub in zip(targets, op.layout.subsystems):
        target = full_layout.subsystem(name)
        if target.dim != sub.dim:
            raise LayoutError(f"Dimension mismatch: '{sub.name}' has dimension {sub.dim} but '{name}' has {target.dim}.")

    rest = [name for name in full_layout.names if name not in targets]
    order = list(targets) + rest
    dims = [full_layout.subsystem(name).dim for name in order]
    rest_dim = prod(full_layout.subsystem(name).dim for name in rest)

    padded = np.kron(op.matrix, np.eye(rest_dim, dtype=complex))
    perm = [order.index(name) for name in full_layout.names]
    k = len(order)
    padded = padded.reshape(dims + dims).transpose(perm + [p + k for p in perm])
    n = full_layout.total_dim
    return Operator(full_layout, padded.reshape(n, n))


def orthonormal_complement(vectors: np.ndarray) -> np.ndarray:
    """
    Orthonormal basis of the complement of the column span of `vectors`, obtained by Gram-Schmidt over the
    standard basis vectors in index order (twice, for numerical orthogonality). The columns of `vectors` must be
    orthonormal.
    """
    n, k = vectors.shape
    basis = vectors.copy()
    found: List[np.ndarray] = []
    for i in range(n):
        if len(found) == n - k:
            break
        v = np.zeros(n, dtype=complex)
        v[i] = 1.0
        for _ in range(2):
            v = v - basis @ (basis.conj().T @ v)
        norm = np.linalg.norm(v)
        if norm > _SPAN_EPS:
            v = v / norm
            found.append(v)
            basis = np.column_stack([basis, v])
    if len(found) != n - k:
        raise LayoutError(f"Could not complete {k} vectors to a basis of dimension {n}.")
    return np.column_stack(found) if found else np.zeros((n, 0), dtype=complex)


def complete_unitary(rules: Sequence[Tuple[Ket, Ket]], layout: SystemLayout, tol: Optional[float] = None) -> Operator:
    """
    Extend a partial isometry, given as rules `input -> output`, to a unitary on `layout`.

    The orthogonal complement of the input span is mapped onto the orthogonal complement of the output span by
    pairing the i-th vectors of their canonical bases (see `orthonormal_complement`), so the result does not depend
    on anything but the rules.

    ### Parameters
    `rules` : Sequence[Tuple[Ket, Ket]]
        Pairs of kets. Inputs must be mutually orthonormal, and so must outputs.
    `layout` : SystemLayout
        The layout of all rule kets and of the result.
    `tol` : Optional[float]
        Tolerance of the orthonormality checks. Defaults to `hilbert.tol`.
    """
    tol = tolerance() if tol is None else tol
    rules = list(rules)
    if len(rules) == 0:
        return Operator.identity(layout)
    if len(rules) > layout.total_dim:
        raise LayoutError(f"{len(rules)} rules cannot fit into dimension {layout.total_dim}.")
    for inp, out in rules:
        if inp.layout != layout or out.layout != layout:
            raise LayoutError(f"Rule kets must live on layout {layout}.")

    v_in = np.column_stack([inp.amplitudes for inp, _ in rules])
    v_out = np.column_stack([out.amplitudes for _, out in rules])
    for side, vecs in (("inputs", v_in), ("outputs", v_out)):
        deviation = float(np.abs(vecs.conj().T @ vecs - np.eye(len(rules))).max())
        if deviation > tol:
            raise ValueError(f"Rule {side} are not orthonormal (max deviation {deviation:.3e}).")

    c_in = orthonormal_complement(v_in)
    c_out = orthonormal_complement(v_out)
    matrix = v_out @ v_in.conj().T + c_out @ c_in.conj().T
    logger.debug(f"Completed {len(rules)} rules to a unitary of dimension {layout.total_dim}.")
    return Operator(layout, matrix)
