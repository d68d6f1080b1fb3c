"""
Label schemes for the setting and outcome events of the two-sided Hardy experiment.
"""

from enum import Enum
from typing import Dict, Optional, Tuple, Union

# one row per event: (native, hardy, stapp)
_TABLE: Tuple[Tuple[str, str, str], ...] = (
    ("Z_a", "U_1", "L1"),
    ("Z_a^+", "U_1=0", "L1+"),
    ("Z_a^-", "U_1=1", "L1-"),
    ("X_a", "D_1", "L2"),
    ("X_a^+", "D_1=0", "L2-"),
    ("X_a^-", "D_1=1", "L2+"),
    ("Z_b", "U_2", "R1"),
    ("Z_b^+", "U_2=0", "R1-"),
    ("Z_b^-", "U_2=1", "R1+"),
    ("X_b", "D_2", "R2"),
    ("X_b^+", "D_2=0", "R2+"),
    ("X_b^-", "D_2=1", "R2-"),
)


class NotationScheme(Enum):
    NATIVE = "this-paper"
    HARDY = "hardy"
    STAPP = "stapp"

    @property
    def column(self) -> int:
        return list(NotationScheme).index(self)

    def labels(self) -> Tuple[str, ...]:
        return tuple(row[self.column] for row in _TABLE)

    def mapping_to(self, other: "NotationScheme") -> Dict[str, str]:
        return {row[self.column]: row[other.column] for row in _TABLE}


def _scheme(scheme: Union[str, NotationScheme]) -> NotationScheme:
    if isinstance(scheme, NotationScheme):
        return scheme
    try:
        return NotationScheme(scheme)
    except ValueError:
        raise ValueError(f"Unknown notation '{scheme}', expected one of {[s.value for s in NotationScheme]}.")


def normalize_label(label: str) -> str:
    """Replace typographic minus signs by ASCII hyphens."""
    return label.replace("−", "-")


def notation_alias(
    label: str, from_scheme: Union[str, NotationScheme], to_scheme: Union[str, NotationScheme]
) -> str:
    """
    Translate a setting or outcome label between schemes.

    ### Parameters
    `label` : str
        A label of `from_scheme`, e.g. `Z_a^+`.
    `from_scheme` : Union[str, NotationScheme]
        Scheme of `label`.
    `to_scheme` : Union[str, NotationScheme]
        Target scheme.

    ### Raises
    `KeyError`
        If `label` does not exist in `from_scheme`.
    """
    source, target = _scheme(from_scheme), _scheme(to_scheme)
    mapping = source.mapping_to(target)
    key = normalize_label(label)
    if key not in mapping:
        raise KeyError(f"Unknown label '{label}' in notation '{source.value}'.")
    return mapping[key]


def translate(label: str, to_scheme: Union[str, NotationScheme]) -> str:
    """Render a label of this project's scheme in another scheme, leaving labels outside the table unchanged."""
    mapping = NotationScheme.NATIVE.mapping_to(_scheme(to_scheme))
    return mapping.get(normalize_label(label), label)


def canonical_label(label: str) -> Optional[str]:
    """The label of this project's scheme that `label` denotes in any scheme, or None."""
    key = normalize_label(label)
    for scheme in NotationScheme:
        mapping = scheme.mapping_to(NotationScheme.NATIVE)
        if key in mapping:
            return mapping[key]
    return None
