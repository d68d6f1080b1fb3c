from abc import ABC, abstractmethod
from collections import namedtuple
from contextlib import contextmanager
from copy import deepcopy
from dataclasses import asdict, dataclass, field
from os import path
from typing import Any, Dict, Iterator, List, Optional, Union

import yaml


@dataclass
class Param(ABC):
    """
    Parameter container that has a specific type and potentially constrains the range of allowed values.
    """

    _value: Any = None
    doc: Optional[str] = field(default=None, kw_only=True)

    def __post_init__(self):
        if self._value is None:
            self._value = self.default()
        if not isinstance(self._value, type(self.default())):
            raise TypeError(f"Expected {type(self.default())}, got {type(self._value)}")
        self.validate(self._value)

    @staticmethod
    @abstractmethod
    def default() -> Any:
        """
        Return the default value for the parameter.
        """
        pass

    def validate(self, value: Any) -> None:
        """
        Raise a `ValueError` if the value is not allowed for this parameter.
        """
        pass

    @property
    def value(self) -> Any:
        return self._value

    @value.setter
    def value(self, value: Any):
        self.validate(value)
        self._value = value


@dataclass
class BoolParam(Param):
    @staticmethod
    def default() -> bool:
        return False


@dataclass
class FloatParam(Param):
    vmin: float = 0.0
    vmax: float = 1.0

    @staticmethod
    def default() -> float:
        return 0.0

    def validate(self, value: float) -> None:
        if not self.vmin <= value <= self.vmax:
            raise ValueError(f"Value {value} is outside of the allowed range [{self.vmin}, {self.vmax}].")


@dataclass
class IntParam(Param):
    vmin: int = 0
    vmax: int = 100

    @staticmethod
    def default() -> int:
        return 0

    def validate(self, value: int) -> None:
        if not self.vmin <= value <= self.vmax:
            raise ValueError(f"Value {value} is outside of the allowed range [{self.vmin}, {self.vmax}].")


@dataclass
class StringParam(Param):
    # if options is None, the string is free-form, otherwise it must be one of the options
    options: List[str] = None

    @staticmethod
    def default() -> str:
        return ""

    def validate(self, value: str) -> None:
        if self.options is not None and value not in self.options:
            raise ValueError(f"Value '{value}' is not one of {self.options}.")


DEFAULT_PARAMS = {
    "hilbert": {
        "tol": FloatParam(1e-12, 0.0, 1e-3, doc="Entrywise tolerance for projector and unitarity checks."),
    },
    "consistency": {
        "mode": StringParam("medium", options=["medium", "weak"], doc="Decoherence condition on off-diagonal entries."),
        "tol": FloatParam(1e-10, 0.0, 1.0, doc="Largest off-diagonal magnitude accepted as zero."),
    },
    "tree": {
        "prune_tol": FloatParam(1e-12, 0.0, 2.0, doc="Branches with probability at or below this value are omitted."),
    },
    "counterfactual": {
        "strict_threshold": FloatParam(1e-9, 0.0, 1.0, doc="A probability of at least 1 - threshold counts as certain."),
    },
    "output": {
        "digits": IntParam(12, 1, 17, doc="Significant digits of printed numbers."),
        "notation": StringParam("this-paper", options=["this-paper", "hardy", "stapp"], doc="Label scheme for reports."),
    },
}

TYPE_PARAM_MAP = {
    bool: BoolParam,
    float: FloatParam,
    int: IntParam,
    str: StringParam,
}


def _to_param(template: Optional[Param], raw: Any) -> Param:
    """
    Convert a raw value (or a serialized parameter dict) to a `Param`, keeping the constraints of the template.
    """
    if isinstance(raw, Param):
        return raw
    if isinstance(raw, dict):
        # reconstruct serialized param object
        param_type = TYPE_PARAM_MAP[type(raw["_value"])]
        return param_type(**raw)
    if template is not None:
        if isinstance(raw, int) and not isinstance(raw, bool) and isinstance(template, FloatParam):
            raw = float(raw)
        if not isinstance(raw, type(template.default())):
            raise TypeError(f"Expected {type(template.default())}, got {type(raw)}")
        param = deepcopy(template)
        param.value = raw
        return param
    if type(raw) not in TYPE_PARAM_MAP:
        raise TypeError(
            f"Invalid parameter type {type(raw).__name__}. Must be one of "
            f"{list(map(lambda x: x.__name__, TYPE_PARAM_MAP.keys()))}."
        )
    return TYPE_PARAM_MAP[type(raw)](raw)


class EngineParams:
    """
    Configuration of the history engine. The parameters are stored in named groups with each group containing a
    number of parameters. Groups are named tuples and can be accessed as attributes, e.g.
    `params.consistency.tol.value`.

    Missing groups and parameters are filled in from `DEFAULT_PARAMS`.

    ### Parameters
    `data` : Optional[Dict[str, Dict[str, Any]]]
        A dictionary of parameter groups, where each group is a dictionary of parameter names and values.
    """

    def __init__(self, data: Optional[Dict[str, Dict[str, Any]]] = None):
        data = deepcopy(data) if data is not None else {}

        merged = deepcopy(DEFAULT_PARAMS)
        for group, params in data.items():
            if not isinstance(params, dict):
                raise TypeError(f"Expected dict, got {type(params)}.")
            merged.setdefault(group, {})
            for name, raw in params.items():
                merged[group][name] = _to_param(merged[group].get(name), raw)

        self._data = self._generate_data_dict(merged)

    @classmethod
    def from_yaml(cls, filepath: str) -> "EngineParams":
        """
        Load parameters from a YAML file containing a mapping of groups to parameter values.

        ### Parameters
        `filepath` : str
            The path to the YAML file.
        """
        if not path.exists(filepath):
            raise FileNotFoundError(f"File '{filepath}' does not exist.")
        with open(filepath, "r") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Expected a mapping of parameter groups in '{filepath}', got {type(data).__name__}.")
        return cls(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values(), sort_keys=False)

    def _generate_data_dict(self, data: Dict[str, Dict[str, Param]]) -> Dict[str, Any]:
        result = {}
        for group, params in data.items():
            NamedTupleClass = namedtuple(group.capitalize(), params.keys())
            NamedTupleClass = type(
                NamedTupleClass.__name__,
                (NamedTupleClass,),
                {
                    "__contains__": lambda self, item: hasattr(self, item),
                    "__getitem__": lambda self, item: getattr(self, item),
                    "keys": lambda self: self._asdict().keys(),
                    "values": lambda self: self._asdict().values(),
                    "items": lambda self: self._asdict().items(),
                },
            )
            result[group] = NamedTupleClass(**params)
        return result

    def update(self, params: Dict[str, Dict[str, Any]]):
        """
        Update the parameters with new values. Unknown groups or parameters raise a `ValueError`.

        ### Parameters
        `params` : Dict[str, Dict[str, Any]]
            A dictionary of parameter groups, where each group is a dictionary of parameter names and values.
        """
        for group, values in params.items():
            if group not in self._data:
                raise ValueError(f"Parameter group '{group}' does not exist.")
            for name, raw in values.items():
                if name not in self._data[group]._fields:
                    raise ValueError(f"Parameter '{name}' does not exist in group '{group}'.")
                param = _to_param(self._data[group][name], raw)
                self._data[group] = self._data[group]._replace(**{name: param})

    def values(self) -> Dict[str, Dict[str, Any]]:
        """
        Plain parameter values, grouped like the configuration file.
        """
        return {group: {name: p.value for name, p in params.items()} for group, params in self._data.items()}

    def serialize(self) -> Dict[str, Dict[str, Any]]:
        """
        Serialize the parameters, including their constraints, to a dictionary.
        """
        return {group: {name: asdict(p) for name, p in params.items()} for group, params in self._data.items()}

    def __getattr__(self, group: str):
        # don't allow access to the _data attribute
        if group == "_data":
            raise AttributeError(f"'{type(self).__name__}' object has no attribute '{group}'")
        if group in self._data:
            return self._data[group]
        raise AttributeError(f"'{type(self).__name__}' object has no attribute '{group}'")

    def __contains__(self, group: str) -> bool:
        return group in self._data

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EngineParams):
            return False
        return self._data == other._data

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join(map(repr, self._data.values()))})"

    def __getitem__(self, group: Union[int, str]):
        if isinstance(group, int):
            return list(self._data.keys())[group]
        return self._data[group]

    def __iter__(self):
        return iter(self._data.keys())

    def __len__(self) -> int:
        return len(self._data)


_ACTIVE: Optional[EngineParams] = None


def default(group: str, name: str) -> Any:
    """Value of a single parameter in the active configuration (see `activate`), or its default."""
    if _ACTIVE is not None and group in _ACTIVE:
        return getattr(_ACTIVE[group], name).value
    return DEFAULT_PARAMS[group][name].value


@contextmanager
def activate(params: EngineParams) -> Iterator[EngineParams]:
    """
    Make `params` the configuration that engine defaults are read from until the block exits.

    ### Parameters
    `params` : EngineParams
        The configuration to activate.
    """
    global _ACTIVE
    if not isinstance(params, EngineParams):
        raise TypeError(f"Expected EngineParams, got {type(params)}.")
    previous, _ACTIVE = _ACTIVE, params
    try:
        yield params
    finally:
        _ACTIVE = previous
