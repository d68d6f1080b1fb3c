import functools
import importlib
import inspect
import logging
import pkgutil
from typing import Any, Callable, Dict

from cohist import scenarios

logger = logging.getLogger(__name__)


@functools.lru_cache(maxsize=1)
def list_builtins() -> Dict[str, Callable[..., Any]]:
    """
    Gather the builtin scenario builders of all modules in the `cohist.scenarios` package. Each module may export a
    `BUILTINS` mapping of scenario names to builder functions.

    ### Returns
    Dict[str, Callable[..., Any]]
        Builders keyed by scenario name, in module order.
    """
    builders = {}
    for info in pkgutil.walk_packages(scenarios.__path__):
        module = importlib.import_module(f"{scenarios.__name__}.{info.name}")
        for name, builder in getattr(module, "BUILTINS", {}).items():
            if name in builders:
                raise ValueError(f"Builtin '{name}' of module {module.__name__} is already defined.")
            builders[name] = builder
        logger.debug(f"Scanned {module.__name__} for builtin scenarios.")
    return builders


def build(name: str, **options: Any) -> Any:
    """
    Build a builtin scenario. Options the builder does not accept are ignored; options set to None are left at the
    builder's default.

    ### Parameters
    `name` : str
        Scenario name, e.g. `hardy-eq6`.
    `options` : Any
        Keyword options such as `t1`, `a_final`, `a_setting`, `order` or `c_init`.
    """
    builders = list_builtins()
    if name not in builders:
        raise KeyError(f"Unknown builtin '{name}', expected one of {sorted(builders)}.")
    builder = builders[name]
    accepted = inspect.signature(builder).parameters
    kwargs = {key: value for key, value in options.items() if value is not None and key in accepted}
    ignored = sorted(key for key, value in options.items() if value is not None and key not in accepted)
    if ignored:
        logger.info(f"Builtin '{name}' ignores the options {ignored}.")
    return builder(**kwargs)
