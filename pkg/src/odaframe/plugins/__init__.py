"""Built-in operator plugins, selected by name.

Imports are lazy so a daemon only pays for the plugins it loads; the
numeric plugins (regressor, clustering) pull in numpy/scipy, which the
low-footprint measurement plugins must not.
"""

from __future__ import annotations

from importlib import import_module

_REGISTRY = {
    "identity": ("odaframe.plugins.identity", "IdentityPlugin"),
    "actuator": ("odaframe.plugins.identity", "ActuatorPlugin"),
    "regressor": ("odaframe.plugins.regressor", "RegressorPlugin"),
    "perfmetrics": ("odaframe.plugins.perfmetrics", "PerfmetricsPlugin"),
    "persyst": ("odaframe.plugins.persyst", "PersystPlugin"),
    "clustering": ("odaframe.plugins.clustering", "ClusteringPlugin"),
    "querytest": ("odaframe.plugins.querytest", "QuerytestPlugin"),
}


def plugin_known(name: str) -> bool:
    return name in _REGISTRY


def plugin_names() -> list[str]:
    return sorted(_REGISTRY)


def create_plugin(name: str, config, ctx):
    try:
        module_name, class_name = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown plugin {name!r}") from None
    cls = getattr(import_module(module_name), class_name)
    return cls(config, ctx)
