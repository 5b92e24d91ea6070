"""Discrete-event simulation of per-UE and group handover between LEO satellites."""

import importlib

__version__ = "0.1.0"

# resolved on first access so ``python -m ntn_handover analyze`` stays light
_EXPORTS = {
    "ConfigError": "scenario",
    "ScenarioConfig": "scenario",
    "load_config": "scenario",
    "MetricsLedger": "metrics",
    "RunReport": "metrics",
    "RunResult": "runner",
    "build_simulation": "runner",
    "run_scenario": "runner",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module 'ntn_handover' has no attribute {name!r}")
    return getattr(importlib.import_module(f".{mod}", __name__), name)
