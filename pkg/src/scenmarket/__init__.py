"""Scenario-based co-optimization of energy and reserve: clearing, pricing,
settlement and property checks."""
from .casedef import MarketCase, builtin_two_bus, load_case, save_results
from .errors import ScenMarketError

__version__ = "0.1.0"

__all__ = ["MarketCase", "ScenMarketError", "builtin_two_bus", "load_case", "save_results"]
