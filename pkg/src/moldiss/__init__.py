"""Phase-space simulations of molecular condensate dissociation in 1D.

Three methods share one lattice and one set of observables: positive-P
stochastic fields, truncated Wigner sampling, and a pairing mean-field (HFB)
theory, plus a frozen-molecule reference.
"""
from .config import ValidatedConfig, ValidationError, load_config, paper_defaults, validate
from .ensemble import TimeSeries, compare, detect_tmax, run, undepleted_reference

__version__ = "0.1.0"

__all__ = [
    "ValidatedConfig", "ValidationError", "load_config", "paper_defaults", "validate",
    "TimeSeries", "compare", "detect_tmax", "run", "undepleted_reference", "__version__",
]
