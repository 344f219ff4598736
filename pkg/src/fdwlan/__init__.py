"""Discrete-event simulator of 802.11 DCF WLANs with an STR (full-duplex) MAC."""

from .engine import RunConfig, RunResult, run

__version__ = "0.1.0"
__all__ = ["RunConfig", "RunResult", "run", "__version__"]
