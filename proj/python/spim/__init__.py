"""Interference-analysis toolkit for statically partitioned multi-core systems.

Thin package wrapper around the C++ extension: experiment-space enumeration
(contention configs, cache-coloring assignments, bandwidth-regulation
assignments), the deterministic contention simulator, the metric line
protocol, and slowdown reporting.
"""

from spim._core import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
