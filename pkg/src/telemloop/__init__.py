"""Closed-loop in-network telemetry simulator.

Sketch-based multidimensional telemetry on simulated switch data planes,
hierarchical local/central controllers, a northbound subscription API and
two feedback-driven services (key-range re-sharding and hot-key caching).
"""

__version__ = "0.1.0"
