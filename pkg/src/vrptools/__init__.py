"""Solver suite for capacitated vehicle routing with time windows, covering the
static problem and dynamic customer arrivals: an event-driven fleet simulator,
a value-based dispatcher with centralised vehicle-customer mapping, a genetic
algorithm baseline, an exact oracle with an LP exporter, and benchmark tooling.
"""

__version__ = "0.1.0"
