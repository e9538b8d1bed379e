"""Deterministic car-to-cloud LTE uplink traffic simulator.

Pipeline: mobility traces (generated or parsed) -> per-tick link budget and
best-SNR association -> Round-Robin resource-block scheduling -> per-second
CVIM data packages and transmit queues -> traffic-state statistics.
"""

__version__ = "0.1.0"
