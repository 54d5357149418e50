"""Condition monitoring for multivariate sensor streams.

Learns a self-organizing map of nominal behaviour, monitors new
observations through a distortion-based KPI with a frozen lower control
limit, diagnoses which variables drive a warning, and benchmarks the
detector against a Hotelling T2 control chart.
"""

__version__ = "0.1.0"
