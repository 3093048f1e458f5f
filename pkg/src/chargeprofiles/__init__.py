"""Modeling and analysis of public EV charging load curves.

The package predicts 24-bin daily charging load curves for urban locations
as a peak-scaled convex mixture of learnable archetypal profiles, and ships
the supporting pipeline: session-log ingestion, demand-pattern analytics,
a synthetic scenario generator, and a command-line front end.
"""

__version__ = "0.1.0"
