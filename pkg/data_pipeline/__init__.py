"""
Data pipeline: accept regions, sample filters, warm-up data generation,
the dynamic training loop and the run-stage pipelines.
"""

__version__ = "1.0.0"
