"""Automated characterization and tuning of simulated double quantum dots."""
__version__ = "0.1.0"
