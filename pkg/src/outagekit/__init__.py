"""Outage restoration analytics: dependence clusters, scaling laws, triage."""

__version__ = "0.1.0"
