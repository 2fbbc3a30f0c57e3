"""Neuromorphic shutter control: event-driven exposure, simulation and fusion."""

__version__ = "0.1.0"
