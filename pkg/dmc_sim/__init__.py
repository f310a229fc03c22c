"""
DMC Simulator Package
MVDC shipboard supercapacitor charging with Disturbance Metric Control.
"""

__version__ = "0.3.0"

__all__ = ["cli", "config", "controller", "errors", "models", "plant", "scenario", "switchgear", "telemetry"]
