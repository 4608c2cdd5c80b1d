"""Data selection, curriculum schedules, and corpus diagnostics for adapting
MT training data to a target domain."""

__version__ = "0.1.0"
