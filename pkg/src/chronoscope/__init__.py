"""chronoscope: time-aware video tasks and encoders on synthetic clips."""

__version__ = "0.1.0"
