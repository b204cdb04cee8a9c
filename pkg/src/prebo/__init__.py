"""Pre-Born-Oppenheimer vibronic dynamics on a qubit-boson simulator."""

__version__ = "0.1.0"
