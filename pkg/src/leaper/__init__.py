"""Planned episodic resets for learning nonprehensile rearrangement policies."""

__version__ = "0.1.0"
