"""Experiment pipeline nodes wired together in mixprop.graph."""
