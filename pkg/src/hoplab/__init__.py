"""hoplab: hopper simulation, local-model trajectory optimization, and
policy distillation."""

__version__ = "0.1.0"
