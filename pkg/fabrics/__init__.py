"""Optimization fabrics: spec algebra, energized geometries and forced speed control.

Importing the package configures logging once; the public building blocks live in
the submodules (`spec_core`, `energy`, `geometry`, `energization`, `forcing`,
`kinematics`, `sim`) and the command-line surface in `cli`.
"""

from . import logging_config

__version__ = "0.1.0"
