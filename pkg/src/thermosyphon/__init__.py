"""Reduced-order coupled model of a two-phase thermosyphon condenser panel.

Modules: ``mesh2d`` and ``mfv2d`` (2D stabilised finite volumes), ``pipenet``
(1D channel networks), ``twophase`` (homogeneous mixture closures),
``reduction`` (vertical averaging), ``coupling`` (staggered 2D/1D iteration),
``config``, ``io``, ``benchmarks`` and ``cli``.
"""

__version__ = "0.1.0"
