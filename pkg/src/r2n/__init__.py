"""Rotation estimation with global polar pooling, in numpy.

Submodules: ``tensor_core`` (array helpers and precision switch), ``layers``
(conv, pooling, fc, activations, losses, Adam), ``gp_pooling``, ``warp``
(rotation-only spatial transformer), ``models``, ``dataset``, ``trainer``,
``checkpoint``, ``gradcheck`` and ``cli``.
"""

__version__ = "0.1.0"
