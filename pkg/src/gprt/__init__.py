"""Relightable 3D Gaussians with learnable radiance transfer."""

import os

# the bundled TBB is too old for numba; pick OpenMP unless the caller chose
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
