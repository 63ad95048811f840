"""dipkit: numerics for dipole-coupled classical spins on periodic lattices.

Submodules:
  lattice   boxes, site/momentum indexing, staggered signs
  kernel    screened dipole pair couplings and their Fourier transform
  spectral  lattice constants and spectra of the transformed coupling
  bounds    infrared bounds and long-range-order estimates
  rp        reflections, gauge identities, and exact ground states
  mc        Metropolis sampling and fluctuation checks
  report    machine-readable verification reports
  cli       command-line entry point
"""

from ._backend import backend_name
from .lattice import LatticeSpec

__version__ = "0.1.0"

__all__ = ["LatticeSpec", "backend_name", "__version__"]
