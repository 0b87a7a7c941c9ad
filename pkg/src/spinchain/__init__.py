"""Control-pulse toolkit for multiple-spin coherence transfer in Ising chains.

Submodules:
  core       exact product-operator simulation for 2..6 spins
  reduced    the 4-dimensional subspace dynamics of the 3-spin transfer
  analytic   shooting-derived time-optimal pulses (3-spin, split 4-spin)
  grape      gradient-ascent pulse optimization and duration sweeps
  sequences  conventional transfer baseline, event sequences, pulse I/O
  dante      broadband hard-pulse conversion and offset profiles
  cli        command-line front end
"""

__version__ = "1.0.0"

from .core import (  # noqa: F401
    ControlChannel,
    ProductOperatorSpec,
    ShapedPulse,
    SpinSystem,
    build_operator,
    control_hamiltonian,
    drift_hamiltonian,
    evolve_pulse,
    expectation,
    load_spin_system,
    propagate,
    save_spin_system,
    transfer_fidelity,
)
