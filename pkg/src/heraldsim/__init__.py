"""Simulation and tomography of heralded Fock-basis qubits from seeded two-mode squeezing."""

__version__ = "0.1.0"
