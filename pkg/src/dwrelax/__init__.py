"""Dissipative relaxation of bosons in a double well.

Submodules: :mod:`fock` (Hamiltonian and spectrum), :mod:`bath` (ohmic bath,
rates and transition operators), :mod:`liouville` (Redfield and Lindblad
generators, propagation), :mod:`analysis` (fluctuations and power-law
fits) and :mod:`expcli` (configuration, sweeps and the command line).
"""

__version__ = "0.1.0"
