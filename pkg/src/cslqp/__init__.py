"""Quasiparticle generation in superconductors driven by CSL collapse noise.

Energy-resolved CSL generation rates, the phonon-mediated kinetic equation for
the quasiparticle occupation, and the transmon observables derived from it.
"""

__version__ = "0.1.0"
