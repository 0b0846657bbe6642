"""Physical constants and unit conventions.

Internal convention: angular frequencies and rates in rad/ns, times in ns,
flux in units of the flux quantum.  All user-facing I/O is in GHz or MHz
(ordinary frequency, i.e. divided by 2*pi) and flux in Phi0.
"""

import numpy as np

PHI0 = 2.067833848e-15      # magnetic flux quantum h/2e (Wb)
H_PLANCK = 6.62607015e-34   # J s
HBAR = 1.054571817e-34      # J s
REDUCED_PHI0 = PHI0 / (2.0 * np.pi)

TWO_PI = 2.0 * np.pi


def ghz_to_radns(f_ghz):
    """Ordinary frequency in GHz -> angular frequency in rad/ns."""
    return TWO_PI * f_ghz


def radns_to_ghz(w_radns):
    """Angular frequency in rad/ns -> ordinary frequency in GHz."""
    return w_radns / TWO_PI


def mhz_to_radns(f_mhz):
    return TWO_PI * f_mhz * 1e-3


def radns_to_mhz(w_radns):
    return w_radns / TWO_PI * 1e3


def inductive_energy_radns(L_henry):
    """(Phi0/2pi)^2 / L, expressed as an angular frequency in rad/ns."""
    return REDUCED_PHI0**2 / L_henry / HBAR * 1e-9
