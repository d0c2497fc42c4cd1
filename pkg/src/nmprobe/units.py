"""SI constants and the conversions used at the package boundary.

Everything inside the package works with hbar = k_B = 1.  SI quantities
(masses in kg, lengths in m, temperatures in K) enter only through the
reservoir parameters of :mod:`nmprobe.bec`, which convert them with the
values below.
"""

from scipy import constants as _c

HBAR = _c.hbar
K_B = _c.k
BOHR_RADIUS = _c.physical_constants["Bohr radius"][0]
ATOMIC_MASS = _c.physical_constants["atomic mass constant"][0]

# Isotope masses (u), CODATA/AME values.
MASS_RB87 = 86.909180527 * ATOMIC_MASS
MASS_NA23 = 22.9897692820 * ATOMIC_MASS

# Background scattering length of 87Rb as used for the reference gas.
A_RB = 99.0 * BOHR_RADIUS

NANOKELVIN = 1e-9
NANOMETER = 1e-9


def kelvin_to_joule(T):
    return K_B * T


def nanokelvin(T_nK):
    """Temperature given in nK, returned in K."""
    return T_nK * NANOKELVIN
