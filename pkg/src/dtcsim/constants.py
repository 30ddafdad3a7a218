"""Physical constants and unit conversions.

Energies are stored as linear frequencies in GHz (E/h), capacitances in fF
and times in ns, so ``2 * pi * f[GHz] * t[ns]`` is a phase in radians.
"""

import numpy as np

E_CHARGE = 1.60217663400e-19  # C
H_PLANCK = 6.62607015000e-34  # J s

# e^2 / (h * 1 fF) expressed in GHz; E_C[GHz] = CHARGE_ENERGY_GHZ_FF / C[fF].
CHARGE_ENERGY_GHZ_FF = E_CHARGE**2 / (H_PLANCK * 1e-15) / 1e9

TWO_PI = 2.0 * np.pi


def charging_energy(capacitance_ff: float) -> float:
    """E_C = e^2 / (2C) in GHz for a capacitance in fF."""
    return CHARGE_ENERGY_GHZ_FF / (2.0 * capacitance_ff)
