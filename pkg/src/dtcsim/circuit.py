"""Circuit parameters, capacitance network reduction and static couplings.

Two transmon qubits couple capacitively to the two pads of a double-transmon
coupler (DTC).  The coupler has a symmetric (p) mode with fixed frequency and an
antisymmetric (m) mode whose frequency is tuned by the loop flux.  Node order
for every matrix in this module is (a, b, p, m): qubit a, qubit b, p-mode,
m-mode.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import CHARGE_ENERGY_GHZ_FF
from .errors import (ConditioningError, DispersiveRegimeError,
                     InvalidNetworkError, InvalidParameterError)

SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class DeviceParams:
    """Raw per-element design values of one qubit-DTC-qubit cell.

    Capacitances in fF, Josephson energies in GHz (E/h).  ``C_q01``/``C_q02``
    are the two qubit islands to ground and ``C_q12`` the capacitance across the
    qubit junction; ``C_c01``/``C_c02``/``C_c12`` are the analogous coupler pad
    values, ``C_1c``/``C_2c`` the qubit-to-coupler capacitances.
    """

    C_q01: float = 82.9
    C_q02: float = 78.6
    C_q12: float = 32.9
    C_c01: float = 84.6
    C_c02: float = 84.6
    C_c12: float = 4.0
    C_1c: float = 11.3
    C_2c: float = 11.3
    E_jq: float = 23.1
    E_j1: float = 36.0
    E_j2: float = 36.0
    alpha: float = 0.27
    phi_e: float = 0.0

    def __post_init__(self):
        for name in ("C_q01", "C_q02", "C_q12", "C_c01", "C_c02", "C_c12",
                     "C_1c", "C_2c"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be a positive capacitance, got {value}")
        for name in ("E_jq", "E_j1", "E_j2"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not math.isfinite(self.phi_e):
            raise InvalidParameterError("phi_e must be finite")
        _require_symmetric("E_j1", self.E_j1, "E_j2", self.E_j2)
        _require_symmetric("C_c01", self.C_c01, "C_c02", self.C_c02)
        _require_symmetric("C_1c", self.C_1c, "C_2c", self.C_2c)

    @property
    def E_j(self) -> float:
        return 0.5 * (self.E_j1 + self.E_j2)

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)


def _require_symmetric(name_a, a, name_b, b):
    if abs(a - b) > SYMMETRY_RTOL * max(abs(a), abs(b)):
        raise InvalidParameterError(
            f"{name_a}={a} and {name_b}={b} differ; only the symmetric coupler is modeled")


@dataclass(frozen=True)
class ReducedCircuit:
    """Grounded single-mode equivalent of the floating layout.

    ``C_q`` is the bare qubit mode capacitance, ``C_c`` the pad capacitance of
    each coupler node, ``C_12`` the capacitance bridging the coupler junction
    and ``C_g`` the effective qubit-coupler capacitance.  Charging energies
    include the loading by ``C_g`` and are in GHz.
    """

    C_q: float
    C_c: float
    C_12: float
    C_g: float
    E_cq: float
    E_cp: float
    E_cm: float


@dataclass(frozen=True)
class CouplingSet:
    """Qubit-mode exchange strengths and detunings, all in MHz.

    Index 1/2 is qubit a/b.  Couplings are magnitudes; the minus sign on the
    qubit-2/m-mode exchange is applied where the Hamiltonian is assembled.
    """

    g_1p: float
    g_2p: float
    g_1m: float
    g_2m: float
    delta_1p: float
    delta_2p: float
    delta_1m: float
    delta_2m: float

    @property
    def g_eff(self) -> float:
        return effective_coupling(self)


def reduce_floating_qubit(params: DeviceParams) -> ReducedCircuit:
    """Map the floating-qubit capacitances onto the grounded model.

    The qubit mode sees its two islands in series, shunted by the junction
    capacitance.  The coupling capacitor attaches to a single island whose
    voltage is ``C_q02 / (C_q01 + C_q02)`` of the mode voltage, which sets the
    effective coupling capacitance.  Coupler loading of the qubit mode enters
    through the ``C_q + C_g`` diagonal of the capacitance matrix.
    """
    series = params.C_q01 * params.C_q02 / (params.C_q01 + params.C_q02)
    C_q = params.C_q12 + series
    island_fraction = params.C_q02 / (params.C_q01 + params.C_q02)
    C_g = 0.5 * (params.C_1c + params.C_2c) * island_fraction
    C_c = 0.5 * (params.C_c01 + params.C_c02)
    C_12 = params.C_c12
    for name, value in (("C_q", C_q), ("C_c", C_c), ("C_12", C_12), ("C_g", C_g)):
        if not value > 0:
            raise InvalidNetworkError(f"derived capacitance {name}={value} is not positive")
    k = CHARGE_ENERGY_GHZ_FF
    return ReducedCircuit(
        C_q=C_q, C_c=C_c, C_12=C_12, C_g=C_g,
        E_cq=k / (2.0 * (C_q + C_g)),
        E_cp=k / (4.0 * (C_c + C_g)),
        E_cm=k / (4.0 * (C_c + 2.0 * C_12 + C_g)),
    )


def build_capacitance_matrix(reduced: ReducedCircuit) -> np.ndarray:
    """Kinetic-energy matrix over (a, b, p, m), K = 1/2 Phi_dot^T C Phi_dot.

    The qubit-a capacitor couples to node 1 = p - m and the qubit-b capacitor to
    node 2 = p + m, which fixes the sign pattern of the qubit-m entries.
    """
    Cq, Cc, C12, Cg = reduced.C_q, reduced.C_c, reduced.C_12, reduced.C_g
    return np.array([
        [Cg + Cq, 0.0, -Cg, Cg],
        [0.0, Cg + Cq, -Cg, -Cg],
        [-Cg, -Cg, 2 * Cc + 2 * Cg, 0.0],
        [Cg, -Cg, 0.0, 2 * Cc + 4 * C12 + 2 * Cg],
    ])


def invert_capacitance(C: np.ndarray, max_condition: float = 1e12) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidNetworkError("capacitance matrix must be square")
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > max_condition:
        raise ConditioningError(f"capacitance matrix condition number {cond:.3g} exceeds {max_condition:.1g}")
    Cinv = np.linalg.inv(C)
    return 0.5 * (Cinv + Cinv.T)


def first_order_inverse(reduced: ReducedCircuit) -> np.ndarray:
    """Closed-form inverse to first order in C_g; kept as a cross-check only."""
    Cq, Cc, C12, Cg = reduced.C_q, reduced.C_c, reduced.C_12, reduced.C_g
    ap = Cg / (2 * (Cg + Cq) * (Cg + Cc))
    am = Cg / ((Cq + Cg) * (4 * C12 + 2 * Cc + 2 * Cg))
    return np.array([
        [1 / (Cq + Cg), 0.0, ap, -am],
        [0.0, 1 / (Cq + Cg), ap, am],
        [ap, ap, 1 / (2 * Cc + 2 * Cg), 0.0],
        [-am, am, 0.0, 1 / (2 * Cc + 4 * C12 + 2 * Cg)],
    ])


def mode_couplings(reduced: ReducedCircuit, omega_1: float, omega_2: float,
                   omega_p: float, omega_m: float) -> CouplingSet:
    """Harmonic estimates of the qubit-mode exchange couplings.

    Frequencies in GHz, result in MHz.  The prefactor follows from the charge
    coupling 2e^2 C^-1_ij n_i n_j with transmon zero-point charge fluctuations
    |<0|n|1>|^2 = omega / (16 E_C).
    """
    for name, w in (("omega_1", omega_1), ("omega_2", omega_2),
                    ("omega_p", omega_p), ("omega_m", omega_m)):
        if not w > 0:
            raise InvalidParameterError(f"{name} must be positive, got {w}")
    Cq, Cc, C12, Cg = reduced.C_q, reduced.C_c, reduced.C_12, reduced.C_g
    kp = 0.5 * Cg / math.sqrt(2 * (Cc + Cg) * (Cq + Cg))
    km = 0.5 * Cg / math.sqrt(2 * (Cc + Cg + 2 * C12) * (Cq + Cg))
    mhz = 1e3
    return CouplingSet(
        g_1p=mhz * kp * math.sqrt(omega_1 * omega_p),
        g_2p=mhz * kp * math.sqrt(omega_2 * omega_p),
        g_1m=mhz * km * math.sqrt(omega_1 * omega_m),
        g_2m=mhz * km * math.sqrt(omega_2 * omega_m),
        delta_1p=mhz * (omega_1 - omega_p),
        delta_2p=mhz * (omega_2 - omega_p),
        delta_1m=mhz * (omega_1 - omega_m),
        delta_2m=mhz * (omega_2 - omega_m),
    )


def effective_coupling(c: CouplingSet) -> float:
    """Second-order qubit-qubit coupling in MHz; the m-mode path enters with a minus sign."""
    deltas = (c.delta_1p, c.delta_2p, c.delta_1m, c.delta_2m)
    if any(d == 0 for d in deltas):
        raise DispersiveRegimeError("zero qubit-mode detuning: dispersive expansion undefined")
    pairs = ((c.g_1p, c.delta_1p), (c.g_2p, c.delta_2p),
             (c.g_1m, c.delta_1m), (c.g_2m, c.delta_2m))
    if any(abs(d) < 5 * abs(g) for g, d in pairs):
        warnings.warn("qubit-mode detuning below 5 g; dispersive estimate is unreliable",
                      RuntimeWarning, stacklevel=2)
    p_term = 0.5 * c.g_1p * c.g_2p * (1 / c.delta_1p + 1 / c.delta_2p)
    m_term = 0.5 * c.g_1m * c.g_2m * (1 / c.delta_1m + 1 / c.delta_2m)
    return p_term - m_term
