"""Single-mode eigensolver on a discretized phase ring.

Each 1D mode has H = C (n - n_g)^2 - sum_k A_k cos(k phi + theta_k) [+ q phi^2]
with C the prefactor of n^2 (4 E_C).  The kinetic term is applied spectrally
on an N-point periodic phase grid, which is equivalent to a charge basis
truncated to |n| <= (N - 1) / 2.  Operators diagonal in phi (phi, phi^2,
cos, sin) are evaluated by quadrature on the same grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .circuit import DeviceParams, reduce_floating_qubit
from .errors import InvalidParameterError, ResolutionError, StateError

KINDS = ("transmon", "p_mode", "m_mode", "harmonic")
DEFAULT_BASIS = 201
CONVERGENCE_GHZ = 1e-6  # 1 kHz
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class ModePotentialSpec:
    """Charging prefactor and potential of one mode.

    ``josephson`` holds (amplitude GHz, harmonic k, phase offset rad) triples,
    each contributing -A cos(k phi + theta).  ``quadratic`` adds q phi^2 on the
    principal branch and is only meant for harmonic reference modes.
    """

    kind: str
    charging: float
    josephson: tuple = ()
    n_g: float = 0.0
    quadratic: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown mode kind {self.kind!r}")
        if not self.charging > 0:
            raise InvalidParameterError("charging prefactor must be positive")
        terms = tuple((float(a), int(k), float(t)) for a, k, t in self.josephson)
        object.__setattr__(self, "josephson", terms)
        for _, k, _ in terms:
            if k < 1:
                raise InvalidParameterError("Josephson harmonics must be >= 1")
        if not terms and self.quadratic <= 0:
            raise InvalidParameterError("mode needs at least one Josephson term")

    def potential(self, phi):
        phi = np.asarray(phi, dtype=float)
        V = np.zeros_like(phi)
        for amp, k, theta in self.josephson:
            V -= amp * np.cos(k * phi + theta)
        if self.quadratic:
            V += self.quadratic * phi**2
        return V

    @property
    def phi_e(self) -> float:
        if self.kind == "m_mode":
            for _, k, theta in self.josephson:
                if k == 2:
                    return theta
        return 0.0


def transmon_spec(E_c: float, E_j: float, n_g: float = 0.0) -> ModePotentialSpec:
    return ModePotentialSpec("transmon", 4.0 * E_c, ((E_j, 1, 0.0),), n_g=n_g)


def p_mode_spec(E_cp: float, E_j: float) -> ModePotentialSpec:
    return ModePotentialSpec("p_mode", 4.0 * E_cp, ((2.0 * E_j, 1, 0.0),))


def m_mode_spec(E_cm: float, E_j: float, alpha: float, phi_e: float) -> ModePotentialSpec:
    terms = [(2.0 * E_j, 1, 0.0)]
    if alpha:
        terms.append((alpha * E_j, 2, phi_e))
    else:
        # keep the bias recorded even when the flux-sensitive term vanishes
        terms.append((0.0, 2, phi_e))
    return ModePotentialSpec("m_mode", 4.0 * E_cm, tuple(terms))


@dataclass(frozen=True)
class ModeSpectrum:
    """Lowest levels of one mode and operator matrix elements in its eigenbasis.

    ``energies`` are in GHz with the ground state subtracted; ``n``, ``phi`` and
    ``phi2`` are L x L Hermitian matrices.
    """

    phi_e: float
    energies: np.ndarray
    n: np.ndarray
    phi: np.ndarray
    phi2: np.ndarray
    spec: ModePotentialSpec | None = None
    basis_size: int = 0
    _vectors: np.ndarray | None = field(default=None, repr=False, compare=False)
    _n_grid: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def levels(self) -> int:
        return len(self.energies)

    @property
    def omega_01(self) -> float:
        return float(self.energies[1])

    @property
    def anharmonicity(self) -> float:
        """omega_12 - omega_01 in MHz."""
        e = self.energies
        return 1e3 * float((e[2] - e[1]) - (e[1] - e[0]))


@lru_cache(maxsize=16)
def _grid(N: int):
    phi = -np.pi + 2 * np.pi * np.arange(N) / N
    if N % 2:
        k = np.arange(N) - (N - 1) // 2
    else:
        k = np.arange(N) - N // 2
    F = np.exp(-1j * np.outer(k, phi)) / math.sqrt(N)
    return phi, k, F


def _charge_operator(N: int, n_g: float = 0.0, power: int = 1):
    _, k, F = _grid(N)
    return F.conj().T @ (((k - n_g) ** power)[:, None] * F)


def _diagonalize(spec: ModePotentialSpec, N: int, L: int):
    phi, k, F = _grid(N)
    T = F.conj().T @ ((spec.charging * (k - spec.n_g) ** 2)[:, None] * F)
    H = T + np.diag(spec.potential(phi))
    if spec.n_g == 0.0 and N % 2:
        H = H.real
    H = 0.5 * (H + H.conj().T)
    evals, evecs = eigh(H, subset_by_index=(0, L - 1))
    evecs = _fix_phases(evecs)
    return evals, evecs


def _fix_phases(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivots) / pivots)[None, :]


def _matrix(vectors, diag=None, dense=None):
    if diag is not None:
        M = vectors.conj().T @ (diag[:, None] * vectors)
    else:
        M = vectors.conj().T @ dense @ vectors
    dev = np.max(np.abs(M - M.conj().T)) if M.size else 0.0
    if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(M))):
        raise ResolutionError(f"operator matrix deviates from Hermitian by {dev:.2e}")
    return 0.5 * (M + M.conj().T)


def solve_mode(spec: ModePotentialSpec, basis_size: int = DEFAULT_BASIS, levels: int = 4,
               check_convergence: bool = True) -> ModeSpectrum:
    """Diagonalize one mode and return its lowest ``levels`` states.

    With ``check_convergence`` the calculation is repeated on a grid of
    2 * basis_size + 1 points and a ResolutionError is raised if omega_01
    moves by more than 1 kHz.
    """
    if levels < 3:
        raise InvalidParameterError("at least three levels are required")
    if basis_size < 4 * levels:
        raise InvalidParameterError("basis_size must be at least 4 * levels")
    N = int(basis_size)
    evals, evecs = _diagonalize(spec, N, levels)
    if check_convergence:
        fine, _ = _diagonalize(spec, 2 * N + 1, 2)
        shift = abs((fine[1] - fine[0]) - (evals[1] - evals[0]))
        if shift > CONVERGENCE_GHZ:
            raise ResolutionError(
                f"omega_01 moved by {shift * 1e6:.3g} kHz on grid refinement; increase basis_size")
    if np.any(np.diff(evals) <= 0):
        raise ResolutionError("degenerate levels in the retained subspace")
    phi, _, _ = _grid(N)
    V = spec.potential(phi)
    if evals[-1] > V.max():
        warnings.warn(f"{spec.kind}: level {levels - 1} lies above the potential barrier",
                      RuntimeWarning, stacklevel=2)
    n_grid = _charge_operator(N, spec.n_g)
    n = _matrix(evecs, dense=n_grid)
    if spec.n_g == 0.0 and N % 2:
        n = n.astype(complex)
    return ModeSpectrum(
        phi_e=spec.phi_e,
        energies=evals - evals[0],
        n=n,
        phi=_matrix(evecs, diag=phi).astype(complex),
        phi2=_matrix(evecs, diag=phi**2).astype(complex),
        spec=spec,
        basis_size=N,
        _vectors=evecs,
        _n_grid=n_grid,
    )


def operator_in_eigenbasis(spectrum: ModeSpectrum, operator: str, k: int = 1) -> np.ndarray:
    """Matrix elements of n, phi, phi2, cos(k phi) or sin(k phi) between retained levels."""
    if spectrum._vectors is None:
        raise StateError("spectrum carries no eigenvectors; solve it with solve_mode first")
    vecs = spectrum._vectors
    phi, _, _ = _grid(spectrum.basis_size)
    if operator == "n":
        M = _matrix(vecs, dense=spectrum._n_grid)
    elif operator == "phi":
        M = _matrix(vecs, diag=phi)
    elif operator == "phi2":
        M = _matrix(vecs, diag=phi**2)
    elif operator == "cos":
        M = _matrix(vecs, diag=np.cos(k * phi))
    elif operator == "sin":
        M = _matrix(vecs, diag=np.sin(k * phi))
    else:
        raise InvalidParameterError(f"unknown operator {operator!r}")
    return np.asarray(M, dtype=complex)


def transmon_ej_for_frequency(E_c: float, omega_01: float, basis_size: int = DEFAULT_BASIS) -> float:
    """Josephson energy giving a transmon the requested 0-1 frequency (GHz)."""

    def f(E_j):
        return solve_mode(transmon_spec(E_c, E_j), basis_size, 3,
                          check_convergence=False).omega_01 - omega_01

    guess = (omega_01 + E_c) ** 2 / (8 * E_c)
    lo, hi = 0.5 * guess, 2.0 * guess
    return brentq(f, lo, hi, xtol=1e-12, rtol=1e-13)


def dtc_flux_sweep(params: DeviceParams, phi_grid, basis_size: int = DEFAULT_BASIS,
                   dressed: bool = True):
    """p- and m-mode 0-1 frequencies over a flux grid.

    With ``dressed`` the two coupler modes are coupled through the
    -(E_j / 2) phi_p^2 phi_m^2 term and the reported frequencies are those of
    the dressed states with most weight on one p or one m excitation.
    """
    phi_grid = np.asarray(phi_grid, dtype=float)
    if phi_grid.size and np.ptp(phi_grid) > 2 * np.pi + 1e-12:
        raise InvalidParameterError("flux grid spans more than one period")
    red = reduce_floating_qubit(params)
    p = solve_mode(p_mode_spec(red.E_cp, params.E_j), basis_size, 4)
    rows = []
    for phi_e in phi_grid:
        m = solve_mode(m_mode_spec(red.E_cm, params.E_j, params.alpha, float(phi_e)), basis_size, 4,
                       check_convergence=False)
        if dressed:
            w_p, w_m = _dressed_coupler(p, m, params.E_j)
        else:
            w_p, w_m = p.omega_01, m.omega_01
        rows.append((float(phi_e), float(w_p), float(w_m)))
    return rows


def _dressed_coupler(p: ModeSpectrum, m: ModeSpectrum, E_j: float):
    Lp, Lm = p.levels, m.levels
    H = np.kron(np.diag(p.energies), np.eye(Lm)) + np.kron(np.eye(Lp), np.diag(m.energies))
    H = H - 0.5 * E_j * np.kron(p.phi2, m.phi2)
    H = 0.5 * (H + H.conj().T)
    evals, evecs = np.linalg.eigh(H)
    ground = int(np.argmax(np.abs(evecs[0, :])))
    e0 = evals[ground]
    out = []
    for idx in (1 * Lm + 0, 0 * Lm + 1):
        j = int(np.argmax(np.abs(evecs[idx, :])))
        out.append(evals[j] - e0)
    return out
