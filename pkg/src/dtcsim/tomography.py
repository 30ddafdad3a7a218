"""Noiseless state and process tomography and virtual-Z phase correction.

Process matrices use the unnormalized Pauli basis {I, X, Y, Z}^n, with
E(rho) = sum_mn chi_mn P_m rho P_n^dag, so a trace-preserving map has
Tr chi = 1 and the process fidelity is F = Tr(chi_ideal chi).
"""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .errors import BasisError, InvalidParameterError

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PSD_TOL = 1e-10


@lru_cache(maxsize=4)
def pauli_basis(n: int):
    names, mats = [], []
    for combo in itertools.product("IXYZ", repeat=n):
        M = np.array([[1.0 + 0j]])
        for c in combo:
            M = np.kron(M, PAULI[c])
        names.append("".join(combo))
        mats.append(M)
    return names, np.array(mats)


def _nqubits(d: int) -> int:
    n = int(round(np.log2(d)))
    if 2**n != d:
        raise InvalidParameterError(f"dimension {d} is not a power of two")
    return n


# ---------------------------------------------------------------- states


@dataclass
class DensityMatrix:
    rho: np.ndarray
    fidelity: float = float("nan")
    projected: bool = False

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if abs(np.trace(self.rho).real - 1) > 1e-10:
            raise InvalidParameterError("density matrix must have unit trace")
        if np.min(np.linalg.eigvalsh(self.rho)) < -PSD_TOL:
            raise InvalidParameterError("density matrix is not positive semidefinite")

    @property
    def dimension(self) -> int:
        return self.rho.shape[0]

    def to_json(self) -> str:
        return json.dumps({"dimension": self.dimension, "fidelity": self.fidelity,
                           "rho": _pairs(self.rho)}, sort_keys=True)


def _pairs(M):
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def pauli_expectations(state) -> dict:
    """Exact expectation values of every Pauli string for a vector or density matrix."""
    rho = _as_density(state)
    names, mats = pauli_basis(_nqubits(rho.shape[0]))
    vals = np.einsum("kij,ji->k", mats, rho).real
    return dict(zip(names, vals))


def _as_density(state):
    s = np.asarray(state, dtype=complex)
    if s.ndim == 1:
        return np.outer(s, s.conj())
    return s


def reconstruct(expectations: dict, n: int) -> np.ndarray:
    names, mats = pauli_basis(n)
    d = 2**n
    return sum(expectations[name] * M for name, M in zip(names, mats)) / d


def nearest_psd(rho):
    """Closest unit-trace PSD matrix (eigenvalue clipping with renormalization)."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise InvalidParameterError("reconstruction has no positive weight")
    w = w / w.sum()
    return (V * w) @ V.conj().T


def simulate_qst(state, target) -> DensityMatrix:
    """Infinite-shot Pauli tomography of ``state`` and fidelity <psi_t|rho|psi_t>.

    ``state`` may be unnormalized (population lost to leakage): the fidelity
    is evaluated on the raw reconstruction, so leakage lowers it, while the
    returned density matrix is renormalized.
    """
    raw = _as_density(state)
    n = _nqubits(raw.shape[0])
    rho = reconstruct(pauli_expectations(raw), n)
    t = np.asarray(target, dtype=complex)
    t = t / np.linalg.norm(t)
    fidelity = float((t.conj() @ rho @ t).real)
    trace = np.trace(rho).real
    if trace <= 0:
        raise InvalidParameterError("state has no weight in the computational subspace")
    rho_n = rho / trace
    projected = False
    if np.min(np.linalg.eigvalsh(rho_n)) < -PSD_TOL:
        warnings.warn("reconstruction not positive semidefinite; projecting", RuntimeWarning,
                      stacklevel=2)
        rho_n = nearest_psd(rho_n)
        projected = True
    return DensityMatrix(0.5 * (rho_n + rho_n.conj().T), fidelity, projected)


# ---------------------------------------------------------------- processes


def standard_inputs(n: int = 2):
    """Product inputs drawn from {|0>, |1>, |+>, |+i>} on every qubit (4^n states)."""
    single = [np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / np.sqrt(2),
              np.array([1, 1j]) / np.sqrt(2)]
    states = []
    for combo in itertools.product(range(4), repeat=n):
        v = np.array([1.0 + 0j])
        for c in combo:
            v = np.kron(v, single[c])
        states.append(v)
    return states


@dataclass
class ProcessMatrix:
    chi: np.ndarray
    fidelity: float
    average_gate_fidelity: float
    completeness_residual: float
    leakage: float

    def to_json(self) -> str:
        return json.dumps({"fidelity": self.fidelity,
                           "average_gate_fidelity": self.average_gate_fidelity,
                           "leakage": self.leakage, "chi": _pairs(self.chi)}, sort_keys=True)

    def write_csv(self, path):
        names, _ = pauli_basis(_nqubits(int(round(np.sqrt(self.chi.shape[0])))))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "real", "imag", "abs"])
            for i, a in enumerate(names):
                for j, b in enumerate(names):
                    z = self.chi[i, j]
                    w.writerow([a, b, f"{z.real:.12g}", f"{z.imag:.12g}", f"{abs(z):.12g}"])


@lru_cache(maxsize=4)
def _chi_system(n: int):
    """Matrix mapping vec(chi) to the superoperator in column-stacked form."""
    _, P = pauli_basis(n)
    cols = []
    for m in range(len(P)):
        for k in range(len(P)):
            cols.append(np.kron(P[k].conj(), P[m]).reshape(-1))
    return np.array(cols).T


def chi_from_kraus(K) -> np.ndarray:
    """chi of the single-Kraus map rho -> K rho K^dag."""
    K = np.asarray(K, dtype=complex)
    d = K.shape[0]
    _, P = pauli_basis(_nqubits(d))
    c = np.einsum("kji,ji->k", P.conj(), K) / d
    return np.outer(c, c.conj())


def simulate_qpt(channel, target) -> ProcessMatrix:
    """Linear-inversion QPT of ``channel`` from the 4^n standard inputs.

    ``channel`` is either a d x d matrix M (the projected map rho -> M rho
    M^dag) or a callable returning the output density matrix of an input
    density matrix.
    """
    V = np.asarray(target, dtype=complex)
    d = V.shape[0]
    n = _nqubits(d)
    if callable(channel):
        apply = channel
        kraus = None
    else:
        kraus = np.asarray(channel, dtype=complex)
        apply = lambda rho: kraus @ rho @ kraus.conj().T  # noqa: E731
    inputs = [np.outer(v, v.conj()) for v in standard_inputs(n)]
    outputs = [apply(r) for r in inputs]
    A = np.array([r.reshape(-1, order="F") for r in inputs]).T
    B = np.array([r.reshape(-1, order="F") for r in outputs]).T
    if np.linalg.cond(A) > 1e12:
        raise BasisError("input states do not span operator space")
    S = B @ np.linalg.inv(A)
    chi = np.linalg.solve(_chi_system(n), S.reshape(-1)).reshape(d * d, d * d)
    chi = 0.5 * (chi + chi.conj().T)
    # completeness: rebuild outputs from chi
    _, P = pauli_basis(n)
    resid = 0.0
    for r, out in zip(inputs, outputs):
        rebuilt = np.einsum("mn,mij,jk,nlk->il", chi, P, r, P.conj())
        resid = max(resid, float(np.max(np.abs(rebuilt - out))))
    chi_ideal = chi_from_kraus(V)
    F = float(np.trace(chi_ideal @ chi).real)
    leakage = float(1.0 - np.mean([np.trace(o).real for o in outputs]))
    if kraus is not None:
        Favg = average_gate_fidelity(kraus, V)
    else:
        Favg = (d * F + 1 - leakage) / (d + 1)
    return ProcessMatrix(chi, F, Favg, resid, leakage)


def gate_fidelity(M, V) -> float:
    """Process fidelity |Tr(V^dag M)|^2 / d^2 of the projected map M."""
    M = np.asarray(M)
    d = M.shape[0]
    return float(abs(np.trace(np.asarray(V).conj().T @ M)) ** 2 / d**2)


def average_gate_fidelity(M, V) -> float:
    """(|Tr(V^dag M)|^2 + Tr(M^dag M)) / (d (d + 1)) for a single-Kraus map."""
    M = np.asarray(M)
    d = M.shape[0]
    return float((abs(np.trace(np.asarray(V).conj().T @ M)) ** 2
                  + np.trace(M.conj().T @ M).real) / (d * (d + 1)))


def z_phases(theta) -> np.ndarray:
    """diag of Z(theta_1) x ... x Z(theta_n), Z(t) = diag(1, e^{i t})."""
    theta = np.atleast_1d(theta)
    bits = np.array(list(itertools.product((0, 1), repeat=len(theta))))
    return np.exp(1j * bits @ theta)


def local_phase_optimize(U, V, starts: int | None = None):
    """Fidelity of Z(theta) U to V maximized over per-qubit Z rotations.

    Returns (fidelity, phases) with phases wrapped to [0, 2 pi).
    """
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    d = U.shape[0]
    n = _nqubits(d)
    if starts is None:
        starts = 4 if n <= 2 else 2
    bits = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    # Tr((D U)^dag V) = sum_k conj(D_kk) (V U^dag)_kk
    c = np.einsum("ij,kj->ik", V, U.conj()).diagonal()

    def neg(theta):
        z = np.exp(-1j * bits @ theta)
        return -abs(z @ c) ** 2 / d**2

    def grad(theta):
        z = np.exp(-1j * bits @ theta)
        s = z @ c
        ds = (-1j * bits.T) @ (z * c)
        return -2 * (np.conj(s) * ds).real / d**2

    # seed that aligns every single-excitation term with the |0...0> term
    single = [int("0" * q + "1" + "0" * (n - q - 1), 2) for q in range(n)]
    seed = np.array([np.angle(c[0]) - np.angle(c[i]) for i in single]) * -1
    grid = itertools.product(np.linspace(0, 2 * np.pi, starts, endpoint=False), repeat=n)
    best = None
    for start in itertools.chain([seed], grid):
        r = minimize(neg, np.array(start), jac=grad, method="BFGS", options={"gtol": 1e-12})
        if best is None or r.fun < best.fun:
            best = r
    return float(-best.fun), tuple(float(x) for x in np.mod(best.x, 2 * np.pi))
