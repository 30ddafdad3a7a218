"""Coupled qubit-coupler Hamiltonians, dressed-state labeling and static ZZ.

Two tiers share one interface (:class:`CoupledModel`):

* effective: every mode is reduced to its lowest levels, qubits exchange
  excitations with the coupler p- and m-modes through rotating-wave terms, the
  m-mode coupling to the right-hand qubit carrying a minus sign.  Total
  excitation number is conserved, so the basis is truncated by excitation
  number and the Hamiltonian is block diagonal.
* full: charge-charge couplings come from the exact inverse capacitance
  matrix and the phi_p^2 phi_m^2 coupler term is kept in full.

Both expose ``H(phi_e, offsets) = H_fixed + sum_c f_c(phi_e, offsets) A_c``
so dynamics can evaluate a whole time grid at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .circuit import (DeviceParams, build_capacitance_matrix, invert_capacitance,
                      mode_couplings, reduce_floating_qubit)
from .constants import CHARGE_ENERGY_GHZ_FF
from .errors import (AmbiguousLabelingError, InvalidParameterError, NotFoundError,
                     SizeError)
from .modes import (ModePotentialSpec, ModeSpectrum, dtc_flux_sweep, operator_in_eigenbasis,
                    solve_mode, transmon_ej_for_frequency, transmon_spec)

DEFAULT_LEVELS = {"qubit": 4, "p": 4, "m": 5}
MAX_DIM = 10_000
HERMITIAN_TOL = 1e-12


@dataclass
class ControlTerm:
    name: str
    op: np.ndarray
    coefficient: Callable  # (phi_e array, offsets dict) -> array


class CoupledModel:
    """Truncated multimode Hamiltonian over labeled product states.

    ``labels`` are occupation tuples ordered like ``mode_names``;
    ``blocks`` partition the basis into subspaces the Hamiltonian never
    connects (excitation-number sectors for the effective tier).
    """

    def __init__(self, tier, mode_names, dims, labels, fixed, terms, qubit_modes,
                 reference_flux=0.0, blocks=None, rebuild=None, info=None):
        self.tier = tier
        self.mode_names = tuple(mode_names)
        self.dims = tuple(dims)
        self.labels = [tuple(l) for l in labels]
        self.index = {l: i for i, l in enumerate(self.labels)}
        self.fixed = fixed
        self.terms = list(terms)
        self.qubit_modes = tuple(qubit_modes)
        self.reference_flux = float(reference_flux)
        self.blocks = blocks if blocks is not None else [np.arange(len(self.labels))]
        self._rebuild = rebuild
        self.info = dict(info or {})

    @property
    def dimension(self) -> int:
        return len(self.labels)

    @property
    def n_qubits(self) -> int:
        return len(self.qubit_modes)

    def coefficients(self, phi_e, offsets=None):
        phi_e = np.atleast_1d(np.asarray(phi_e, dtype=float))
        offsets = {k: np.broadcast_to(np.asarray(v, dtype=float), phi_e.shape)
                   for k, v in (offsets or {}).items()}
        if not self.terms:
            return np.zeros((phi_e.size, 0))
        return np.stack([np.broadcast_to(t.coefficient(phi_e, offsets), phi_e.shape)
                         for t in self.terms], axis=1)

    def hamiltonian(self, phi_e=None, offsets=None) -> np.ndarray:
        phi = self.reference_flux if phi_e is None else phi_e
        c = self.coefficients(phi, offsets)[0]
        H = self.fixed.copy()
        for coef, term in zip(c, self.terms):
            if coef:
                H = H + coef * term.op
        dev = np.max(np.abs(H - H.conj().T))
        if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(H))):
            raise InvalidParameterError(f"assembled Hamiltonian not Hermitian ({dev:.2e})")
        return 0.5 * (H + H.conj().T)

    def hamiltonian_batch(self, phi_e, offsets=None, block=None) -> np.ndarray:
        """Hamiltonians on a time grid, shape (T, d, d), restricted to one block if given."""
        c = self.coefficients(phi_e, offsets)
        if block is None:
            fixed = self.fixed
            ops = [t.op for t in self.terms]
        else:
            ix = np.ix_(block, block)
            fixed = self.fixed[ix]
            ops = [t.op[ix] for t in self.terms]
        H = np.broadcast_to(fixed, (c.shape[0],) + fixed.shape).copy()
        for k, op in enumerate(ops):
            if np.any(op):
                H += c[:, k, None, None] * op
        return H

    def at_flux(self, phi_e: float) -> "CoupledModel":
        if self._rebuild is not None:
            return self._rebuild(phi_e)
        clone = CoupledModel(self.tier, self.mode_names, self.dims, self.labels, self.fixed,
                             self.terms, self.qubit_modes, phi_e, self.blocks, None, self.info)
        return clone

    def qubit_label(self, bits: Sequence[int]) -> tuple:
        """Full product label with the given qubit occupations and empty coupler modes."""
        label = [0] * len(self.mode_names)
        for q, b in zip(self.qubit_modes, bits):
            label[q] = int(b)
        return tuple(label)

    def computational_labels(self):
        return [self.qubit_label(bits)
                for bits in itertools.product((0, 1), repeat=self.n_qubits)]


@dataclass
class LabeledEigensystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: list
    index: dict = field(default_factory=dict)
    overlap: dict = field(default_factory=dict)

    def energy(self, label) -> float:
        return float(self.eigenvalues[self.index[tuple(label)]])

    def vector(self, label) -> np.ndarray:
        return self.eigenvectors[:, self.index[tuple(label)]]


@dataclass
class ZZResult:
    xi_zz: float  # kHz
    E_00: float
    E_01: float
    E_10: float
    E_11: float
    phi_e: float = 0.0
    detuning: float = 0.0  # MHz


# ---------------------------------------------------------------- labeling


def diagonalize(model: CoupledModel, phi_e=None, offsets=None, labels=None,
                strict: bool = True) -> LabeledEigensystem:
    """Eigen-decompose and label dressed states by maximum bare-state overlap.

    ``labels`` defaults to the computational states.  A label whose best overlap
    is below 0.5, or two labels claiming one dressed state, raises
    AmbiguousLabelingError when ``strict``.
    """
    H = model.hamiltonian(phi_e, offsets)
    evals = np.zeros(model.dimension)
    evecs = np.zeros((model.dimension, model.dimension), dtype=complex)
    for block in model.blocks:
        ix = np.ix_(block, block)
        w, v = np.linalg.eigh(H[ix])
        # eigenvalues of each block are kept in their own columns
        evals[block] = w
        evecs[ix] = v
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    wanted = model.computational_labels() if labels is None else [tuple(l) for l in labels]
    index, overlap = {}, {}
    claimed = {}
    for lab in wanted:
        b = model.index[lab]
        probs = np.abs(evecs[b, :]) ** 2
        d = int(np.argmax(probs))
        index[lab] = d
        overlap[lab] = float(probs[d])
        if strict and probs[d] <= 0.5:
            raise AmbiguousLabelingError(
                f"state {lab} hybridized: best overlap {probs[d]:.3f}", lab, float(probs[d]))
        if d in claimed and strict:
            raise AmbiguousLabelingError(
                f"labels {claimed[d]} and {lab} map to the same dressed state", lab, float(probs[d]))
        claimed[d] = lab
    return LabeledEigensystem(evals, evecs, model.labels, index, overlap)


def static_zz(model: CoupledModel, phi_e=None, pair=(0, 1)) -> ZZResult:
    """xi_ZZ = E_11 - E_10 - E_01 + E_00 of two qubits, in kHz."""
    if model.n_qubits < 2:
        raise InvalidParameterError("static_zz needs at least two qubit modes")
    i, j = pair
    bits = [0] * model.n_qubits

    def lab(bi, bj):
        b = list(bits)
        b[i], b[j] = bi, bj
        return model.qubit_label(b)

    wanted = [lab(0, 0), lab(0, 1), lab(1, 0), lab(1, 1)]
    es = diagonalize(model, phi_e, labels=wanted)
    E00, E01, E10, E11 = (es.energy(l) for l in wanted)
    xi = (E11 - E10 - E01 + E00) * 1e6
    phi = model.reference_flux if phi_e is None else phi_e
    return ZZResult(xi, E00, E01, E10, E11, float(phi), model.info.get("detuning_MHz", 0.0))


# ---------------------------------------------------------------- basis helpers


def _ladder(L):
    return np.diag(np.sqrt(np.arange(1, L)), 1)


def _product_basis(dims, max_excitations=None):
    labels = []
    for lab in itertools.product(*[range(d) for d in dims]):
        if max_excitations is None or sum(lab) <= max_excitations:
            labels.append(lab)
    labels.sort(key=lambda l: (sum(l), l) if max_excitations is not None else 0)
    return labels


def _embed(labels, index, mode_ops):
    """Matrix of a product of single-mode operators {mode: matrix} on the labeled basis."""
    D = len(labels)
    M = np.zeros((D, D), dtype=complex)
    modes = sorted(mode_ops)
    for col, lab in enumerate(labels):
        # iterate over nonzero output levels of each acted-on mode
        choices = []
        for m in modes:
            column = mode_ops[m][:, lab[m]]
            nz = np.nonzero(column)[0]
            choices.append([(int(k), column[k]) for k in nz])
        for combo in itertools.product(*choices):
            new = list(lab)
            amp = 1.0 + 0j
            for m, (k, val) in zip(modes, combo):
                new[m] = k
                amp *= val
            row = index.get(tuple(new))
            if row is not None:
                M[row, col] += amp
    return M


def _blocks_by_excitation(labels):
    sectors = {}
    for i, lab in enumerate(labels):
        sectors.setdefault(sum(lab), []).append(i)
    return [np.array(v) for _, v in sorted(sectors.items())]


def _connected_blocks(fixed, terms):
    """Basis subsets never linked by the fixed part or any control term."""
    pattern = np.abs(fixed) > 0
    for t in terms:
        pattern |= np.abs(t.op) > 0
    n, comp = connected_components(csr_matrix(pattern), directed=False)
    return [np.flatnonzero(comp == k) for k in range(n)]


def _check_dimension(D, max_dim):
    if D > max_dim:
        raise SizeError(f"Hilbert-space dimension {D} exceeds cap {max_dim}")


# ---------------------------------------------------------------- effective tier


def assemble_effective(qubits: Sequence[ModeSpectrum], p: ModeSpectrum, m: ModeSpectrum,
                       couplings, include_pm_cross: bool = False, E_j: float | None = None,
                       max_excitations: int | None = None, max_dim: int = MAX_DIM) -> CoupledModel:
    """Static two-qubit effective model from solved spectra and a CouplingSet (MHz)."""
    if len(qubits) != 2:
        raise InvalidParameterError("assemble_effective expects two qubit spectra")
    if include_pm_cross and E_j is None:
        raise InvalidParameterError("E_j is required for the p-m cross term")
    names = ("q1", "q2", "p", "m")
    dims = (qubits[0].levels, qubits[1].levels, p.levels, m.levels)
    labels = _product_basis(dims, max_excitations)
    _check_dimension(len(labels), max_dim)
    index = {l: i for i, l in enumerate(labels)}
    H = np.zeros((len(labels), len(labels)), dtype=complex)
    for mode, spec in enumerate((*qubits, p, m)):
        H += _embed(labels, index, {mode: np.diag(spec.energies).astype(complex)})
    c = couplings
    for q, mode, g in ((0, 2, c.g_1p), (1, 2, c.g_2p), (0, 3, c.g_1m), (1, 3, -c.g_2m)):
        H += 1e-3 * g * _exchange(labels, index, q, mode, dims)
    if include_pm_cross:
        H += _cross_term(labels, index, 2, 3, _gauged_phi2(p), _gauged_phi2(m), E_j,
                         conserve=max_excitations is not None)
    blocks = _blocks_by_excitation(labels) if max_excitations is not None else None
    return CoupledModel("effective", names, dims, labels, H, [], (0, 1),
                        reference_flux=m.phi_e, blocks=blocks)


def _exchange(labels, index, qmode, cmode, dims):
    a_q = _ladder(dims[qmode]).astype(complex)
    a_c = _ladder(dims[cmode]).astype(complex)
    X = _embed(labels, index, {qmode: a_q.T, cmode: a_c})
    return X + X.conj().T


def _cross_term(labels, index, pmode, mmode, phi2_p, phi2_m, E_j, conserve):
    """-(E_j/2) phi_p^2 phi_m^2, optionally keeping only excitation-conserving elements."""
    Lp, Lm = phi2_p.shape[0], phi2_m.shape[0]
    M = np.zeros((len(labels), len(labels)), dtype=complex)
    for i in range(Lm):
        for j in range(Lm):
            if phi2_m[i, j] == 0:
                continue
            Pp = phi2_p.copy()
            if conserve:
                mask = np.fromfunction(lambda a, b: (a - b) + (i - j) == 0, (Lp, Lp))
                Pp = np.where(mask, Pp, 0.0)
            if not np.any(Pp):
                continue
            unit = np.zeros((Lm, Lm), dtype=complex)
            unit[i, j] = phi2_m[i, j]
            M += _embed(labels, index, {pmode: Pp.astype(complex), mmode: unit})
    return -0.5 * E_j * M


def _gauge_signs(phi_matrix):
    """Signs making <k-1|phi|k> >= 0, so tabulated elements vary smoothly with flux."""
    L = phi_matrix.shape[0]
    signs = np.ones(L)
    for k in range(1, L):
        if phi_matrix[k - 1, k].real * signs[k - 1] < 0:
            signs[k] = -1.0
    return signs


def _gauged_phi2(spectrum: ModeSpectrum) -> np.ndarray:
    s = _gauge_signs(spectrum.phi.real)
    return (spectrum.phi2.real * s[:, None]) * s[None, :]


def _ladder_ratios(spectrum: ModeSpectrum) -> np.ndarray:
    """|<k|n|k+1>| / |<0|n|1>| for k = 0..L-2 (sqrt(k+1) for a harmonic mode)."""
    d = np.abs(np.diag(spectrum.n, 1))
    return d / d[0]


class CouplerTable:
    """m-mode levels, phi^2 elements and ladder ratios tabulated over flux.

    Values are cubic-spline interpolated; spectra are 2 pi periodic and even in
    flux so any bias is folded onto [0, pi].
    """

    def __init__(self, charging, E_j, alpha, levels=5, basis_size=201, grid=None):
        if grid is None:
            grid = np.linspace(-0.2, np.pi + 0.2, 337)
        grid = np.asarray(grid, dtype=float)
        self.grid = grid
        self.levels = levels
        energies, phi2, ratios = [], [], []
        for phi in grid:
            spec = ModePotentialSpec("m_mode", charging,
                                     ((2 * E_j, 1, 0.0), (alpha * E_j, 2, float(phi))))
            s = solve_mode(spec, basis_size, levels, check_convergence=False)
            energies.append(s.energies)
            phi2.append(_gauged_phi2(s))
            ratios.append(_ladder_ratios(s))
        self.energies = np.array(energies)
        self.phi2 = np.array(phi2)
        self.ratios = np.array(ratios)
        self._e = CubicSpline(grid, self.energies, axis=0)
        self._p = CubicSpline(grid, self.phi2, axis=0)
        self._r = CubicSpline(grid, self.ratios, axis=0)

    @staticmethod
    def _fold(phi):
        x = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi
        return np.abs(x)

    def energy(self, phi, k):
        return self._e(self._fold(phi))[..., k]

    def omega_01(self, phi):
        return self.energy(phi, 1)

    def phi2_element(self, phi, i, j):
        return self._p(self._fold(phi))[..., i, j]

    def ladder_ratio(self, phi, k):
        return self._r(self._fold(phi))[..., k]


@lru_cache(maxsize=8)
def coupler_table(charging, E_j, alpha, levels=5, basis_size=201) -> CouplerTable:
    return CouplerTable(charging, E_j, alpha, levels, basis_size)


@lru_cache(maxsize=64)
def _qubit_spectrum(charging, omega, levels, basis_size):
    E_jq = transmon_ej_for_frequency(charging / 4.0, omega, basis_size)
    return solve_mode(ModePotentialSpec("transmon", charging, ((E_jq, 1, 0.0),)), basis_size, levels)


@lru_cache(maxsize=8)
def _p_spectrum(charging, E_j, levels, basis_size):
    return solve_mode(ModePotentialSpec("p_mode", charging, ((2 * E_j, 1, 0.0),)), basis_size, levels)


def _exact_charging(params: DeviceParams):
    """Prefactors of n^2 (4 E_C, GHz) for (qubit, p, m) from the exact inverse capacitance."""
    red = reduce_floating_qubit(params)
    Cinv = invert_capacitance(build_capacitance_matrix(red))
    k2 = 2.0 * CHARGE_ENERGY_GHZ_FF
    return red, Cinv, k2 * Cinv[0, 0], k2 * Cinv[2, 2], k2 * Cinv[3, 3]


def qubit_max_frequency(params: DeviceParams, basis_size: int = 201) -> float:
    red = reduce_floating_qubit(params)
    return solve_mode(transmon_spec(red.E_cq, params.E_jq), basis_size, 3).omega_01


def _ladder_matrix(ratios):
    L = len(ratios) + 1
    a = np.zeros((L, L))
    a[np.arange(L - 1), np.arange(1, L)] = ratios
    return a


def _exchange_ops(labels, index, qmode, cmode, a_q, a_c_parts):
    """Exchange operators a_q^dag a_c + h.c., one per coupler transition in ``a_c_parts``."""
    out = []
    for a_c in a_c_parts:
        X = _embed(labels, index, {qmode: a_q.T.astype(complex), cmode: a_c.astype(complex)})
        out.append(X + X.conj().T)
    return out


def effective_chain(params: DeviceParams, qubit_freqs: Sequence[float], phi_e: float = 0.0,
                    levels=None, max_excitations: int | None = None,
                    include_pm_cross: bool = True, ladder: str = "charge",
                    direct_coupling: bool = True, coupling_scale: float = 1.0,
                    basis_size: int = 201, max_dim: int = MAX_DIM) -> CoupledModel:
    """Flux-dependent effective model of a qubit chain joined by identical DTCs.

    ``qubit_freqs`` are bare 0-1 frequencies in GHz; each qubit's Josephson
    energy is chosen to reproduce them.  Coupler ``k`` sits between qubits
    ``k`` and ``k+1`` and its m-mode exchange with the right-hand qubit is
    negative.  Every coupler follows the same flux.

    Exchange strengths come from :func:`mode_couplings`.  ``ladder="charge"``
    scales higher transitions by the mode's own charge matrix elements,
    ``"harmonic"`` uses sqrt(k).  ``direct_coupling`` adds the small
    qubit-qubit exchange carried by the second-order entry of the exact inverse
    capacitance matrix.  The p-m cross term keeps only its
    excitation-conserving part.  ``max_excitations`` defaults to the number of
    qubits.  ``coupling_scale`` multiplies every qubit coupling (0 decouples
    the qubits entirely).
    """
    if ladder not in ("charge", "harmonic"):
        raise InvalidParameterError(f"unknown ladder {ladder!r}")
    lv = dict(DEFAULT_LEVELS)
    lv.update(levels or {})
    nq = len(qubit_freqs)
    if nq < 1:
        raise InvalidParameterError("need at least one qubit")
    if max_excitations is None:
        max_excitations = nq
    red, Cinv, cq, cp, cm = _exact_charging(params)
    qspecs = [_qubit_spectrum(cq, float(w), lv["qubit"], basis_size) for w in qubit_freqs]
    pspec = _p_spectrum(cp, params.E_j, lv["p"], basis_size)
    table = coupler_table(cm, params.E_j, params.alpha, lv["m"], basis_size)

    names, dims, qubit_modes = [], [], []
    for k in range(nq):
        names.append(f"q{k + 1}")
        dims.append(lv["qubit"])
        qubit_modes.append(k)
    couplers = []
    for k in range(nq - 1):
        names += [f"p{k + 1}", f"m{k + 1}"]
        dims += [lv["p"], lv["m"]]
        couplers.append((k, k + 1, len(names) - 2, len(names) - 1))
    labels = _product_basis(dims, max_excitations)
    _check_dimension(len(labels), max_dim)
    index = {l: i for i, l in enumerate(labels)}
    D = len(labels)

    def ladder_of(spec):
        if ladder == "harmonic":
            return _ladder_matrix(np.sqrt(np.arange(1, spec.levels)))
        return _ladder_matrix(_ladder_ratios(spec))

    a_q = [ladder_of(s) for s in qspecs]
    a_p = ladder_of(pspec)
    Lm = lv["m"]
    m_parts = []
    for k in range(Lm - 1):
        part = np.zeros((Lm, Lm))
        part[k, k + 1] = 1.0
        m_parts.append(part)

    fixed = np.zeros((D, D), dtype=complex)
    for q, spec in enumerate(qspecs):
        fixed += _embed(labels, index, {q: np.diag(spec.energies).astype(complex)})
    terms = []
    omega_p = pspec.omega_01
    phi2_p = _gauged_phi2(pspec)
    kp = coupling_scale * 0.5 * red.C_g / math.sqrt(2 * (red.C_c + red.C_g) * (red.C_q + red.C_g))
    km = coupling_scale * 0.5 * red.C_g / math.sqrt(
        2 * (red.C_c + red.C_g + 2 * red.C_12) * (red.C_q + red.C_g))
    for (qa, qb, pm, mm) in couplers:
        fixed += _embed(labels, index, {pm: np.diag(pspec.energies).astype(complex)})
        for q in (qa, qb):
            g = kp * math.sqrt(qubit_freqs[q] * omega_p)
            fixed += g * _exchange_ops(labels, index, q, pm, a_q[q], [a_p])[0]
        for lvl in range(1, Lm):
            P = np.zeros((Lm, Lm), dtype=complex)
            P[lvl, lvl] = 1.0
            terms.append(ControlTerm(f"{names[mm]}_E{lvl}", _embed(labels, index, {mm: P}),
                                     _table_energy(table, lvl)))
        for q, sign in ((qa, 1.0), (qb, -1.0)):
            ops = _exchange_ops(labels, index, q, mm, a_q[q], m_parts)
            for k, op in enumerate(ops):
                if not np.any(op):
                    continue
                ratio = None if ladder == "charge" else math.sqrt(k + 1)
                terms.append(ControlTerm(f"g_{names[q]}{names[mm]}_{k}", op,
                                         _m_coupling(table, sign * km, qubit_freqs[q], k, ratio)))
        if include_pm_cross:
            for i in range(Lm):
                for j in range(Lm):
                    if abs(i - j) not in (0, 2):
                        continue
                    Pp = np.where(np.fromfunction(lambda a, b: (a - b) + (i - j) == 0,
                                                  phi2_p.shape), phi2_p, 0.0)
                    if not np.any(Pp):
                        continue
                    unit = np.zeros((Lm, Lm))
                    unit[i, j] = 1.0
                    op = -0.5 * params.E_j * _embed(labels, index, {pm: Pp.astype(complex),
                                                                    mm: unit.astype(complex)})
                    if np.any(op):
                        terms.append(ControlTerm(f"x_{names[pm]}{names[mm]}_{i}{j}", op,
                                                 _table_phi2(table, i, j)))
        if direct_coupling:
            n01 = [abs(qspecs[q].n[0, 1]) for q in (qa, qb)]
            g_qq = coupling_scale * 4.0 * CHARGE_ENERGY_GHZ_FF * Cinv[0, 1] * n01[0] * n01[1]
            X = _embed(labels, index, {qa: a_q[qa].T.astype(complex), qb: a_q[qb].astype(complex)})
            fixed += g_qq * (X + X.conj().T)
    for q in range(nq):
        N = np.diag(np.arange(lv["qubit"])).astype(complex)
        terms.append(ControlTerm(f"offset_{names[q]}", _embed(labels, index, {q: N}),
                                 _offset(names[q])))
    blocks = _connected_blocks(fixed, terms)
    info = {"qubit_freqs": tuple(float(w) for w in qubit_freqs), "omega_p": omega_p,
            "params": params, "table": table, "qubit_spectra": qspecs}
    if nq == 2:
        info["detuning_MHz"] = 1e3 * (qubit_freqs[0] - qubit_freqs[1])
    return CoupledModel("effective", names, dims, labels, fixed, terms, qubit_modes,
                        reference_flux=phi_e, blocks=blocks, info=info)


def _table_energy(table, lvl):
    return lambda phi, offsets: table.energy(phi, lvl)


def _table_phi2(table, i, j):
    return lambda phi, offsets: table.phi2_element(phi, i, j)


def _m_coupling(table, k, omega_q, transition, fixed_ratio=None):
    def coef(phi, offsets):
        g = k * np.sqrt(omega_q * np.maximum(table.omega_01(phi), 0.0))
        r = fixed_ratio if fixed_ratio is not None else table.ladder_ratio(phi, transition)
        return g * r
    return coef


def _offset(name):
    def coef(phi, offsets):
        return offsets.get(name, np.zeros_like(phi))
    return coef


def effective_pair(params: DeviceParams, omega_1: float, omega_2: float, phi_e: float = 0.0,
                   **kwargs) -> CoupledModel:
    return effective_chain(params, (omega_1, omega_2), phi_e, **kwargs)


def effective_couplings(params: DeviceParams, omega_1: float, omega_2: float, phi_e: float,
                        basis_size: int = 201, dressed: bool = True):
    """CouplingSet at one flux.

    With ``dressed`` the coupler frequencies are those of the p-m dressed
    states (what a spectroscopy of the coupler would show); otherwise the
    bare single-mode values.
    """
    red = reduce_floating_qubit(params)
    (_, w_p, w_m), = dtc_flux_sweep(params, [phi_e], basis_size, dressed=dressed)
    return mode_couplings(red, omega_1, omega_2, w_p, w_m)


def stc_surrogate(params: DeviceParams, omega_1: float, omega_2: float, omega_c: float,
                  levels=None, basis_size: int = 201) -> CoupledModel:
    """Two qubits and a single transmon coupler at ``omega_c`` (GHz).

    The coupler reuses the p-mode charging and coupling strengths, so only
    positive-sign exchange paths exist.  Qualitative comparison only.
    """
    lv = dict(DEFAULT_LEVELS)
    lv.update(levels or {})
    red, Cinv, cq, cp, _ = _exact_charging(params)
    qspecs = [_qubit_spectrum(cq, float(w), lv["qubit"], basis_size) for w in (omega_1, omega_2)]
    cspec = _qubit_spectrum(cp, float(omega_c), lv["p"], basis_size)
    dims = (lv["qubit"], lv["qubit"], lv["p"])
    labels = _product_basis(dims, 2)
    index = {l: i for i, l in enumerate(labels)}
    H = np.zeros((len(labels), len(labels)), dtype=complex)
    for mode, spec in enumerate((*qspecs, cspec)):
        H += _embed(labels, index, {mode: np.diag(spec.energies).astype(complex)})
    kp = 0.5 * red.C_g / math.sqrt(2 * (red.C_c + red.C_g) * (red.C_q + red.C_g))
    a_c = _ladder_matrix(_ladder_ratios(cspec))
    for q, spec in enumerate(qspecs):
        a_q = _ladder_matrix(_ladder_ratios(spec))
        g = kp * math.sqrt((omega_1, omega_2)[q] * omega_c)
        H += g * _exchange_ops(labels, index, q, 2, a_q, [a_c])[0]
    info = {"qubit_freqs": (omega_1, omega_2), "omega_c": omega_c,
            "detuning_MHz": 1e3 * (omega_1 - omega_2)}
    return CoupledModel("stc", ("q1", "q2", "c"), dims, labels, H, [], (0, 1),
                        blocks=_blocks_by_excitation(labels), info=info)


# ---------------------------------------------------------------- full-circuit tier


def assemble_full_circuit(params: DeviceParams, phi_e: float | None = None,
                          qubit_freqs: Sequence[float] | None = None, levels=None,
                          basis_size: int = 201, max_dim: int = MAX_DIM) -> CoupledModel:
    """Full-circuit pair model with exact inverse-capacitance charge couplings.

    The m-mode basis is solved at ``phi_e``; away from it the flux enters
    through the cos(2 phi_m) and sin(2 phi_m) operators with scalar
    coefficients cos(phi_e), sin(phi_e).  ``qubit_freqs`` (GHz) retunes each
    qubit's Josephson energy; by default both use ``params.E_jq``.
    """
    lv = dict(DEFAULT_LEVELS)
    lv.update(levels or {})
    phi_ref = params.phi_e if phi_e is None else float(phi_e)
    red = reduce_floating_qubit(params)
    Cinv = invert_capacitance(build_capacitance_matrix(red))
    k2 = 2.0 * CHARGE_ENERGY_GHZ_FF  # H = 2 e^2 n^T C^-1 n
    E_j = params.E_j
    qspecs = []
    for q in range(2):
        charging = k2 * Cinv[q, q]
        if qubit_freqs is None:
            E_jq = params.E_jq
        else:
            E_jq = transmon_ej_for_frequency(charging / 4.0, float(qubit_freqs[q]), basis_size)
        qspecs.append(ModePotentialSpec("transmon", charging, ((E_jq, 1, 0.0),)))
    pspec = ModePotentialSpec("p_mode", k2 * Cinv[2, 2], ((2 * E_j, 1, 0.0),))
    mterms = [(2 * E_j, 1, 0.0), (params.alpha * E_j, 2, phi_ref)]
    mspec = ModePotentialSpec("m_mode", k2 * Cinv[3, 3], tuple(mterms))
    spectra = [solve_mode(s, basis_size, lv["qubit"]) for s in qspecs]
    spectra.append(solve_mode(pspec, basis_size, lv["p"]))
    spectra.append(solve_mode(mspec, basis_size, lv["m"], check_convergence=False))
    names = ("q1", "q2", "p", "m")
    dims = tuple(s.levels for s in spectra)
    D = int(np.prod(dims))
    _check_dimension(D, max_dim)

    def kron_op(mode, op):
        mats = [np.eye(d, dtype=complex) for d in dims]
        mats[mode] = op
        out = mats[0]
        for mat in mats[1:]:
            out = np.kron(out, mat)
        return out

    H = np.zeros((D, D), dtype=complex)
    for mode, s in enumerate(spectra):
        H += kron_op(mode, np.diag(s.energies).astype(complex))
    n_ops = [kron_op(mode, s.n) for mode, s in enumerate(spectra)]
    for i in range(4):
        for j in range(i + 1, 4):
            if abs(Cinv[i, j]) > 0 and abs(Cinv[i, j]) > 1e-14 * abs(Cinv[i, i]):
                H += 2.0 * k2 * Cinv[i, j] * (n_ops[i] @ n_ops[j])
    H += -0.5 * E_j * kron_op(2, spectra[2].phi2) @ kron_op(3, spectra[3].phi2)
    # remove the reference-flux term so the flux can be re-inserted as a control
    m = spectra[3]
    cos2 = kron_op(3, operator_in_eigenbasis(m, "cos", 2))
    sin2 = kron_op(3, operator_in_eigenbasis(m, "sin", 2))
    aE = params.alpha * E_j
    H += aE * (math.cos(phi_ref) * cos2 - math.sin(phi_ref) * sin2)
    terms = [
        ControlTerm("cos_phi_e", -aE * cos2, lambda phi, off: np.cos(phi)),
        ControlTerm("sin_phi_e", aE * sin2, lambda phi, off: np.sin(phi)),
    ]
    for q in range(2):
        N = np.diag(np.arange(dims[q])).astype(complex)
        terms.append(ControlTerm(f"offset_{names[q]}", kron_op(q, N), _offset(names[q])))
    labels = list(itertools.product(*[range(d) for d in dims]))
    qf = tuple(s.omega_01 for s in spectra[:2])
    info = {"qubit_freqs": qf, "params": params, "Cinv": Cinv, "spectra": spectra,
            "detuning_MHz": 1e3 * (qf[0] - qf[1])}

    def rebuild(phi_new):
        return assemble_full_circuit(params, phi_new, qubit_freqs, levels, basis_size, max_dim)

    return CoupledModel("full", names, dims, labels, H, terms, (0, 1), reference_flux=phi_ref,
                        rebuild=rebuild, info=info)


def exchange_splitting(model: CoupledModel, phi_e=None, pair=(0, 1)) -> float:
    """Signed qubit-qubit exchange (MHz) from the dressed single-excitation doublet.

    Meant for resonant qubits: the two dressed states with most weight on
    |10> and |01> are split by 2|g|; g is positive when the symmetric
    combination lies higher.
    """
    i, j = pair
    bits = [0] * model.n_qubits
    b10, b01 = list(bits), list(bits)
    b10[i] = 1
    b01[j] = 1
    u = model.index[model.qubit_label(b10)]
    v = model.index[model.qubit_label(b01)]
    H = model.hamiltonian(phi_e)
    w, vecs = np.linalg.eigh(H)
    weight = np.abs(vecs[u]) ** 2 + np.abs(vecs[v]) ** 2
    top = np.argsort(weight)[-2:]
    if np.min(weight[top]) < 0.5:
        raise AmbiguousLabelingError("qubit doublet hybridized with coupler states",
                                     model.qubit_label(b10), float(np.min(weight[top])))
    sym = [abs(vecs[u, k] + vecs[v, k]) ** 2 for k in top]
    hi_sym = top[int(np.argmax(sym))]
    lo_sym = top[int(np.argmin(sym))]
    return 0.5e3 * float(w[hi_sym] - w[lo_sym])


# ---------------------------------------------------------------- sweeps


def zz_sweep(model_family: Callable[[float], CoupledModel], detunings, fluxes):
    """Grid of static ZZ over qubit detuning (MHz) and flux (rad).

    ``model_family(detuning_MHz)`` returns a model; per-point failures are
    recorded in the ``flag`` field and the sweep continues.
    """
    rows = []
    for det in detunings:
        base = model_family(float(det))
        for phi in fluxes:
            try:
                res = static_zz(base.at_flux(float(phi)))
                rows.append({"detuning_MHz": float(det), "phi_e_rad": float(phi),
                             "xi_zz_kHz": res.xi_zz, "flag": "ok"})
            except AmbiguousLabelingError as exc:
                rows.append({"detuning_MHz": float(det), "phi_e_rad": float(phi),
                             "xi_zz_kHz": float("nan"), "flag": f"ambiguous:{exc.label}"})
    return rows


def zz_minimum(model: CoupledModel, interval, samples: int = 29, tol_flux: float = 1e-5):
    """Flux minimizing |xi_ZZ| on ``interval`` and the ZZ there (kHz)."""

    def f(phi):
        try:
            return abs(static_zz(model.at_flux(phi)).xi_zz)
        except AmbiguousLabelingError:
            return np.inf

    xs = np.linspace(float(interval[0]), float(interval[1]), samples)
    ys = np.array([f(x) for x in xs])
    if not np.any(np.isfinite(ys)):
        raise NotFoundError("no labelable point on the interval")
    k = int(np.argmin(ys))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, samples - 1)]
    opt = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": tol_flux})
    x = float(opt.x) if opt.fun <= ys[k] else float(xs[k])
    return x, static_zz(model.at_flux(x)).xi_zz


def find_off_point(model: CoupledModel, interval, tol_khz: float = 1.0, tol_flux: float = 1e-6,
                   samples: int = 41, objective: Callable | None = None):
    """Flux of vanishing ZZ inside ``interval``.

    Samples the interval, brackets the lowest-flux sign change and bisects
    until |xi_ZZ| < tol_khz or the bracket is narrower than tol_flux.  Near
    small detuning ZZ has a second zero a few hundredths of a radian higher;
    always taking the first keeps the off point comparable across pairs.
    Returns (phi_e, residual_kHz).  Without a sign change |xi_ZZ| is
    minimized around the best sample; if that minimum stays above tol_khz,
    NotFoundError.
    """
    raw = objective or (lambda phi: static_zz(model.at_flux(phi)).xi_zz)

    def f(phi):
        try:
            return raw(phi)
        except AmbiguousLabelingError:
            return np.nan

    lo, hi = float(interval[0]), float(interval[1])
    xs = np.linspace(lo, hi, samples)
    ys = np.array([f(x) for x in xs])
    if np.all(np.isnan(ys)):
        raise NotFoundError(f"no labelable point on [{lo}, {hi}]")
    best = int(np.nanargmin(np.abs(ys)))
    crossings = np.nonzero(np.sign(ys[:-1]) * np.sign(ys[1:]) < 0)[0]  # NaN compares False
    zeros = np.nonzero(ys == 0)[0]
    if zeros.size and (crossings.size == 0 or zeros[0] <= crossings[0]):
        return float(xs[zeros[0]]), 0.0
    if crossings.size == 0:
        if abs(ys[best]) < tol_khz:
            return float(xs[best]), float(ys[best])
        # double zero (xi ~ g_eff^2): refine the minimum of |xi| instead
        a, b = xs[max(best - 1, 0)], xs[min(best + 1, samples - 1)]
        opt = minimize_scalar(lambda x: abs(f(x)) if not np.isnan(f(x)) else np.inf,
                              bounds=(a, b), method="bounded", options={"xatol": tol_flux})
        if opt.fun < tol_khz:
            return float(opt.x), float(f(opt.x))
        raise NotFoundError(f"no ZZ sign change on [{lo}, {hi}]; min |xi| = {abs(ys[best]):.3g} kHz",
                            float(xs[best]), float(ys[best]))
    k = crossings[0]
    a, b, fa = xs[k], xs[k + 1], ys[k]
    if abs(ys[k + 1]) < tol_khz:
        return float(b), float(ys[k + 1])
    x, y = a, fa
    while b - a > tol_flux:
        x = 0.5 * (a + b)
        y = f(x)
        if np.isnan(y):
            raise NotFoundError(f"labeling failed inside the bracket at {x:.6f}", float(x), float("nan"))
        if abs(y) < tol_khz:
            break
        if np.sign(y) == np.sign(fa):
            a, fa = x, y
        else:
            b = x
    return float(x), float(y)
