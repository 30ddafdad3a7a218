"""Shared coupler flux line scenarios: spectator pairs, spectator phases, Bell and GHZ circuits.

Single-qubit rotations are ideal and instantaneous; only the two-qubit gates
and the shared flux waveform are simulated.  Virtual Z corrections are
diagonal phase gates applied in software after a two-qubit gate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .circuit import DeviceParams
from .coupled import CoupledModel, effective_chain, effective_pair
from .dynamics import Channel, PulseSchedule, gate_map
from .errors import AmbiguousLabelingError, FitError, InvalidParameterError
from .tomography import (DensityMatrix, gate_fidelity, local_phase_optimize, simulate_qpt,
                         simulate_qst, z_phases)

H1 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
IDENTITY4 = np.eye(4, dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def on_qubit(gate, q, n):
    mats = [np.eye(2, dtype=complex)] * n
    mats[q] = gate
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def basis_state(bits):
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(map(str, bits)), 2)] = 1.0
    return v


# ---------------------------------------------------------------- shared line


@dataclass
class SharedLineScenario:
    """Target pair and spectator pair driven by one flux waveform.

    The pairs do not interact.  The spectator pair's qubits sit at
    ``spectator_center`` and ``spectator_center - detuning``.
    """

    params: DeviceParams
    target_freqs: tuple
    idle_flux: float
    spectator_center: float = 6.433
    levels: dict | None = None

    def target_model(self) -> CoupledModel:
        return effective_pair(self.params, *self.target_freqs, self.idle_flux, levels=self.levels)

    def spectator_model(self, detuning_mhz: float) -> CoupledModel:
        w_a = self.spectator_center
        return effective_pair(self.params, w_a, w_a - 1e-3 * detuning_mhz, self.idle_flux,
                              levels=self.levels)


def flux_only(schedule: PulseSchedule) -> PulseSchedule:
    """The part of a schedule carried by the shared line."""
    ch = {k: v for k, v in schedule.channels.items() if k == "flux"}
    return PulseSchedule(schedule.duration, ch, schedule.dt, dict(schedule.params))


@dataclass
class SpectatorResult:
    detunings: np.ndarray
    populations: dict  # bits -> array over detuning
    fidelities: np.ndarray  # identity process fidelity after virtual Z
    raw_fidelities: np.ndarray
    best_detuning: float
    best_fidelity: float
    best_map: np.ndarray = field(repr=False, default=None)


def spectator_evolution(scenario: SharedLineScenario, schedule: PulseSchedule, detunings,
                        initials=((0, 1), (1, 0), (1, 1))) -> SpectatorResult:
    """Spectator-pair map under the target pair's flux waveform, scanned over detuning.

    Populations are the probabilities of remaining in each initial state;
    fidelities are identity process fidelities after virtual Z correction.
    A detuning where the spectator levels cannot be labeled (a degenerate
    pair) is left as NaN.
    """
    shared = flux_only(schedule)
    detunings = np.asarray(detunings, dtype=float)
    pops = {tuple(b): np.full(len(detunings), np.nan) for b in initials}
    fids = np.full(len(detunings), np.nan)
    raw = np.full(len(detunings), np.nan)
    maps = []
    for k, det in enumerate(detunings):
        try:
            M = gate_map(scenario.spectator_model(det), shared).unitary
        except AmbiguousLabelingError:
            maps.append(None)
            continue
        maps.append(M)
        for b in initials:
            i = int("".join(map(str, b)), 2)
            pops[tuple(b)][k] = abs(M[i, i]) ** 2
        raw[k] = gate_fidelity(M, IDENTITY4)
        fids[k], _ = local_phase_optimize(M, IDENTITY4)
    if np.all(np.isnan(fids)):
        raise AmbiguousLabelingError("no detuning with labelable spectator levels")
    best = int(np.nanargmax(fids))
    qpt = simulate_qpt(_corrected(maps[best], IDENTITY4), IDENTITY4)
    return SpectatorResult(detunings, pops, fids, raw, float(detunings[best]), qpt.fidelity,
                           maps[best])


def _corrected(M, V):
    _, phases = local_phase_optimize(M, V)
    return np.diag(z_phases(phases)) @ M


# ---------------------------------------------------------------- chain circuits


@dataclass
class SpectatorPhases:
    phases: dict  # control bits -> phase (rad)
    spread: float
    mean: float
    curves: dict = field(repr=False, default_factory=dict)


def spectator_phase_from_map(M, control, spectator, n, control_bits):
    """Extra precession angle of ``spectator`` for one control preparation."""
    def idx(sbit):
        bits = [0] * n
        for q, b in zip(control, control_bits):
            bits[q] = b
        bits[spectator] = sbit
        return int("".join(map(str, bits)), 2)
    return float(np.angle(M[idx(0), idx(0)]) - np.angle(M[idx(1), idx(1)]))


def spectator_phase_calibration(M, control=(0, 1), spectator=2, n_points: int = 25) -> SpectatorPhases:
    """Ramsey phase of the spectator qubit for each control-pair basis state.

    ``M`` is the projected n-qubit map of the gate.  For every preparation the
    spectator starts in |+>, the gate acts, and a final pi/2 pulse with
    varied axis angle theta gives P1(theta); a cosine fit returns the phase.
    """
    M = np.asarray(M)
    n = int(round(np.log2(M.shape[0])))
    theta = np.linspace(0, 2 * np.pi, n_points, endpoint=False)
    phases, curves = {}, {}
    for bits in itertools.product((0, 1), repeat=len(control)):
        state_bits = [0] * n
        for q, b in zip(control, bits):
            state_bits[q] = b
        psi = basis_state(state_bits)
        psi = on_qubit(H1, spectator, n) @ psi
        out = M @ psi
        p1 = []
        for th in theta:
            # pi/2 about the axis (cos th, sin th) maps a phase th + pi onto |1>
            R = np.array([[1, -1j * np.exp(-1j * th)], [-1j * np.exp(1j * th), 1]]) / np.sqrt(2)
            o = on_qubit(R, spectator, n) @ out
            mask = np.array([((i >> (n - 1 - spectator)) & 1) == 1 for i in range(2**n)])
            p1.append(float(np.sum(np.abs(o[mask]) ** 2)))
        p1 = np.array(p1)
        curves[bits] = p1
        try:
            (amp, phi, off), _ = curve_fit(lambda t, a, p, c: c + a * np.cos(t - p), theta, p1,
                                           p0=[0.5, theta[np.argmax(p1)], 0.5])
        except RuntimeError as exc:
            raise FitError(f"Ramsey fit failed for control {bits}: {exc}", raw=curves) from exc
        if amp < 0:
            phi += np.pi
        # P1 peaks where the axis angle matches the spectator phase offset by pi/2
        phases[bits] = float(np.mod(-(phi - np.pi / 2) + np.pi, 2 * np.pi) - np.pi)
    vals = np.array(list(phases.values()))
    mean = float(np.angle(np.mean(np.exp(1j * vals))))
    spread = float(np.max(np.abs(np.angle(np.exp(1j * (vals - mean))))) * 2)
    return SpectatorPhases(phases, spread, mean, curves)


def chain_model(params: DeviceParams, freqs, idle_flux: float, levels=None) -> CoupledModel:
    return effective_chain(params, freqs, idle_flux, levels=levels)


def target_corrections(M, pair, n):
    """Virtual Z phases making the pair's block (others in |0>) closest to CZ."""
    keep = []
    for idx, bits in enumerate(itertools.product((0, 1), repeat=n)):
        if all(bits[q] == 0 for q in range(n) if q not in pair):
            keep.append(idx)
    _, phases = local_phase_optimize(M[np.ix_(keep, keep)], CZ)
    return phases


def _virtual_z(n, assignments):
    theta = np.zeros(n)
    for q, ph in assignments.items():
        theta[q] += ph
    return np.diag(z_phases(theta))


@dataclass
class CircuitResult:
    density: DensityMatrix
    fidelity: float
    uncompensated: DensityMatrix | None = None
    uncompensated_fidelity: float = float("nan")
    details: dict = field(default_factory=dict)


def run_bell_circuit(cz_map, phases=None) -> CircuitResult:
    """H x H, CZ, then H on the second qubit; fidelity to (|00> + |11>)/sqrt 2.

    ``cz_map`` is the projected 4 x 4 gate map; ``phases`` are its virtual Z
    corrections (optimized when omitted).
    """
    M = np.asarray(cz_map, dtype=complex)
    if phases is None:
        _, phases = local_phase_optimize(M, CZ)
    G = np.diag(z_phases(phases)) @ M
    psi = np.kron(H1, H1) @ basis_state((0, 0))
    psi = on_qubit(H1, 1, 2) @ (G @ psi)
    target = (basis_state((0, 0)) + basis_state((1, 1))) / np.sqrt(2)
    dm = simulate_qst(psi, target)
    return CircuitResult(dm, dm.fidelity, details={"phases": tuple(phases)})


def run_ghz_circuit(cz12, cz23, phases12, phases23, spectator12: float = 0.0,
                    spectator23: float = 0.0) -> CircuitResult:
    """Three-qubit GHZ via H1 H2, CZ12, H2, H3, CZ23, H3.

    ``cz12``/``cz23`` are 8 x 8 projected maps of the gates on the chain;
    ``phases12``/``phases23`` their target-pair virtual Z corrections, and
    ``spectator12``/``spectator23`` the calibrated phases of the idle qubit
    (Q3 during CZ12, Q1 during CZ23).  The uncompensated run omits only the
    spectator corrections.
    """
    n = 3
    target = (basis_state((0, 0, 0)) + basis_state((1, 1, 1))) / np.sqrt(2)

    def run(comp):
        z12 = _virtual_z(n, {0: phases12[0], 1: phases12[1], 2: spectator12 if comp else 0.0})
        z23 = _virtual_z(n, {1: phases23[0], 2: phases23[1], 0: spectator23 if comp else 0.0})
        psi = basis_state((0, 0, 0))
        psi = on_qubit(H1, 0, n) @ on_qubit(H1, 1, n) @ psi
        psi = z12 @ (np.asarray(cz12) @ psi)
        psi = on_qubit(H1, 1, n) @ psi
        psi = on_qubit(H1, 2, n) @ psi
        psi = z23 @ (np.asarray(cz23) @ psi)
        psi = on_qubit(H1, 2, n) @ psi
        return simulate_qst(psi, target)

    comp = run(True)
    plain = run(False)
    return CircuitResult(comp, comp.fidelity, plain, plain.fidelity)


def inject_shift(schedule: PulseSchedule, qubit: str, shift_ghz: float) -> PulseSchedule:
    """Copy of a schedule with a constant extra frequency shift on one qubit during the window."""
    ch = dict(schedule.channels)
    name = f"offset_{qubit}"
    if name in ch:
        base = ch[name]
        ch[name] = Channel(lambda t, f=base.func: f(t) + shift_ghz, base.idle)
    else:
        ch[name] = Channel(lambda t: shift_ghz + 0 * np.asarray(t, dtype=float), 0.0)
    if shift_ghz == 0 and name not in schedule.channels:
        del ch[name]
    return PulseSchedule(schedule.duration, ch, schedule.dt, dict(schedule.params))


def chain_gate(model: CoupledModel, schedule: PulseSchedule, check_convergence=False):
    if model.n_qubits != 3:
        raise InvalidParameterError("chain gates expect three qubits")
    return gate_map(model, schedule, check_convergence=check_convergence).unitary
