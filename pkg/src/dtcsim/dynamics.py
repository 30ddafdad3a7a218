"""Time evolution under flux and qubit-frequency schedules.

Propagation is piecewise constant: each step of length dt uses the exact
exponential of the Hamiltonian at the step midpoint.  The step exponentials
of a whole time grid are built from one batched eigendecomposition and
multiplied by pairwise tree reduction, block by block.

Gate maps are reported in the frame of the idle dressed Hamiltonian: column
j is <i~| U |j~> exp(2 pi i E_i T) over the dressed computational states, so
a schedule that never leaves idle yields the identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar
from scipy.signal import lfilter

from .coupled import CoupledModel, diagonalize
from .errors import (FitError, IntegratorError, InvalidParameterError, OptimizationError,
                     ScheduleError, StabilityError)
from .tomography import gate_fidelity, local_phase_optimize

TWO_PI = 2.0 * np.pi
DEFAULT_DT = 0.005  # ns
NORM_TOL = 1e-6
CHUNK_ELEMENTS = 4_000_000


# ---------------------------------------------------------------- distortion


@dataclass(frozen=True)
class DistortionModel:
    """Step response s(t) = 1 + sum_k a_k exp(-t / tau_k), tau in ns."""

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((float(a), float(tau)) for a, tau in self.terms)
        object.__setattr__(self, "terms", terms)
        if len(terms) > 4:
            raise InvalidParameterError("at most four exponential tail terms")
        for a, tau in terms:
            if not (math.isfinite(a) and math.isfinite(tau)) or tau <= 0:
                raise InvalidParameterError(f"invalid tail term (a={a}, tau={tau})")
        if terms:
            taus = [t for _, t in terms]
            t = np.concatenate([[0.0], np.geomspace(1e-3 * min(taus), 50 * max(taus), 4000)])
            if np.min(self.step_response(t)) <= 0:
                raise InvalidParameterError("step response must stay positive")

    def step_response(self, t):
        t = np.asarray(t, dtype=float)
        s = np.ones_like(t)
        for a, tau in self.terms:
            s = s + a * np.exp(-t / tau)
        return s

    def transfer(self, dt: float):
        """(b, a) coefficients in z^-1 of the sampled system H = 1 + sum a_k (1 - z^-1) / (1 - p_k z^-1)."""
        den = np.array([1.0])
        for _, tau in self.terms:
            den = np.polymul(den, [1.0, -math.exp(-dt / tau)])
        num = den.copy()
        for k, (a, tau) in enumerate(self.terms):
            part = np.array([a, -a])
            for j, (_, tau_j) in enumerate(self.terms):
                if j != k:
                    part = np.polymul(part, [1.0, -math.exp(-dt / tau_j)])
            num = np.polyadd(num, part)
        return num, den


def apply_distortion(waveform, model: DistortionModel, dt: float, baseline: float = 0.0):
    """Distorted copy of a waveform sampled at step dt (causal, deviations from ``baseline``)."""
    x = np.asarray(waveform, dtype=float)
    if not model.terms:
        return x.copy()
    b, a = model.transfer(dt)
    return baseline + lfilter(b, a, x - baseline)


@dataclass(frozen=True)
class CompensationFilter:
    """Discrete inverse of a DistortionModel: pre-distorts waveforms."""

    b: np.ndarray
    a: np.ndarray
    dt: float

    def __call__(self, waveform, baseline: float = 0.0):
        x = np.asarray(waveform, dtype=float)
        return baseline + lfilter(self.b, self.a, x - baseline)


def design_compensation(model: DistortionModel, dt: float) -> CompensationFilter:
    num, den = model.transfer(dt)
    if len(num) > 1:
        poles = np.roots(num)
        if np.any(np.abs(poles) >= 1.0):
            raise StabilityError(f"inverse filter unstable: |pole| = {np.max(np.abs(poles)):.6f}")
    if num[0] == 0:
        raise StabilityError("inverse filter is not causal")
    return CompensationFilter(np.asarray(den), np.asarray(num), dt)


def simulate_distortion_probe(model: DistortionModel, delays, sensitivity: float,
                              amplitude: float = 0.1, pulse_length: float = 2000.0,
                              window: float = 20.0, dt: float = 1.0,
                              compensation: CompensationFilter | None = None):
    """Ramsey phase (rad) picked up in a window starting ``delay`` ns after a Z pulse.

    The programmed pulse is a rectangle of ``amplitude`` flux units lasting
    ``pulse_length``; ``sensitivity`` is the qubit frequency change per flux
    unit in GHz.  Without distortion the phase is zero for every delay.
    """
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise InvalidParameterError("delays must be non-negative")
    n_pulse = int(round(pulse_length / dt))
    n_total = n_pulse + int(math.ceil((delays.max() + window) / dt)) + 2
    x = np.zeros(n_total)
    x[:n_pulse] = amplitude
    if compensation is not None:
        x = compensation(x)
    y = apply_distortion(x, model, dt)
    cum = np.concatenate([[0.0], np.cumsum(y) * dt])
    start = pulse_length + delays
    stop = start + window
    t_grid = np.arange(n_total + 1) * dt
    integral = np.interp(stop, t_grid, cum) - np.interp(start, t_grid, cum)
    return TWO_PI * sensitivity * integral


@dataclass
class DistortionFit:
    model: DistortionModel
    residual: float  # rms, rad


def fit_distortion(delays, phases, n_terms: int, sensitivity: float, amplitude: float = 0.1,
                   pulse_length: float = 2000.0, window: float = 20.0, dt: float = 1.0) -> DistortionFit:
    """Recover exponential tail terms from a phase-versus-delay curve."""
    delays = np.asarray(delays, dtype=float)
    phases = np.asarray(phases, dtype=float)
    kw = dict(sensitivity=sensitivity, amplitude=amplitude, pulse_length=pulse_length,
              window=window, dt=dt)

    def forward(_, *p):
        terms = [(p[2 * k], math.exp(p[2 * k + 1])) for k in range(n_terms)]
        try:
            return simulate_distortion_probe(DistortionModel(tuple(terms)), delays, **kw)
        except InvalidParameterError:
            return np.full_like(delays, 1e6)

    # single-exponential seed from the log-slope of the curve
    mag = np.abs(phases)
    good = mag > 1e-3 * mag.max() if mag.max() > 0 else np.zeros_like(mag, bool)
    if good.sum() >= 2:
        slope = np.polyfit(delays[good], np.log(mag[good]), 1)[0]
        tau0 = -1.0 / slope if slope < 0 else delays.max()
    else:
        tau0 = max(delays.max(), dt) / 3
    tau0 = float(np.clip(tau0, 2 * dt, 1e5))
    scale = TWO_PI * sensitivity * amplitude * tau0 * (1 - math.exp(-window / tau0)) \
        * (1 - math.exp(-pulse_length / tau0))
    a0 = -phases[0] * math.exp(delays[0] / tau0) / scale if scale else 0.0
    seeds = []
    if n_terms == 1:
        seeds.append([a0, math.log(tau0)])
    else:
        for spread in (3.0, 5.0, 10.0, 2.0):
            taus = tau0 * spread ** np.linspace(-1, 1, n_terms)
            seed = []
            for tau in taus:
                seed += [a0 / n_terms, math.log(tau)]
            seeds.append(seed)
    lower = [-0.9, math.log(dt)] * n_terms
    upper = [0.9, math.log(1e6)] * n_terms
    best = None
    for seed in seeds:
        seed = np.clip(seed, np.array(lower) + 1e-9, np.array(upper) - 1e-9)
        try:
            p, _ = curve_fit(forward, delays, phases, p0=seed, bounds=(lower, upper),
                             xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=4000)
        except (RuntimeError, ValueError):
            continue
        res = float(np.sqrt(np.mean((forward(None, *p) - phases) ** 2)))
        if best is None or res < best[1]:
            best = (p, res)
    if best is None:
        raise FitError("distortion fit did not converge", residual=float("nan"), raw=phases)
    p, res = best
    terms = sorted(((p[2 * k], math.exp(p[2 * k + 1])) for k in range(n_terms)), key=lambda t: t[1])
    return DistortionFit(DistortionModel(tuple(terms)), res)


# ---------------------------------------------------------------- schedules


def raised_cosine_envelope(t, duration: float, ramp: float):
    """0 -> 1 -> 0 with raised-cosine edges of length ``ramp``; zero outside [0, duration]."""
    t = np.asarray(t, dtype=float)
    env = np.zeros_like(t)
    inside = (t >= 0) & (t <= duration)
    env[inside] = 1.0
    if ramp > 0:
        r = min(ramp, duration / 2)
        up = inside & (t < r)
        env[up] = 0.5 * (1 - np.cos(np.pi * t[up] / r))
        down = inside & (t > duration - r)
        env[down] = 0.5 * (1 - np.cos(np.pi * (duration - t[down]) / r))
    return env


def flattop(amplitude: float, duration: float, ramp: float = 5.0, idle: float = 0.0) -> Callable:
    return lambda t: idle + amplitude * raised_cosine_envelope(t, duration, ramp)


def parametric(amplitude: float, frequency: float, duration: float, phase: float = 0.0,
               ramp: float = 5.0, idle: float = 0.0) -> Callable:
    """idle + A env(t) sin(2 pi f t + phase), f in GHz."""
    return lambda t: idle + amplitude * raised_cosine_envelope(t, duration, ramp) * \
        np.sin(TWO_PI * frequency * np.asarray(t, dtype=float) + phase)


@dataclass
class Channel:
    func: Callable
    idle: float = 0.0
    distortion: DistortionModel | None = None


@dataclass
class PulseSchedule:
    """Named control channels on [0, duration] ns.

    ``flux`` is the shared coupler flux in rad; ``offset_<mode>`` shifts a
    qubit's frequency in GHz.  Outside the window every channel sits at its
    idle value.
    """

    duration: float
    channels: dict = field(default_factory=dict)
    dt: float = DEFAULT_DT
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ScheduleError(f"invalid duration {self.duration}")
        if not self.dt > 0:
            raise ScheduleError("dt must be positive")
        for name, ch in self.channels.items():
            if not isinstance(ch, Channel):
                self.channels[name] = Channel(ch) if callable(ch) else Channel(lambda t, v=float(ch): v + 0 * t, float(ch))

    def idle(self, name: str) -> float:
        return self.channels[name].idle

    def values(self, name: str, t):
        ch = self.channels[name]
        t = np.asarray(t, dtype=float)
        if ch.distortion is None or not ch.distortion.terms:
            v = np.asarray(ch.func(t), dtype=float) * np.ones_like(t)
        else:
            step = self.dt / 4
            grid = np.arange(0.0, self.duration + 2 * step, step)
            w = apply_distortion(ch.func(grid), ch.distortion, step, baseline=ch.idle)
            v = np.interp(t, grid, w)
        v = np.where((t < 0) | (t > self.duration), ch.idle, v)
        if not np.all(np.isfinite(v)):
            raise ScheduleError(f"channel {name!r} produced non-finite values")
        return v


def _controls(model: CoupledModel, schedule: PulseSchedule, t):
    known = {term.name for term in model.terms if term.name.startswith("offset_")}
    phi = np.full_like(t, model.reference_flux)
    offsets = {}
    for name in schedule.channels:
        if name == "flux":
            phi = schedule.values(name, t)
        elif name in known:
            offsets[name[len("offset_"):]] = schedule.values(name, t)
        else:
            raise ScheduleError(f"channel {name!r} does not map onto the model")
    return phi, offsets


def idle_flux(model: CoupledModel, schedule: PulseSchedule) -> float:
    return schedule.idle("flux") if "flux" in schedule.channels else model.reference_flux


# ---------------------------------------------------------------- propagation


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, D, k)
    labels: list
    populations: dict = field(default_factory=dict)
    norm_drift: float = 0.0
    dt: float = DEFAULT_DT

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _tree_product(U):
    """U[n-1] @ ... @ U[0] along axis -3."""
    while U.shape[-3] > 1:
        n = U.shape[-3]
        if n % 2:
            eye = np.broadcast_to(np.eye(U.shape[-1], dtype=U.dtype), U.shape[:-3] + (1,) + U.shape[-2:])
            U = np.concatenate([U, eye], axis=-3)
        U = U[..., 1::2, :, :] @ U[..., 0::2, :, :]
    return U[..., 0, :, :]


def _step_unitaries(H, dt):
    w, V = np.linalg.eigh(H)
    phase = np.exp(-1j * TWO_PI * dt * w)
    return (V * phase[:, None, :]) @ V.conj().transpose(0, 2, 1)


def _propagate(model: CoupledModel, schedule: PulseSchedule, psi0, dt, n_store):
    n_steps = max(1, int(round(schedule.duration / dt)))
    dt = schedule.duration / n_steps if schedule.duration > 0 else dt
    if schedule.duration == 0:
        n_steps = 0
    t_mid = (np.arange(n_steps) + 0.5) * dt
    phi, offsets = _controls(model, schedule, t_mid)
    # split the step range into n_store segments, each reduced to one product
    edges = np.unique(np.round(np.linspace(0, n_steps, n_store + 1)).astype(int))
    psi = np.array(psi0, dtype=complex)
    out = np.zeros((len(edges),) + psi.shape, dtype=complex)
    out[0] = psi
    for block in model.blocks:
        if not np.any(psi[block]):
            continue
        d = len(block)
        chunk = max(1, CHUNK_ELEMENTS // (d * d))
        state = psi[block]
        for s in range(len(edges) - 1):
            a, b = edges[s], edges[s + 1]
            seg = np.eye(d, dtype=complex)
            for c in range(a, b, chunk):
                sl = slice(c, min(c + chunk, b))
                H = model.hamiltonian_batch(phi[sl], {k: v[sl] for k, v in offsets.items()}, block)
                seg = _tree_product(_step_unitaries(H, dt)) @ seg
            state = seg @ state
            out[s + 1][block] = state
    times = edges * dt
    return times, out, dt


def evolve(model: CoupledModel, schedule: PulseSchedule, initial, dt: float | None = None,
           samples: int = 1, dressed: bool = True, check_convergence: bool = False,
           labels=None) -> Trajectory:
    """Propagate ``initial`` (label, list of labels, vector or D x k matrix) through the schedule.

    Labels refer to dressed states at the idle controls when ``dressed``.
    ``samples`` stored time points are spread evenly over the window.  With
    ``check_convergence`` the run is repeated at dt/2 and an IntegratorError
    is raised if any final population moves by more than 1e-6.
    """
    dt = schedule.dt if dt is None else dt
    psi0 = _initial_states(model, schedule, initial, dressed)
    times, states, dt = _propagate(model, schedule, psi0, dt, samples)
    norms = np.linalg.norm(states, axis=1)
    drift = float(np.max(np.abs(norms - 1.0)))
    if drift > NORM_TOL:
        raise IntegratorError(f"norm drift {drift:.2e} exceeds {NORM_TOL:g}")
    if check_convergence:
        _, fine, _ = _propagate(model, schedule, psi0, dt / 2, 1)
        delta = float(np.max(np.abs(np.abs(fine[-1]) ** 2 - np.abs(states[-1]) ** 2)))
        if delta > 1e-6:
            raise IntegratorError(f"populations moved by {delta:.2e} on halving dt")
    traj = Trajectory(times, states, model.labels, norm_drift=drift, dt=dt)
    wanted = labels if labels is not None else (model.computational_labels() if dressed else [])
    if wanted:
        es = diagonalize(model, idle_flux(model, schedule), labels=wanted, strict=False)
        for lab in wanted:
            v = es.vector(lab)
            traj.populations[tuple(lab)] = np.abs(np.einsum("i,tik->tk", v.conj(), states)) ** 2
    return traj


def _initial_states(model, schedule, initial, dressed):
    D = model.dimension
    if isinstance(initial, np.ndarray) and initial.dtype != object and initial.ndim in (1, 2) \
            and initial.shape[0] == D:
        psi = initial.astype(complex)
        return psi[:, None] if psi.ndim == 1 else psi
    if isinstance(initial, tuple) and all(isinstance(x, (int, np.integer)) for x in initial):
        initial = [initial]
    labels = [tuple(l) for l in initial]
    if dressed:
        es = diagonalize(model, idle_flux(model, schedule), labels=labels)
        return np.stack([es.vector(l) for l in labels], axis=1)
    psi = np.zeros((D, len(labels)), dtype=complex)
    for k, l in enumerate(labels):
        psi[model.index[l], k] = 1.0
    return psi


# ---------------------------------------------------------------- gate maps


@dataclass
class GateResult:
    unitary: np.ndarray  # projected map in the idle dressed frame
    leakage: float
    conditional_phase: float = float("nan")
    fidelity: float = float("nan")
    phases: tuple = ()
    params: dict = field(default_factory=dict)
    flagged: bool = False


def gate_map(model: CoupledModel, schedule: PulseSchedule, dt: float | None = None,
             qubits=None, check_convergence: bool = False) -> GateResult:
    """Projected computational-subspace map of a schedule on ``qubits`` (default all)."""
    qubits = tuple(range(model.n_qubits)) if qubits is None else tuple(qubits)
    n = model.n_qubits
    labels = []
    for bits in itertools.product((0, 1), repeat=n):
        labels.append(model.qubit_label(bits))
    es = diagonalize(model, idle_flux(model, schedule), labels=labels)
    psi0 = np.stack([es.vector(l) for l in labels], axis=1)
    dt = schedule.dt if dt is None else dt
    times, states, dt_used = _propagate(model, schedule, psi0, dt, 1)
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    if drift > NORM_TOL:
        raise IntegratorError(f"norm drift {drift:.2e} exceeds {NORM_TOL:g}")
    T = times[-1]
    E = np.array([es.energy(l) for l in labels])
    M = (psi0.conj().T @ states[-1]) * np.exp(1j * TWO_PI * E * T)[:, None]
    if check_convergence:
        _, fine, _ = _propagate(model, schedule, psi0, dt / 2, 1)
        Mf = (psi0.conj().T @ fine[-1]) * np.exp(1j * TWO_PI * E * T)[:, None]
        delta = map_infidelity(M, Mf)
        if abs(delta) > 1e-6:
            raise IntegratorError(f"gate map moved by {delta:.2e} on halving dt")
    if len(qubits) < n:
        M = _reduce_to(M, n, qubits)
    leak = float(1.0 - np.mean(np.sum(np.abs(M) ** 2, axis=0)))
    return GateResult(M, max(leak, 0.0), conditional_phase(M) if M.shape[0] == 4 else float("nan"))


def map_infidelity(A, B) -> float:
    """1 - |<A, B>|^2 / (|A|^2 |B|^2); zero for identical maps even when they leak."""
    ab = abs(np.vdot(A, B)) ** 2
    return float(max(1.0 - ab / (np.vdot(A, A).real * np.vdot(B, B).real), 0.0))


def _reduce_to(M, n, qubits):
    """Restrict an n-qubit map to ``qubits`` with the others starting and ending in |0>."""
    keep = []
    for idx, bits in enumerate(itertools.product((0, 1), repeat=n)):
        if all(bits[q] == 0 for q in range(n) if q not in qubits):
            keep.append(idx)
    return M[np.ix_(keep, keep)]


def conditional_phase(M) -> float:
    """arg M11 - arg M10 - arg M01 + arg M00, wrapped to [0, 2 pi)."""
    d = np.diag(M)
    return float(np.mod(np.angle(d[3]) - np.angle(d[2]) - np.angle(d[1]) + np.angle(d[0]), TWO_PI))


# ---------------------------------------------------------------- gate schedules


def parametric_schedule(idle: float, amplitude: float, frequency: float, duration: float,
                        phase: float = 0.0, ramp: float = 5.0, dt: float = DEFAULT_DT) -> PulseSchedule:
    return PulseSchedule(duration, {"flux": Channel(parametric(amplitude, frequency, duration, phase,
                                                                ramp, idle), idle)}, dt,
                         params=dict(kind="parametric", idle=idle, amplitude=amplitude,
                                     frequency=frequency, duration=duration, phase=phase, ramp=ramp))


def cz_schedule(idle: float, coupler_flux: float, qubit: str, qubit_offset: float, hold: float,
                ramp: float = 5.0, dt: float = DEFAULT_DT, extra_offsets=None) -> PulseSchedule:
    """Flattop excursions of the coupler flux and one qubit's frequency.

    ``extra_offsets`` maps further qubit names to flattop frequency offsets
    played with the same timing (used to park spectators).
    """
    duration = hold + 2 * ramp
    ch = {"flux": Channel(flattop(coupler_flux - idle, duration, ramp, idle), idle),
          f"offset_{qubit}": Channel(flattop(qubit_offset, duration, ramp), 0.0)}
    for name, off in (extra_offsets or {}).items():
        ch[f"offset_{name}"] = Channel(flattop(off, duration, ramp), 0.0)
    return PulseSchedule(duration, ch, dt,
                         params=dict(kind="cz", idle=idle, coupler_flux=coupler_flux, qubit=qubit,
                                     qubit_offset=qubit_offset, hold=hold, ramp=ramp,
                                     extra_offsets=dict(extra_offsets or {})))


def chevron_scan(model: CoupledModel, frequencies, durations, initial, target=None,
                 idle: float | None = None, amplitude: float = 0.1, phase: float = 0.0,
                 ramp: float = 5.0, dt: float = DEFAULT_DT):
    """Population of ``target`` (default ``initial``) after a parametric drive.

    For each drive frequency one run with a rising edge and no falling edge
    is sampled at every duration.  Returns an array (len(frequencies),
    len(durations)).
    """
    idle = model.reference_flux if idle is None else idle
    durations = np.asarray(durations, dtype=float)
    target = initial if target is None else target
    T = float(durations.max())
    grid = np.zeros((len(frequencies), len(durations)))
    es = diagonalize(model, idle, labels=[initial, target] if target != initial else [initial])
    psi0 = es.vector(initial)[:, None]
    v = es.vector(target)
    for i, f in enumerate(frequencies):
        def wave(t, f=f):
            t = np.asarray(t, dtype=float)
            env = raised_cosine_envelope(t, 2 * T + 2 * ramp, ramp)
            return idle + amplitude * env * np.sin(TWO_PI * f * t + phase)
        sched = PulseSchedule(T, {"flux": Channel(wave, idle)}, dt)
        times, states, dt_used = _propagate(model, sched, psi0, dt,
                                            max(1, int(round(T / dt))))
        pops = np.abs(v.conj() @ states[:, :, 0].T) ** 2
        grid[i] = np.interp(durations, times, pops)
    return grid


def diabatic_cz(model: CoupledModel, idle: float, coupler_flux: float, qubit: str,
                qubit_offset: float, hold: float, ramp: float = 5.0, dt: float = DEFAULT_DT,
                qubits=(0, 1), extra_offsets=None) -> GateResult:
    sched = cz_schedule(idle, coupler_flux, qubit, qubit_offset, hold, ramp, dt, extra_offsets)
    res = gate_map(model, sched, qubits=qubits)
    res.params = sched.params
    res.flagged = res.leakage > 0.05
    return res


def cz_resonance(model: CoupledModel, coupler_flux: float, qubit: str, pair=(0, 1),
                 interval=(-0.3, 0.3), extra_offsets=None, doubly: str | None = None):
    """Offset of ``qubit`` that makes |11> and |2> of ``doubly`` degenerate at ``coupler_flux``.

    ``doubly`` defaults to the pair member that is not moved.  Returns
    (offset GHz, minimum splitting GHz, full-swap hold ns); the hold
    estimate 1/splitting ignores the ramps and seeds the optimizer.
    """
    moved = model.mode_names.index(qubit)
    qmodes = [model.qubit_modes[i] for i in pair]
    if moved not in qmodes:
        raise InvalidParameterError(f"{qubit} is not in the pair")
    if doubly is None:
        other = qmodes[1] if moved == qmodes[0] else qmodes[0]
    else:
        other = model.mode_names.index(doubly)
        if other not in qmodes:
            raise InvalidParameterError(f"{doubly} is not in the pair")
    bits = [0] * model.n_qubits
    for i in pair:
        bits[i] = 1
    eleven = model.qubit_label(bits)
    partner = list(model.qubit_label([0] * model.n_qubits))
    partner[other] = 2
    ia, ib = model.index[eleven], model.index[tuple(partner)]

    def gap(delta):
        H = model.hamiltonian(coupler_flux, {qubit: delta, **(extra_offsets or {})})
        w, v = np.linalg.eigh(H)
        weight = np.abs(v[ia]) ** 2 + np.abs(v[ib]) ** 2
        top = np.argsort(weight)[-2:]
        return abs(w[top[1]] - w[top[0]])

    grid = np.linspace(*interval, 61)
    k = int(np.argmin([gap(x) for x in grid]))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    r = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    return float(r.x), float(r.fun), float(1.0 / r.fun)


TARGETS = {
    "iSWAP": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}


@dataclass
class OptimizationResult:
    params: dict
    fidelity: float
    gate: GateResult
    scan: list
    history: list


def optimize_gate_pulse(build: Callable[[dict], GateResult], target: str, box: dict,
                        grid: int | dict = 5, floor: float = 0.99, step_tol: float = 1e-3,
                        max_evals: int = 400) -> OptimizationResult:
    """Coarse grid scan then compass (pattern) search over a parameter box.

    ``build(params)`` returns the GateResult for one parameter set; the
    objective is the process fidelity to ``target`` after local Z
    correction.  ``box`` maps parameter names to (lo, hi).  The best
    objective is non-decreasing along ``history``.
    """
    if not box:
        raise InvalidParameterError("empty search box")
    for name, (lo, hi) in box.items():
        if not (math.isfinite(lo) and math.isfinite(hi) and hi >= lo):
            raise InvalidParameterError(f"invalid range for {name}: ({lo}, {hi})")
    V = TARGETS[target] if isinstance(target, str) else np.asarray(target)
    names = list(box)
    lo = np.array([box[n][0] for n in names], dtype=float)
    hi = np.array([box[n][1] for n in names], dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)

    cache = {}

    def evaluate(x):
        key = tuple(np.round(x, 12))
        if key not in cache:
            params = dict(zip(names, map(float, x)))
            g = build(params)
            f, phases = local_phase_optimize(g.unitary, V)
            g.fidelity, g.phases, g.params = f, phases, {**g.params, **params}
            cache[key] = (f, g)
        return cache[key]

    counts = [grid.get(n, 5) if isinstance(grid, dict) else grid for n in names]
    axes = [np.linspace(l, h, c) if h > l else np.array([l]) for l, h, c in zip(lo, hi, counts)]
    scan = []
    best_x, best_f = None, -1.0
    for point in itertools.product(*axes):
        x = np.array(point)
        f, _ = evaluate(x)
        scan.append((dict(zip(names, map(float, x))), f))
        if f > best_f:
            best_x, best_f = x, f
    history = [best_f]
    step = np.array([ax[1] - ax[0] if len(ax) > 1 else 0.0 for ax in axes]) / 2
    evals = len(cache)
    while np.any(step / span > step_tol) and evals < max_evals:
        improved = False
        for k in range(len(names)):
            if step[k] == 0:
                continue
            for sgn in (1, -1):
                x = best_x.copy()
                x[k] = np.clip(x[k] + sgn * step[k], lo[k], hi[k])
                f, _ = evaluate(x)
                evals = len(cache)
                if f > best_f + 1e-13:
                    best_x, best_f, improved = x, f, True
                    break
        history.append(best_f)
        if not improved:
            step = step / 2
    f, g = evaluate(best_x)
    result = OptimizationResult(dict(zip(names, map(float, best_x))), f, g, scan, history)
    if f < floor:
        raise OptimizationError(f"best fidelity {f:.6f} below floor {floor}", best=result)
    return result


def parametric_gate(model: CoupledModel, params: dict, dt: float = DEFAULT_DT) -> GateResult:
    sched = parametric_schedule(params["idle"], params["amplitude"], params["frequency"],
                                params["duration"], params.get("phase", 0.0),
                                params.get("ramp", 5.0), dt)
    res = gate_map(model, sched)
    res.params = dict(sched.params)
    res.flagged = res.leakage > 0.05
    return res


def process_fidelity_to(result: GateResult, target: str) -> float:
    return gate_fidelity(result.unitary, TARGETS[target])
