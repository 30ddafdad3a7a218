"""Command-line entry point.

    dtcsim spectrum --device dev.yaml --grid=-3.1416:3.1416:121 --out run/
    dtcsim zz --device dev.yaml --grid "detuning=-300:300:13;phi=1.6:2.3:36" --out run/
    dtcsim gate iswap --device dev.yaml --box "frequency=0.383:0.388;duration=130:170" --out run/
    dtcsim scenario scenario.yaml --out run/
    dtcsim recipe recipes/fig2c.yaml --out run/

Exit codes: 0 success, 1 numerical failure (error.json written to --out),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config, svg
from .config import ConfigError
from .coupled import (diagonalize, effective_chain, effective_pair, find_off_point, static_zz,
                      stc_surrogate, zz_sweep)
from .dynamics import (TARGETS, DistortionModel, chevron_scan, cz_resonance, cz_schedule,
                       design_compensation, diabatic_cz, fit_distortion, gate_map,
                       optimize_gate_pulse, parametric_gate, parametric_schedule,
                       simulate_distortion_probe)
from .errors import AmbiguousLabelingError, DtcSimError, InvalidParameterError, NotFoundError
from .modes import dtc_flux_sweep
from .multiplex import (SharedLineScenario, inject_shift, run_bell_circuit, run_ghz_circuit,
                        spectator_evolution, spectator_phase_calibration, target_corrections)
from .tomography import local_phase_optimize, simulate_qpt, z_phases

REFERENCE_GHZ = 6.433


class UsageError(DtcSimError):
    pass


# ---------------------------------------------------------------- output helpers


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(f"{v:.12g}")
    if isinstance(v, complex):
        return [_num(v.real), _num(v.imag)]
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_num(x) for x in v]
    return v


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_num(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, (float, np.floating)) else x for x in row])


# ---------------------------------------------------------------- argument parsing


def parse_range(text: str) -> np.ndarray:
    """'a:b:n' (inclusive linspace) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return np.linspace(float(a), float(b), n)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise UsageError(f"cannot parse range {text!r}") from exc


def parse_named(text: str | None) -> dict:
    """'name=spec;name=spec' -> {name: spec}."""
    out = {}
    for part in (text or "").replace(" ", "").split(";"):
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"expected name=value in {part!r}")
        k, v = part.split("=", 1)
        out[k] = v
    return out


def parse_box(text: str | None) -> dict:
    box = {}
    for name, spec in parse_named(text).items():
        try:
            lo, hi = (float(x) for x in spec.split(":"))
        except ValueError as exc:
            raise UsageError(f"box entry {name}={spec!r} must be lo:hi") from exc
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise UsageError(f"box entry {name} has an empty or invalid range")
        box[name] = (lo, hi)
    return box


def _overrides(args, run_defaults):
    pairs = [config.parse_override(s) for s in (args.set or [])]
    dev_over, run = config.split_overrides(pairs, run_defaults)
    device = config.load_device(args.device, dev_over)
    return device, run


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pool(args):
    return ThreadPoolExecutor(max_workers=max(1, int(args.threads or 1)))


def pair_freqs(detuning_mhz: float, reference: float = REFERENCE_GHZ):
    """(omega_1, omega_2) with detuning omega_1 - omega_2; the higher one sits at ``reference``."""
    d = 1e-3 * detuning_mhz
    return (reference + d, reference) if d < 0 else (reference, reference - d)


# ---------------------------------------------------------------- commands


def cmd_spectrum(args):
    device, run = _overrides(args, {"basis_size": 201})
    grid = parse_range(args.grid or f"{-math.pi}:{math.pi}:121")
    chunks = np.array_split(grid, max(1, int(args.threads or 1)))
    with _pool(args) as pool:
        parts = list(pool.map(lambda g: dtc_flux_sweep(device, g, int(run["basis_size"])),
                              [c for c in chunks if c.size]))
    rows = [r for part in parts for r in part]
    out = _out(args)
    write_csv(out / "spectrum.csv", ["phi_e_rad", "omega_p_GHz", "omega_m_GHz"], rows)
    a = np.array(rows)
    svg.line_plot(out / "spectrum.svg", {"p": (a[:, 0], a[:, 1]), "m": (a[:, 0], a[:, 2])},
                  "flux (rad)", "frequency (GHz)", "coupler spectrum")
    return {"points": len(rows), "omega_m_range": [a[:, 2].min(), a[:, 2].max()],
            "omega_p_range": [a[:, 1].min(), a[:, 1].max()]}


def cmd_zz(args):
    device, run = _overrides(args, {"reference_GHz": REFERENCE_GHZ, "coupling_scale": 1.0,
                                    "tol_kHz": 1.0})
    axes = parse_named(args.grid or "detuning=-300:300:13;phi=1.6:2.3:36")
    for key in ("detuning", "phi"):
        if key not in axes:
            raise UsageError(f"--grid needs a {key}= axis")
    dets, phis = parse_range(axes["detuning"]), parse_range(axes["phi"])
    if dets.size == 0 or phis.size == 0:
        raise UsageError("empty grid")

    def family(det):
        w1, w2 = pair_freqs(det, float(run["reference_GHz"]))
        return effective_pair(device, w1, w2, float(phis[0]),
                              coupling_scale=float(run["coupling_scale"]))

    def one(det):
        model = family(det)
        rows = zz_sweep(lambda _: model, [det], phis)
        try:
            phi, res = find_off_point(model, (phis[0], phis[-1]), tol_khz=float(run["tol_kHz"]),
                                      samples=len(phis))
            found = True
        except NotFoundError as exc:
            phi, res, found = exc.best_flux, exc.best_value, False
        return rows, {"detuning_MHz": det, "phi_e_rad": phi, "residual_kHz": res, "found": found}

    with _pool(args) as pool:
        results = list(pool.map(one, dets))
    rows = [r for part, _ in results for r in part]
    offs = [o for _, o in results]
    out = _out(args)
    write_csv(out / "zz.csv", ["detuning_MHz", "phi_e_rad", "xi_zz_kHz", "flag"],
              [(r["detuning_MHz"], r["phi_e_rad"], r["xi_zz_kHz"], r["flag"]) for r in rows])
    write_json(out / "off_points.json", offs)
    Z = np.array([r["xi_zz_kHz"] for r in rows]).reshape(len(dets), len(phis))
    svg.heatmap(out / "zz.svg", phis, dets, np.sign(Z) * np.log10(1 + np.abs(Z)),
                "flux (rad)", "detuning (MHz)", "sign(ZZ) log10(1 + |ZZ| / kHz)")
    return {"points": len(rows), "off_points": offs}


GATE_DEFAULTS = {
    "iswap": {"freqs": [6.433, 6.033], "idle": 1.95, "amplitude": 0.15, "dt": 0.005,
              "phase": 0.0, "ramp": 5.0, "floor": 0.99, "grid": 5, "chevron": 21},
    "cz": {"freqs": [6.433, 6.033], "idle": 1.95, "amplitude": 0.15, "dt": 0.005,
           "phase": 0.0, "ramp": 5.0, "floor": 0.99, "grid": 5, "chevron": 21},
    "diabatic-cz": {"freqs": [6.343, 6.433], "idle": 1.928, "coupler_flux": 2.15, "qubit": "q1",
                    "dt": 0.005, "ramp": 5.0, "floor": 0.99, "grid": 5, "chevron": 0},
}


def _parametric_seed(model, idle, kind):
    L = model.qubit_label
    es = diagonalize(model, idle, labels=[L((0, 1)), L((1, 0)), L((1, 1)), L((2, 0)), L((0, 2))],
                     strict=False)
    if kind == "iswap":
        return abs(es.energy(L((1, 0))) - es.energy(L((0, 1))))
    # |11> <-> |20> or |02>, whichever is closer in frequency
    return min(abs(es.energy(L((2, 0))) - es.energy(L((1, 1)))),
               abs(es.energy(L((0, 2))) - es.energy(L((1, 1)))))


def cmd_gate(args):
    kind = args.kind
    device, run = _overrides(args, GATE_DEFAULTS[kind])
    w1, w2 = (float(x) for x in run["freqs"])
    idle = float(run["idle"])
    model = effective_pair(device, w1, w2, idle)
    dt = float(run["dt"])
    if args.box is not None:
        box = parse_box(args.box)
        if not box:
            raise UsageError("empty search box")
    elif kind == "diabatic-cz":
        off, gap, hold = cz_resonance(model, float(run["coupler_flux"]), run["qubit"],
                                      interval=(-0.3, 0.3))
        # the ramps add swap time, so the best hold sits a few ns below 1/gap
        box = {"qubit_offset": (off - 0.004, off + 0.004), "hold": (max(1.0, hold - 12), hold + 2)}
    else:
        f0 = _parametric_seed(model, idle, kind)
        box = {"frequency": (f0 - 0.001, f0 + 0.002), "duration": (100.0, 300.0)}
    if kind == "diabatic-cz":
        def build(p):
            return diabatic_cz(model, idle, float(run["coupler_flux"]), run["qubit"],
                               p["qubit_offset"], p["hold"], float(run["ramp"]), dt)
        target = "CZ"
    else:
        def build(p):
            q = {"idle": idle, "amplitude": float(run["amplitude"]), "phase": float(run["phase"]),
                 "ramp": float(run["ramp"])}
            q.update(p)
            return parametric_gate(model, q, dt)
        target = "iSWAP" if kind == "iswap" else "CZ"
    unknown = set(box) - {"qubit_offset", "hold", "frequency", "duration", "amplitude", "phase"}
    if unknown:
        raise UsageError(f"unknown box parameters {sorted(unknown)}")
    grid = run["grid"]
    res = optimize_gate_pulse(build, target, box, grid=grid, floor=float(run["floor"]))
    g = res.gate
    out = _out(args)
    report = {"kind": kind, "target": target, "params": res.params, "fidelity": res.fidelity,
              "leakage": g.leakage, "conditional_phase": g.conditional_phase,
              "virtual_z": list(g.phases), "box": {k: list(v) for k, v in box.items()},
              "history": res.history, "schedule": g.params}
    write_json(out / "gate.json", report)
    write_csv(out / "scan.csv", list(box) + ["fidelity"],
              [[p[k] for k in box] + [f] for p, f in res.scan])
    n_chev = int(run.get("chevron", 0))
    if n_chev and "frequency" in res.params:
        initial = model.qubit_label((0, 1) if kind == "iswap" else (1, 1))
        fmin, fmax = box.get("frequency", (res.params["frequency"],) * 2)
        span = max(fmax - fmin, 0.004)
        mid = 0.5 * (fmin + fmax)
        freqs = np.linspace(mid - span, mid + span, n_chev)
        durations = np.linspace(0.0, 1.5 * res.params["duration"], 61)
        pops = chevron_scan(model, freqs, durations, initial, idle=idle,
                            amplitude=float(run["amplitude"]), dt=dt)
        write_csv(out / "chevron.csv", ["omega_d_GHz", "duration_ns", "population"],
                  [(f, d, pops[i, j]) for i, f in enumerate(freqs) for j, d in enumerate(durations)])
        svg.heatmap(out / "chevron.svg", durations, freqs, pops, "duration (ns)",
                    "drive frequency (GHz)", "chevron")
    return report


# ---------------------------------------------------------------- scenarios


def _pulse_schedule(pulse: dict, dt=None):
    dt = float(pulse.get("dt", 0.005) if dt is None else dt)
    if pulse["kind"] == "parametric":
        return parametric_schedule(float(pulse["idle"]), float(pulse["amplitude"]),
                                   float(pulse["frequency"]), float(pulse["duration"]),
                                   float(pulse.get("phase", 0.0)), float(pulse.get("ramp", 5.0)), dt)
    return cz_schedule(float(pulse["idle"]), float(pulse["coupler_flux"]), pulse["qubit"],
                       float(pulse["qubit_offset"]), float(pulse["hold"]),
                       float(pulse.get("ramp", 5.0)), dt, pulse.get("extra_offsets"))


def _pulse(scn_path, scn, key):
    ref = scn.get(key)
    if ref is None:
        raise ConfigError("missing pulse reference", key=key, path=scn_path)
    path = config.resolve(scn_path, ref)
    if not path.is_file():
        raise ConfigError(f"pulse file not found: {path}", key=key, path=scn_path)
    return config.load_pulse(path)


def _scenario_device(path, scn, args):
    pairs = [config.parse_override(s) for s in (args.set or [])]
    dev_over, _ = config.split_overrides(pairs, {})
    dev = scn.get("device")
    return config.load_device(config.resolve(path, dev) if dev else None, dev_over)


def scenario_spectator(path, scn, device, args):
    pulse = _pulse(path, scn, "pulse")
    freqs = [float(x) for x in pulse.get("freqs", scn.get("target", [6.433, 6.033]))]
    sc = SharedLineScenario(device, tuple(freqs), float(pulse["idle"]),
                            float(scn.get("spectator_center_GHz", REFERENCE_GHZ)))
    sched = _pulse_schedule(pulse)
    if scn.get("zero_amplitude"):
        sched = _pulse_schedule({**pulse, "amplitude": 0.0} if pulse["kind"] == "parametric" else
                                {**pulse, "coupler_flux": pulse["idle"]})
    dets = parse_range(str(scn.get("detunings_MHz", "-300:300:13")))
    res = spectator_evolution(sc, sched, dets)
    target = gate_map(sc.target_model(), sched)
    out = _out(args)
    write_csv(out / "spectator.csv", ["detuning_MHz", "P01", "P10", "P11", "identity_fidelity"],
              [(d, res.populations[(0, 1)][k], res.populations[(1, 0)][k],
                res.populations[(1, 1)][k], res.fidelities[k]) for k, d in enumerate(res.detunings)])
    svg.line_plot(out / "spectator.svg",
                  {f"|{a}{b}>": (res.detunings, res.populations[(a, b)])
                   for a, b in ((0, 1), (1, 0), (1, 1))},
                  "spectator detuning (MHz)", "population", "spectator pair")
    return {"kind": "spectator", "best_detuning_MHz": res.best_detuning,
            "identity_fidelity": res.best_fidelity, "target_leakage": target.leakage}


def _chain_maps(scn_path, scn, device):
    freqs = [float(x) for x in scn["qubits"]]
    idle = float(scn["idle"])
    chain = effective_chain(device, freqs, idle)
    pulses = {k: _pulse(scn_path, scn, k) for k in ("cz12", "cz23")}
    return chain, pulses


def scenario_ghz(path, scn, device, args):
    chain, pulses = _chain_maps(path, scn, device)
    dt = scn.get("dt")
    spect = {"cz12": 2, "cz23": 0}
    pairs = {"cz12": (0, 1), "cz23": (1, 2)}
    names = {0: "q1", 1: "q2", 2: "q3"}
    trials = [float(x) for x in scn.get("injected_shift_MHz", [0.0])]
    runs, nominal = [], None
    for shift in trials:
        maps, corr, spec_phase = {}, {}, {}
        for key in ("cz12", "cz23"):
            sched = _pulse_schedule(pulses[key], dt)
            if shift:
                sched = inject_shift(sched, names[spect[key]], 1e-3 * shift)
            M = gate_map(chain, sched).unitary
            maps[key] = M
            corr[key] = target_corrections(M, pairs[key], 3)
            control = pairs[key]
            cal = spectator_phase_calibration(M, control=control, spectator=spect[key])
            spec_phase[key] = cal.mean
        r = run_ghz_circuit(maps["cz12"], maps["cz23"], corr["cz12"], corr["cz23"],
                            spec_phase["cz12"], spec_phase["cz23"])
        runs.append({"injected_shift_MHz": shift, "fidelity": r.fidelity,
                     "uncompensated_fidelity": r.uncompensated_fidelity,
                     "spectator_phases": spec_phase})
        nominal = nominal or r
    out = _out(args)
    write_json(out / "ghz_rho.json", json.loads(nominal.density.to_json()))
    return {"kind": "ghz", "runs": runs, "fidelity": runs[0]["fidelity"],
            "uncompensated_fidelity": runs[0]["uncompensated_fidelity"]}


def scenario_bell(path, scn, device, args):
    pulse = _pulse(path, scn, "pulse")
    freqs = [float(x) for x in pulse.get("freqs")]
    model = effective_pair(device, *freqs, float(pulse["idle"]))
    g = gate_map(model, _pulse_schedule(pulse))
    r = run_bell_circuit(g.unitary)
    out = _out(args)
    write_json(out / "bell_rho.json", json.loads(r.density.to_json()))
    return {"kind": "bell", "fidelity": r.fidelity, "leakage": g.leakage,
            "conditional_phase": g.conditional_phase}


def scenario_distortion(path, scn, device, args):
    terms = [tuple(map(float, t)) for t in scn.get("terms", [[0.03, 300.0]])]
    model = DistortionModel(terms)
    sens = float(scn.get("sensitivity_GHz", 0.05))
    delays = parse_range(str(scn.get("delays_ns", "0:1500:61")))
    raw = simulate_distortion_probe(model, delays, sens)
    comp = simulate_distortion_probe(model, delays, sens, compensation=design_compensation(model, 1.0))
    fit = fit_distortion(delays, raw, len(terms), sens)
    out = _out(args)
    write_csv(out / "distortion.csv", ["delay_ns", "phase_uncorrected_rad", "phase_corrected_rad"],
              list(zip(delays, raw, comp)))
    svg.line_plot(out / "distortion.svg", {"uncorrected": (delays, raw), "corrected": (delays, comp)},
                  "delay (ns)", "phase (rad)", "Z pulse distortion probe")
    return {"kind": "distortion", "injected": terms, "fitted": fit.model.terms,
            "fit_residual": fit.residual, "spread_uncorrected": float(np.ptp(raw)),
            "spread_corrected": float(np.ptp(comp))}


def scenario_qpt(path, scn, device, args):
    pulse = _pulse(path, scn, "pulse")
    target = scn.get("target", "iSWAP")
    if target not in TARGETS:
        raise ConfigError(f"target must be one of {sorted(TARGETS)}", key="target", path=path)
    model = effective_pair(device, *[float(x) for x in pulse["freqs"]], float(pulse["idle"]))
    g = gate_map(model, _pulse_schedule(pulse))
    _, phases = local_phase_optimize(g.unitary, TARGETS[target])
    pm = simulate_qpt(np.diag(z_phases(phases)) @ g.unitary, TARGETS[target])
    out = _out(args)
    pm.write_csv(out / "chi.csv")
    write_json(out / "chi.json", json.loads(pm.to_json()))
    return {"kind": "qpt", "target": target, "fidelity": pm.fidelity,
            "average_gate_fidelity": pm.average_gate_fidelity, "leakage": pm.leakage,
            "virtual_z": list(phases)}


def scenario_zz_compare(path, scn, device, args):
    """Static ZZ versus detuning for the double coupler at a fixed flux and a single-transmon coupler."""
    dets = parse_range(str(scn.get("detunings_MHz", "-600:600:49")))
    phi = float(scn.get("phi_e_rad", 1.93))
    wc = float(scn.get("stc_coupler_GHz", 7.2))
    ref = float(scn.get("reference_GHz", REFERENCE_GHZ))
    rows = []
    for det in dets:
        w1, w2 = pair_freqs(det, ref)
        vals = []
        for build in (lambda: effective_pair(device, w1, w2, phi),
                      lambda: stc_surrogate(device, w1, w2, wc)):
            try:
                vals.append(static_zz(build()).xi_zz)
            except AmbiguousLabelingError:
                vals.append(float("nan"))
        rows.append((float(det), *vals))
    out = _out(args)
    write_csv(out / "zz_compare.csv", ["detuning_MHz", "xi_zz_dtc_kHz", "xi_zz_stc_kHz"], rows)
    a = np.array(rows)
    svg.line_plot(out / "zz_compare.svg",
                  {"DTC": (a[:, 0], np.log10(1 + np.abs(a[:, 1]))),
                   "STC": (a[:, 0], np.log10(1 + np.abs(a[:, 2])))},
                  "detuning (MHz)", "log10(1 + |ZZ| / kHz)", "double vs single transmon coupler")
    return {"kind": "zz_compare", "max_abs_dtc_kHz": float(np.nanmax(np.abs(a[:, 1]))),
            "max_abs_stc_kHz": float(np.nanmax(np.abs(a[:, 2])))}


SCENARIOS = {"spectator": scenario_spectator, "ghz": scenario_ghz, "bell": scenario_bell,
             "distortion": scenario_distortion, "qpt": scenario_qpt,
             "zz_compare": scenario_zz_compare}


def cmd_scenario(args):
    path = Path(args.file)
    scn = config.load_mapping(path)
    kind = scn.get("kind")
    if kind not in SCENARIOS:
        raise ConfigError(f"kind must be one of {sorted(SCENARIOS)}", key="kind", path=path)
    device = _scenario_device(path, scn, args)
    result = SCENARIOS[kind](path, scn, device, args)
    write_json(_out(args) / "scenario.json", result)
    return result


def cmd_recipe(args):
    """Run the command described by a recipe file; relative paths resolve against it."""
    path = Path(args.file)
    rec = config.load_mapping(path)
    command = rec.get("command")
    if command not in ("spectrum", "zz", "gate", "scenario"):
        raise ConfigError("command must be spectrum, zz, gate or scenario", key="command", path=path)
    argv = [command]
    if command == "gate":
        argv.append(str(rec.get("kind", "iswap")))
    if command == "scenario":
        argv.append(str(config.resolve(path, rec["scenario"])))
    if rec.get("device"):
        argv += ["--device", str(config.resolve(path, rec["device"]))]
    for key in ("grid", "box"):
        if rec.get(key) is not None:
            argv.append(f"--{key}={rec[key]}")  # grids may start with '-'
    for k, v in (rec.get("set") or {}).items():
        argv += ["--set", f"{k}={json.dumps(v) if isinstance(v, list) else v}"]
    argv += ["--out", args.out, "--threads", str(args.threads)]
    return _dispatch(build_parser().parse_args(argv))


# ---------------------------------------------------------------- main


def build_parser():
    ap = argparse.ArgumentParser(prog="dtcsim", description="Double-transmon coupler simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--device", help="device YAML file (defaults to the built-in design)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override (repeatable)")
    common.add_argument("--grid", help="sweep grid")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="coupler p/m spectrum vs flux")
    sub.add_parser("zz", parents=[common], help="static ZZ over detuning and flux")
    g = sub.add_parser("gate", parents=[common], help="optimize a two-qubit gate pulse")
    g.add_argument("kind", choices=sorted(GATE_DEFAULTS))
    g.add_argument("--box", help="search box, e.g. 'frequency=0.38:0.39;duration=120:200'")
    s = sub.add_parser("scenario", parents=[common], help="run a scenario file")
    s.add_argument("file")
    r = sub.add_parser("recipe", parents=[common], help="run a figure recipe")
    r.add_argument("file")
    return ap


COMMANDS = {"spectrum": cmd_spectrum, "zz": cmd_zz, "gate": cmd_gate, "scenario": cmd_scenario,
            "recipe": cmd_recipe}


def _dispatch(args):
    return COMMANDS[args.command](args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (UsageError, ConfigError, InvalidParameterError) as exc:
        print(f"dtcsim: error: {exc}", file=sys.stderr)
        return 2
    except DtcSimError as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("best_flux", "best_value", "residual"):
            if getattr(exc, attr, None) is not None:
                report[attr] = getattr(exc, attr)
        best = getattr(exc, "best", None)
        if best is not None:
            report["best_params"] = best.params
            report["best_fidelity"] = best.fidelity
        try:
            write_json(_out(args) / "error.json", report)
        except OSError:
            pass
        print(f"dtcsim: numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
