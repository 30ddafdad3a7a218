"""End-to-end acceptance checks.

Each test logs one PASS/FAIL line (shown in the terminal summary) and then
asserts.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from dtcsim import config
from dtcsim.cli import main, pair_freqs, parse_range
from dtcsim.coupled import (assemble_full_circuit, effective_chain, effective_couplings,
                            effective_pair, exchange_splitting, find_off_point,
                            qubit_max_frequency, static_zz, zz_minimum)
from dtcsim.dynamics import (DistortionModel, apply_distortion, cz_schedule, design_compensation,
                             diabatic_cz, evolve, fit_distortion, gate_map, map_infidelity,
                             optimize_gate_pulse, parametric_gate, parametric_schedule,
                             simulate_distortion_probe)
from dtcsim.errors import NotFoundError
from dtcsim.modes import dtc_flux_sweep, solve_mode, transmon_spec
from dtcsim.multiplex import SharedLineScenario, run_bell_circuit, spectator_evolution

RECIPES = Path(__file__).resolve().parents[1] / "recipes"
PULSES = RECIPES / "pulses"
COARSE_CELL = 0.05  # rad, flux step of the coarse ZZ grid


def pulse(name):
    return config.load_pulse(PULSES / name)


def pair_model(params, p):
    return effective_pair(params, *[float(x) for x in p["freqs"]], float(p["idle"]))


def schedule(p, dt=None):
    dt = float(p["dt"] if dt is None else dt)
    if p["kind"] == "parametric":
        return parametric_schedule(p["idle"], p["amplitude"], p["frequency"], p["duration"],
                                   p.get("phase", 0.0), p.get("ramp", 5.0), dt)
    return cz_schedule(p["idle"], p["coupler_flux"], p["qubit"], p["qubit_offset"], p["hold"],
                       p.get("ramp", 5.0), dt, p.get("extra_offsets"))


@pytest.mark.xfail(strict=True, reason="the exact anharmonicity departs from -E_C by more than "
                                       "15% below E_J/E_C of about 50")
def test_criterion_1_transmon_oracle(verdict):
    E_c = 0.25
    ratios = np.linspace(30, 100, 15)
    err_w, err_a = [], []
    for ratio in ratios:
        s = solve_mode(transmon_spec(E_c, ratio * E_c), 201, 4)
        w0 = math.sqrt(8 * ratio) * E_c - E_c
        err_w.append(abs(s.omega_01 - w0) / w0)
        err_a.append(abs(1e-3 * s.anharmonicity + E_c) / E_c)
    err_a = np.array(err_a)
    ok = max(err_w) < 0.02 and err_a.max() < 0.15
    holds = ratios[err_a < 0.15]
    where = f"from E_J/E_C = {holds.min():.0f}" if holds.size else "nowhere"
    verdict(1, ok, f"max omega_01 error {100 * max(err_w):.2f}%; anharmonicity error up to "
                   f"{100 * err_a.max():.1f}%, within 15% only {where}")
    assert ok


def test_criterion_2_parameter_cross_check(verdict, params):
    w_max = qubit_max_frequency(params)
    q_err = max(abs(w_max - t) / t for t in (6.498, 6.462, 6.536))
    sweep = np.array(dtc_flux_sweep(params, np.linspace(-np.pi, np.pi, 61)))
    p_err = np.max(np.abs(sweep[:, 1] - 7.5)) / 7.5
    m_lo, m_hi = sweep[:, 2].min(), sweep[:, 2].max()
    m_err = max(abs(m_lo - 5.1) / 5.1, abs(m_hi - 9.0) / 9.0)
    ok = q_err < 0.05 and p_err < 0.10 and m_err < 0.10
    verdict(2, ok, f"qubit max {w_max:.3f} GHz ({100 * q_err:.1f}%), p within {100 * p_err:.1f}% "
                   f"of 7.5 GHz, m spans {m_lo:.2f}-{m_hi:.2f} GHz")
    assert ok


@pytest.mark.xfail(strict=True, reason="second-order coupling formula and full circuit differ "
                                       "by more than 25% near the off point")
def test_criterion_3_coupling_cancellation(verdict, params):
    wq = qubit_max_frequency(params)
    full = assemble_full_circuit(params, 1.9)

    def g_formula(phi):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return effective_couplings(params, wq, wq, phi).g_eff

    def g_full(phi):
        return exchange_splitting(full.at_flux(phi))

    phi_f = brentq(g_formula, 1.85, 2.05, xtol=1e-10)
    phi_b = brentq(g_full, 1.85, 2.05, xtol=1e-10)
    zero_f, zero_b = 1e3 * abs(g_formula(phi_f)), 1e3 * abs(g_full(phi_b))
    worst = 0.0
    for phi in np.linspace(0.5, 2.1, 33):
        gf = g_formula(phi)
        if abs(gf) > 1.0:
            worst = max(worst, abs(gf / g_full(phi) - 1.0))
    ok = zero_f < 10 and zero_b < 10 and worst < 0.25
    verdict(3, ok, f"zeros at {phi_f:.4f} (formula) and {phi_b:.4f} rad (full), |g| there "
                   f"{zero_f:.2g}/{zero_b:.2g} kHz; worst mismatch where |g| > 1 MHz "
                   f"{100 * worst:.0f}% (gate 25%)")
    assert ok


def _band(fn, centre, half_width, limit, n=201):
    """Width of the connected flux interval around ``centre`` where |fn| < limit."""
    xs = np.linspace(centre - half_width, centre + half_width, n)
    inside = np.array([abs(fn(x)) < limit for x in xs])
    k = int(np.argmin(np.abs(xs - centre)))
    if not inside[k]:
        return 0.0, (centre, centre)
    lo = hi = k
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    while hi < n - 1 and inside[hi + 1]:
        hi += 1
    return xs[hi] - xs[lo], (xs[lo], xs[hi])


def _off_point(model, samples=36):
    try:
        return find_off_point(model, (1.6, 2.3), samples=samples)[0]
    except NotFoundError:
        # straddling pairs: ZZ touches zero without changing sign
        return zz_minimum(model, (1.85, 2.05))[0]


def test_criterion_4_zz_suppression(verdict, params):
    near = effective_pair(params, *pair_freqs(-90.0), 1.93)
    far = effective_pair(params, *pair_freqs(400.0), 1.93)

    def zz(model):
        return lambda phi: static_zz(model.at_flux(phi)).xi_zz

    phi0 = _off_point(near)
    width, _ = _band(zz(near), phi0, 0.05, 10.0)

    # zero detuning is degenerate and has no qubit labels
    dets = [d for d in np.linspace(-300, 300, 13) if d != 0]
    offs = [_off_point(effective_pair(params, *pair_freqs(d), 1.93)) for d in dets]
    spread = max(offs) - min(offs)
    refined = abs(_off_point(near, samples=71) - phi0)

    phis = np.linspace(1.6, 2.3, 71)
    both = [phi for phi in phis if abs(zz(near)(phi)) < 100 and abs(zz(far)(phi)) < 100]
    ok = width > 0 and spread < COARSE_CELL and refined < COARSE_CELL and len(both) > 0
    window = f"{min(both):.3f}-{max(both):.3f} rad" if both else "none"
    verdict(4, ok, f"|ZZ| < 10 kHz over {1e3 * width:.1f} mrad; off point spread over +-300 MHz "
                   f"{1e3 * spread:.0f} mrad (cell {1e3 * COARSE_CELL:.0f}); common <100 kHz "
                   f"window {window}")
    assert ok


def _narrow_optimize(model, p, box, target):
    def build(q):
        return parametric_gate(model, {**p, **q}, float(p["dt"]))

    return optimize_gate_pulse(build, target, box, grid=3, floor=0.0, max_evals=25)


def test_criterion_5_gate_fidelities(verdict, params):
    iswap, cz = pulse("iswap.yaml"), pulse("cz_parametric.yaml")
    res = {}
    for name, p, target in (("iSWAP", iswap, "iSWAP"), ("CZ", cz, "CZ")):
        f, d = float(p["frequency"]), float(p["duration"])
        box = {"frequency": (f - 2e-4, f + 2e-4), "duration": (d - 2.0, d + 2.0)}
        res[name] = _narrow_optimize(pair_model(params, p), p, box, target).fidelity

    dz = pulse("cz_diabatic.yaml")
    model = pair_model(params, dz)
    off, hold = float(dz["qubit_offset"]), float(dz["hold"])

    def build(q):
        return diabatic_cz(model, float(dz["idle"]), float(dz["coupler_flux"]), dz["qubit"],
                           q["qubit_offset"], q["hold"], float(dz["ramp"]), float(dz["dt"]))

    best = optimize_gate_pulse(build, "CZ", {"qubit_offset": (off - 5e-4, off + 5e-4),
                                             "hold": (hold - 1.0, hold + 1.0)},
                               grid=3, floor=0.0, max_evals=25).gate
    phase_err = abs(best.conditional_phase - math.pi)
    ok = (res["iSWAP"] >= 0.999 and res["CZ"] >= 0.999 and phase_err < 0.01
          and best.leakage < 1e-3)
    verdict(5, ok, f"iSWAP {res['iSWAP']:.5f}, parametric CZ {res['CZ']:.5f}, diabatic CZ phase "
                   f"pi{best.conditional_phase - math.pi:+.4f} rad, leakage {best.leakage:.1e}")
    assert ok


def test_criterion_6_spectator_integrity(verdict, params):
    dets = parse_range("-400:400:17")
    best, idle_min = {}, 1.0
    for name in ("iswap.yaml", "cz_parametric.yaml"):
        p = pulse(name)
        sc = SharedLineScenario(params, tuple(float(x) for x in p["freqs"]), float(p["idle"]), 6.433)
        r = spectator_evolution(sc, schedule(p), dets)
        best[name] = (r.best_fidelity, r.best_detuning)
        zero = spectator_evolution(sc, schedule({**p, "amplitude": 0.0}), [-300.0, 100.0, 300.0])
        idle_min = min(idle_min, float(np.min(zero.fidelities)))
    ok = all(f >= 0.999 for f, _ in best.values()) and idle_min >= 1 - 1e-8
    (fi, di), (fc, dc) = best["iswap.yaml"], best["cz_parametric.yaml"]
    verdict(6, ok, f"iSWAP spectator {fi:.5f} at {di:+.0f} MHz, CZ spectator {fc:.5f} at "
                   f"{dc:+.0f} MHz, zero drive 1 - {1 - idle_min:.1e}")
    assert ok


def test_criterion_7_circuits(verdict, params, tmp_path, capsys):
    dz = pulse("cz_diabatic.yaml")
    bell = run_bell_circuit(gate_map(pair_model(params, dz), schedule(dz)).unitary).fidelity
    assert main(["recipe", str(RECIPES / "fig4.yaml"), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    ghz = json.loads((tmp_path / "scenario.json").read_text())
    runs = ghz["runs"]
    never_worse = all(r["fidelity"] >= r["uncompensated_fidelity"] for r in runs)
    ok = bell > 0.999 and ghz["fidelity"] > 0.99 and never_worse
    trials = ", ".join(f"{r['injected_shift_MHz']:+g} MHz {r['fidelity']:.4f}/"
                       f"{r['uncompensated_fidelity']:.4f}" for r in runs)
    verdict(7, ok, f"Bell {bell:.5f}, GHZ {ghz['fidelity']:.4f}; compensated/uncompensated: "
                   f"{trials}")
    assert ok


def _tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_numerical_hygiene(verdict, params, tmp_path, capsys):
    # norms along stored trajectories
    drift = 0.0
    for name, start in (("iswap.yaml", (1, 0)), ("cz_diabatic.yaml", (1, 1))):
        p = pulse(name)
        m = pair_model(params, p)
        traj = evolve(m, schedule(p), m.qubit_label(start), samples=40)
        drift = max(drift, traj.norm_drift)

    # dt halving on every gate used by the acceptance scenarios
    halving = {}
    for name in ("iswap.yaml", "cz_parametric.yaml", "cz_diabatic.yaml"):
        p = pulse(name)
        m = pair_model(params, p)
        dt = float(p["dt"])
        halving[name] = map_infidelity(gate_map(m, schedule(p, dt)).unitary,
                                       gate_map(m, schedule(p, dt / 2)).unitary)
    chain = effective_chain(params, (6.343, 6.433, 6.033), 1.94)
    for name in ("ghz_cz12.yaml", "ghz_cz23.yaml"):
        p = pulse(name)
        dt = float(p["dt"])
        halving[name] = map_infidelity(gate_map(chain, schedule(p, dt)).unitary,
                                       gate_map(chain, schedule(p, dt / 2)).unitary)
    worst_dt = max(halving.values())

    # compensation then distortion on band-limited signals
    rng = np.random.default_rng(7)
    x = np.convolve(np.repeat(rng.normal(size=60), 50), np.ones(25) / 25, mode="same")
    round_trip = 0.0
    for terms in (((0.03, 300.0),), ((0.05, 200.0), (-0.02, 40.0)), ((0.1, 20.0), (0.02, 900.0))):
        m = DistortionModel(terms)
        y = apply_distortion(design_compensation(m, 1.0)(x), m, 1.0)
        round_trip = max(round_trip, float(np.max(np.abs(y[1:] - x[1:]))))

    # repeated CLI runs give identical files
    runs = [["spectrum", "--grid=-3.14:3.14:9"],
            ["zz", "--grid", "detuning=-90,400;phi=1.85:2.0:4"],
            ["recipe", str(RECIPES / "figS4.yaml")],
            ["recipe", str(RECIPES / "fig3d.yaml")]]
    identical = True
    for k, argv in enumerate(runs):
        trees = []
        for rep in range(2):
            out = tmp_path / f"{k}_{rep}"
            assert main(argv + ["--out", str(out)]) == 0
            trees.append(_tree_bytes(out))
        identical &= trees[0] == trees[1] and len(trees[0]) > 0
    capsys.readouterr()

    ok = drift < 1e-8 and worst_dt < 1e-6 and round_trip < 1e-6 and identical
    verdict(8, ok, f"norm drift {drift:.1e}, worst dt-halving infidelity {worst_dt:.1e}, "
                   f"round trip {round_trip:.1e}, CLI outputs identical: {identical}")
    assert ok


def test_criterion_9_distortion_identification(verdict):
    delays = np.arange(0, 1500, 10.0)
    worst = 0.0
    for truth in (DistortionModel(((0.03, 300.0),)), DistortionModel(((0.03, 300.0), (-0.02, 40.0)))):
        phases = simulate_distortion_probe(truth, delays, 0.5)
        fit = fit_distortion(delays, phases, len(truth.terms), 0.5)
        for (a, tau), (a0, tau0) in zip(fit.model.terms, sorted(truth.terms, key=lambda t: t[1])):
            worst = max(worst, abs(a / a0 - 1), abs(tau / tau0 - 1))
    ok = worst < 0.05
    verdict(9, ok, f"one- and two-tail models recovered, worst relative error {100 * worst:.2f}%")
    assert ok
