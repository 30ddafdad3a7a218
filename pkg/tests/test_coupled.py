import itertools

import numpy as np
import pytest

from dtcsim.circuit import CouplingSet
from dtcsim.coupled import (assemble_effective, assemble_full_circuit, diagonalize,
                            effective_pair, exchange_splitting, find_off_point, static_zz,
                            stc_surrogate, zz_minimum, zz_sweep)
from dtcsim.errors import AmbiguousLabelingError, InvalidParameterError, NotFoundError, SizeError
from dtcsim.modes import ModeSpectrum
from scipy.optimize import minimize_scalar


def spectrum(levels):
    e = np.asarray(levels, dtype=float)
    L = len(e)
    z = np.zeros((L, L), dtype=complex)
    return ModeSpectrum(0.0, e, z, z, z)


def zero_couplings():
    return CouplingSet(0, 0, 0, 0, -1, -1, -1, -1)


@pytest.fixture(scope="module")
def pair(params):
    # the -90 MHz pair near its off point
    return effective_pair(params, 6.343, 6.433, 1.93)


def test_uncoupled_eigenvalues_are_sums():
    specs = [spectrum([0, 6.4, 12.5]), spectrum([0, 6.3, 12.3]), spectrum([0, 7.5, 14.8]),
             spectrum([0, 6.0, 11.9])]
    model = assemble_effective(specs[:2], specs[2], specs[3], zero_couplings())
    w = np.sort(np.linalg.eigvalsh(model.hamiltonian()))
    sums = np.sort([sum(s.energies[k] for s, k in zip(specs, occ))
                    for occ in itertools.product(range(3), repeat=4)])
    assert np.allclose(w, sums, atol=1e-12)


def test_two_level_resonant_splitting():
    g = 25.0  # MHz
    q = spectrum([0, 6.0, 30.0])
    far = spectrum([0, 40.0, 80.0])
    p = spectrum([0, 6.0, 30.0])
    c = CouplingSet(g, 0, 0, 0, 1e-3, 1, 1, 1)
    model = assemble_effective([q, far], p, far, c)
    w = np.linalg.eigvalsh(model.hamiltonian())
    single = np.sort(w[(w > 5) & (w < 7)])
    assert single[1] - single[0] == pytest.approx(2 * g * 1e-3, rel=1e-12)


def test_assemble_effective_requires_ej():
    s = spectrum([0, 6, 12])
    with pytest.raises(InvalidParameterError):
        assemble_effective([s, s], s, s, zero_couplings(), include_pm_cross=True)


def test_m_exchange_sign(params):
    m = effective_pair(params, 6.4, 6.3, 1.0)
    neg = [t for t in m.terms if t.name.startswith("g_q2m1")]
    pos = [t for t in m.terms if t.name.startswith("g_q1m1")]
    assert neg and pos
    assert np.all(neg[0].coefficient(np.array([1.0]), {}) < 0)
    assert np.all(pos[0].coefficient(np.array([1.0]), {}) > 0)


def test_hermitian_and_dimension(pair):
    H = pair.hamiltonian()
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
    assert H.shape == (pair.dimension, pair.dimension)


def test_size_cap(params):
    with pytest.raises(SizeError):
        effective_pair(params, 6.4, 6.3, 1.0, max_dim=10)


def test_off_point_below_10_khz(pair):
    phi, res = find_off_point(pair, (1.7, 2.2))
    assert abs(res) < 1.0
    assert abs(static_zz(pair.at_flux(phi)).xi_zz) < 10.0


def test_off_point_takes_lowest_zero(pair):
    phi, _ = find_off_point(pair, (0.0, 3.0), tol_khz=1e-9, samples=31,
                            objective=lambda x: 100.0 * (x - 1.13) * (x - 1.21))
    assert phi == pytest.approx(1.13, abs=1e-6)


def test_monotone_objective_not_found(pair):
    with pytest.raises(NotFoundError) as info:
        find_off_point(pair, (0.0, 1.0), objective=lambda phi: 50.0 + phi)
    assert info.value.best_value == pytest.approx(50.0)


def test_zero_coupling_zz(params):
    m = effective_pair(params, 6.4, 6.3, 1.5, coupling_scale=0.0)
    # one ulp of a 13 GHz level is ~2e-9 kHz
    assert abs(static_zz(m).xi_zz) < 1e-8


def test_zz_definition(pair):
    r = static_zz(pair)
    assert r.xi_zz == pytest.approx((r.E_11 - r.E_10 - r.E_01 + r.E_00) * 1e6, abs=1e-9)


def test_zero_row_in_sweep(params):
    rows = zz_sweep(lambda d: effective_pair(params, 6.433, 6.433 - 1e-3 * d, 1.9,
                                             coupling_scale=0.0), [200.0], np.linspace(1.0, 2.5, 7))
    assert all(abs(r["xi_zz_kHz"]) < 1e-8 for r in rows)


def test_symmetric_detuning(params):
    for phi in (1.2, 2.1):
        a = static_zz(effective_pair(params, 6.433, 6.233, phi)).xi_zz
        b = static_zz(effective_pair(params, 6.233, 6.433, phi)).xi_zz
        assert a == pytest.approx(b, rel=1e-8, abs=1e-6)


def test_sweep_records_failures(params):
    rows = zz_sweep(lambda d: effective_pair(params, 6.433, 6.433 - 1e-3 * d, 1.9), [0.0], [1.0])
    assert rows[0]["flag"].startswith("ambiguous")
    assert np.isnan(rows[0]["xi_zz_kHz"])


def test_ambiguous_labeling_reports_overlap(params):
    m = effective_pair(params, 6.433, 6.433, 1.0)
    with pytest.raises(AmbiguousLabelingError) as info:
        static_zz(m)
    assert info.value.overlap <= 0.5


def test_labeling_bijection(pair):
    es = diagonalize(pair)
    idx = [es.index[l] for l in pair.computational_labels()]
    assert len(set(idx)) == 4
    assert min(es.overlap.values()) > 0.5


def test_zz_continuity(pair):
    # above ~2.35 rad the m mode reaches the qubits and |11> has no clean label
    phis = np.linspace(1.0, 2.3, 53)
    z = np.array([static_zz(pair.at_flux(p)).xi_zz for p in phis])
    d = np.abs(np.diff(z))
    trend = np.maximum(np.maximum(np.r_[d[1:], d[-1]], np.r_[d[0], d[:-1]]), 1.0)
    assert np.all(d <= 10 * trend)


def test_stc_narrow_crossing(params):
    dets = np.array([-600, -400, -300, -250, -200, -100, -50, 50, 100, 200, 250, 300, 400, 600])
    z = []
    for d in dets:
        w1, w2 = (6.433 + 1e-3 * d, 6.433) if d < 0 else (6.433, 6.433 - 1e-3 * d)
        z.append(static_zz(stc_surrogate(params, w1, w2, 7.2)).xi_zz)
    z = np.array(z)
    eta = 0.27
    outside = np.abs(dets) > 1e3 * eta
    # one sign outside the straddling band, the other inside
    assert len(set(np.sign(z[outside]))) == 1
    assert np.all(np.sign(z[~outside]) != np.sign(z[outside][0]))
    assert np.ptp(np.abs(z)) > 1000.0


def test_dtc_beats_stc(params):
    for d in (-400, -90, 200):
        w1, w2 = (6.433 + 1e-3 * d, 6.433) if d < 0 else (6.433, 6.433 - 1e-3 * d)
        dtc = static_zz(effective_pair(params, w1, w2, 1.95)).xi_zz
        stc = static_zz(stc_surrogate(params, w1, w2, 7.2)).xi_zz
        assert abs(dtc) < 0.05 * abs(stc)


def test_zz_minimum(pair):
    phi, xi = zz_minimum(pair, (1.8, 2.1))
    assert 1.8 < phi < 2.1 and abs(xi) < 1.0


@pytest.fixture(scope="module")
def full_models(params):
    return {phi: assemble_full_circuit(params, phi, qubit_freqs=(6.433, 6.343))
            for phi in (1.0, 1.5, 2.2)}


def test_tier_consistency(params, full_models):
    for phi, full in full_models.items():
        a = static_zz(effective_pair(params, 6.433, 6.343, phi)).xi_zz
        b = static_zz(full).xi_zz
        assert abs(b) > 50
        assert abs(a - b) / abs(b) < 0.25


def test_full_hermitian(full_models):
    m = full_models[1.0]
    H = m.hamiltonian()
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
    assert m.dimension == np.prod(m.dims)


def test_full_flux_control_matches_rebuild(params, full_models):
    m = full_models[1.0]
    e_ctrl = np.linalg.eigvalsh(m.hamiltonian(1.05))[:6]
    e_new = np.linalg.eigvalsh(assemble_full_circuit(params, 1.05, (6.433, 6.343)).hamiltonian())[:6]
    # the two bases differ by a constant energy reference
    assert np.allclose(e_ctrl - e_ctrl[0], e_new - e_new[0], atol=2e-4)


def test_full_weak_coupling_decouples(params):
    weak = params.replace(C_1c=1e-9, C_2c=1e-9)
    m = assemble_full_circuit(weak, 1.0, levels={"qubit": 3, "p": 3, "m": 3})
    H = m.hamiltonian().reshape(m.dims * 2)
    # qubit-changing elements between q and coupler occupations vanish
    block = np.abs(H[1, 0, 0, 0, 0, 0, 1, 0])
    assert block < 1e-9


def _pm_gap(params, phi, qubits):
    m = assemble_full_circuit(params, phi, qubits, levels={"qubit": 3, "p": 3, "m": 4})
    w, v = np.linalg.eigh(m.hamiltonian())
    ip, im = m.index[(0, 0, 1, 0)], m.index[(0, 0, 0, 1)]
    top = np.argsort(np.abs(v[ip]) ** 2 + np.abs(v[im]) ** 2)[-2:]
    return abs(w[top[1]] - w[top[0]]), np.abs(v[ip, top]) ** 2, w[top].mean() - w[0]


def test_full_avoided_crossing(params):
    res = minimize_scalar(lambda x: _pm_gap(params, x, (6.433, 6.343))[0], bounds=(1.8, 2.0),
                          method="bounded", options={"xatol": 1e-6})
    gap, p_weight, center = _pm_gap(params, res.x, (6.433, 6.343))
    assert 1e-3 < gap < 0.05
    assert np.all(p_weight > 0.3)
    assert center == pytest.approx(7.5, rel=0.05)


def test_symmetric_qubits_pm_crossing_is_exact(params):
    # p and m only mix through the qubits, and equal qubits cancel the two paths
    res = minimize_scalar(lambda x: _pm_gap(params, x, (6.4, 6.4))[0], bounds=(1.8, 2.0),
                          method="bounded", options={"xatol": 1e-8})
    assert _pm_gap(params, res.x, (6.4, 6.4))[0] < 1e-5


def test_exchange_splitting_sign(params):
    g_far = exchange_splitting(effective_pair(params, 6.499, 6.499, 0.5))
    g_near = exchange_splitting(effective_pair(params, 6.499, 6.499, 2.1))
    assert g_far < 0 < g_near
