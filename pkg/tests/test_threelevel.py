"""Three-level model checks: Hamiltonian bookkeeping, squeezing rate, adiabatics."""

import io
import json
import math

import numpy as np
import pytest

from qndsim import threelevel as tl


def params(Delta=50.0, beta=10.0, d_a=36, **kw):
    return tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=Delta, beta=beta, d_a=d_a, **kw)


def coherent_seed(q, alpha=1.0):
    amps = np.zeros(q.d_a)
    amps[0] = math.exp(-0.5 * alpha * alpha)
    for n in range(1, q.d_a):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    psi = np.zeros(3 * q.d_a, dtype=complex)
    psi[tl.LEVELS["i"] * q.d_a:(tl.LEVELS["i"] + 1) * q.d_a] = amps
    return psi / np.linalg.norm(psi)


def rel_error_against_rate(report, gamma):
    ref = np.exp(-2.0 * gamma * report.times)
    return float(np.max(np.abs(report.varY_full - ref) / ref))


def test_params_validation():
    with pytest.raises(ValueError, match="ratio_min"):
        tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=10.0, beta=1.0)
    with pytest.raises(ValueError, match="positive"):
        tl.ThreeLevelParams(g1=0.0, g2=0.0, G3=0.0, Delta=-1.0, beta=0.0)
    with pytest.raises(ValueError, match="nonnegative"):
        tl.ThreeLevelParams(g1=-1.0, g2=1.0, G3=1.0, Delta=50.0, beta=1.0)
    with pytest.raises(ValueError, match="d_a"):
        tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=50.0, beta=1.0, d_a=1)
    with pytest.raises(ValueError, match="finite"):
        tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=50.0, beta=math.nan)


def test_derived_rates():
    q = params()
    assert q.delta_small == pytest.approx(2.0 / 50.0, rel=1e-15)
    assert q.kappa == pytest.approx(10.0 / 2500.0, rel=1e-15)
    assert q.gamma_eff_predicted == pytest.approx(0.016, rel=1e-12)
    assert q.pump == pytest.approx(2.0 * q.delta_small, rel=1e-15)
    qd = params(pump_detuning=0.123)
    assert qd.pump == 0.123


def test_hamiltonian_hermitian():
    q = tl.ThreeLevelParams(g1=0.7, g2=1.1, G3=0.9, Delta=60.0, beta=3.0, d_a=7)
    h = tl.build_full_hamiltonian(q)
    assert h.shape == (21, 21)
    assert np.max(np.abs(h - h.conj().T)) <= 1e-12


def test_zero_couplings_leave_bare_splitting():
    q = tl.ThreeLevelParams(g1=0.0, g2=0.0, G3=0.0, Delta=40.0, beta=0.0, d_a=5)
    h = tl.build_full_hamiltonian(q)
    bare = -40.0 * np.kron(tl.sigma("e", "e") + tl.sigma("g", "g"), np.eye(5, dtype=complex))
    np.testing.assert_array_equal(h, bare)


def test_matrix_element_bookkeeping():
    q = tl.ThreeLevelParams(g1=0.7, g2=1.1, G3=0.9, Delta=60.0, beta=3.0, d_a=6)
    h = tl.build_full_hamiltonian(q)
    d = q.d_a
    g, i, e = tl.LEVELS["g"], tl.LEVELS["i"], tl.LEVELS["e"]
    dp = q.pump

    oracle = np.zeros_like(h)
    for n in range(d):
        oracle[g * d + n, g * d + n] = -q.Delta - 0.5 * dp * (n + 1)
        oracle[i * d + n, i * d + n] = -0.5 * dp * n
        oracle[e * d + n, e * d + n] = -q.Delta - 0.5 * dp * (n - 1)
    for n in range(1, d):
        oracle[g * d + n - 1, i * d + n] = q.g1 * math.sqrt(n)
        oracle[i * d + n, g * d + n - 1] = q.g1 * math.sqrt(n)
        oracle[i * d + n - 1, e * d + n] = q.g2 * math.sqrt(n)
        oracle[e * d + n, i * d + n - 1] = q.g2 * math.sqrt(n)
    for n in range(d):
        oracle[g * d + n, e * d + n] = 1j * q.beta * q.G3
        oracle[e * d + n, g * d + n] = -1j * q.beta * q.G3

    assert np.max(np.abs(h - oracle)) <= 1e-12
    assert h[g * d + 2, i * d + 3] == pytest.approx(0.7 * math.sqrt(3.0), rel=1e-15)
    assert h[i * d + 4, e * d + 5] == pytest.approx(1.1 * math.sqrt(5.0), rel=1e-15)


def test_zero_couplings_vacuum_is_stationary():
    q = tl.ThreeLevelParams(g1=0.0, g2=0.0, G3=0.0, Delta=40.0, beta=0.0, d_a=5)
    traj = tl.evolve_full(q, 2.0, 20)
    psi0 = tl.initial_vacuum_i(q)
    assert np.max(np.abs(traj.states - psi0)) <= 1e-12
    assert np.max(np.abs(tl.field_var_y(traj) - 1.0)) <= 1e-12


def test_evolve_input_validation():
    q = params(d_a=8)
    with pytest.raises(ValueError, match="steps"):
        tl.evolve_full(q, 1.0, 0)
    with pytest.raises(ValueError, match="t_final"):
        tl.evolve_full(q, -1.0, 10)
    with pytest.raises(ValueError, match="length"):
        tl.evolve_full(q, 1.0, 10, initial=np.zeros(5, dtype=complex))
    with pytest.raises(ValueError, match="normalized"):
        tl.evolve_full(q, 1.0, 10, initial=np.zeros(3 * q.d_a, dtype=complex))


def test_norm_preserved_and_step_size_converged():
    q = params()
    coarse = tl.evolve_full(q, 31.25, 100)
    fine = tl.evolve_full(q, 31.25, 200)
    assert coarse.norm_drift() <= 1e-8
    assert np.max(np.abs(coarse.states[-1] - fine.states[-1])) <= 1e-8


def test_variance_tracks_fitted_exponent():
    q = params()
    report = tl.validate_effective_gamma(q, 31.25, steps=100)
    assert rel_error_against_rate(report, 2.0 * q.kappa) < 0.05
    assert 1.9 < report.gamma_eff_fit / q.kappa < 2.1
    assert 0.0 < report.population_leakage <= report.leakage_band
    assert report.leakage_ok
    assert report.leakage_band < 0.02


def test_predicted_rate_gap_is_recorded():
    q = params()
    report = tl.validate_effective_gamma(q, 31.25, steps=100)
    assert report.gamma_eff_predicted == pytest.approx(0.016, rel=1e-12)
    assert 0.5 < report.max_rel_error < 0.8


def test_beta_zero_variance_stays_at_vacuum():
    q = tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=50.0, beta=0.0, d_a=24)
    report = tl.validate_effective_gamma(q, 30.0, steps=60)
    assert report.gamma_eff_predicted == 0.0
    assert np.max(np.abs(report.varY_full - 1.0)) < 0.01
    assert abs(report.gamma_eff_fit) < 1e-4
    assert report.leakage_ok


def test_detuned_pump_squeezes_less():
    q = params()
    detuned = params(pump_detuning=q.pump + 10.0 * q.gamma_eff_predicted)
    v_base = tl.field_var_y(tl.evolve_full(q, 31.25, 100))
    v_det = tl.field_var_y(tl.evolve_full(detuned, 31.25, 100))
    assert 1.0 - v_base.min() >= 2.0 * (1.0 - v_det.min())


def test_prediction_error_shrinks_with_detuning_at_fixed_rate():
    errs = []
    for Delta, beta in [(20.0, 1.6), (50.0, 10.0), (100.0, 40.0)]:
        q = params(Delta=Delta, beta=beta)
        assert q.gamma_eff_predicted == pytest.approx(0.016, rel=1e-12)
        errs.append(tl.validate_effective_gamma(q, 31.25, steps=80).max_rel_error)
    assert all(later < earlier for earlier, later in zip(errs, errs[1:]))


def test_fit_tracking_improves_with_detuning():
    rels = []
    for Delta in [20.0, 50.0, 100.0]:
        q = params(Delta=Delta)
        report = tl.validate_effective_gamma(q, 0.5 / q.gamma_eff_predicted, steps=100)
        rels.append(rel_error_against_rate(report, 2.0 * q.kappa))
    assert all(later < earlier for earlier, later in zip(rels, rels[1:]))
    assert rels[-1] < 0.01


def test_adiabatic_series_zero_from_vacuum():
    q = params()
    report = tl.check_adiabatic_coherences(tl.evolve_full(q, 1.0, 10), q)
    assert report.sigma_ig[0] == 0.0 and report.adiabatic_ig[0] == 0.0
    assert np.max(np.abs(report.sigma_ig)) <= 1e-12
    assert np.max(np.abs(report.adiabatic_ie)) <= 1e-12


def test_adiabatic_residual_bounded_and_shrinks_with_detuning():
    q50 = params(Delta=50.0)
    traj50 = tl.evolve_full(q50, 18.75, 3000, initial=coherent_seed(q50))
    rep50 = tl.check_adiabatic_coherences(traj50, q50, smooth_cycles=8.0)
    assert rep50.max_rel_residual < 0.10

    q100 = params(Delta=100.0)
    traj100 = tl.evolve_full(q100, 75.0, 16000, initial=coherent_seed(q100))
    rep100 = tl.check_adiabatic_coherences(traj100, q100, smooth_cycles=8.0)
    assert rep100.max_rel_residual < 0.05
    assert rep100.max_rel_residual < rep50.max_rel_residual


def test_smoothing_rejects_coarse_sampling():
    q = params()
    traj = tl.evolve_full(q, 18.75, 25)
    with pytest.raises(ValueError, match="resolve"):
        tl.check_adiabatic_coherences(traj, q, smooth_cycles=8.0)


def test_report_serialization():
    q = tl.ThreeLevelParams(g1=1.0, g2=1.0, G3=1.0, Delta=50.0, beta=0.0, d_a=8)
    report = tl.validate_effective_gamma(q, 1.0, steps=4)

    buf = io.StringIO()
    tl.write_report_json(report, buf)
    payload = json.loads(buf.getvalue())
    assert payload["params"]["Delta"] == 50.0
    assert payload["params"]["pump_detuning"] == pytest.approx(2.0 * q.delta_small)
    assert payload["gamma_eff_predicted"] == 0.0
    assert payload["leakage_ok"] is True
    assert len(payload["times"]) == 5 and len(payload["varY_full"]) == 5

    buf = io.StringIO()
    tl.write_report_csv(report, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,varY_full,varY_effective"
    assert len(lines) == 6
    t, vf, ve = (float(x) for x in lines[-1].split(","))
    assert t == 1.0 and ve == 1.0 and vf == pytest.approx(1.0, abs=0.01)
