import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonstats.correlations import (
    CorrelationCurve,
    coherence_time,
    default_tau_grid,
    emission_rate,
    field_correlation,
    g1_atom,
    g2_atom,
    intensity_correlation,
    read_curve_csv,
)
from photonstats.errors import NoDecay, ZeroIntensity
from photonstats.quantum import (
    TWO_PI_MHZ,
    U,
    LindbladGenerator,
    SystemParams,
    annihilation,
    build_lindblad,
    cavity_decay_generator,
    projector_state,
    steady_state,
)


def test_default_grid():
    t = default_tau_grid()
    assert t[0] == 0 and t[-1] == pytest.approx(4e-6) and t.size == 401


class TestField:
    def test_unit_at_zero(self, g1):
        assert abs(g1.values[0] - 1.0) < 1e-9

    def test_bare_cavity_decay(self):
        kappa = 1.25 * TWO_PI_MHZ
        L = cavity_decay_generator(kappa)
        # mixture of Fock states: thermal-like seed with phase-insensitive statistics
        rho = 0.7 * projector_state(U, 0, 4) + 0.2 * projector_state(U, 1, 4) + 0.1 * projector_state(U, 2, 4)
        tau = np.linspace(0, 1e-6, 1001)
        g = field_correlation(L, rho, tau)
        assert np.allclose(np.abs(g.values), np.exp(-kappa * tau), atol=1e-8)
        assert coherence_time(g) == pytest.approx(1 / kappa, rel=1e-3)

    def test_decays_to_zero(self, params):
        slow = max(1 / params.kappa, 1 / params.recycling_rate)
        g = g1_atom(params, [0.0, 20 * slow])
        assert abs(g.values[-1]) < 1e-3

    def test_zero_intensity(self):
        p = SystemParams.defaults(omega_p=0.0)
        with pytest.raises(ZeroIntensity):
            g1_atom(p, [0.0, 1e-7])
        with pytest.raises(ZeroIntensity):
            g2_atom(p, [0.0, 1e-7])


class TestIntensity:
    def test_antibunched(self, g2):
        assert 0.0 < g2.values[0] < 1.0
        window = (g2.tau > 0) & (g2.tau <= 2e-6)
        assert np.all(g2.values[window] > g2.values[0])

    def test_monotone_rise_through_recycling_time(self, params, g2):
        sel = g2.tau <= 1 / params.recycling_rate
        assert np.all(np.diff(g2.values[sel]) > 0)

    def test_long_time_limit(self, params):
        slow = max(1 / params.kappa, 1 / params.recycling_rate)
        g = g2_atom(params, [0.0, 20 * slow])
        assert abs(g.values[-1] - 1) < 1e-3

    def test_nonnegative(self, g2):
        assert np.all(g2.values >= 0)

    def test_faster_recycling_weakens_antibunching(self):
        vals = [g2_atom(SystemParams.defaults(omega_r=x * TWO_PI_MHZ), [0.0]).values[0]
                for x in (1.0, 3.3, 30.0, 300.0)]
        assert np.all(np.diff(vals) > 0)

    def test_spectral_reconstruction_of_state(self, generator, rho_ss, tau):
        # Rebuilding rho_ss from its eigen-decomposition must not change the curve.
        w, v = np.linalg.eigh(rho_ss)
        rebuilt = sum(wk * np.outer(v[:, k], v[:, k].conj()) for k, wk in enumerate(w))
        a = intensity_correlation(generator, rho_ss, tau[:50]).values
        b = intensity_correlation(generator, rebuilt, tau[:50]).values
        assert np.max(np.abs(a - b)) < 1e-8

    def test_unnormalized_scale(self, params, generator, rho_ss):
        a = annihilation(params)
        n = np.trace(a.conj().T @ a @ rho_ss).real
        raw = intensity_correlation(generator, rho_ss, [0.0, 1e-6], normalize=False)
        norm = intensity_correlation(generator, rho_ss, [0.0, 1e-6])
        assert np.allclose(raw.values / n**2, norm.values)


class TestCoherenceTime:
    def test_exponential(self):
        tau = np.linspace(0, 1e-6, 1001)
        c = CorrelationCurve(tau, np.exp(-tau / 127e-9), "field")
        assert coherence_time(c) == pytest.approx(127e-9, rel=1e-4)

    def test_constant_raises(self):
        tau = np.linspace(0, 1e-6, 11)
        with pytest.raises(NoDecay):
            coherence_time(CorrelationCurve(tau, np.ones(11), "field"))

    def test_defaults_value(self, g1):
        # overdamped Raman coherence dominates: about 430 ns at these parameters
        assert 380e-9 < coherence_time(g1) < 480e-9


class TestEmissionRate:
    def test_zero(self, params):
        assert emission_rate(params, nbar=0.0).detected_total == 0.0

    def test_detection_chain(self, params):
        r = emission_rate(params)
        assert r.detected_total == pytest.approx(2 * params.kappa * r.nbar * 0.45)
        assert r.per_channel == pytest.approx(r.detected_total / 2)

    def test_linear_in_eta_det(self):
        a = emission_rate(SystemParams.defaults(eta_det=0.25))
        b = emission_rate(SystemParams.defaults(eta_det=0.5))
        assert b.detected_total == pytest.approx(2 * a.detected_total)
        assert b.nbar == pytest.approx(a.nbar)


class TestCurveIO:
    def test_csv_roundtrip(self, tmp_path, g1, g2):
        for c in (g1, g2):
            path = tmp_path / f"{c.kind}.csv"
            c.to_csv(path)
            back = read_curve_csv(path)
            assert back.kind == c.kind
            assert np.array_equal(back.tau, c.tau) and np.array_equal(back.values, c.values)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            CorrelationCurve([0.0], [1.0], "phase")

    def test_at(self, g2):
        assert g2.at(1e-6) == g2.values[100]
        with pytest.raises(KeyError):
            g2.at(1.5e-9)


band = st.floats(0.5, 1.5)


@settings(max_examples=30, deadline=None)
@given(band, band, band, band, band, band)
def test_curve_invariants_over_parameter_band(a, b, c, d, e, f):
    p = SystemParams.from_mhz(
        g_max=2.5 * a, kappa=1.25 * b, gamma=3.0 * c, omega_p=7.6 * d, omega_r=3.3 * e, delta=-20.0 * f
    )
    tau = np.linspace(0, 3e-6, 31)
    L = build_lindblad(p)
    rho = steady_state(L)
    g1 = field_correlation(L, rho, tau)
    g2 = intensity_correlation(L, rho, tau)
    assert abs(g1.values[0] - 1) < 1e-9
    assert np.all(g2.values >= -1e-9)
