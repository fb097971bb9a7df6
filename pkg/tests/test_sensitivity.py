import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvsense.constants import GAMMA_E
from nvsense.sensitivity import (
    AmbiguityError,
    DegenerateFitError,
    MagnetometerRecord,
    SensitivityBudget,
    db_below_quantum_limit,
    erl_compute,
    erl_table_check,
    eta_from_budget,
    fit_fringe,
    load_reference_magnetometers,
    magnetometer_records_from_csv,
    magnetometer_records_to_csv,
    optimize_budget,
    sensitivity_from_timeseries,
)

NV3_BUDGET = SensitivityBudget(
    t_c=1.8e-3,
    c=math.exp(-1.8 / 2.0),
    f_i=0.92,
    f_r=0.84,
    t_ir=3.336e-3 - 1.8e-3,
)


class TestEtaFromBudget:
    def test_ideal_coherence_limited(self):
        b = SensitivityBudget(t_c=1.8e-3, c=1.0, f_i=1.0, f_r=1.0, t_ir=0.0)
        assert eta_from_budget(b) == pytest.approx(
            1.0 / (GAMMA_E * math.sqrt(1.8e-3)), rel=1e-12
        )
        assert eta_from_budget(b) == pytest.approx(0.134e-9, rel=0.01)

    def test_nv3_reported_value(self):
        assert eta_from_budget(NV3_BUDGET) == pytest.approx(0.59e-9, rel=0.10)

    def test_halving_readout_fidelity_doubles_eta(self):
        b2 = SensitivityBudget(
            t_c=1.8e-3, c=0.5, f_i=0.9, f_r=0.42, t_ir=1e-3
        )
        b1 = SensitivityBudget(
            t_c=1.8e-3, c=0.5, f_i=0.9, f_r=0.84, t_ir=1e-3
        )
        assert eta_from_budget(b2) == pytest.approx(
            2 * eta_from_budget(b1), rel=1e-12
        )

    @given(
        f=st.floats(0.2, 0.99),
        df=st.floats(0.005, 0.2),
        which=st.sampled_from(["c", "f_i", "f_r"]),
    )
    @settings(max_examples=60, deadline=None)
    def test_eta_decreases_with_any_fidelity(self, f, df, which):
        lo = {"t_c": 1e-3, "c": 0.5, "f_i": 0.8, "f_r": 0.8, "t_ir": 1e-3}
        hi = dict(lo)
        lo[which] = f
        hi[which] = min(f + df, 1.0)
        assert eta_from_budget(SensitivityBudget(**hi)) <= eta_from_budget(
            SensitivityBudget(**lo)
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            SensitivityBudget(t_c=0.0, c=0.5, f_i=0.9, f_r=0.9, t_ir=0.0)
        with pytest.raises(ValueError):
            SensitivityBudget(t_c=1e-3, c=1.2, f_i=0.9, f_r=0.9, t_ir=0.0)

    def test_json_round_trip(self):
        back = SensitivityBudget.from_json(NV3_BUDGET.to_json())
        assert back == NV3_BUDGET


class TestOptimizeBudget:
    def test_flat_curves_tie_break_earliest(self):
        res = optimize_budget(
            [1e-3, 2e-3],
            [1, 2],
            [100, 200],
            lambda t: 0.5,
            lambda n: 0.9,
            lambda n: 0.8,
            lambda nf, nr: 0.0,
        )
        # eta ~ T_C^(-1/2) still favors the larger T_C; protocol knobs tie
        assert res.n_fb == 1
        assert res.n_ro == 100

    def test_perfect_coherence_prefers_longest_t_c(self):
        res = optimize_budget(
            np.linspace(1e-4, 5e-3, 20),
            [1],
            [1],
            lambda t: 1.0,
            lambda n: 1.0,
            lambda n: 1.0,
            lambda nf, nr: 0.0,
        )
        assert res.t_c == pytest.approx(5e-3)

    def test_readout_cycle_trade_off_interior_optimum(self):
        # more cycles improve fidelity but cost dead time: interior optimum
        def f_r(n):
            return 0.5 + 0.45 * (1 - math.exp(-n / 800.0))

        res = optimize_budget(
            [1.8e-3],
            [100],
            np.arange(100, 8001, 100),
            lambda t: 0.41,
            lambda n: 0.92,
            f_r,
            lambda nf, nr: nf * 1.065e-6 + nr * 576e-9,
        )
        assert 100 < res.n_ro < 8000
        assert res.eta == pytest.approx(np.min(res.eta_vs_n_ro), rel=1e-12)

    def test_photon_counting_chain_optimum_near_experimental_cycles(self):
        # a shot-noise-limited repetitive-readout chain plus per-cycle dead
        # time puts the optimal cycle count in the low thousands
        from nvsense.protocol import ReadoutChainModel

        def f_r(n):
            return ReadoutChainModel(
                mean_photons_one=0.018,
                mean_photons_zero=0.013,
                flip_probability=2e-5,
                n_cycles=int(n),
            ).assignment_fidelity()

        res = optimize_budget(
            [1.8e-3],
            [100],
            np.arange(250, 10001, 250),
            lambda t: math.exp(-((t / 2e-3) ** 1.5)),
            lambda n: 0.92,
            f_r,
            lambda nf, nr: 1.0e-3 + nr * 576e-9,
        )
        assert 1000 <= res.n_ro <= 4000
        assert res.eta == pytest.approx(0.6e-9, rel=0.2)


class FringeData:
    B_V = 112e-9
    T = 1.8e-3

    @classmethod
    def make(cls, a=30.0, c=100.0, phi=0.4, noise=True, seed=0, span=0.5):
        v = np.linspace(0.0, span, 80)
        k = GAMMA_E * cls.T * cls.B_V
        mean = a * np.sin(k * v + phi) + c
        if noise:
            rng = np.random.default_rng(seed)
            counts = rng.poisson(mean).astype(float)
        else:
            counts = mean
        return v, counts


class TestFitFringe:
    def test_recovers_field_per_volt_under_poisson_noise(self):
        v, counts = FringeData.make()
        fit = fit_fringe(v, counts, FringeData.T)
        assert fit.b_v == pytest.approx(112e-9, rel=0.03)

    def test_zero_contrast_degenerate(self):
        v = np.linspace(0, 0.5, 40)
        with pytest.raises(DegenerateFitError):
            fit_fringe(v, np.full_like(v, 100.0), FringeData.T)

    def test_under_one_period_ambiguous(self):
        v, counts = FringeData.make(noise=False, span=0.12)
        with pytest.raises(AmbiguityError):
            fit_fringe(v, counts, FringeData.T)

    def test_phase_shift_leaves_b_v(self):
        v, c1 = FringeData.make(noise=False, phi=0.3)
        _, c2 = FringeData.make(noise=False, phi=1.4)
        f1 = fit_fringe(v, c1, FringeData.T)
        f2 = fit_fringe(v, c2, FringeData.T)
        assert f2.b_v == pytest.approx(f1.b_v, rel=1e-6)
        assert f2.phi != pytest.approx(f1.phi, abs=0.1)

    def test_count_rescaling_invariance(self):
        v, counts = FringeData.make(noise=False)
        f1 = fit_fringe(v, counts, FringeData.T)
        f2 = fit_fringe(v, 7.0 * counts, FringeData.T)
        assert f2.b_v == pytest.approx(f1.b_v, rel=1e-9)
        assert f2.a == pytest.approx(7.0 * f1.a, rel=1e-6)


class TestSensitivityFromTimeseries:
    def _shots(self, mu, sigma, n, seed=0):
        rng = np.random.default_rng(seed)
        return rng.normal(mu, sigma, n)

    def test_white_noise_eta_flat(self):
        x = self._shots(1.0, 0.5, 20000)
        times, eta, asym = sensitivity_from_timeseries(x, 1e-9, 1e-3)
        tail = eta[times > times[-1] / 10]
        assert np.max(tail) / np.min(tail) < 1.2
        assert asym == pytest.approx(np.mean(tail), rel=0.2)

    def test_doubled_amplitude_same_eta(self):
        noise = self._shots(0.0, 0.5, 5000)
        _, _, a1 = sensitivity_from_timeseries(1.0 + noise, 1e-9, 1e-3)
        _, _, a2 = sensitivity_from_timeseries(2.0 + noise, 2e-9, 1e-3)
        assert a2 == pytest.approx(a1, rel=0.02)

    def test_analytic_value(self):
        # eta = amplitude * sigma * sqrt(shot_duration) / mu for iid shots
        x = self._shots(2.0, 0.4, 40000, seed=5)
        _, _, asym = sensitivity_from_timeseries(x, 1e-9, 1.44e-3)
        expected = 1e-9 * 0.4 * math.sqrt(1.44e-3) / 2.0
        assert asym == pytest.approx(expected, rel=0.05)

    def test_zero_variance_degenerate(self):
        with pytest.raises(DegenerateFitError):
            sensitivity_from_timeseries(np.ones(500), 1e-9, 1e-3)

    def test_too_few_shots(self):
        with pytest.raises(ValueError):
            sensitivity_from_timeseries(np.ones(50), 1e-9, 1e-3)


class TestErlCompute:
    def test_nv3_value(self):
        assert erl_compute(0.59e-9, 31.7e-9) == pytest.approx(0.042, rel=0.02)

    def test_table_row_one(self):
        assert erl_compute(5.3e-8, 4.0e-9) == pytest.approx(0.68, rel=0.02)

    def test_zero_eta(self):
        assert erl_compute(0.0, 1e-8) == 0.0

    @given(
        eta=st.floats(1e-13, 1e-7),
        l_eff=st.floats(1e-9, 1e-3),
        s=st.floats(1.1, 10.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_quadratic_and_cubic_scaling(self, eta, l_eff, s):
        base = erl_compute(eta, l_eff)
        assert erl_compute(s * eta, l_eff) == pytest.approx(
            s**2 * base, rel=1e-9
        )
        assert erl_compute(eta, s * l_eff) == pytest.approx(
            s**3 * base, rel=1e-9
        )

    def test_db_below_limit(self):
        assert db_below_quantum_limit(0.042) == pytest.approx(13.8, abs=0.05)
        assert db_below_quantum_limit(1.0) == 0.0


class TestErlTableCheck:
    def test_bundled_table_all_rows_within_ten_percent(self):
        report = erl_table_check(load_reference_magnetometers())
        assert len(report) == 24
        assert all(r["consistent"] for r in report)

    def test_sub_hbar_rows_report_db(self):
        report = erl_table_check(load_reference_magnetometers())
        sub = [r for r in report if r["e_r_stored_hbar"] < 1.0]
        assert len(sub) == 1
        assert sub[0]["db_below_limit"] > 0

    def test_bec_row(self):
        rec = MagnetometerRecord("BEC", 1.1e-5, 5.0e-13, "17", 1.24)
        report = erl_table_check([rec])
        assert report[0]["e_r_computed_hbar"] == pytest.approx(1.24, rel=0.02)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            erl_table_check([])


class TestMagnetometerCsv:
    def test_round_trip(self):
        records = load_reference_magnetometers()
        back = magnetometer_records_from_csv(magnetometer_records_to_csv(records))
        assert back == records

    def test_missing_header(self):
        with pytest.raises(ValueError):
            magnetometer_records_from_csv("a,b\n1,2\n")
