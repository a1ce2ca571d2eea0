import math

import numpy as np
import pytest
from conftest import small_config
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pnmimo import analytic
from pnmimo.analytic import ArrayGainQuery, InfeasibleTargetError
from pnmimo.config import SystemConfig, exponential_pdp, reference_config, std_deg_to_variance


def _oracle_kernels(cfg, k, i):
    """Direct double sums, no expm1 rewriting."""
    d, L, lag = cfg.pdp[k], cfg.L, i - k * cfg.L
    sp, st_ = cfg.sigma_phi_sq, cfg.sigma_theta_sq
    S = sum(d[l] * d[p] * math.exp(-sp * abs(l - p)) for l in range(L) for p in range(L))
    a = cfg.alpha[k]
    kappa = S - a**2 * math.exp(-(sp + st_) * lag)
    xi = S - a**2 * math.exp(-sp * lag)
    varpi = math.exp(-sp * lag) - math.exp(-(sp + st_) * lag)
    A = cfg.alpha.sum()
    C = cfg.P_D * cfg.M * a * A + cfg.noise_variance * cfg.M * (
        cfg.P_D * A / (cfg.P_p * cfg.K) + a + cfg.noise_variance / (cfg.K * cfg.P_p))
    return kappa, xi, varpi, C


def _oracle_rate(cfg, k, i, mode):
    kappa, xi, varpi, C = _oracle_kernels(cfg, k, i)
    M, P, a, lag = cfg.M, cfg.P_D, cfg.alpha[k], i - k * cfg.L
    var = P * M**2 * kappa + C if mode == "sync" else P * M**2 * a**2 * varpi + P * M * xi + C
    return math.log2(1 + P * M**2 * a**2 * math.exp(-(cfg.sigma_phi_sq + cfg.sigma_theta_sq) * lag) / var)


@st.composite
def configs(draw, max_K=4, max_L=6):
    K, L = draw(st.integers(1, max_K)), draw(st.integers(1, max_L))
    pdp = np.array(draw(st.lists(st.lists(st.floats(1e-3, 1.0), min_size=L, max_size=L), min_size=K, max_size=K)))
    return SystemConfig(M=draw(st.integers(1, 500)), K=K, L=L, N_D=draw(st.integers(1, 60)),
                        P_D=draw(st.floats(1e-2, 1e3)), beta=draw(st.floats(0.1, 10)),
                        noise_variance=draw(st.floats(0.1, 10)),
                        sigma_phi_sq=draw(st.floats(0, 1e-2)), sigma_theta_sq=draw(st.floats(0, 1e-2)), pdp=pdp)


def _grid(cfg):
    return np.arange(cfg.K)[:, None], cfg.data_indices[None, :]


class TestMean:
    def test_coherent_gain(self):
        cfg = small_config(M=4, K=1, L=1, N_D=1, snr_db=0.0, sp=0, st=0).replace(pdp=[[1.0]])
        assert analytic.mean_A(cfg, 0, cfg.data_indices[0]) == pytest.approx(4.0)

    def test_lag_1000(self):
        cfg = reference_config(M=200, snr_db=0.0, sigma_phi_sq=5e-5, sigma_theta_sq=5e-5)
        assert analytic.mean_A(cfg, 0, 1000) == pytest.approx(200 * math.exp(-0.05), rel=1e-12)
        assert analytic.mean_A(cfg, 0, 1000) == pytest.approx(190.246, abs=5e-4)

    def test_outside_data_set(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            analytic.mean_A(cfg, 0, cfg.data_indices[0] - 1)
        with pytest.raises(ValueError):
            analytic.rate_per_index(cfg, 0, cfg.data_indices[-1] + 1, "sync")


class TestKernels:
    def test_vanish_without_phase_noise(self):
        cfg = small_config(sp=0, st=0)
        kern = analytic.variance_kernels(cfg, *_grid(cfg))
        assert np.all(kern.kappa == 0) and np.all(kern.xi == 0) and np.all(kern.varpi == 0)

    def test_two_tap_kappa(self):
        cfg = SystemConfig(M=4, K=1, L=2, N_D=20, P_D=1.0, beta=1.0, noise_variance=1.0,
                           sigma_phi_sq=0.01, sigma_theta_sq=0.01, pdp=[[0.5, 0.5]])
        i = 10  # lag 10 for the first user
        kern = analytic.variance_kernels(cfg, 0, cfg.data_indices[cfg.data_indices == i])
        assert float(kern.kappa[0]) == pytest.approx(0.5 + 0.5 * math.exp(-0.01) - math.exp(-0.2), rel=1e-12)
        assert float(kern.kappa[0]) == pytest.approx(0.176294, abs=1e-6)

    def test_interference_constant(self):
        cfg = SystemConfig(M=4, K=2, L=1, N_D=3, P_D=1.0, beta=1.0, noise_variance=1.0,
                           sigma_phi_sq=0, sigma_theta_sq=0, pdp=[[1.0], [1.0]])
        assert analytic.variance_kernels(cfg, 0, cfg.data_indices[0]).C == pytest.approx(18.0)

    @settings(max_examples=60, deadline=None)
    @given(configs())
    def test_against_direct_sums(self, cfg):
        k, i = _grid(cfg)
        kern = analytic.variance_kernels(cfg, k, i)
        for kk in range(cfg.K):
            for n, ii in enumerate(cfg.data_indices):
                ref = _oracle_kernels(cfg, kk, int(ii))
                got = (kern.kappa[kk, n], kern.xi[kk, n], kern.varpi[kk, n], kern.C[kk, n])
                for g, r in zip(got, ref):
                    assert g == pytest.approx(r, rel=1e-9, abs=1e-12 * cfg.alpha[kk] ** 2)

    @settings(max_examples=60, deadline=None)
    @given(configs())
    def test_kernel_ranges(self, cfg):
        kern = analytic.variance_kernels(cfg, *_grid(cfg))
        assert np.all(kern.xi >= 0)
        assert np.all((kern.varpi >= 0) & (kern.varpi < 1))


class TestRates:
    def test_zero_power(self):
        cfg = small_config().replace(P_D=0.0)
        assert np.all(analytic.rate_per_index(cfg, *_grid(cfg), "sync") == 0)

    @settings(max_examples=40, deadline=None)
    @given(configs())
    def test_against_oracle(self, cfg):
        k, i = _grid(cfg)
        for mode in ("sync", "nonsync"):
            r = analytic.rate_per_index(cfg, k, i, mode)
            for kk in range(cfg.K):
                for n, ii in enumerate(cfg.data_indices):
                    assert r[kk, n] == pytest.approx(_oracle_rate(cfg, kk, int(ii), mode), rel=1e-9, abs=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(configs())
    def test_nonsync_never_worse(self, cfg):
        k, i = _grid(cfg)
        s = analytic.rate_per_index(cfg, k, i, "sync")
        ns = analytic.rate_per_index(cfg, k, i, "nonsync")
        assert np.all(ns >= s * (1 - 1e-12))

    @settings(max_examples=60, deadline=None)
    @given(configs())
    def test_no_phase_noise_dominates(self, cfg):
        rep = analytic.sum_rate(cfg, "nonsync")
        assert rep.sum_rate <= rep.no_phase_noise * (1 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(configs(), st.floats(1.0, 3.0), st.floats(1.0, 3.0))
    def test_more_phase_noise_never_helps(self, cfg, fp, ft):
        worse = cfg.replace(sigma_phi_sq=cfg.sigma_phi_sq * fp, sigma_theta_sq=cfg.sigma_theta_sq * ft)
        for mode in ("sync", "nonsync"):
            assert analytic.sum_rate(worse, mode).sum_rate <= analytic.sum_rate(cfg, mode).sum_rate * (1 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(configs())
    def test_per_index_decreasing(self, cfg):
        assume(cfg.sigma_phi_sq + cfg.sigma_theta_sq > 1e-6 and cfg.N_D > 1)
        for mode in ("sync", "nonsync"):
            r = analytic.rate_per_index(cfg, *_grid(cfg), mode)
            assert np.all(np.diff(r, axis=1) < 0)

    def test_without_phase_noise_matches_baseline_integrand(self):
        cfg = reference_config(sigma_phi_sq=0.0, sigma_theta_sq=0.0)
        k, i = _grid(cfg)
        C = analytic.interference_constant(cfg, np.arange(cfg.K))
        direct = np.log2(1 + cfg.P_D * cfg.M**2 * cfg.alpha**2 / C)
        for mode in ("sync", "nonsync"):
            assert np.allclose(analytic.rate_per_index(cfg, k, i, mode), direct[:, None], rtol=1e-12)

    def test_report_shape_and_sums(self):
        cfg = small_config(K=3, N_D=7)
        rep = analytic.sum_rate(cfg, "sync")
        assert rep.per_index.shape == (3, 7)
        assert np.allclose(rep.per_user, rep.per_index.sum(axis=1) / cfg.N_c)
        assert rep.sum_rate == pytest.approx(rep.per_user.sum())

    def test_reference_ordering(self):
        base = reference_config()
        for snr in range(-20, 41, 5):
            cfg = base.with_snr_db(snr)
            s, ns = analytic.sum_rate(cfg, "sync").sum_rate, analytic.sum_rate(cfg, "nonsync").sum_rate
            assert analytic.no_phase_noise_sum_rate(cfg) >= ns >= s


class TestHighSnr:
    @pytest.mark.parametrize("mode", ["sync", "nonsync"])
    def test_limit_reached(self, mode):
        base = reference_config()
        hi = base.with_snr_db(60)
        rates = analytic.per_user_rates(hi, mode)
        for k in range(base.K):
            assert abs(rates[k] - analytic.high_snr_limit(base, k, mode)) < 1e-3

    def test_interference_floor(self):
        cfg = reference_config(sigma_phi_sq=0.0, sigma_theta_sq=0.0)
        expect = cfg.N_D / cfg.N_c * math.log2(1 + cfg.M * 1.0 / cfg.alpha_sum)
        for mode in ("sync", "nonsync"):
            assert analytic.high_snr_limit(cfg, 0, mode) == pytest.approx(expect, rel=1e-12)

    def test_nonsync_limit_higher(self):
        cfg = reference_config()
        assert analytic.high_snr_limit(cfg, 3, "nonsync") >= analytic.high_snr_limit(cfg, 3, "sync")

    def test_reference_saturation(self):
        # footnote value for M=500, K=10, N_D=1000, 0.49 degrees: 2.66 bpcu per user
        assert analytic.saturation_rate(reference_config(M=500), "sync") == pytest.approx(2.66, abs=0.015)


class TestArrayGain:
    def test_half_power_law_positive(self):
        cfg = reference_config()
        q = ArrayGainQuery(E_u=10.0)
        for mode in ("sync", "nonsync"):
            v = analytic.array_gain_limit(cfg, 0, mode, q)
            assert 0 < v < math.inf

    def test_faster_scaling_vanishes(self):
        assert analytic.array_gain_limit(reference_config(), 0, "sync", ArrayGainQuery(E_u=10.0, eta=0.6)) == 0.0

    @pytest.mark.parametrize("mode", ["sync", "nonsync"])
    def test_finite_m_converges(self, mode):
        q = ArrayGainQuery(E_u=10.0)
        base = reference_config()
        lim = analytic.array_gain_limit(base, 0, mode, q)
        gaps = [abs(analytic.scaled_power_rate(base.replace(M=2**j), 0, mode, q) - lim) for j in range(8, 15)]
        assert np.all(np.diff(gaps) < 0)

    def test_query_validation(self):
        with pytest.raises(ValueError):
            ArrayGainQuery(E_u=1.0, eta=-0.1)
        with pytest.raises(ValueError):
            ArrayGainQuery(E_u=0.0)


class TestSpecialCases:
    def test_ut_only_modes_coincide(self):
        cfg = reference_config(sigma_phi_sq=0.0)
        k, i = _grid(cfg)
        s = analytic.rate_per_index(cfg, k, i, "sync")
        assert np.allclose(s, analytic.rate_per_index(cfg, k, i, "nonsync"), rtol=1e-12)
        assert np.allclose(analytic.special_case_rate(cfg, k, i, "ut-only"), s, rtol=1e-12)

    @pytest.mark.parametrize("case,mode", [("bs-only-sync", "sync"), ("bs-only-nonsync", "nonsync")])
    def test_bs_only_finite(self, case, mode):
        cfg = reference_config(sigma_theta_sq=0.0)
        k, i = _grid(cfg)
        assert np.allclose(analytic.special_case_rate(cfg, k, i, case),
                           analytic.rate_per_index(cfg, k, i, mode), rtol=1e-12)

    @pytest.mark.parametrize("case,mode", [("ut-only", "sync"), ("bs-only-sync", "sync"),
                                           ("bs-only-nonsync", "nonsync")])
    def test_high_snr_regime(self, case, mode):
        cfg = reference_config(**({"sigma_phi_sq": 0.0} if case == "ut-only" else {"sigma_theta_sq": 0.0}))
        k, i = _grid(cfg)
        expect = np.log1p(analytic.high_snr_sinr(cfg, k, i, mode)) / math.log(2)
        assert np.allclose(analytic.special_case_rate(cfg, k, i, case, "high-snr"), expect, rtol=1e-12)

    @pytest.mark.parametrize("case,mode", [("ut-only", "sync"), ("bs-only-sync", "sync")])
    def test_large_array_regime(self, case, mode):
        cfg = reference_config(**({"sigma_phi_sq": 0.0} if case == "ut-only" else {"sigma_theta_sq": 0.0}))
        k, i = _grid(cfg)
        q = ArrayGainQuery(E_u=5.0)
        expect = np.log1p(analytic.large_array_sinr(cfg, k, i, mode, q)) / math.log(2)
        assert np.allclose(analytic.special_case_rate(cfg, k, i, case, "large-array", E_u=5.0), expect, rtol=1e-12)

    def test_bs_only_nonsync_unbounded(self):
        cfg = reference_config(sigma_theta_sq=0.0)
        r = [float(analytic.special_case_rate(cfg, 0, cfg.data_indices[-1], "bs-only-nonsync", "large-array", E_u=e))
             for e in (1, 10, 100, 1000)]
        assert np.all(np.diff(r) > 1)
        k, i = 0, cfg.data_indices[0]
        e_u = 3.0
        closed = math.log2(1 + (e_u / cfg.noise_variance) ** 2 * cfg.K * cfg.beta
                           * math.exp(-cfg.sigma_phi_sq * (i - k * cfg.L)))
        assert float(analytic.special_case_rate(cfg, k, i, "bs-only-nonsync", "large-array", E_u=e_u)) == pytest.approx(closed)

    def test_wrong_case(self):
        cfg = reference_config()
        with pytest.raises(ValueError):
            analytic.special_case_rate(cfg, 0, cfg.data_indices[0], "ut-only")
        with pytest.raises(ValueError):
            analytic.special_case_rate(cfg, 0, cfg.data_indices[0], "bs-only-sync")


class TestRequiredSnr:
    def test_zero_target(self):
        assert analytic.required_snr_for_rate(reference_config(), "sync", 0.0) == -math.inf

    def test_hits_target(self):
        cfg = reference_config(M=300)
        for mode in ("none", "sync", "nonsync"):
            db = analytic.required_snr_for_rate(cfg, mode, 1.5)
            assert analytic.per_user_rates(cfg.with_snr_db(db), mode).mean() == pytest.approx(1.5, abs=1e-6)

    def test_infeasible(self):
        cfg = reference_config(M=100)
        with pytest.raises(InfeasibleTargetError) as exc:
            analytic.required_snr_for_rate(cfg, "sync", 2.5)
        assert exc.value.saturation == pytest.approx(analytic.saturation_rate(cfg, "sync"))

    def test_decreasing_in_m(self):
        base = reference_config()
        for mode in ("none", "sync", "nonsync"):
            req = [analytic.required_snr_for_rate(base.replace(M=M), mode, 2.0) for M in (200, 400, 800, 1600)]
            assert np.all(np.diff(req) < 0)

    def test_table_one_center_entry(self):
        cfg = reference_config(M=500)
        base = analytic.required_snr_for_rate(cfg, "none", 1.0)
        assert analytic.required_snr_for_rate(cfg, "sync", 1.0) - base == pytest.approx(0.6145, abs=0.05)
        assert analytic.required_snr_for_rate(cfg, "nonsync", 1.0) - base == pytest.approx(0.4192, abs=0.05)


class TestDataLength:
    def test_no_phase_noise_takes_bound(self):
        cfg = reference_config(sigma_phi_sq=0.0, sigma_theta_sq=0.0)
        assert analytic.optimize_data_length(cfg, "sync", 3000)[0] == 3000

    def test_interior_optimum(self):
        for mode in ("sync", "nonsync"):
            best, _ = analytic.optimize_data_length(reference_config(), mode, 5000)
            assert 1 < best < 5000

    def test_bound_one(self):
        assert analytic.optimize_data_length(reference_config(), "sync", 1)[0] == 1

    def test_curve_matches_direct_reports(self):
        base = reference_config(K=3, L=5)
        curve = analytic.sum_rate_vs_data_length(base, "nonsync", 40)
        for n in (1, 7, 40):
            assert curve[n - 1] == pytest.approx(analytic.sum_rate(base.replace(N_D=n), "nonsync").sum_rate, rel=1e-12)


def test_low_snr_loss_is_mean_decay():
    """At vanishing SNR the relative loss tends to 1 - mean of exp(-(sp + st) lag)."""
    cfg = reference_config(snr_db=-40.0)
    k, i = _grid(cfg)
    decay = np.exp(-(cfg.sigma_phi_sq + cfg.sigma_theta_sq) * (i - k * cfg.L)).mean()
    ref = analytic.no_phase_noise_sum_rate(cfg)
    for mode in ("sync", "nonsync"):
        loss = (ref - analytic.sum_rate(cfg, mode).sum_rate) / ref
        assert loss == pytest.approx(1 - decay, rel=1e-3)


def test_reference_pdp_common_to_users():
    cfg = reference_config()
    assert np.allclose(cfg.pdp, exponential_pdp(20, 0.35)[None])
    assert cfg.sigma_phi_sq == pytest.approx(std_deg_to_variance(0.4936), rel=1e-3)
