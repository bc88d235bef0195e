import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from obpm_lab.twin_laser import (
    ApparatusConfig,
    JumpRecord,
    ValidityWarning,
    conditional_counts,
    config_for_expected_jumps,
    folded_delta_histogram,
    jump_count_distribution,
    jump_count_probability,
    mcwf_run,
    mixture_quadrature,
    phase_posterior,
    photon_number_distribution,
    poisson_tv,
    posterior_from_record,
    record_log_likelihood,
    total_variation,
    trajectory_table,
)


class TestApparatus:
    def test_desk_config(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20)
        assert cfg.expected_jumps == pytest.approx(20.0)
        assert cfg.r_t ** 2 == pytest.approx(40.0)
        assert cfg.valid
        assert cfg.validity_bound == pytest.approx(1 / (math.sqrt(40) * math.sqrt(50)))

    def test_long_transit_is_invalid(self):
        cfg = ApparatusConfig(math.sqrt(50), 1.0, 0.1, 10.0)
        assert not cfg.valid

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ApparatusConfig(-1.0, 1.0, 1e-3, 1.0)

    def test_expected_jumps_range(self):
        with pytest.raises(ValueError):
            config_for_expected_jumps(1.0, 5.0)


class TestJumpCounts:
    def test_against_quadrature(self):
        # average of the binomial law over a uniform phase difference
        s = 9
        for p in range(s + 1):
            f = lambda d: math.comb(s, p) * math.sin(d / 2) ** (2 * p) * math.cos(d / 2) ** (2 * (s - p))
            ref = integrate.quad(f, 0, 2 * math.pi, epsabs=1e-14)[0] / (2 * math.pi)
            assert jump_count_probability(s, p) == pytest.approx(ref, rel=1e-10)

    def test_normalized(self):
        worst = max(abs(jump_count_distribution(s).sum() - 1) for s in range(201))
        assert worst <= 1e-10

    def test_rejects_bad_count(self):
        with pytest.raises(ValueError):
            jump_count_probability(3, 4)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 300), st.data())
    def test_symmetry(self, s, data):
        p = data.draw(st.integers(0, s))
        assert jump_count_probability(s, p) == jump_count_probability(s, s - p)


class TestPosterior:
    @pytest.mark.parametrize("p,q", [(0, 0), (5, 5), (20, 0), (3, 11)])
    def test_normalized(self, p, q):
        post = phase_posterior(p, q)
        assert post.mass(0, 2 * math.pi) == pytest.approx(1.0, abs=1e-12)

    def test_mode(self):
        assert phase_posterior(6, 0).mode() == pytest.approx(math.pi)
        assert phase_posterior(3, 3).mode() == pytest.approx(math.pi / 2)

    def test_all_jumps_in_c_concentrate_at_pi(self):
        assert phase_posterior(100, 0).mass(math.pi - 0.3, math.pi + 0.3) > 0.95

    def test_table(self):
        tab = phase_posterior(2, 1).table(64)
        assert tab.columns == ["delta", "density"]
        assert len(tab) == 64

    def test_timed_likelihood_depends_only_on_counts(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20)
        rec = JumpRecord((1.0, 30.0, 100.0, 150.0), "cdcc", 3, 1, cfg.r_t)
        deltas = np.linspace(0.3, 6.0, 9)
        ll = record_log_likelihood(rec, cfg, deltas)
        post = posterior_from_record(rec)
        diff = ll - post.log_density(deltas)
        assert np.ptp(diff) < 1e-9


class TestPhotonNumbers:
    @pytest.mark.parametrize("p,q,r2", [(0, 0, 1.0), (3, 7, 10.0), (20, 20, 50.0), (15, 2, 25.0)])
    def test_against_mixture(self, p, q, r2):
        tab = photon_number_distribution(p, q, r2)
        ms = np.arange(0, len(tab), 7)
        assert np.allclose(tab["P_c"][ms], mixture_quadrature(p, q, r2, ms), atol=1e-8, rtol=0)
        assert np.allclose(tab["P_d"][ms], mixture_quadrature(p, q, r2, ms, mode="d"), atol=1e-8, rtol=0)

    @pytest.mark.parametrize("p,q,r2", [(0, 0, 5.0), (100, 0, 1000.0), (7, 3, 40.0)])
    def test_mass_and_mean(self, p, q, r2):
        tab = photon_number_distribution(p, q, r2)
        m = np.asarray(tab["m"])
        assert tab["P_c"].sum() == pytest.approx(1.0, abs=1e-9)
        assert tab["P_d"].sum() == pytest.approx(1.0, abs=1e-9)
        total = m @ tab["P_c"] + m @ tab["P_d"]
        assert total == pytest.approx(2 * r2, rel=1e-6)

    def test_vacuum_limit(self):
        tab = photon_number_distribution(2, 1, 0.0)
        assert tab["P_c"][0] == 1.0

    def test_sharper_records_look_poissonian(self):
        tvs = [poisson_tv(photon_number_distribution(k, k, 100.0)["P_c"]) for k in (0, 5, 50)]
        assert tvs[0] > tvs[1] > tvs[2]


class TestTrajectories:
    def test_jump_totals_are_poisson(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20, seed=4)
        recs = mcwf_run(cfg, 4000)
        s = np.array([r.s for r in recs])
        assert s.mean() == pytest.approx(20.0, abs=4 * math.sqrt(20 / 4000))

    def test_times_sorted_within_window(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20, seed=1)
        for rec in mcwf_run(cfg, 50):
            t = np.asarray(rec.times)
            assert np.all(np.diff(t) >= 0)
            assert np.all((t >= 0) & (t <= cfg.t + 1e-9))
            assert len(rec.channels) == rec.s
            assert rec.channels.count("c") == rec.p

    def test_forced_delta_gives_binomial(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20, seed=7)
        recs = mcwf_run(cfg, 3000, force_delta=math.pi / 2)
        frac = sum(r.p for r in recs) / sum(r.s for r in recs)
        assert frac == pytest.approx(0.5, abs=0.01)

    def test_workers_do_not_change_records(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 20, seed=9)
        a = trajectory_table(mcwf_run(cfg, 300, workers=1)).to_csv_text()
        b = trajectory_table(mcwf_run(cfg, 300, workers=3)).to_csv_text()
        assert a == b

    def test_validity_warning(self):
        cfg = ApparatusConfig(math.sqrt(50), 1.0, 0.1, 1.0)
        with pytest.warns(ValidityWarning):
            mcwf_run(cfg, 2)

    def test_needs_a_trajectory(self):
        with pytest.raises(ValueError):
            mcwf_run(config_for_expected_jumps(math.sqrt(50), 20), 0)

    def test_conditional_and_folded_histograms(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 4, seed=2)
        recs = mcwf_run(cfg, 3000)
        counts = conditional_counts(recs, 4)
        exact = jump_count_distribution(4)
        assert stats.chisquare(counts, counts.sum() * exact).pvalue > 1e-3
        e, pred, n = folded_delta_histogram(recs, 1, 1, bins=4)
        assert n > 100
        assert pred.sum() == pytest.approx(1.0, abs=1e-10)
        assert stats.chisquare(e * n, pred * n).pvalue > 1e-3

    def test_total_variation(self):
        assert total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert total_variation([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_phase_pairs_uniform(self):
        cfg = config_for_expected_jumps(math.sqrt(50), 2, seed=5)
        recs = mcwf_run(cfg, 2000)
        deltas = np.array([r.delta for r in recs]) / (2 * math.pi)
        assert stats.kstest(deltas, "uniform").pvalue > 1e-3
