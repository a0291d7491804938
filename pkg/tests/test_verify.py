"""Verification harness: per-check examples and reduced-size harness runs."""

import math

import numpy as np

from denergy.core import similarity_row
from denergy.scores import ScoreConfig, delta_energy, mcm_score
from denergy.synth import EncoderAlignedConfig, generate_encoder_aligned
from denergy.training import EbmConfig
from denergy.verify import (
    generalization_gap_report,
    hessian_gap_probe,
    masked_domain,
    verify_amplification,
    verify_fpr_dominance,
    verify_gradients,
    verify_lower_bound,
    verify_monotonicity,
)

# ln(5/2) - ln(3/2) and 4/5 - 2/3, the two-class worked example
AMP_EXAMPLE_D_DELTA = 0.51082562376599068
AMP_EXAMPLE_D_MCM = 0.13333333333333333


class TestAmplification:
    def test_worked_two_class_example(self):
        cfg = ScoreConfig(tau=1.0, c=1)
        row_id = similarity_row([math.log(4), 0.0])
        row_ood = similarity_row([math.log(2), 0.0])
        d_de = delta_energy(row_id, cfg).delta - delta_energy(row_ood, cfg).delta
        d_mcm = mcm_score(row_id, cfg) - mcm_score(row_ood, cfg)
        assert math.isclose(d_de, AMP_EXAMPLE_D_DELTA, rel_tol=1e-13)
        assert math.isclose(d_mcm, AMP_EXAMPLE_D_MCM, rel_tol=1e-13)
        assert d_de > d_mcm

    def test_equal_maxima_degenerate_pair(self):
        cfg = ScoreConfig(tau=1.0, c=1)
        row = similarity_row([0.5, 0.1])
        assert delta_energy(row, cfg).delta - delta_energy(row, cfg).delta == 0.0

    def test_harness_run(self):
        report = verify_amplification(seed=0, trials=500)
        assert report.violations == 0
        assert report.worst_margin > 0

    def test_reproducible(self):
        a = verify_amplification(seed=3, trials=50)
        b = verify_amplification(seed=3, trials=50)
        assert a.worst_margin == b.worst_margin


class TestMonotonicity:
    def test_harness_run(self):
        report = verify_monotonicity(seed=0, trials=500)
        assert report.violations == 0
        assert report.worst_margin > 0


class TestFprDominance:
    def test_single_row_below_cap(self):
        tau = 0.01
        cfg = ScoreConfig(tau=tau, c=1)
        delta = 1e-3
        row = similarity_row([tau * math.log(2) - delta, 0.0, 0.0, 0.0])
        assert mcm_score(row, cfg) - delta_energy(row, cfg).delta > 0

    def test_uniform_row(self):
        cfg = ScoreConfig(tau=0.01, c=2)
        row = similarity_row([0.0] * 5)
        assert delta_energy(row, cfg).delta == 0.0
        assert math.isclose(mcm_score(row, cfg), 1 / 5, rel_tol=1e-12)

    def test_harness_run(self):
        report = verify_fpr_dominance(seed=0, trials=1000)
        assert report.violations == 0
        fprs = report.details[0]
        assert fprs["fpr_delta_energy"] <= fprs["fpr_mcm"]


class TestLowerBound:
    def test_harness_run(self):
        report = verify_lower_bound(seed=0, trials=100)
        assert report.violations == 0
        assert report.skipped + report.trials - report.skipped == report.trials

    def test_skips_recorded_separately(self):
        report = verify_lower_bound(seed=1, trials=60)
        assert 0 <= report.skipped <= 60
        assert report.violations == 0


class TestGradientOracle:
    def test_small_run(self):
        report = verify_gradients(seed=0, trials=5)
        assert report.violations == 0
        assert report.worst_margin > 0


class TestHessianProbe:
    def _setup(self):
        cfg = EncoderAlignedConfig(seed=5)
        ds = generate_encoder_aligned(cfg)
        return ds, cfg.reference_params()

    def test_identical_domains_zero_gap(self):
        ds, params = self._setup()
        probe = hessian_gap_probe(
            params, ds.id_images, ds.id_images, ds.labels, EbmConfig(tau=0.05)
        )
        assert probe.quad_form_gap < 1e-6
        assert probe.mask_distance_mean == 0.0

    def test_zero_direction_zero_form(self):
        ds, params = self._setup()
        zeroed = params.with_theta(np.zeros_like(params.theta))
        probe = hessian_gap_probe(
            zeroed, ds.id_images, ds.id_images, ds.labels, EbmConfig(tau=0.05)
        )
        assert probe.quad_form_source == 0.0

    def test_masked_domain_distance_positive(self):
        ds, params = self._setup()
        masked = masked_domain(ds.id_images, params, p=0.5)
        probe = hessian_gap_probe(params, ds.id_images, masked, ds.labels, EbmConfig(tau=0.05))
        assert probe.mask_distance_mean > 0
        assert probe.fd_step == 1e-3


class TestGeneralizationGap:
    def test_identical_splits_give_zero_gap(self):
        cfg = EncoderAlignedConfig(seed=9)
        ds = generate_encoder_aligned(cfg)
        from dataclasses import replace as dc_replace

        same = dc_replace(ds, covariate_images=ds.id_images)
        report = generalization_gap_report(cfg.reference_params(), same, EbmConfig(tau=0.05))
        assert report.ce_gap == 0.0
        assert report.feature_gap == 0.0

    def test_zero_shift_strength_small_gap(self):
        cfg = EncoderAlignedConfig(seed=9, covariate_shift_strength=0.0)
        ds = generate_encoder_aligned(cfg)
        report = generalization_gap_report(cfg.reference_params(), ds, EbmConfig(tau=0.05))
        assert report.ce_gap < 0.05
        assert report.hessian_quad_form >= 0 or report.hessian_quad_form <= 0  # finite
        assert math.isfinite(report.hessian_quad_form)
