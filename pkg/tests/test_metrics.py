"""Exact ROC metrics against brute-force enumeration."""

import numpy as np
import pytest

from denergy.core import similarity_row
from denergy.errors import EmptyInput, LabelOutOfRange
from denergy.metrics import accuracy, auroc, evaluate_ood, fpr_at_tpr


def brute_force_auroc(id_scores, ood_scores) -> float:
    """Direct pair enumeration: P(id > ood) + 0.5 P(id == ood)."""
    total = 0.0
    for a in id_scores:
        for b in ood_scores:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(id_scores) * len(ood_scores))


def brute_force_min_fpr(id_scores, ood_scores, tpr_target=0.95):
    """Smallest FPR over all thresholds achieving TPR >= target (inclusive >=)."""
    best = 1.0
    for thr in sorted(set(id_scores) | set(ood_scores)):
        tpr = np.mean(np.asarray(id_scores) >= thr)
        if tpr >= tpr_target:
            best = min(best, float(np.mean(np.asarray(ood_scores) >= thr)))
    return best


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([3, 2], [1, 0]) == 1.0

    def test_identical_distributions(self):
        # pairs (1,1)=0.5 (1,0)=1 (0,1)=0 (0,0)=0.5 -> mean 0.5
        assert auroc([1, 0], [1, 0]) == 0.5

    def test_inverted(self):
        assert auroc([0], [1]) == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            n_id = int(rng.integers(1, 50))
            n_ood = int(rng.integers(1, 50))
            # integer scores force plenty of ties
            ids = rng.integers(0, 10, size=n_id).astype(float)
            oods = rng.integers(0, 10, size=n_ood).astype(float)
            assert auroc(ids, oods) == brute_force_auroc(ids, oods)

    def test_complement_identity(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            a = rng.integers(0, 6, size=rng.integers(1, 30)).astype(float)
            b = rng.integers(0, 6, size=rng.integers(1, 30)).astype(float)
            assert auroc(a, b) + auroc(b, a) == 1.0

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(43)
        ids = rng.normal(size=40)
        oods = rng.normal(size=25)
        base = auroc(ids, oods)
        assert auroc(np.exp(ids), np.exp(oods)) == base
        assert auroc(3 * ids + 7, 3 * oods + 7) == base

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            auroc([], [1.0])
        with pytest.raises(EmptyInput):
            auroc([1.0], [])

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            auroc([float("nan")], [0.0])


class TestFprAtTpr:
    def test_high_ood_scores(self):
        ids = list(range(20, 0, -1))  # 20..1
        oods = [20.5] * 5
        fpr, threshold = fpr_at_tpr(ids, oods)
        assert threshold == 2.0  # ceil(0.95*20) = 19th largest
        assert fpr == 1.0
        assert brute_force_min_fpr(ids, oods) == 1.0

    def test_tied_id_scores(self):
        fpr, threshold = fpr_at_tpr([1.0, 1.0], [0.0])
        assert threshold == 1.0
        assert fpr == 0.0

    def test_ood_below_everything(self):
        rng = np.random.default_rng(44)
        ids = rng.uniform(1, 2, size=30)
        oods = rng.uniform(-1, 0, size=15)
        for target in (0.5, 0.8, 0.95, 1.0):
            fpr, _ = fpr_at_tpr(ids, oods, target)
            assert fpr == 0.0

    def test_monotone_in_target(self):
        rng = np.random.default_rng(45)
        ids = rng.normal(size=60)
        oods = rng.normal(loc=-0.5, size=40)
        fprs = [fpr_at_tpr(ids, oods, t)[0] for t in (0.5, 0.7, 0.9, 0.95, 1.0)]
        assert all(a <= b for a, b in zip(fprs, fprs[1:]))

    def test_threshold_achieves_target_tpr(self):
        rng = np.random.default_rng(46)
        for _ in range(50):
            ids = rng.normal(size=rng.integers(1, 40))
            oods = rng.normal(size=rng.integers(1, 40))
            fpr, threshold = fpr_at_tpr(ids, oods, 0.95)
            assert np.mean(ids >= threshold) >= 0.95
            assert fpr == np.mean(oods >= threshold)

    def test_invalid_target(self):
        with pytest.raises(ValueError):
            fpr_at_tpr([1.0], [0.0], 0.0)


class TestEvaluateOod:
    def test_bundles_fields(self):
        result = evaluate_ood([3.0, 2.0], [1.0, 0.0])
        assert result.auroc == 1.0
        assert result.fpr95 == 0.0
        assert result.n_id == 2 and result.n_ood == 2
        assert result.threshold == 2.0


class TestAccuracy:
    def test_all_correct(self):
        sims = [similarity_row([0.9, 0.1]), similarity_row([0.2, 0.8])]
        assert accuracy(sims, [0, 1]) == 1.0

    def test_none_correct(self):
        sims = [similarity_row([0.9, 0.1]), similarity_row([0.2, 0.8])]
        assert accuracy(sims, [1, 0]) == 0.0

    def test_half_correct(self):
        sims = [similarity_row([0.9, 0.1]), similarity_row([0.2, 0.8])]
        assert accuracy(sims, [0, 0]) == 0.5

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            accuracy([similarity_row([0.9, 0.1])], [2])

    def test_count_mismatch(self):
        with pytest.raises(LabelOutOfRange):
            accuracy([similarity_row([0.9, 0.1])], [0, 1])
