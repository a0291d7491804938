"""Energy-change OOD scoring and bound-maximization prompt tuning.

The library scores out-of-distribution inputs by the energy change observed
when a sample's strongest image-text alignments are reset to zero, provides
the matching fine-tuning objective over learnable prompt vectors, and ships
exact ROC metrics, a synthetic shift benchmark, and an empirical harness for
the method's guarantees.
"""

from .core import (
    FeatureMatrix,
    SimilarityRow,
    cosine_similarities,
    log_sum_exp,
    normalize_rows,
    similarity_row,
)
from .masking import MaskReport, MaskSpec, apply_mask, product_vector, sign_mask, top_p_mask
from .metrics import MetricResult, accuracy, auroc, evaluate_ood, fpr_at_tpr
from .prompt import (
    PromptParams,
    TextForwardTrace,
    backward,
    finite_diff_grad,
    forward_text_features,
    init_params,
)
from .scores import (
    ScoreBreakdown,
    ScoreConfig,
    baseline_scores,
    delta_energy,
    delta_energy_with_negatives,
    energy_after_realign,
    energy_before,
    mcm_score,
    score_rows,
)
from .synth import SynthConfig, SynthDataset, gaussian_sample, generate
from .training import (
    ConditionCheck,
    EbmConfig,
    EpochRecord,
    TrainReport,
    bound_condition,
    check_thm3_condition,
    cross_entropy_loss,
    ebm_loss,
    l_delta_e,
    train,
)
from .verify import (
    GeneralizationReport,
    HessianProbe,
    TheoremReport,
    generalization_gap_report,
    hessian_gap_probe,
    verify_amplification,
    verify_fpr_dominance,
    verify_gradients,
    verify_hessian_trend,
    verify_lower_bound,
    verify_monotonicity,
)

__version__ = "0.1.0"
