"""neuroens: ensemble CNN classification of brain MR volumes.

Volumetric I/O and preprocessing, six configurable-scale CNN backbone
families, two logit-fusion ensembles, the repeated-split training
protocol, and occlusion-based relevance analysis.
"""

from .volume import Volume, VolumeFormatError, load_volume, save_volume
from .manifest import (
    DemographicTable,
    Label,
    Manifest,
    Modality,
    Sex,
    Source,
    SubjectRecord,
    load_manifest,
    save_manifest,
    render_demographics,
    summarize_demographics,
)
from .preprocess import (
    SmoothingSpec,
    clamp_artifacts,
    normalize_intensity,
    resample_to_shape,
    smooth_gaussian,
    split_tissues_synthetic,
)
from .seeding import derive_seed
from .synthetic import generate_synthetic_cohort, lesion_mask, make_phantom
from .backbones import (
    Backbone,
    BackboneFamily,
    BackboneSpec,
    FULL_STAGE_DEPTHS,
    build_backbone,
    full_preset,
)
from .weights import (
    WeightFormatError,
    load_pretrained,
    load_tensors,
    save_backbone_weights,
    save_tensors,
)
from .ensemble import (
    EnsembleModel1,
    EnsembleModel2,
    MODEL1_FAMILIES,
    MODEL2_GM_FAMILIES,
    MODEL2_WM_FAMILIES,
    build_model1,
    build_model2,
    default_model1_specs,
    default_model2_specs,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
    softmax_probabilities,
)
from .pipeline import CohortData, load_cohort, smooth_cohort
from .training import (
    AdamState,
    ExperimentConfig,
    adam_init,
    adam_step,
    cross_entropy_loss,
    evaluate,
    holdout_count,
    run_experiment,
    split_train_test,
    split_validation,
    train_once,
)
from .results import (
    ResultRow,
    ResultTable,
    aggregate_accuracies,
    load_results,
    render_results,
    save_results,
)
from .occlusion import (
    OcclusionConfig,
    RegionRelevance,
    export_heatmap,
    load_atlas_labels,
    mean_heatmap,
    occlusion_for_model,
    occlusion_heatmap,
    occlusion_positions,
    region_relevance,
    save_atlas_labels,
)

__version__ = "0.1.0"
