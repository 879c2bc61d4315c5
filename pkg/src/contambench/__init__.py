"""contambench: classifier robustness under mixture data contamination.

A training distribution contaminated at rate eps is modeled as the mixture
(1-eps) * clean + eps * arbitrary.  The package provides dataset plumbing,
synthetic generators with exact posterior oracles, seven contamination
generators plus the bound-attaining worst case, an SVM trained by sequential
pairwise dual optimization, k-NN, closed-form loss bounds, a remote-sensing
mis-registration simulator, and a sweep harness that compares empirical
accuracy loss against the theoretical bounds.
"""

from .bounds import ben_david_bound, critical_epsilon, estimate_h_delta_h, multi_class_bound, two_class_bound
from .classifiers import (
    ClassifierConfig,
    EvalResult,
    KernelSpec,
    KnnModel,
    SvmModel,
    evaluate,
    knn_classify,
    knn_predict,
    svm_decision,
    svm_train,
)
from .contam import (
    ContaminationSpec,
    WorstCaseContamination,
    contaminate,
    contaminated_posterior,
    excess_risk_contaminated_bayes,
    sample_heavy_tail,
    worst_case_contamination,
)
from .data import (
    Holdout,
    KFold,
    LabeledDataset,
    ScaleParams,
    class_weights,
    load_csv,
    save_csv,
    scale_unit_interval,
    split,
)
from .harness import (
    DataSource,
    ExperimentConfig,
    ExperimentReport,
    MisregReport,
    PipelineConfig,
    SceneConfig,
    SplitSpec,
    emit_misreg_report,
    emit_report,
    run_contamination_experiment,
    run_misreg_experiment,
)
from .raster import (
    RasterScene,
    VegetationProfileSet,
    bilinear_sample,
    boundary_fraction,
    gen_cropland,
    load_scene,
    misreg_epsilon,
    misregister,
    save_scene,
    scene_to_dataset,
)
from .synthgen import (
    FOUR_CLASS,
    NESTED_SQUARE,
    MixtureOracle,
    PatternKind,
    bayes_decision,
    gen_gaussian_mixture,
    gen_pattern,
    mixture_posterior,
    monte_carlo_risk,
)

__version__ = "0.1.0"
