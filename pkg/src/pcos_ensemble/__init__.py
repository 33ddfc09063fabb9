"""Binary PCOS ultrasound classification with an ensemble of five vision
backbone families combined by weighted logit fusion."""

from .backbones import (
    BACKBONE_KINDS,
    BackboneSpec,
    LogitMatrix,
    ModelHandle,
    build_model,
    count_parameters,
    forward_logits,
)
from .data_ingest import (
    CLASS_LABELS,
    INFECTED,
    NOTINFECTED,
    CleanReport,
    DatasetManifest,
    ImageRecord,
    clean_dataset,
    load_manifest,
    save_manifest,
    scan_dataset,
    split_train_holdout,
    verify_integrity,
)
from .fusion import (
    EnsembleSpec,
    FusedPrediction,
    denconrest_spec,
    denconst_spec,
    fuse,
    model_score,
    normalize_weights,
    optimize_weights,
    predict_ensemble,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    compute_metrics,
    confusion,
    emit_report,
    evaluate,
    evaluate_ensemble,
    evaluate_model,
)
from .preprocess import (
    PreprocessConfig,
    PreprocessedImage,
    denormalize,
    load_and_resize,
    normalize,
    preprocess_image,
    to_unit_array,
)
from .synthetic import SynthesisConfig, generate_corpus
from .trainer import (
    TrainConfig,
    TrainReport,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
