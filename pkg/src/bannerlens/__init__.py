"""Salience-based measurement of aesthetic manipulation in consent banners.

The toolkit scores how strongly a cookie banner's design steers attention
toward one button: a training-free rarity model turns a screenshot into a
pixel salience map, annotated buttons are scored through a seeded
perturbation ensemble, and a relative-dominance verdict flags banners whose
accept button out-scores the alternatives beyond a just-noticeable margin.
Corpus construction, compliance classification, and the statistical analyses
used to evaluate such corpora live alongside.
"""

from .errors import (
    BadMagicError,
    BannerLensError,
    CollinearityError,
    ConfigError,
    FormatError,
    HeaderError,
    InputError,
    LayerOrderError,
    PayloadSizeError,
    PipelineAborted,
    TruncationError,
    UndefinedStatisticError,
)
from .features import (
    BoundingBox,
    FeatureLayer,
    FeatureMapStack,
    FilterBankSpec,
    Screenshot,
    extract_filter_bank,
    load_fmap,
    write_fmap,
)
from .perturb import (
    PerturbationConfig,
    PerturbedSample,
    ensemble_scores,
    sample_perturbation,
)
from .pipeline import RunConfig, RunSummary, load_store, record_schema, run_pipeline
from .saliency import (
    RarityConfig,
    SalienceMap,
    compute_salience,
    fuse_block,
    fuse_layer,
    rarity_map,
)
from .scoring import (
    ButtonSalience,
    ContrastBaseline,
    DesignFeatures,
    Verdict,
    contrast_baseline,
    extract_design_features,
    score_button,
    threshold_sweep,
    verdict,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "BannerLensError",
    "BoundingBox",
    "ButtonSalience",
    "CollinearityError",
    "ConfigError",
    "ContrastBaseline",
    "DesignFeatures",
    "FeatureLayer",
    "FeatureMapStack",
    "FilterBankSpec",
    "FormatError",
    "HeaderError",
    "InputError",
    "LayerOrderError",
    "PayloadSizeError",
    "PerturbationConfig",
    "PerturbedSample",
    "PipelineAborted",
    "RarityConfig",
    "RunConfig",
    "RunSummary",
    "SalienceMap",
    "Screenshot",
    "TruncationError",
    "UndefinedStatisticError",
    "Verdict",
    "compute_salience",
    "contrast_baseline",
    "ensemble_scores",
    "extract_design_features",
    "extract_filter_bank",
    "fuse_block",
    "fuse_layer",
    "load_fmap",
    "load_store",
    "rarity_map",
    "record_schema",
    "run_pipeline",
    "sample_perturbation",
    "score_button",
    "threshold_sweep",
    "verdict",
    "write_fmap",
]
