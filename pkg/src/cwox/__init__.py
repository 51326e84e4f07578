"""Contrastive whole-output explanations (CWOX) for image classifiers.

The library explains the whole top-K output of a classifier instead of one
class at a time: labels are grouped into confusion clusters mined from
co-occurrence statistics, clusters are contrasted against each other, and
classes within a cluster are contrasted against their siblings (CWOX-2s).
Simple per-class maps (SWOX) and one-stage contrasts (CWOX-1sA/1sB) ship as
baselines, along with deletion-based contrastive-faithfulness metrics (CAUC,
CDROP) and a black-box RISE base explainer.
"""

from .contrast import (
    BaseExplainer,
    ContrastConfig,
    ExplanationBundle,
    SupportMask,
    class_contrast,
    cluster_contrast,
    compound_logit,
    compound_prob,
    explain_cwox1sA,
    explain_cwox1sB,
    explain_cwox2s,
    explain_swox,
    load_bundle,
    save_bundle,
    support_mask,
)
from .cooccur import (
    ClusterTree,
    ConfusionPartition,
    CooccurrenceStats,
    Document,
    ExtractError,
    build_tree,
    cooccurrence_stats,
    export_tree,
    extract_documents,
    import_tree,
    restrict_and_cut,
)
from .core import (
    ClassOutput,
    CwoxError,
    Image,
    SaliencyMap,
    TopKSelection,
    pixel_order,
    select_top_k,
    softmax,
    upsample,
)
from .io import load_heatmap, load_image, save_heatmap, save_image
from .metrics import (
    DeletionCurve,
    MetricConfig,
    PairComparison,
    cauc,
    cdrop,
    compare_methods,
    contrastive_curve,
    default_tau,
    delete_pixels,
    enumerate_pairs,
    n_delta,
)
from .oracle import (
    ModelOracle,
    RemoteOracle,
    SyntheticClassifier,
    load_synthetic,
    remote_classify,
    remote_saliency,
    save_synthetic,
    synthetic_classify,
)
from .render import overlay
from .rise import RiseConfig, RiseExplainer, generate_masks, rise_saliency, rise_saliency_many

__version__ = "0.1.0"

__all__ = [
    "BaseExplainer", "ClassOutput", "ClusterTree", "ConfusionPartition",
    "ContrastConfig", "CooccurrenceStats", "CwoxError", "DeletionCurve",
    "Document", "ExplanationBundle", "ExtractError", "Image", "MetricConfig",
    "ModelOracle", "PairComparison", "RemoteOracle", "RiseConfig",
    "RiseExplainer", "SaliencyMap", "SupportMask", "SyntheticClassifier",
    "TopKSelection", "build_tree", "cauc", "cdrop", "class_contrast",
    "cluster_contrast", "compare_methods", "compound_logit", "compound_prob",
    "contrastive_curve", "cooccurrence_stats", "default_tau", "delete_pixels",
    "enumerate_pairs", "explain_cwox1sA", "explain_cwox1sB", "explain_cwox2s",
    "explain_swox", "export_tree", "extract_documents", "generate_masks",
    "import_tree", "load_bundle", "load_heatmap", "load_image",
    "load_synthetic", "n_delta", "overlay", "pixel_order", "remote_classify",
    "remote_saliency", "restrict_and_cut", "rise_saliency",
    "rise_saliency_many", "save_bundle", "save_heatmap", "save_image",
    "save_synthetic", "select_top_k", "softmax", "support_mask",
    "synthetic_classify", "upsample",
]
