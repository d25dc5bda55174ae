"""Greedy game-theoretic patch explanations for black-box object detectors."""

from .detector import (
    PROB_FLOOR,
    AdditiveDetector,
    BiasedDetector,
    DetectorHandle,
    Proposal,
    SyntheticPatchDetector,
    TabularDetector,
    TargetDetection,
    load_png,
    mask_apply,
    save_png,
    to_float_image,
)
from .engine import (
    MODE_DELETION,
    MODE_INSERTION,
    EngineConfig,
    EngineError,
    ExplanationTrace,
    TraceStep,
    delete_run,
    evaluation_budget,
    insert_run,
    run_explanation,
    select_top,
)
from .geometry import BBox, PatchGrid, candidate_patches, iou, make_grid
from .heatmap import build_heatmap, export_raster, load_raster
from .metrics import (
    Curve,
    auc,
    energy_pointing_game,
    heatmap_rank_order,
    overall,
    perturbation_curve,
    pointing_game,
)
from .oracle import (
    GameSpec,
    absence_shapley,
    additive_game,
    deletion_decomposition_residual,
    full_context_interaction,
    full_context_shapley,
    insertion_decomposition_residual,
    interaction_exact,
    random_game,
    self_context_interaction,
    self_context_shapley,
    shapley_exact,
)
from .reward import (
    RewardSpec,
    cosine,
    evaluate_reward,
    reward_alpha,
    reward_box,
    reward_class,
    reward_full,
)
from .rng import SplitMix64
from .wire import SidecarDetector, WireProtocolError

__version__ = "0.1.0"

__all__ = [
    "AdditiveDetector",
    "BBox",
    "BiasedDetector",
    "Curve",
    "DetectorHandle",
    "EngineConfig",
    "EngineError",
    "ExplanationTrace",
    "GameSpec",
    "MODE_DELETION",
    "MODE_INSERTION",
    "PROB_FLOOR",
    "PatchGrid",
    "Proposal",
    "RewardSpec",
    "SidecarDetector",
    "SplitMix64",
    "SyntheticPatchDetector",
    "TabularDetector",
    "TargetDetection",
    "TraceStep",
    "WireProtocolError",
    "absence_shapley",
    "additive_game",
    "auc",
    "build_heatmap",
    "candidate_patches",
    "cosine",
    "delete_run",
    "deletion_decomposition_residual",
    "energy_pointing_game",
    "evaluate_reward",
    "evaluation_budget",
    "export_raster",
    "full_context_interaction",
    "full_context_shapley",
    "heatmap_rank_order",
    "insert_run",
    "insertion_decomposition_residual",
    "interaction_exact",
    "iou",
    "load_png",
    "load_raster",
    "make_grid",
    "mask_apply",
    "overall",
    "perturbation_curve",
    "pointing_game",
    "random_game",
    "reward_alpha",
    "reward_box",
    "reward_class",
    "reward_full",
    "run_explanation",
    "save_png",
    "select_top",
    "self_context_interaction",
    "self_context_shapley",
    "shapley_exact",
    "to_float_image",
]
