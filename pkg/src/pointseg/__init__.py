"""Weakly supervised nuclei detection and segmentation from partial point
annotations: semi-supervised detection via extended Gaussian masks and
background-propagating self-training, then segmentation from Voronoi and
k-means cluster pseudo-labels with an optional dense-CRF training loss.
"""

from .colornorm import ColorStats, compute_color_stats, reinhard_normalize
from .crf import (
    AffinityOperator,
    CrfParams,
    affinity_apply,
    combined_ce,
    crf_pair_loss,
    crf_total_loss,
    masked_cross_entropy,
    mean_field_refine,
)
from .detection import (
    DetectionConfig,
    extended_gaussian_mask,
    extract_detections,
    propagate_background,
    self_train,
    simple_gaussian_mask,
    weighted_mse_loss,
)
from .labels import (
    VoronoiPartition,
    cluster_label,
    kmeans,
    pixel_features,
    voronoi_label,
    voronoi_partition,
)
from .metrics import (
    MatchResult,
    MetricsReport,
    aji,
    dataset_difficulty,
    detection_stats,
    match_detections,
    object_dice,
    pixel_stats,
)
from .model import (
    AdamState,
    PixelModel,
    TrainConfig,
    adam_step,
    backward,
    featurize,
    finetune_crf,
    forward,
    init_model,
    predict,
    train_detection,
    train_segmentation,
)
from .raster import (
    component_centroids,
    connected_components,
    distance_transform,
    morph_disk,
)
from .synth import SynthConfig, SynthSample, generate, generate_dataset, sample_partial_points

__version__ = "0.1.0"
