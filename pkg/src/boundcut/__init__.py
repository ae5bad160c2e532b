"""boundcut: bound optimization for balanced graph clustering with MRF terms."""

__version__ = "0.1.0"

from .affinity import (
    BandwidthPolicy,
    adaptive_gaussian_kernel,
    degrees,
    gaussian_kernel,
    knn_affinity,
)
from .bounds import ConcaveSurrogate, build_surrogate, joint_bound
from .embedding import (
    Embedding,
    exact_embedding,
    export_embedding,
    rank_m_embedding,
    spectral_baseline,
)
from .kmeans import kkm_energy, km_energy, run_kmeans
from .model import (
    Dataset,
    Grid,
    JointEnergySpec,
    LabelCost,
    Labeling,
    PottsEdges,
    RobustPnPotts,
    indicators,
    validate,
)
from .objectives import EnergyBreakdown, contrast_weights, eval_joint
from .optimize import (
    RunTrace,
    Schedule,
    initial_labeling,
    kernel_cut,
    pseudo_bound_cut,
    spectral_cut,
)
from .segmentation import (
    SegmentationResult,
    Stroke,
    image_features,
    overlay_image,
    segment_image,
)

__all__ = [
    "BandwidthPolicy",
    "ConcaveSurrogate",
    "Dataset",
    "Embedding",
    "EnergyBreakdown",
    "Grid",
    "JointEnergySpec",
    "LabelCost",
    "Labeling",
    "PottsEdges",
    "RobustPnPotts",
    "RunTrace",
    "Schedule",
    "SegmentationResult",
    "Stroke",
    "adaptive_gaussian_kernel",
    "build_surrogate",
    "contrast_weights",
    "degrees",
    "eval_joint",
    "exact_embedding",
    "export_embedding",
    "gaussian_kernel",
    "image_features",
    "indicators",
    "initial_labeling",
    "joint_bound",
    "kernel_cut",
    "kkm_energy",
    "km_energy",
    "knn_affinity",
    "overlay_image",
    "pseudo_bound_cut",
    "rank_m_embedding",
    "run_kmeans",
    "segment_image",
    "spectral_baseline",
    "spectral_cut",
    "validate",
    "__version__",
]
