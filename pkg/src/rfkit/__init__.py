"""rfkit: seeded sign-randomized Fourier sketching and its evaluation harness."""

from .baselines import LpfSpec, PcaModel, lle_embed, lpf_compress, pca_apply, pca_fit
from .estimation import (
    StackedRealOperator,
    TemplateSet,
    classify_compressed,
    classify_whitened,
    detect_events,
    estimate_trace_compressed,
    estimate_trace_original,
    estimate_trace_whitened,
)
from .generators import (
    CellScene,
    SineManifoldSpec,
    VorticityField,
    forcing_field,
    generate_cell_scene,
    planar_manifold_dataset,
    sine_manifold,
    sine_manifold_dataset,
    solve_vorticity,
)
from .matrixio import ingest_matrix, read_matrix, write_matrix
from .metrics import (
    DetectionScore,
    IsometryReport,
    embedding_constant,
    f1_score,
    inner_product_deviation,
    isometry_constant,
    pairwise_distances,
    procrustes_distance,
)
from .operator import (
    RfOperator,
    SplitMix64,
    apply,
    apply_batch,
    apply_dense_oracle,
    build_operator,
    dense_matrix,
    deserialize_operator,
    serialize_operator,
)

__version__ = "0.1.0"

__all__ = [
    "CellScene",
    "DetectionScore",
    "IsometryReport",
    "LpfSpec",
    "PcaModel",
    "RfOperator",
    "SineManifoldSpec",
    "SplitMix64",
    "StackedRealOperator",
    "TemplateSet",
    "VorticityField",
    "apply",
    "apply_batch",
    "apply_dense_oracle",
    "build_operator",
    "classify_compressed",
    "classify_whitened",
    "dense_matrix",
    "deserialize_operator",
    "detect_events",
    "embedding_constant",
    "estimate_trace_compressed",
    "estimate_trace_original",
    "estimate_trace_whitened",
    "f1_score",
    "forcing_field",
    "generate_cell_scene",
    "ingest_matrix",
    "inner_product_deviation",
    "isometry_constant",
    "lle_embed",
    "lpf_compress",
    "pairwise_distances",
    "pca_apply",
    "pca_fit",
    "planar_manifold_dataset",
    "procrustes_distance",
    "read_matrix",
    "sine_manifold",
    "sine_manifold_dataset",
    "serialize_operator",
    "solve_vorticity",
    "write_matrix",
    "__version__",
]
