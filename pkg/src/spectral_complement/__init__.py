"""Spectral analysis of complementary item graphs and a low/mid-pass GCN
recommender with pair-dependent attention."""

from .data_io import (
    FeatureTable,
    SynthSpec,
    build_feature_matrix,
    equal_depth_binning,
    generate_synthetic,
    load_features,
    write_features,
    write_report,
)
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateSignalError,
    DivergenceError,
    InputError,
    ParseError,
    ReportIOError,
    SamplingError,
    SpectralComplementError,
)
from .estimator import ComplementRecommender
from .evaluation import (
    EdgeSplit,
    EvaluationReport,
    evaluate,
    metrics_from_ranks,
    rank_candidates,
    split_edges,
)
from .filters import FilterKind, SpectralFilter, apply_low_pass, apply_mid_pass, spectral_response
from .graph import (
    ItemGraph,
    build_graph,
    normalized_adjacency,
    normalized_laplacian,
    read_edge_list,
    spmm,
    write_edge_list,
)
from .model import (
    ModelParameters,
    ModelState,
    PairEmbedding,
    forward_filters,
    fuse,
    init_params,
    load_checkpoint,
    pair_embed,
    pairwise_attention,
    save_checkpoint,
    score,
    self_attention,
)
from .spectral import (
    SpectralDecomposition,
    SpectralReport,
    analyze_dataset,
    eigendecompose,
    graph_fourier,
    s_high_rayleigh,
    s_high_spectral,
    spectral_energy,
)
from .training import (
    TrainingConfig,
    TrainingTrace,
    gradient_check,
    gradients,
    pair_loss,
    sample_negatives,
    train,
)

__version__ = "0.1.0"
