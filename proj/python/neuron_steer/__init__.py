"""Dual-criterion neuron selection and sparse activation steering."""

from ._core import (
    ActivationDump,
    DumpError,
    Error,
    InterventionConfig,
    IoError,
    LayerStats,
    NeuronSelection,
    ToyModel,
    ValidationError,
    apply_edits,
    assign_weights,
    build_config,
    census,
    cohens_d,
    compute_stats,
    evaluate_recovery,
    pca_layer,
    plant,
    quantile_threshold,
    read_dump,
    render_census,
    select,
    stats_from_csv,
    stats_to_csv,
    steering_vector,
    write_dump,
)

__version__ = "0.1.0"
