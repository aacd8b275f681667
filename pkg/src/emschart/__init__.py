"""Channel charting over deterministic multipath scenes with passive
electromagnetic surfaces."""

from .channel import (
    EmsConfiguration,
    PathComponent,
    composite_channel,
    ems_link_channels,
    los_visible,
    path_gain,
    synthesize_channel,
    trace_direct_paths,
)
from .codebook import (
    Codebook,
    Codeword,
    SearchReport,
    dft_gradient_codebook,
    evaluate_configuration,
    exhaustive_search,
    greedy_search,
    single_panel_sweep,
    snell_phase_profile,
)
from .embedding import (
    Embedding,
    TsneParams,
    calibrate_sigmas,
    conditional_affinities,
    kl_gradient,
    kl_objective,
    latent_affinities,
    run_stsne,
    symmetrize,
)
from .features import (
    dissimilarity_matrix,
    estimate_covariance,
    le_distance,
    matrix_log,
)
from .metrics import (
    MetricReport,
    continuity,
    localization_error,
    metric_objective,
    quantile,
    rank_neighbors,
    trustworthiness,
)
from .pipeline import PipelineParams, build_link_bundle, channel_matrix, run_pipeline
from .scene import (
    AngularPair,
    AntennaArray,
    Blocker,
    EmsPanel,
    Scene,
    SceneError,
    array_response,
    element_pattern,
    load_scene,
    wave_vector,
)

__version__ = "0.1.0"
