"""End-to-end pipeline: channels -> covariance features -> dissimilarities ->
anchored t-SNE -> metrics.

Randomness policy: everything derives from one root seed through fixed
streams so that re-runs are bit-identical and configurations are comparable.

  anchors          SeedSequence([root, 1])            (shared by all configs)
  covariance of u  SeedSequence([root, 2, *cfg, u])   (independent per config)
  t-SNE init of u  SeedSequence([root, 3, u])         (shared by all configs)

``cfg`` is a content hash of the panel phase vectors, so a search cell can be
reproduced by the file-based CLI stages from the codeword list alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import features
from .channel import EmsConfiguration, composite_channel, trace_direct_paths, synthesize_channel, _panel_incident, _panel_outgoing
from .embedding import Embedding, TsneParams, run_stsne
from .metrics import MetricReport, evaluate_embedding, metric_objective
from .scene import Scene

_STREAM_ANCHORS = 1
_STREAM_COVARIANCE = 2
_STREAM_TSNE_INIT = 3


@dataclass(frozen=True)
class PipelineParams:
    """Everything the pipeline needs besides the scene and the configuration."""

    tsne: TsneParams = field(default_factory=TsneParams)
    snapshots: int = 64
    supervision: float = 0.15
    kappa: int = 51
    alphas: tuple = (0.5, 0.9, 0.95)
    neighbor_source: str = "dissimilarity"
    tw_variant: str = "classical"

    def __post_init__(self):
        if not 0.0 < self.supervision < 1.0:
            raise ValueError("supervision ratio must lie in (0, 1)")
        if self.snapshots < 1:
            raise ValueError("snapshot count must be >= 1")
        for a in self.alphas:
            if not 0.0 < a <= 1.0:
                raise ValueError(f"alpha values must lie in (0, 1], got {a}")


@dataclass(eq=False)
class LinkBundle:
    """Phase-independent link channels, reusable across configurations."""

    direct: np.ndarray  # (N_U, N_BS)
    incident: tuple  # per panel: (N_U, L_j)
    outgoing: tuple  # per panel: (N_BS, L_j)


def build_link_bundle(scene: Scene) -> LinkBundle:
    bs_pattern = scene.bs_pattern()
    direct = np.vstack(
        [
            synthesize_channel(trace_direct_paths(scene, ue), scene.bs_array, scene.wavelength, bs_pattern)
            for ue in scene.test_points
        ]
    )
    incident = tuple(
        np.vstack([_panel_incident(scene, ue, j) for ue in scene.test_points])
        for j in range(scene.n_panels)
    )
    outgoing = tuple(_panel_outgoing(scene, j) for j in range(scene.n_panels))
    return LinkBundle(direct=direct, incident=incident, outgoing=outgoing)


def channel_matrix(bundle: LinkBundle, config: EmsConfiguration) -> np.ndarray:
    """Composite channels for every test point under one configuration."""
    h = bundle.direct.copy()
    for j, phi in enumerate(config.phases):
        if phi is None:
            continue
        h += (bundle.incident[j] * np.exp(1j * phi)[None, :]) @ bundle.outgoing[j].T
    return h


def select_anchors(n_points: int, ratio: float, seed: int) -> np.ndarray:
    """Seeded uniform sample (without replacement) of ceil(ratio * N_U) points."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("supervision ratio must lie in (0, 1)")
    count = math.ceil(ratio * n_points)
    if count >= n_points:
        raise ValueError("supervision ratio leaves no unlabeled points to evaluate")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_ANCHORS]))
    return np.sort(rng.choice(n_points, size=count, replace=False))


def covariance_features(channels: np.ndarray, scene: Scene, snapshots: int, seed: int, config: EmsConfiguration):
    cfg = config.entropy_words()
    out = []
    for u in range(channels.shape[0]):
        rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_COVARIANCE, *cfg, u]))
        out.append(features.estimate_covariance(channels[u], scene.noise_power, scene.tx_power, snapshots, rng))
    return out


def tsne_init_seed(seed: int) -> int:
    """Derived integer seed feeding the per-point t-SNE initialization streams."""
    return int(np.random.SeedSequence([seed, _STREAM_TSNE_INIT]).generate_state(1, np.uint64)[0])


@dataclass(eq=False)
class PipelineResult:
    channels: np.ndarray
    dissimilarity: np.ndarray
    anchors: np.ndarray
    embedding: Embedding
    report: MetricReport


def ground_truth_2d(scene: Scene) -> np.ndarray:
    """True chart coordinates: test-point positions with height dropped."""
    return scene.test_points[:, :2].copy()


def chart_embedding(d: np.ndarray, truth2d: np.ndarray, anchors: np.ndarray, params: PipelineParams, seed: int) -> Embedding:
    anchor_map = {int(i): truth2d[i] for i in anchors}
    tsne = replace(params.tsne, seed=tsne_init_seed(seed))
    return run_stsne(d, anchor_map, tsne)


def run_pipeline(
    scene: Scene,
    config: EmsConfiguration,
    params: PipelineParams,
    seed: int,
    bundle: LinkBundle = None,
) -> PipelineResult:
    """Full deterministic pipeline for one configuration and one root seed."""
    config.validate_for(scene)
    if bundle is None:
        bundle = build_link_bundle(scene)
    channels = channel_matrix(bundle, config)
    feats = covariance_features(channels, scene, params.snapshots, seed, config)
    d = features.dissimilarity_matrix(feats)
    truth2d = ground_truth_2d(scene)
    anchors = select_anchors(scene.n_points, params.supervision, seed)
    embedding = chart_embedding(d, truth2d, anchors, params, seed)
    report = evaluate_embedding(
        d,
        embedding.coords,
        embedding.is_anchor,
        truth2d,
        kappa=params.kappa,
        alphas=params.alphas,
        neighbor_source=params.neighbor_source,
        tw_variant=params.tw_variant,
    )
    return PipelineResult(channels=channels, dissimilarity=d, anchors=anchors, embedding=embedding, report=report)
