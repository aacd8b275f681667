"""Point-wise chart quality metrics and quantile summaries.

Localization error, trustworthiness and continuity are computed over the
unlabeled points only. Neighborhood ranks can come from the feature-space
dissimilarity matrix (default) or from true positions. Quantiles use the
nearest-rank convention.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

# Rank used to weigh a violating neighbor. "classical" charges an intruder by
# its rank in the space it does not belong to (Venna-Kaski), which keeps the
# scores in [0, 1]; "literal" charges the rank in the neighborhood it was
# found in, which can exceed 1 and is kept only for comparison.
TW_VARIANTS = ("classical", "literal")

METRIC_NAMES = ("le", "neg_tw", "neg_ct")


def localization_error(estimated: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Euclidean error per point, in the chart's ground-plane coordinates."""
    est = np.atleast_2d(np.asarray(estimated, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    return np.linalg.norm(est - tru, axis=1)


def rank_neighbors(d: np.ndarray) -> np.ndarray:
    """Neighbor ranks per row: 1 = nearest; ties broken by ascending index.

    The diagonal (self) is excluded and left as rank 0.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    work = d.copy()
    np.fill_diagonal(work, np.inf)
    order = np.argsort(work, axis=1, kind="stable")
    ranks = np.zeros((n, n), dtype=int)
    rows = np.arange(n)[:, None]
    ranks[rows, order[:, : n - 1]] = np.arange(1, n)
    return ranks


def _eta(n: int, kappa: int) -> float:
    if not 1 <= kappa < (2 * n - 1) / 3:
        raise ValueError(f"kappa must satisfy 1 <= kappa < (2n-1)/3 = {(2 * n - 1) / 3:.2f}, got {kappa}")
    return 2.0 / (kappa * (2 * n - 3 * kappa - 1))


def trustworthiness(primary_ranks, latent_ranks, kappa: int, variant: str = "classical") -> np.ndarray:
    """Per-point trustworthiness: penalizes latent neighbors that are not
    primary-space neighbors (intrusions)."""
    pr = np.asarray(primary_ranks)
    lr = np.asarray(latent_ranks)
    n = pr.shape[0]
    eta = _eta(n, kappa)
    if variant not in TW_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    intruders = (lr >= 1) & (lr <= kappa) & (pr > kappa)
    penalty_rank = pr if variant == "classical" else lr
    penalties = np.where(intruders, penalty_rank - kappa, 0).sum(axis=1)
    return 1.0 - eta * penalties


def continuity(primary_ranks, latent_ranks, kappa: int, variant: str = "classical") -> np.ndarray:
    """Per-point continuity: penalizes primary-space neighbors missing from
    the latent neighborhood (extrusions)."""
    pr = np.asarray(primary_ranks)
    lr = np.asarray(latent_ranks)
    n = pr.shape[0]
    eta = _eta(n, kappa)
    if variant not in TW_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    missing = (pr >= 1) & (pr <= kappa) & (lr > kappa)
    penalty_rank = lr if variant == "classical" else pr
    penalties = np.where(missing, penalty_rank - kappa, 0).sum(axis=1)
    return 1.0 - eta * penalties


def quantile(values, alpha: float) -> float:
    """Nearest-rank alpha-quantile: the ceil(alpha * n)-th order statistic."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return float(vals[math.ceil(alpha * vals.size) - 1])


@dataclass(eq=False)
class MetricReport:
    """Per-point metrics over the unlabeled set plus their quantile table."""

    indices: np.ndarray  # original point indices of the unlabeled set
    le: np.ndarray
    tw: np.ndarray
    ct: np.ndarray
    kappa: int
    alphas: tuple
    quantiles: dict  # metric name -> {alpha: value}, minimization form

    def metric_values(self, metric: str) -> np.ndarray:
        if metric == "le":
            return self.le
        if metric in ("tw", "neg_tw"):
            return -self.tw
        if metric in ("ct", "neg_ct"):
            return -self.ct
        raise ValueError(f"unknown metric {metric!r}")


def metric_objective(report: MetricReport, metric: str, alpha: float) -> float:
    """Q_m(alpha) with TW/CT negated so that lower is better for all metrics."""
    return quantile(report.metric_values(metric), alpha)


def evaluate_embedding(
    d: np.ndarray,
    coords: np.ndarray,
    is_anchor: np.ndarray,
    truth: np.ndarray,
    kappa: int,
    alphas=(0.5, 0.9, 0.95),
    neighbor_source: str = "dissimilarity",
    tw_variant: str = "classical",
) -> MetricReport:
    """Compute LE/TW/CT over the unlabeled points of an embedding.

    ``d`` is the full feature-space dissimilarity matrix, ``truth`` the true
    ground-plane coordinates of all points. ``neighbor_source`` selects the
    primary space for TW/CT: the restricted dissimilarity matrix or true
    positions.
    """
    is_anchor = np.asarray(is_anchor, dtype=bool)
    unlabeled = np.flatnonzero(~is_anchor)
    if unlabeled.size == 0:
        raise ValueError("evaluation set is empty: every point is an anchor")
    coords = np.asarray(coords, dtype=float)
    truth = np.asarray(truth, dtype=float)

    le = localization_error(coords[unlabeled], truth[unlabeled])

    if neighbor_source == "dissimilarity":
        primary = np.asarray(d, dtype=float)[np.ix_(unlabeled, unlabeled)]
    elif neighbor_source == "position":
        sub = truth[unlabeled]
        primary = np.linalg.norm(sub[:, None, :] - sub[None, :, :], axis=2)
    else:
        raise ValueError(f"unknown neighbor source {neighbor_source!r}")
    sub_lat = coords[unlabeled]
    latent = np.linalg.norm(sub_lat[:, None, :] - sub_lat[None, :, :], axis=2)

    pr = rank_neighbors(primary)
    lr = rank_neighbors(latent)
    tw = trustworthiness(pr, lr, kappa, tw_variant)
    ct = continuity(pr, lr, kappa, tw_variant)

    values = {"le": le, "neg_tw": -tw, "neg_ct": -ct}
    table = {m: {float(a): quantile(values[m], a) for a in alphas} for m in METRIC_NAMES}
    return MetricReport(
        indices=unlabeled,
        le=le,
        tw=tw,
        ct=ct,
        kappa=kappa,
        alphas=tuple(alphas),
        quantiles=table,
    )


def write_metric_csv(path, report: MetricReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "le_m", "tw", "ct"])
        for i, idx in enumerate(report.indices):
            writer.writerow(
                [int(idx), f"{report.le[i]:.17g}", f"{report.tw[i]:.17g}", f"{report.ct[i]:.17g}"]
            )


def write_cdf_csv(path, values):
    """Empirical CDF samples of raw per-point values: `value, fraction`."""
    vals = np.sort(np.asarray(values, dtype=float))
    n = vals.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "fraction"])
        for i, v in enumerate(vals):
            writer.writerow([f"{v:.17g}", f"{(i + 1) / n:.17g}"])


def write_quantiles_json(path, report: MetricReport):
    payload = {m: {f"{a:g}": report.quantiles[m][a] for a in sorted(report.quantiles[m])} for m in METRIC_NAMES}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
