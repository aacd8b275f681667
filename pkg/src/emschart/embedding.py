"""Semi-supervised t-SNE over a precomputed dissimilarity matrix.

Joint affinities come from perplexity-calibrated Gaussian kernels on the
dissimilarities; the latent space uses the one-degree-of-freedom Student-t
kernel. Labeled (anchor) points stay pinned to their physical coordinates at
every iteration while the rest follow momentum gradient descent on the KL
divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_Q_FLOOR = 1e-12
_GRAD_CLIP = 1e3


class NumericalError(RuntimeError):
    """Optimization produced a non-finite objective."""


@dataclass(frozen=True)
class TsneParams:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 100.0
    momentum: float = 0.8
    exaggeration: float = 1.0
    exaggeration_iters: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.perplexity <= 1.0:
            raise ValueError("perplexity must exceed 1")


@dataclass(eq=False)
class Embedding:
    """Latent coordinates plus anchor bookkeeping and the objective trace."""

    coords: np.ndarray  # (N, d_lat)
    is_anchor: np.ndarray  # (N,) bool
    anchor_targets: dict  # point index -> (d_lat,) coordinates
    kl_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_anchor)


def _row_affinity(sq_row, beta):
    """Unnormalized Gaussian row exp(-d^2 * beta), stabilized by the row min."""
    shifted = sq_row - sq_row.min()
    return np.exp(-shifted * beta)


def _row_perplexity(sq_row, beta):
    w = _row_affinity(sq_row, beta)
    total = w.sum()
    p = w / total
    nz = p > 0
    h_nats = -np.sum(p[nz] * np.log(p[nz]))
    return np.exp(h_nats)  # 2**(H in bits) == e**(H in nats)


def calibrate_sigmas(d: np.ndarray, perplexity: float, tol: float = 1e-4, max_iter: int = 100) -> np.ndarray:
    """Per-point kernel widths sigma_u matching the target perplexity.

    Bisection on log(sigma) per row until 2**H(p_.|u) is within ``tol`` of the
    target (or ``max_iter`` bisection steps).
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if not 1.0 < perplexity <= n - 1:
        raise ValueError(f"perplexity must lie in (1, {n - 1}], got {perplexity}")
    sigmas = np.empty(n)
    for u in range(n):
        sq = np.delete(d[u], u) ** 2
        if np.all(sq == 0.0):
            raise ValueError(f"point {u} has zero dissimilarity to every other point (duplicates?)")
        # beta = 1 / (2 sigma^2); perplexity decreases monotonically in beta.
        beta = 1.0 / np.mean(sq[sq > 0])
        lo, hi = None, None
        converged = False
        for _ in range(200):
            perp = _row_perplexity(sq, beta)
            if abs(perp - perplexity) <= tol:
                converged = True
                break
            if perp > perplexity:
                lo = beta
                if hi is not None:
                    break
                beta *= 2.0
            else:
                hi = beta
                if lo is not None:
                    break
                beta /= 2.0
        if not converged and lo is not None and hi is not None:
            for _ in range(max_iter):
                beta = np.sqrt(lo * hi)  # midpoint in log space
                perp = _row_perplexity(sq, beta)
                if abs(perp - perplexity) <= tol:
                    break
                if perp > perplexity:
                    lo = beta
                else:
                    hi = beta
        sigmas[u] = 1.0 / np.sqrt(2.0 * beta)
    return sigmas


def conditional_affinities(d: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Row-stochastic conditionals; row u holds p_{. | u} with width sigma_u."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    cond = np.zeros((n, n))
    for u in range(n):
        sq = np.delete(d[u], u) ** 2
        w = _row_affinity(sq, 1.0 / (2.0 * sigmas[u] ** 2))
        row = w / w.sum()
        cond[u, :u] = row[:u]
        cond[u, u + 1 :] = row[u:]
    return cond


def symmetrize(conditionals: np.ndarray) -> np.ndarray:
    """Joint affinities (C + C^T) / (2N); entries sum to one."""
    c = np.asarray(conditionals, dtype=float)
    return (c + c.T) / (2.0 * c.shape[0])


def _student_t_weights(coords: np.ndarray) -> np.ndarray:
    sq = np.sum(coords**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (coords @ coords.T)
    np.maximum(d2, 0.0, out=d2)
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    return w


def latent_affinities(coords: np.ndarray) -> np.ndarray:
    """Student-t joint affinities q over all distinct ordered pairs."""
    w = _student_t_weights(np.asarray(coords, dtype=float))
    return w / w.sum()


def kl_objective(p: np.ndarray, q: np.ndarray) -> float:
    """KL(P || Q) over pairs with p > 0, with q floored to avoid log(0)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("P and Q must have matching shapes")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], _Q_FLOOR))))


def kl_gradient(p: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Analytic gradient 4 * sum_{u'} (p - q) (z_u - z_u') / (1 + ||z_u - z_u'||^2)."""
    coords = np.asarray(coords, dtype=float)
    w = _student_t_weights(coords)
    q = w / w.sum()
    coeff = (np.asarray(p, dtype=float) - q) * w
    return 4.0 * (coeff.sum(axis=1)[:, None] * coords - coeff @ coords)


def _init_coords(n, anchors, seed, point_ids):
    """Unlabeled points start from a per-point seeded Gaussian around the
    anchor centroid, spread by a quarter of the anchor bounding-box diagonal."""
    targets = np.vstack(list(anchors.values()))
    d_lat = targets.shape[1]
    centroid = targets.mean(axis=0)
    diag = float(np.linalg.norm(targets.max(axis=0) - targets.min(axis=0)))
    spread = diag / 4.0 if diag > 0 else 1.0
    coords = np.empty((n, d_lat))
    for u in range(n):
        if u in anchors:
            coords[u] = anchors[u]
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, int(point_ids[u])]))
            coords[u] = centroid + spread * rng.standard_normal(d_lat)
    return coords


def run_stsne(d: np.ndarray, anchors: dict, params: TsneParams, callback=None, point_ids=None) -> Embedding:
    """Anchored t-SNE on a dissimilarity matrix.

    ``anchors`` maps point indices to latent-space coordinates that stay
    fixed throughout. Returns the best-objective iterate (which is the final
    one whenever descent is monotone) together with the full KL trace.
    ``point_ids`` overrides the per-point initialization seeds, defaulting to
    the point indices.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    anchors = {int(k): np.asarray(v, dtype=float) for k, v in anchors.items()}
    if not anchors:
        raise ValueError("at least one anchor is required")
    d_lat = next(iter(anchors.values())).shape[0]
    if any(v.shape != (d_lat,) for v in anchors.values()):
        raise ValueError("anchor coordinates must share one dimensionality")
    if len(anchors) < d_lat + 1:
        raise ValueError(f"need at least {d_lat + 1} anchors for a {d_lat}-D chart")
    if not params.perplexity < n - 1:
        raise ValueError(f"perplexity {params.perplexity} too large for {n} points")
    if point_ids is None:
        point_ids = np.arange(n)

    sigmas = calibrate_sigmas(d, params.perplexity)
    p = symmetrize(conditional_affinities(d, sigmas))
    p_opt = p * params.exaggeration if params.exaggeration_iters > 0 else p

    anchor_idx = np.array(sorted(anchors.keys()), dtype=int)
    anchor_targets = np.vstack([anchors[i] for i in anchor_idx])
    is_anchor = np.zeros(n, dtype=bool)
    is_anchor[anchor_idx] = True

    coords = _init_coords(n, anchors, params.seed, point_ids)
    coords[anchor_idx] = anchor_targets
    velocity = np.zeros_like(coords)
    trace = np.empty(params.iterations + 1)
    best_kl = np.inf
    best_coords = coords.copy()

    for it in range(params.iterations + 1):
        w = _student_t_weights(coords)
        q = w / w.sum()
        kl = kl_objective(p, q)
        if not np.isfinite(kl):
            raise NumericalError(f"objective became non-finite at iteration {it}")
        trace[it] = kl
        if kl < best_kl:
            best_kl = kl
            best_coords = coords.copy()
        if it == params.iterations:
            break

        p_t = p_opt if it < params.exaggeration_iters else p
        coeff = (p_t - q) * w
        grad = 4.0 * (coeff.sum(axis=1)[:, None] * coords - coeff @ coords)
        norms = np.linalg.norm(grad, axis=1)
        too_big = norms > _GRAD_CLIP
        if np.any(too_big):
            grad[too_big] *= (_GRAD_CLIP / norms[too_big])[:, None]

        velocity = params.momentum * velocity - params.learning_rate * grad
        velocity[anchor_idx] = 0.0
        coords = coords + velocity
        coords[anchor_idx] = anchor_targets
        if callback is not None:
            callback(it, coords)

    final = coords if trace[-1] <= trace[0] else best_coords
    return Embedding(coords=final, is_anchor=is_anchor, anchor_targets=anchors, kl_trace=trace)
