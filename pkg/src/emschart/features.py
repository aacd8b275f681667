"""Covariance CSI features and the Log-Euclidean dissimilarity matrix.

The per-point feature is a snapshot-averaged covariance of noisy received
vectors, diagonally loaded so its matrix logarithm exists; dissimilarity
between two points is the Frobenius norm of the difference of the logs.
"""

from __future__ import annotations

import struct

import numpy as np

LOADING_FACTOR = 1e-6
EIGENVALUE_FLOOR = 1e-12
_HERMITIAN_TOL = 1e-10

DISSIMILARITY_MAGIC = b"CCD1"


def estimate_covariance(channel, noise_power, tx_power, snapshots, rng) -> np.ndarray:
    """Sample covariance from noisy snapshots of one channel vector.

    Snapshots are y_t = h * s_t + n_t with unit-modulus QPSK symbols scaled
    to power ``tx_power`` and circular complex Gaussian noise with per-entry
    variance ``noise_power``. The 1/(T * tx_power) normalization makes the
    expectation h h^H + (noise_power/tx_power) I; a trace-scaled diagonal
    loading keeps the estimate positive definite.
    """
    if snapshots < 1:
        raise ValueError(f"snapshot count must be >= 1, got {snapshots}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    h = np.asarray(channel, dtype=complex)
    n = h.size
    amp = np.sqrt(tx_power)
    symbols = amp * np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=snapshots)))
    noise = np.sqrt(noise_power / 2.0) * (
        rng.standard_normal((snapshots, n)) + 1j * rng.standard_normal((snapshots, n))
    )
    y = symbols[:, None] * h[None, :] + noise
    r = (y.T @ y.conj()) / (snapshots * tx_power)
    r = 0.5 * (r + r.conj().T)
    return r + LOADING_FACTOR * (np.trace(r).real / n) * np.eye(n)


def _check_hermitian(r):
    r = np.asarray(r, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("expected a square matrix")
    defect = np.linalg.norm(r - r.conj().T)
    if defect > _HERMITIAN_TOL * max(1.0, np.linalg.norm(r)):
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
    return r


def matrix_log(r) -> np.ndarray:
    """Principal logarithm of a Hermitian positive definite matrix.

    Computed from the Hermitian eigendecomposition with eigenvalues floored
    at EIGENVALUE_FLOOR times the largest; the result is re-symmetrized so it
    is exactly Hermitian.
    """
    r = _check_hermitian(r)
    evals, evecs = np.linalg.eigh(r)
    top = evals[-1]
    if top <= 0:
        raise ValueError("matrix must be positive definite (largest eigenvalue <= 0)")
    evals = np.maximum(evals, EIGENVALUE_FLOOR * top)
    log_r = (evecs * np.log(evals)) @ evecs.conj().T
    return 0.5 * (log_r + log_r.conj().T)


def le_distance(r_a, r_b) -> float:
    """Log-Euclidean distance ||log R_a - log R_b||_F."""
    a = np.asarray(r_a)
    b = np.asarray(r_b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(matrix_log(a) - matrix_log(b)))


def dissimilarity_matrix(features) -> np.ndarray:
    """Pairwise Log-Euclidean distances; each matrix log is computed once."""
    features = list(features)
    if len(features) < 2:
        raise ValueError("need at least two features")
    logs = [matrix_log(f) for f in features]
    n = len(logs)
    d = np.zeros((n, n))
    for u in range(n):
        for v in range(u + 1, n):
            d[u, v] = d[v, u] = np.linalg.norm(logs[u] - logs[v])
    return d


def write_dissimilarity_cache(path, d: np.ndarray):
    """Binary cache: magic 'CCD1', u32 N_U, then the upper triangle
    (row-major, diagonal excluded) as little-endian float64."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity cache expects a square matrix")
    n = d.shape[0]
    upper = d[np.triu_indices(n, k=1)]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", DISSIMILARITY_MAGIC, n))
        fh.write(np.ascontiguousarray(upper, dtype="<f8").tobytes())


def read_dissimilarity_cache(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated dissimilarity cache header")
        magic, n = struct.unpack("<4sI", head)
        if magic != DISSIMILARITY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {DISSIMILARITY_MAGIC!r}")
        upper = np.frombuffer(fh.read(), dtype="<f8")
    expected = n * (n - 1) // 2
    if upper.size != expected:
        raise ValueError(f"{path}: expected {expected} entries, found {upper.size}")
    d = np.zeros((n, n))
    d[np.triu_indices(n, k=1)] = upper
    return d + d.T
