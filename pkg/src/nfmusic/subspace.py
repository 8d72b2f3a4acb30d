"""Sample covariance, sliding-subarray snapshot augmentation, and noise subspace."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .signal import SnapshotBlock

HERMITIAN_RTOL = 1e-10


@dataclass(frozen=True)
class SmoothingInfo:
    """Subarray bookkeeping: shift budget c_r, shifts per axis T, subarray side N_d."""

    c_r: int
    t_factor: int
    n_d: int


@dataclass(frozen=True)
class CovarianceEstimate:
    """Hermitian PSD sample covariance with its effective snapshot count."""

    matrix: np.ndarray
    snapshot_count: int
    smoothing: Optional[SmoothingInfo] = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NoiseSubspace:
    """Orthonormal eigenvectors spanning the smallest-eigenvalue subspace.

    ``matrix`` is M x (M - k_sources); its columns are the eigenvectors of the
    covariance associated with the M - K smallest eigenvalues.
    """

    matrix: np.ndarray
    k_sources: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def sample_covariance(snapshots) -> CovarianceEstimate:
    """Average outer products (1/L) sum_l q_l q_l^H.

    Args:
        snapshots: Sequence of length-M vectors, or an (L, M) array with one
            snapshot per row.
    """
    x = np.atleast_2d(np.asarray(snapshots, dtype=complex))
    if x.size == 0:
        raise ValueError("at least one snapshot required")
    count = x.shape[0]
    r = x.T @ x.conj() / count
    r = 0.5 * (r + r.conj().T)
    return CovarianceEstimate(matrix=r, snapshot_count=count)


def extract_subarrays(q_matrix: np.ndarray, c_r: int) -> np.ndarray:
    """Vectorize every shifted square subarray of a received-signal matrix.

    Args:
        q_matrix: (s, s) matrix of per-element samples, entry (n, m) being the
            element in row n, column m of the planar array.
        c_r: Shift budget; the subarray side is N_d = s - c_r and there are
            T**2 = (c_r + 1)**2 subarrays.

    Returns:
        (T**2, N_d**2) array; row index runs over (t_x, t_y) with t_y fastest,
        and each row is the subarray flattened row-major.
    """
    q_matrix = np.asarray(q_matrix)
    if q_matrix.ndim != 2 or q_matrix.shape[0] != q_matrix.shape[1]:
        raise ValueError("expected a square per-element sample matrix")
    side = q_matrix.shape[0]
    if c_r < 0 or c_r >= side:
        raise ValueError(f"c_r must lie in [0, {side - 1}], got {c_r}")
    n_d = side - c_r
    t = c_r + 1
    out = np.empty((t * t, n_d * n_d), dtype=q_matrix.dtype)
    for tx in range(t):
        for ty in range(t):
            out[tx * t + ty] = q_matrix[tx : tx + n_d, ty : ty + n_d].reshape(-1)
    return out


def smoothed_covariance(block: SnapshotBlock, c_r: int) -> CovarianceEstimate:
    """Sample covariance over all L * T**2 subarray snapshots of a block."""
    n = block.n_antennas
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError("snapshot length must be a perfect square")
    pieces = [
        extract_subarrays(block.received[:, l].reshape(side, side), c_r)
        for l in range(block.received.shape[1])
    ]
    stacked = np.vstack(pieces)
    base = sample_covariance(stacked)
    info = SmoothingInfo(c_r=c_r, t_factor=c_r + 1, n_d=side - c_r)
    return CovarianceEstimate(
        matrix=base.matrix, snapshot_count=stacked.shape[0], smoothing=info
    )


def hermitian_eig(r) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Accepts a CovarianceEstimate or a raw matrix.  Rejects inputs whose
    Hermitian defect exceeds ``HERMITIAN_RTOL`` relative to the matrix norm.
    """
    m = np.asarray(r.matrix if isinstance(r, CovarianceEstimate) else r)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.linalg.norm(m)
    if scale > 0 and np.linalg.norm(m - m.conj().T) > HERMITIAN_RTOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def noise_subspace(r: CovarianceEstimate, k_sources: int) -> NoiseSubspace:
    """Eigenvectors of the M - K smallest eigenvalues of the covariance."""
    m = r.dim
    if not 0 < k_sources < m:
        raise ValueError(f"source count must lie in (0, {m}), got {k_sources}")
    _, vecs = hermitian_eig(r)
    return NoiseSubspace(matrix=vecs[:, : m - k_sources], k_sources=k_sources)
