"""Rank-p output projections estimated in Gram coordinates.

Every projection direction is kept as a combination of the training output
embeddings, ``v_l = sum_j G[j, l] psi(z_j)`` with ``G = output_coeffs``.
Coordinates of any output ``psi(z)`` are then ``<psi(z), v_l> = K_z(tr, z)^T G``,
so supervised and unsupervised projections expose the same interface and the
output feature map is never materialized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .spectral import eigh

REL_CUTOFF = 1e-12


class SubspaceError(ValueError):
    pass


@dataclass(frozen=True)
class SubspaceProjection:
    """Rank-p projection with directions expressed over training outputs.

    beta_coeffs      n x p, columns ``u_l / sqrt(mu_l)`` of the eigenproblem solved
    output_coeffs    n x p, directions as combinations of training ``psi(z_j)``
    UY_train         n x p, coordinates of the training outputs
    kept_eigenvalues eigenvalues of the empirical covariance of the vectors
                     whose span is estimated (1/n scaling)
    """

    rank_p: int
    requested_p: int
    beta_coeffs: np.ndarray
    output_coeffs: np.ndarray
    UY_train: np.ndarray
    kept_eigenvalues: np.ndarray
    provenance: str
    lam1: Optional[float] = None

    @property
    def n(self):
        return self.UY_train.shape[0]

    def coordinates(self, K_z_tr_c):
        """Coordinates (n_c x p) of outputs given their cross-Gram with training outputs."""
        K = np.asarray(K_z_tr_c, dtype=float)
        if K.ndim == 1:
            K = K[:, None]
        if K.shape[0] != self.n:
            raise SubspaceError(f"cross-Gram has {K.shape[0]} rows, projection expects {self.n}")
        return K.T @ self.output_coeffs

    def truncate(self, p: int) -> "SubspaceProjection":
        """Projection onto the leading ``p`` directions of this one."""
        if p < 0:
            raise SubspaceError("p must be >= 0")
        q = min(p, self.rank_p)
        return replace(self, rank_p=q, requested_p=p,
                       beta_coeffs=self.beta_coeffs[:, :q],
                       output_coeffs=self.output_coeffs[:, :q],
                       UY_train=self.UY_train[:, :q],
                       kept_eigenvalues=self.kept_eigenvalues[:q])


def _check_p(p, n):
    if int(p) != p or p < 0:
        raise SubspaceError(f"p must be a nonnegative integer, got {p}")
    p = int(p)
    if p > n:
        warnings.warn(f"p={p} exceeds n={n}; clamped to the effective rank", stacklevel=3)
    return p


def _top_modes(S, p):
    """Top-p eigenpairs of symmetric S above the relative floor."""
    dec = eigh(S)
    mu = dec.eigenvalues
    if mu.size == 0 or not mu[0] > 0:
        return mu[:0], dec.eigenvectors[:, :0]
    keep = int(np.sum(mu[:p] > REL_CUTOFF * mu[0]))
    return mu[:keep], dec.eigenvectors[:, :keep]


def supervised_projection_from_coefficients(A, K_z, p: int, lam1=None) -> SubspaceProjection:
    """Supervised subspace from the training coefficient matrix ``A`` (n x n).

    Column ``i`` of ``A`` holds ``alpha(x_i)``, so ``h(x_i) = sum_j A[j, i] psi(z_j)``
    and ``K_h = A^T K_z A`` is the Gram matrix of the fitted training predictions.
    """
    A = np.asarray(A, dtype=float)
    K_z = np.asarray(K_z, dtype=float)
    n = K_z.shape[0]
    if K_z.shape != (n, n) or A.shape[1] != n or A.shape[0] != n:
        raise SubspaceError(f"shape mismatch: A {A.shape}, K_z {K_z.shape}")
    p = _check_p(p, n)
    K_h = A.T @ K_z @ A
    mu, U = _top_modes(K_h, p)
    beta = U / np.sqrt(mu) if mu.size else U
    G = A @ beta
    UY = K_z @ G
    return SubspaceProjection(mu.size, p, beta, G, UY, mu / n, "supervised", lam1)


def fit_supervised_projection(W, K_x, K_z, p: int, lam1=None) -> SubspaceProjection:
    """Training phase of reduced-rank IOKR: ``K_h = W K_x K_z K_x W``, top-p modes.

    ``W`` is the ridge inverse of a model fitted with ``lam1``. The returned
    ``UY_train`` equals ``K_z W K_x beta``.
    """
    W = np.asarray(getattr(W, "W", W), dtype=float)
    K_x = np.asarray(K_x, dtype=float)
    if W.shape != K_x.shape:
        raise SubspaceError(f"W {W.shape} and K_x {K_x.shape} differ in shape")
    return supervised_projection_from_coefficients(W @ K_x, K_z, p, lam1)


def fit_unsupervised_projection(K_z, p: int) -> SubspaceProjection:
    """Kernel PCA on the training outputs (uncentered)."""
    K_z = np.asarray(K_z, dtype=float)
    n = K_z.shape[0]
    if K_z.shape != (n, n):
        raise SubspaceError(f"K_z must be square, got {K_z.shape}")
    p = _check_p(p, n)
    mu, U = _top_modes(K_z / n, p)
    beta = U / np.sqrt(n * mu) if mu.size else U
    UY = K_z @ beta
    return SubspaceProjection(mu.size, p, beta, beta, UY, mu, "unsupervised", None)


# --------------------------------------------------------------------------
# Explicit (finite-dimensional) projections
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExplicitProjection:
    """Orthonormal basis (d x p) of a projection in a finite output space."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    provenance: str

    @property
    def rank_p(self):
        return self.basis.shape[1]

    def coordinates(self, Y):
        return np.asarray(Y, dtype=float) @ self.basis

    def apply(self, Y):
        return self.coordinates(Y) @ self.basis.T

    def truncate(self, p):
        return ExplicitProjection(self.basis[:, :p], self.eigenvalues[:p], self.provenance)


def fit_oracle_projection(M_true, p: int) -> ExplicitProjection:
    """Top-p eigenvectors of the true signal covariance ``E[h*(x) h*(x)^T]``."""
    M = np.asarray(M_true, dtype=float)
    d = M.shape[0]
    if int(p) != p or p < 0 or p > d:
        raise SubspaceError(f"need 0 <= p <= d={d}, got {p}")
    dec = eigh(M)
    return ExplicitProjection(dec.eigenvectors[:, :int(p)], dec.eigenvalues[:int(p)], "oracle")


def fit_explicit_projection(V, p: int, provenance: str) -> ExplicitProjection:
    """Top-p eigenvectors of ``(1/n) sum_i v_i v_i^T`` for explicit rows ``v_i``.

    With ``V`` the fitted training predictions this is the supervised
    projection; with ``V`` the raw outputs it is the unsupervised one.
    """
    V = np.asarray(V, dtype=float)
    n, d = V.shape
    if int(p) != p or p < 0:
        raise SubspaceError(f"p must be a nonnegative integer, got {p}")
    dec = eigh(V.T @ V / n)
    mu = dec.eigenvalues
    keep = int(np.sum(mu[:int(p)] > REL_CUTOFF * mu[0])) if mu[0] > 0 else 0
    return ExplicitProjection(dec.eigenvectors[:, :keep], mu[:keep], provenance)


def reconstruction_residual(projection, outputs) -> float:
    """``(1/n) sum_i ||P v_i - v_i||^2`` for the training outputs.

    For a :class:`SubspaceProjection` pass the training output Gram ``K_z``;
    for an :class:`ExplicitProjection` pass the explicit outputs (n x d).
    Uses ``||P v||^2 = ||coords(v)||^2`` since ``P`` is an orthogonal projection.
    """
    if isinstance(projection, SubspaceProjection):
        K_z = np.asarray(outputs, dtype=float)
        if K_z.shape != (projection.n, projection.n):
            raise SubspaceError(f"K_z shape {K_z.shape} does not match n={projection.n}")
        sq = np.diag(K_z)
        proj = np.sum(projection.UY_train ** 2, axis=1)
    else:
        Y = np.asarray(outputs, dtype=float)
        if Y.shape[1] != projection.basis.shape[0]:
            raise SubspaceError("output dimension does not match the basis")
        sq = np.sum(Y ** 2, axis=1)
        proj = np.sum(projection.coordinates(Y) ** 2, axis=1)
    return float(np.mean(np.maximum(sq - proj, 0.0)))
