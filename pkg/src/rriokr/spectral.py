"""Symmetric eigendecompositions, fractional powers and source-condition profiles.

The profiles measured here are the log-log curves

    t -> ||(M + t I)^{-1/2} H||_op^2      (output source condition)
    t -> ||H (C + t I)^{-1/2}||_op^2      (input source condition)

whose slope on the intermediate range of ``t`` estimates the regularity
exponent (a beta-regular profile decays like ``t^-beta``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REL_CUTOFF = 1e-12


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns
    source_dim: int

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    n_points: int


def _symmetrize(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise SpectralError("matrix has non-finite entries")
    return 0.5 * (A + A.T)


def _fix_signs(V):
    # first component above round-off made positive, column by column
    tol = 1e-12
    idx = np.argmax(np.abs(V) > tol, axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigh(A) -> SpectralDecomposition:
    """Descending eigenpairs of the symmetric part ``(A + A^T) / 2``."""
    S = _symmetrize(A)
    w, V = np.linalg.eigh(S)
    w = w[::-1].copy()
    V = _fix_signs(V[:, ::-1])
    return SpectralDecomposition(w, np.ascontiguousarray(V), S.shape[0])


def _power_values(w, gamma, rel_cutoff):
    lmax = w.max() if w.size else 0.0
    keep = w > rel_cutoff * lmax if lmax > 0 else np.zeros_like(w, dtype=bool)
    out = np.zeros_like(w)
    out[keep] = w[keep] ** gamma
    return out


def matrix_power(A, gamma: float, rel_cutoff: float = REL_CUTOFF) -> np.ndarray:
    """``A^gamma`` for symmetric PSD ``A``, acting on the range of ``A``.

    Eigenvalues at or below ``rel_cutoff * lambda_max`` map to 0, so
    ``gamma = 0`` yields the orthogonal projector onto the range.
    """
    if gamma < 0:
        raise SpectralError(f"gamma must be >= 0, got {gamma}")
    if not 0 < rel_cutoff < 1:
        raise SpectralError("rel_cutoff must lie in (0, 1)")
    dec = eigh(A)
    f = _power_values(dec.eigenvalues, gamma, rel_cutoff)
    V = dec.eigenvectors
    out = (V * f) @ V.T
    return 0.5 * (out + out.T)


class _WhitenedNorm:
    """Caches the eigendecomposition of M so a whole t-grid costs one eigh."""

    def __init__(self, M, H):
        M = _symmetrize(M)
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != M.shape[0]:
            raise SpectralError(
                f"H must have {M.shape[0]} rows to match M, got shape {H.shape}")
        w, V = np.linalg.eigh(M)
        self.w = np.clip(w, 0.0, None)
        self.G = V.T @ H

    def __call__(self, t):
        if not t > 0:
            raise SpectralError(f"t must be > 0, got {t}")
        if not np.any(self.G):
            return 0.0
        B = self.G / np.sqrt(self.w + t)[:, None]
        # squared top singular value of B
        if B.shape[0] <= B.shape[1]:
            return float(np.linalg.eigvalsh(B @ B.T)[-1])
        return float(np.linalg.eigvalsh(B.T @ B)[-1])


def shifted_whitened_norm(M, H, t: float) -> float:
    """``||(M + t I)^{-1/2} H||_op^2``, the top eigenvalue of ``H^T (M + tI)^{-1} H``."""
    return _WhitenedNorm(M, H)(t)


def source_condition_profile(M, H, t_grid):
    """Pairs ``(t, ||(M + t)^{-1/2} H||^2)`` over ``t_grid``.

    For the input-side quantity ``||H (C + t)^{-1/2}||^2`` call with ``(C, H.T)``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(t_grid <= 0):
        raise SpectralError("t_grid must be a nonempty list of positive reals")
    f = _WhitenedNorm(M, H)
    return [(float(t), f(t)) for t in t_grid]


def default_t_grid(M, n_points: int = 30, upper_index: int = 2, lower_index=None):
    """Log-spaced grid between two eigenvalues of ``M``.

    The grid spans ``[mu_lo(M), mu_hi(M)]`` with ``hi = upper_index`` and
    ``lo = ceil(d / 10)`` by default. Anchoring the grid to the spectrum keeps
    it clear of the large-t regime (where every profile decays like 1/t) and
    of the small-t plateau below the smallest eigenvalues.
    """
    w = np.linalg.eigvalsh(_symmetrize(M))[::-1]
    d = w.size
    if lower_index is None:
        lower_index = max(int(np.ceil(d / 10)), upper_index + 2)
    lower_index = min(lower_index, d)
    hi, lo = w[upper_index - 1], w[lower_index - 1]
    if not hi > 0:
        raise SpectralError("matrix has no positive spectrum to anchor a t-grid")
    if not lo > REL_CUTOFF * w[0]:
        lo = hi * 1e-6
    if lo >= hi:
        lo = hi * 1e-2
    return np.logspace(np.log10(lo), np.log10(hi), n_points)


def fit_loglog_slope(profile, window_fraction=(0.2, 0.8)) -> SlopeFit:
    """Least-squares line through ``(log t, log value)`` on a sub-window.

    ``window_fraction`` selects the part of the log-t range used, as
    fractions from the small-t end; the default keeps the middle 60%.
    A profile decaying like ``t^-beta`` gives ``slope ~ -beta``.
    """
    pts = np.asarray(profile, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise SpectralError("profile must be a list of (t, value) pairs")
    lo, hi = window_fraction
    if not 0 <= lo < hi <= 1:
        raise SpectralError(f"degenerate window fraction {window_fraction}")
    t, v = pts[:, 0], pts[:, 1]
    if np.any(t <= 0):
        raise SpectralError("t values must be positive")
    lt = np.log(t)
    a, b = lt.min(), lt.max()
    t_lo, t_hi = a + lo * (b - a), a + hi * (b - a)
    mask = (lt >= t_lo - 1e-12) & (lt <= t_hi + 1e-12)
    if mask.sum() < 4:
        raise SpectralError(f"need >= 4 points in the window, got {mask.sum()}")
    if np.any(v[mask] <= 0):
        raise SpectralError("profile values must be positive inside the window")
    x, y = lt[mask], np.log(v[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), (float(np.exp(t_lo)), float(np.exp(t_hi))),
                    float(r2), int(mask.sum()))


def haar_orthogonal(d: int, seed) -> np.ndarray:
    """Haar-distributed orthogonal ``d x d`` matrix (QR with sign-corrected columns)."""
    if int(d) != d or d <= 0:
        raise SpectralError(f"d must be a positive integer, got {d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Z = rng.standard_normal((int(d), int(d)))
    Q, R = np.linalg.qr(Z)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s
