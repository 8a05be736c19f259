"""Kernel ridge regression with the separable operator-valued kernel k(x, x') I.

The estimator is ``h(x) = sum_i alpha_i(x) y_i`` with
``alpha(x) = (K + n lam I)^{-1} k_x``; outputs only ever enter through the
coefficients ``alpha``, so they may live in an infinite-dimensional RKHS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .kernels import KernelSpec

REL_CUTOFF = 1e-12


class RegressionError(ValueError):
    pass


class NumericalError(RegressionError):
    """A linear-algebra step failed on otherwise valid input."""


def _square(K, name="K_x"):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise RegressionError(f"{name} must be a nonempty square matrix, got {K.shape}")
    return K


@dataclass(frozen=True)
class RidgeModel:
    """Fitted KRR state. ``W = (K_x + n lam I)^{-1}``.

    ``coef`` maps a kernel column against the model basis to ``alpha``;
    for exact KRR it is ``W`` itself and the basis is the training set.
    """

    W: np.ndarray
    lam: float
    n: int
    kernel: Optional[KernelSpec] = None
    train_inputs: Optional[np.ndarray] = None

    @property
    def coef(self):
        return self.W

    @property
    def basis_size(self):
        return self.n

    def predict_coefficients(self, k_x):
        return predict_coefficients(self, k_x)

    def training_coefficients(self, K_x):
        """Columns ``alpha(x_i)`` for the training inputs: ``W K_x``."""
        return self.W @ np.asarray(K_x, dtype=float)


def fit_krr(K_x, lam: float, kernel: KernelSpec = None, train_inputs=None) -> RidgeModel:
    """Solve the ridge system by Cholesky factorization of ``K_x + n lam I``."""
    if not lam > 0:
        raise RegressionError(f"lambda must be > 0, got {lam}")
    K = _square(K_x)
    n = K.shape[0]
    A = 0.5 * (K + K.T) + n * lam * np.eye(n)
    try:
        cf = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"ridge system factorization failed: {exc}") from exc
    W = scipy.linalg.cho_solve(cf, np.eye(n))
    W = 0.5 * (W + W.T)
    X = None if train_inputs is None else np.asarray(train_inputs, dtype=float)
    return RidgeModel(W, float(lam), n, kernel, X)


def predict_coefficients(model, k_x):
    """``alpha(x) = coef @ k_x``; ``k_x`` may be one column or a matrix of columns."""
    k = np.asarray(k_x, dtype=float)
    if k.shape[0] != model.basis_size:
        raise RegressionError(
            f"kernel column has length {k.shape[0]}, model expects {model.basis_size}")
    return model.coef @ k


# --------------------------------------------------------------------------
# Nystrom
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NystromConfig:
    anchors: int
    seed: int = 0

    def sample(self, n):
        if not 1 <= self.anchors <= n:
            raise RegressionError(f"need 1 <= anchors <= n, got m={self.anchors}, n={n}")
        rng = np.random.default_rng(self.seed)
        return np.sort(rng.choice(n, size=self.anchors, replace=False))


@dataclass(frozen=True)
class NystromRidgeModel:
    """Nystrom KRR: ``alpha(x) = coef @ k_m(x)`` with ``k_m`` against the anchors.

    ``coef = K_nm (K_nm^T K_nm + n lam K_mm)^+`` restricted to the numerical
    range of ``K_mm``.
    """

    coef: np.ndarray  # n x m
    lam: float
    n: int
    anchor_idx: np.ndarray
    kernel: Optional[KernelSpec] = None
    train_inputs: Optional[np.ndarray] = None

    @property
    def basis_size(self):
        return self.coef.shape[1]

    def predict_coefficients(self, k_m):
        return predict_coefficients(self, k_m)

    def training_coefficients(self, K_nm):
        """Columns ``alpha(x_i)``; takes the n x m train/anchor block."""
        return self.coef @ np.asarray(K_nm, dtype=float).T


def fit_krr_nystrom(K_mm, K_nm, lam: float, cfg: NystromConfig, anchor_idx=None,
                    kernel=None, train_inputs=None) -> NystromRidgeModel:
    if not lam > 0:
        raise RegressionError(f"lambda must be > 0, got {lam}")
    K_mm = _square(K_mm, "K_mm")
    K_nm = np.asarray(K_nm, dtype=float)
    n, m = K_nm.shape
    if m != K_mm.shape[0]:
        raise RegressionError(f"K_nm has {m} columns but K_mm is {K_mm.shape}")
    if m > n:
        raise RegressionError(f"more anchors than points: m={m} > n={n}")
    if cfg.anchors != m:
        raise RegressionError(f"config requests {cfg.anchors} anchors, blocks have {m}")
    # features phi = K_nm T with T = V s^{-1/2} on the kept spectrum of K_mm
    w, V = np.linalg.eigh(0.5 * (K_mm + K_mm.T))
    keep = w > REL_CUTOFF * max(w.max(), 0.0)
    if not keep.any():
        raise NumericalError("anchor Gram matrix has no positive spectrum")
    T = V[:, keep] / np.sqrt(w[keep])
    Phi = K_nm @ T
    G = Phi.T @ Phi
    G[np.diag_indices_from(G)] += n * lam
    inner = scipy.linalg.solve(G, T.T, assume_a="pos")  # r x m
    coef = Phi @ inner
    idx = np.arange(m) if anchor_idx is None else np.asarray(anchor_idx)
    X = None if train_inputs is None else np.asarray(train_inputs, dtype=float)
    return NystromRidgeModel(coef, float(lam), n, idx, kernel, X)


# --------------------------------------------------------------------------
# Ridge path over many lambdas from one eigendecomposition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RidgePath:
    """``K_x = Q diag(s) Q^T`` computed once; each lambda is then a diagonal rescale.

    Used by grid searches where refactorizing per lambda would dominate.
    Typical use with explicit outputs ``Y`` (n x d)::

        path = RidgePath.from_gram(K)
        QtY = path.rotate_outputs(Y)
        KQ = path.rotate_cross(K_eval_train)
        Y_hat = path.predict_explicit(KQ, QtY, lam)
    """

    Q: np.ndarray
    s: np.ndarray
    n: int

    @classmethod
    def from_gram(cls, K_x):
        K = _square(K_x)
        s, Q = np.linalg.eigh(0.5 * (K + K.T))
        return cls(Q, np.clip(s, 0.0, None), K.shape[0])

    def shrink(self, lam):
        if not lam > 0:
            raise RegressionError(f"lambda must be > 0, got {lam}")
        return 1.0 / (self.s + self.n * lam)

    def W(self, lam):
        return (self.Q * self.shrink(lam)) @ self.Q.T

    def rotate_outputs(self, Y):
        return self.Q.T @ np.asarray(Y, dtype=float)

    def rotate_cross(self, K_eval_train):
        """``K_eval_train`` is (n_eval x n): one kernel row per evaluation point."""
        return np.asarray(K_eval_train, dtype=float) @ self.Q

    def predict_explicit(self, KQ, QtY, lam):
        return KQ @ (self.shrink(lam)[:, None] * QtY)


# --------------------------------------------------------------------------
# Theory-driven schedules
# --------------------------------------------------------------------------

def theory_lambda2(S_pE: float, n: int) -> float:
    """``max(S_p(E)^{1/2} n^{-1/2}, 1/n)``; the kappa/delta branch is not observable."""
    if n < 1:
        raise RegressionError("n must be >= 1")
    if S_pE < 0:
        raise RegressionError("S_p(E) must be >= 0")
    return max(np.sqrt(S_pE) / np.sqrt(n), 1.0 / n)


def theory_lambda1(mu_next: float, beta: float, n: int) -> float:
    """``mu_{p+1}(M)^{-(1 - beta)/2} n^{-1/2}``."""
    if not mu_next > 0:
        raise RegressionError(f"mu_{{p+1}}(M) must be > 0, got {mu_next}")
    if n < 1:
        raise RegressionError("n must be >= 1")
    if not 0 <= beta <= 1:
        raise RegressionError(f"beta must be in [0, 1], got {beta}")
    return float(mu_next ** (-(1.0 - beta) / 2.0) / np.sqrt(n))
