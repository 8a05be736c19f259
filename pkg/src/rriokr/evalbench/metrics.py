"""Evaluation metrics in output space and over label sets."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..kernels import KernelSpec, gram, kernel_diag


class MetricError(ValueError):
    pass


def _count(a, b, what):
    if len(a) != len(b):
        raise MetricError(f"{what}: {len(a)} predictions for {len(b)} targets")
    if len(a) == 0:
        raise MetricError(f"{what}: empty input")


def mse_explicit(pred, truth) -> float:
    """Mean of ``||pred_i - truth_i||^2`` over rows."""
    P = np.atleast_2d(np.asarray(pred, dtype=float))
    T = np.atleast_2d(np.asarray(truth, dtype=float))
    _count(P, T, "mse")
    if P.shape != T.shape:
        raise MetricError(f"shape mismatch {P.shape} vs {T.shape}")
    return float(np.mean(np.sum((P - T) ** 2, axis=1)))


def mse_kernel(alpha, K_z_train, K_z_train_test, k_test_diag) -> float:
    """Kernel-trick MSE of ``h(x) = sum_j alpha_j psi(z_j)`` against ``psi(y)``.

    ``alpha`` is n_tr x n_te (one column per test point); each term is
    ``alpha^T K alpha - 2 alpha^T k_y + k(y, y)``.
    """
    A = np.asarray(alpha, dtype=float)
    Kc = np.asarray(K_z_train_test, dtype=float)
    kd = np.asarray(k_test_diag, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
        Kc = Kc.reshape(-1, 1)
    _count(A.T, kd, "mse")
    if Kc.shape != A.shape:
        raise MetricError(f"cross-Gram {Kc.shape} does not match coefficients {A.shape}")
    quad = np.einsum("ij,ij->j", A, np.asarray(K_z_train, dtype=float) @ A)
    cross = np.einsum("ij,ij->j", A, Kc)
    return float(np.mean(quad - 2.0 * cross + kd))


def mse_projected(coords, target_coords, k_test_diag) -> float:
    """MSE of a projected predictor ``P h(x)`` given in p coordinates.

    ``coords`` are coordinates of ``P h(x_i)``, ``target_coords`` those of
    ``psi(y_i)`` on the same orthonormal directions.
    """
    C = np.atleast_2d(np.asarray(coords, dtype=float))
    U = np.atleast_2d(np.asarray(target_coords, dtype=float))
    kd = np.asarray(k_test_diag, dtype=float)
    _count(C, kd, "mse")
    if C.shape != U.shape:
        raise MetricError(f"coordinate shapes differ: {C.shape} vs {U.shape}")
    return float(np.mean(np.sum(C * C, axis=1) - 2.0 * np.sum(C * U, axis=1) + kd))


def mse_output_space(pred, truth, output_kernel: KernelSpec = None, Z_train=None) -> float:
    """Output-space MSE.

    Without a kernel, ``pred`` and ``truth`` are explicit vectors (rows).
    With ``output_kernel`` and ``Z_train``, ``pred`` holds coefficient columns
    over the training outputs (n_tr x n_te) and ``truth`` the raw test outputs.
    """
    if output_kernel is None:
        return mse_explicit(pred, truth)
    if Z_train is None:
        raise MetricError("kernel-trick MSE needs the training outputs")
    Zt = np.atleast_2d(np.asarray(truth, dtype=float))
    K = gram(output_kernel, Z_train)
    Kc = gram(output_kernel, Z_train, Zt)
    return mse_kernel(pred, K, Kc, kernel_diag(output_kernel, Zt))


def f1_example_based(true_sets: Sequence[Iterable[int]], pred_sets: Sequence[Iterable[int]]) -> float:
    """Mean per-example F1 ``2 |T & P| / (|T| + |P|)``.

    Both sets empty scores 1.0; exactly one empty scores 0.0.
    """
    _count(true_sets, pred_sets, "f1")
    total = 0.0
    for t, p in zip(true_sets, pred_sets):
        T, P = set(t), set(p)
        if not T and not P:
            total += 1.0
        elif T and P:
            total += 2.0 * len(T & P) / (len(T) + len(P))
    return total / len(true_sets)


def label_sets(Y) -> list:
    """Rows of a 0/1 matrix as sets of active label indices."""
    Y = np.asarray(Y)
    return [set(np.flatnonzero(row > 0.5).tolist()) for row in Y]


def topk_accuracy(ranked_ids, true_ids, k: int) -> float:
    """Fraction of examples whose true id is among the first ``k`` ranked ids."""
    if k < 1:
        raise MetricError(f"k must be >= 1, got {k}")
    _count(ranked_ids, true_ids, "top-k")
    hits = sum(1 for r, t in zip(ranked_ids, true_ids) if t in list(r)[:k])
    return hits / len(true_ids)


def label_threshold_decode(scores, threshold: float = 0.5) -> list:
    """Label ``j`` is predicted when ``score_j >= threshold``."""
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    return [set(np.flatnonzero(row >= threshold).tolist()) for row in S]
