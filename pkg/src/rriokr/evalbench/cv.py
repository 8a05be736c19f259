"""Hyperparameter grids, fold plans and grid-search cross-validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

OBJECTIVES = ("val_mse_vs_y", "val_mse_vs_projected_y")


class CvError(ValueError):
    pass


def log_lambda_grid(lo_exp: float = -8, hi_exp: float = 1, num: int = 10) -> tuple:
    return tuple(float(v) for v in np.logspace(lo_exp, hi_exp, num))


def log_p_grid(n: int, base: float = 2.0) -> tuple:
    """Integer-log-spaced ranks ``round(base^k) <= n`` (deduplicated)."""
    if n < 1:
        raise CvError("n must be >= 1")
    if not base > 1:
        raise CvError("base must exceed 1")
    out, k = [], 0
    while True:
        v = int(round(base ** k))
        if v > n:
            break
        if not out or v > out[-1]:
            out.append(v)
        k += 1
    return tuple(out)


@dataclass(frozen=True)
class GridSpec:
    """Sorted search grids; the first entry wins ties."""

    lambda_grid: tuple = field(default_factory=log_lambda_grid)
    p_grid: tuple = (1,)

    def __post_init__(self):
        lg = tuple(float(v) for v in self.lambda_grid)
        pg = tuple(int(v) for v in self.p_grid)
        if not lg or not pg:
            raise CvError("grids must be nonempty")
        if any(v <= 0 for v in lg):
            raise CvError("lambda values must be positive")
        if any(v < 1 for v in pg):
            raise CvError("p values must be positive")
        if list(lg) != sorted(lg) or list(pg) != sorted(pg):
            raise CvError("grids must be sorted ascending")
        object.__setattr__(self, "lambda_grid", lg)
        object.__setattr__(self, "p_grid", pg)

    def check_n(self, n):
        if max(self.p_grid) > n:
            raise CvError(f"p grid reaches {max(self.p_grid)} > n={n}")

    def to_dict(self):
        return {"lambda_grid": list(self.lambda_grid), "p_grid": list(self.p_grid)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["lambda_grid"]), tuple(d.get("p_grid", (1,))))


@dataclass(frozen=True)
class CvPlan:
    """K-fold partitions (``holdout_fraction=None``) or repeated random holdouts."""

    outer_folds: int = 5
    inner_folds: Optional[int] = None
    repeats: int = 1
    holdout_fraction: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.holdout_fraction is None and self.outer_folds < 2:
            raise CvError("need at least 2 folds")
        if self.inner_folds is not None and self.inner_folds < 2:
            raise CvError("need at least 2 inner folds")
        if self.repeats < 1:
            raise CvError("repeats must be >= 1")
        if self.holdout_fraction is not None and not 0 < self.holdout_fraction < 1:
            raise CvError("holdout_fraction must lie in (0, 1)")

    def splits(self, n: int, seed=None):
        """List of ``(train_idx, val_idx)`` pairs, each sorted ascending."""
        rng = np.random.default_rng(self.seed if seed is None else seed)
        out = []
        for _ in range(self.repeats):
            perm = rng.permutation(n)
            if self.holdout_fraction is not None:
                n_val = int(round(self.holdout_fraction * n))
                if n_val < 1 or n_val >= n:
                    raise CvError(f"holdout of {n_val} rows out of {n} leaves an empty side")
                out.append((np.sort(perm[n_val:]), np.sort(perm[:n_val])))
                continue
            if n < self.outer_folds:
                raise CvError(f"cannot split {n} rows into {self.outer_folds} folds")
            for f in np.array_split(perm, self.outer_folds):
                val = np.sort(f)
                mask = np.ones(n, dtype=bool)
                mask[val] = False
                out.append((np.flatnonzero(mask), val))
        return out

    def inner(self, seed_offset: int = 1) -> "CvPlan":
        if self.inner_folds is None:
            raise CvError("plan has no inner loop")
        return CvPlan(self.inner_folds, None, 1, None, self.seed + seed_offset)

    def to_dict(self):
        return {"outer_folds": self.outer_folds, "inner_folds": self.inner_folds,
                "repeats": self.repeats, "holdout_fraction": self.holdout_fraction,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class CvResult:
    best_lambda: float
    best_p: Optional[int]
    mean: np.ndarray     # n_lambda x n_p
    stderr: np.ndarray
    grid: GridSpec
    objective: str

    def table(self):
        """Rows ``(lambda, p, mean, stderr)`` in grid order."""
        rows = []
        for i, lam in enumerate(self.grid.lambda_grid):
            for j, p in enumerate(self.grid.p_grid):
                rows.append((lam, p, float(self.mean[i, j]), float(self.stderr[i, j])))
        return rows

    def best_lambda_per_p(self):
        """``{p: lambda minimizing the score at that p}`` (smallest lambda on ties)."""
        idx = np.argmin(self.mean, axis=0)
        return {p: self.grid.lambda_grid[i] for p, i in zip(self.grid.p_grid, idx)}

    def __iter__(self):
        return iter((self.best_lambda, self.best_p, self.table()))


def select_min(mean):
    """Lexicographically first (lambda index, p index) attaining the minimum."""
    mean = np.asarray(mean, dtype=float)
    if not np.any(np.isfinite(mean)):
        raise CvError("no finite validation score")
    flat = np.where(np.isfinite(mean), mean, np.inf)
    i, j = np.unravel_index(int(np.argmin(flat)), flat.shape)  # argmin returns first hit
    return int(i), int(j)


def cross_validate(fold_scores: Callable, plan: CvPlan, grid: GridSpec, objective: str,
                   n: int) -> CvResult:
    """Grid search over ``lambda x p``.

    ``fold_scores(train_idx, val_idx, grid, objective)`` returns validation
    scores of shape ``(len(lambda_grid), len(p_grid))`` (a 1-d array over
    lambdas is broadcast across p). It must fit everything, projections
    included, on ``train_idx`` alone.
    """
    if objective not in OBJECTIVES:
        raise CvError(f"unknown objective {objective!r}")
    splits = plan.splits(n)
    shape = (len(grid.lambda_grid), len(grid.p_grid))
    scores = []
    for tr, va in splits:
        if len(tr) == 0 or len(va) == 0:
            raise CvError("empty fold")
        s = np.asarray(fold_scores(tr, va, grid, objective), dtype=float)
        if s.ndim == 1:
            s = np.repeat(s[:, None], shape[1], axis=1)
        if s.shape != shape:
            raise CvError(f"fold scores have shape {s.shape}, expected {shape}")
        scores.append(s)
    S = np.stack(scores)
    mean = S.mean(axis=0)
    k = S.shape[0]
    stderr = S.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(shape)
    i, j = select_min(mean)
    return CvResult(grid.lambda_grid[i], grid.p_grid[j], mean, stderr, grid, objective)
