"""Experiment drivers: synthetic reduced-rank study and structured prediction benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import io as rio
from ..kernels import KernelSpec, gram, kernel_diag
from ..regression import RidgePath, fit_krr
from ..spectral import eigh
from ..structpred import FullRankDecoder, ReducedDecoder, make_candidate_set
from ..subspace import (fit_explicit_projection, fit_oracle_projection,
                        fit_supervised_projection)
from ..synthgen import SyntheticProblemSpec, build_problem
from .cv import CvPlan, GridSpec, cross_validate, log_lambda_grid, log_p_grid, select_min
from .metrics import f1_example_based, label_sets, topk_accuracy

REPORT_FIELDS = ("experiment_id", "seed", "n", "p", "lam1", "lam2", "estimator",
                 "metric_name", "value", "timing_ns")


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentReport:
    """Append-only result rows plus named panel tables.

    Rows with a timing go to a separate ``*_timings.csv`` so the main CSV is
    a deterministic function of config and seed.
    """

    experiment_id: str
    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def add(self, seed, metric_name, value, n=None, p=None, lam1=None, lam2=None,
            estimator=None, timing_ns=None):
        self.rows.append({"experiment_id": self.experiment_id, "seed": int(seed), "n": n,
                          "p": p, "lam1": lam1, "lam2": lam2, "estimator": estimator,
                          "metric_name": metric_name,
                          "value": None if value is None else float(value),
                          "timing_ns": timing_ns})

    def add_table(self, name, header, rows):
        self.tables.setdefault(name, (tuple(header), []))[1].extend(rows)

    def select(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def value(self, **match):
        hits = self.select(**match)
        if len(hits) != 1:
            raise ExperimentError(f"{len(hits)} rows match {match}")
        return hits[0]["value"]

    def extend(self, other: "ExperimentReport"):
        self.rows.extend(other.rows)
        for name, (header, rows) in other.tables.items():
            self.add_table(name, header, rows)

    def write(self, out_dir, stem="report"):
        """Write ``stem.csv``, ``stem.jsonl``, ``stem_timings.csv`` and one CSV per table."""
        out = Path(out_dir)
        det = [r for r in self.rows if r["timing_ns"] is None]
        timed = [r for r in self.rows if r["timing_ns"] is not None]
        paths = [
            rio.write_csv(out / f"{stem}.csv", REPORT_FIELDS,
                          [[r[k] for k in REPORT_FIELDS] for r in det]),
            rio.write_jsonl(out / f"{stem}.jsonl", det),
        ]
        if timed:
            paths.append(rio.write_csv(out / f"{stem}_timings.csv", REPORT_FIELDS,
                                       [[r[k] for k in REPORT_FIELDS] for r in timed]))
        for name, (header, rows) in self.tables.items():
            paths.append(rio.write_csv(out / f"{name}.csv", header, rows))
        return paths


# --------------------------------------------------------------------------
# Synthetic study
# --------------------------------------------------------------------------

ESTIMATORS = ("krr", "supervised", "unsupervised", "oracle", "denoised")


@dataclass(frozen=True)
class SyntheticExperimentConfig:
    """What to run on top of a :class:`SyntheticProblemSpec`.

    ``validation`` chooses between K-fold CV on the training set (``"kfold"``)
    and the fixed held-out set of ``spec.n_val`` points (``"holdout"``).
    ``projections`` lists the projected estimators to evaluate.
    """

    spec: SyntheticProblemSpec
    grid: GridSpec
    plan: CvPlan = CvPlan(5)
    validation: str = "kfold"
    projections: tuple = ("supervised", "unsupervised", "oracle")
    denoised: bool = True
    experiment_id: str = "synthetic"

    def __post_init__(self):
        if self.validation not in ("kfold", "holdout"):
            raise ExperimentError(f"unknown validation mode {self.validation!r}")
        if self.validation == "holdout" and self.spec.n_val < 1:
            raise ExperimentError("holdout validation needs spec.n_val > 0")
        bad = set(self.projections) - {"supervised", "unsupervised", "oracle"}
        if bad:
            raise ExperimentError(f"unknown projections {sorted(bad)}")

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "grid": self.grid.to_dict(),
                "plan": self.plan.to_dict(), "validation": self.validation,
                "projections": list(self.projections), "denoised": self.denoised,
                "experiment_id": self.experiment_id}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        spec = SyntheticProblemSpec.from_dict(d.pop("spec"))
        g = d.pop("grid", None) or {}
        grid = GridSpec(tuple(g.get("lambda_grid", log_lambda_grid())),
                        tuple(g.get("p_grid", log_p_grid(min(spec.d, spec.n_train)))))
        plan = CvPlan.from_dict(d.pop("plan")) if "plan" in d else CvPlan(5, seed=spec.seed)
        if "projections" in d:
            d["projections"] = tuple(d["projections"])
        return cls(spec, grid, plan, **d)


class _FixedSplit:
    """Single split with the validation rows appended after the training rows."""

    def __init__(self, n_train, n_val):
        self.n_train, self.n_val = n_train, n_val

    def splits(self, n):
        return [(np.arange(self.n_train), np.arange(self.n_train, self.n_train + self.n_val))]


def _linear_gram(A, B=None):
    return gram(KernelSpec.linear(), A, B).entries


class _ExplicitRidge:
    """Ridge fits with explicit outputs on one train/eval split, any lambda."""

    def __init__(self, K_tr, K_ev_tr, Y_tr):
        self.path = RidgePath.from_gram(K_tr)
        self.QtY = self.path.rotate_outputs(Y_tr)
        self.KQ_ev = self.path.rotate_cross(K_ev_tr)
        self.KQ_tr = self.path.rotate_cross(K_tr)

    def eval(self, lam):
        return self.path.predict_explicit(self.KQ_ev, self.QtY, lam)

    def train(self, lam):
        return self.path.predict_explicit(self.KQ_tr, self.QtY, lam)


def _basis(kind, H_tr, Y_tr, M, pmax):
    if kind == "supervised":
        return fit_explicit_projection(H_tr, pmax, "supervised").basis
    if kind == "unsupervised":
        return fit_explicit_projection(Y_tr, pmax, "unsupervised").basis
    return fit_oracle_projection(M, min(pmax, M.shape[0])).basis


def _p_columns(p_grid, rank):
    # a rank-r basis with r < p projects like its full basis
    return np.array([min(p, rank) - 1 for p in p_grid])


def run_synthetic_experiment(cfg: SyntheticExperimentConfig) -> ExperimentReport:
    """Compare KRR with its supervised, unsupervised and oracle projections.

    Input kernel is linear and outputs are explicit vectors, so every fit
    reuses one eigendecomposition per split. Steps: lambda1 by validation MSE
    against ``y``; each projection fitted on the lambda1 training predictions
    (or raw outputs / true M); lambda2 per p by validation error against the
    projected outputs; test MSE of ``P h_lambda2`` for each p.
    """
    spec = cfg.spec
    grid = cfg.grid
    prob = build_problem(spec)
    ss = np.random.SeedSequence([spec.seed, 7])
    s_tr, s_te, s_va = ss.spawn(3)
    X, Y, Yc = prob.sample(spec.n_train, np.random.default_rng(s_tr))
    Xt, Yt, Yct = prob.sample(spec.n_test, np.random.default_rng(s_te))
    n, d = X.shape
    pmax = max(grid.p_grid)
    if pmax > d:
        raise ExperimentError(f"p grid reaches {pmax} > d={d}")

    if cfg.validation == "holdout":
        Xv, Yv, Ycv = prob.sample(spec.n_val, np.random.default_rng(s_va))
        X_all, Y_all, Yc_all = np.vstack([X, Xv]), np.vstack([Y, Yv]), np.vstack([Yc, Ycv])
        plan = _FixedSplit(n, spec.n_val)
    else:
        X_all, Y_all, Yc_all = X, Y, Yc
        plan = cfg.plan
    K_all = _linear_gram(X_all)
    N = X_all.shape[0]
    cache = {}

    def fits(tr, va, target):
        key = (tr.tobytes(), va.tobytes(), target)
        if key not in cache:
            T = Yc_all if target == "clean" else Y_all
            cache[key] = _ExplicitRidge(K_all[np.ix_(tr, tr)], K_all[np.ix_(va, tr)], T[tr])
        return cache[key]

    def lam_scores(target):
        T = Yc_all if target == "clean" else Y_all

        def f(tr, va, g, objective):
            r = fits(tr, va, target)
            return np.array([np.mean(np.sum((r.eval(l) - T[va]) ** 2, axis=1))
                             for l in g.lambda_grid])
        return f

    lam_grid_only = GridSpec(grid.lambda_grid, (1,))
    res1 = cross_validate(lam_scores("noisy"), plan, lam_grid_only, "val_mse_vs_y", N)
    lam1 = res1.best_lambda

    report = ExperimentReport(cfg.experiment_id)
    seed = spec.seed
    for lam, _, m, se in res1.table():
        report.add_table("lambda1_cv", ("lambda", "cv_mse", "stderr"), [(lam, m, se)])

    K = K_all[:n, :n]
    K_te = _linear_gram(Xt, X)
    full = _ExplicitRidge(K, K_te, Y)
    H_te = full.eval(lam1)
    mse_krr = np.mean(np.sum((H_te - Yct) ** 2, axis=1))
    mse_krr_y = np.mean(np.sum((H_te - Yt) ** 2, axis=1))
    report.add(seed, "test_mse_clean", mse_krr, n=n, lam1=lam1, estimator="krr")
    report.add(seed, "test_mse_noisy", mse_krr_y, n=n, lam1=lam1, estimator="krr")
    H_tr = full.train(lam1)

    mse_rows, lam2_rows = [], []
    mse_rows.append(("krr", None, lam1, None, float(mse_krr), float(mse_krr_y)))
    for kind in cfg.projections:
        def proj_scores(tr, va, g, objective, kind=kind):
            r = fits(tr, va, "noisy")
            B = _basis(kind, r.train(lam1), Y_all[tr], prob.M, pmax)
            cols = _p_columns(g.p_grid, B.shape[1])
            Yva = Y_all[va]
            U = Yva @ B
            base = np.mean(np.sum(Yva ** 2, axis=1))
            out = np.empty((len(g.lambda_grid), len(g.p_grid)))
            for i, l in enumerate(g.lambda_grid):
                R = r.eval(l) @ B
                if objective == "val_mse_vs_projected_y":
                    cs = np.cumsum(np.mean((R - U) ** 2, axis=0))
                    out[i] = cs[cols]
                else:
                    cs = np.cumsum(np.mean(R * R - 2.0 * R * U, axis=0))
                    out[i] = base + cs[cols]
            return out

        res2 = cross_validate(proj_scores, plan, grid, "val_mse_vs_projected_y", N)
        res_y = cross_validate(proj_scores, plan, grid, "val_mse_vs_y", N)
        lam2_by_p = res2.best_lambda_per_p()
        B = _basis(kind, H_tr, Y, prob.M, pmax)
        cols = _p_columns(grid.p_grid, B.shape[1])
        for j, p in enumerate(grid.p_grid):
            lam2 = lam2_by_p[p]
            Bp = B[:, :cols[j] + 1]
            P_te = (full.eval(lam2) @ Bp) @ Bp.T
            m_c = np.mean(np.sum((P_te - Yct) ** 2, axis=1))
            m_y = np.mean(np.sum((P_te - Yt) ** 2, axis=1))
            report.add(seed, "test_mse_clean", m_c, n=n, p=p, lam1=lam1, lam2=lam2, estimator=kind)
            report.add(seed, "test_mse_noisy", m_y, n=n, p=p, lam1=lam1, lam2=lam2, estimator=kind)
            i2 = grid.lambda_grid.index(lam2)
            report.add(seed, "cv_mse_projected", res2.mean[i2, j], n=n, p=p, lam1=lam1,
                       lam2=lam2, estimator=kind)
            mse_rows.append((kind, p, lam1, lam2, float(m_c), float(m_y)))
            lam2_rows.append((kind, p, lam2, float(res2.mean[i2, j]), float(res_y.mean[i2, j])))
        i, j = select_min(res_y.mean)
        report.add(seed, "selected_p", grid.p_grid[j], n=n, p=grid.p_grid[j], lam1=lam1,
                   lam2=grid.lambda_grid[i], estimator=kind)

    if cfg.denoised:
        res_d = cross_validate(lam_scores("clean"), plan, lam_grid_only, "val_mse_vs_y", N)
        lam_d = res_d.best_lambda
        D_te = _ExplicitRidge(K, K_te, Yc).eval(lam_d)
        m_c = np.mean(np.sum((D_te - Yct) ** 2, axis=1))
        m_y = np.mean(np.sum((D_te - Yt) ** 2, axis=1))
        report.add(seed, "test_mse_clean", m_c, n=n, lam1=lam_d, estimator="denoised")
        report.add(seed, "test_mse_noisy", m_y, n=n, lam1=lam_d, estimator="denoised")
        mse_rows.append(("denoised", None, lam_d, None, float(m_c), float(m_y)))

    report.add_table("mse_vs_p", ("estimator", "p", "lam1", "lam2", "test_mse_clean",
                                  "test_mse_noisy"),
                     mse_rows)
    report.add_table("lambda2_vs_p", ("estimator", "p", "lam2", "cv_mse_projected",
                                      "cv_mse_vs_y"), lam2_rows)
    mu_C = eigh(prob.C).eigenvalues
    mu_M = eigh(prob.M).eigenvalues
    mu_E = eigh(prob.E).eigenvalues
    report.add_table("setup_spectra", ("index", "mu_C", "mu_M", "mu_E"),
                     [(k + 1, float(a), float(b), float(c))
                      for k, (a, b, c) in enumerate(zip(mu_C, mu_M, mu_E))])
    return report


# --------------------------------------------------------------------------
# Structured prediction benchmark
# --------------------------------------------------------------------------

def median_sigma2(X, max_points: int = 1000) -> float:
    """Half the median pairwise squared distance (first ``max_points`` rows)."""
    A = np.asarray(X, dtype=float)[:max_points]
    sq = np.sum(A * A, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * A @ A.T
    vals = D[np.triu_indices(A.shape[0], 1)]
    vals = vals[vals > 0]
    if vals.size == 0:
        return 1.0
    return float(np.median(vals) / 2.0)


@dataclass(frozen=True)
class StructuredConfig:
    """Structured benchmark settings.

    ``lam1``/``lam2``/``p``/``lam_full`` fix hyperparameters when given;
    otherwise they are chosen by inner CV on output-space validation MSE
    (``lam1`` and the full-rank lambda against ``y``; ``lam2`` per p against
    the projected outputs, then p against ``y``). With ``tie_lambdas`` the
    reduced model uses ``lam2 = lam1`` and only p is searched.
    ``selection="f1"`` instead picks (lambda, p) by inner-CV decoding F1 with
    ``lam1 = lam2``, candidates being the inner training outputs.
    """

    grid: GridSpec
    plan: CvPlan
    kernel_x: Optional[KernelSpec] = None
    kernel_z: Optional[KernelSpec] = None
    inner_folds: int = 3
    topk: tuple = (1, 5)
    lam1: Optional[float] = None
    lam2: Optional[float] = None
    p: Optional[int] = None
    lam_full: Optional[float] = None
    tie_lambdas: bool = True
    selection: str = "f1"
    experiment_id: str = "structured"

    def __post_init__(self):
        if self.selection not in ("f1", "mse"):
            raise ExperimentError(f"unknown selection objective {self.selection!r}")


def _kernel_split(Kx, Kz, kz_diag, tr, va):
    return (Kx[np.ix_(tr, tr)], Kx[np.ix_(va, tr)], Kz[np.ix_(tr, tr)],
            Kz[np.ix_(tr, va)], kz_diag[va])


def _inner_select(Kx, Kz, kz_diag, grid, folds, seed, tie_lambdas=True):
    """``(lam_full, lam1, lam2, p)`` by inner CV with kernel-trick MSEs."""
    n = Kx.shape[0]
    plan = CvPlan(folds, seed=seed)
    lam_only = GridSpec(grid.lambda_grid, (1,))
    paths = {}

    def split(tr, va):
        key = (tr.tobytes(), va.tobytes())
        if key not in paths:
            Ktr, Kva, Kz_tr, Kz_tv, kd = _kernel_split(Kx, Kz, kz_diag, tr, va)
            path = RidgePath.from_gram(Ktr)
            # alpha(x_va) = Q diag(shrink) Q^T k  ->  keep Q^T k
            paths[key] = (path, path.rotate_cross(Kva).T, Kz_tr, Kz_tv, kd, Ktr)
        return paths[key]

    def mse_y(tr, va, g, objective):
        path, QtK, Kz_tr, Kz_tv, kd, _ = split(tr, va)
        out = []
        for l in g.lambda_grid:
            A = path.Q @ (path.shrink(l)[:, None] * QtK)
            quad = np.einsum("ij,ij->j", A, Kz_tr @ A)
            out.append(np.mean(quad - 2.0 * np.einsum("ij,ij->j", A, Kz_tv) + kd))
        return np.array(out)

    lam1 = cross_validate(mse_y, plan, lam_only, "val_mse_vs_y", n).best_lambda
    pmax = max(grid.p_grid)

    def proj(tr, va, g, objective):
        path, QtK, Kz_tr, Kz_tv, kd, Ktr = split(tr, va)
        proj_ = fit_supervised_projection(path.W(lam1), Ktr, Kz_tr, min(pmax, len(tr)))
        cols = _p_columns(g.p_grid, max(proj_.rank_p, 1))
        U = proj_.coordinates(Kz_tv)  # n_va x r
        out = np.empty((len(g.lambda_grid), len(g.p_grid)))
        for i, l in enumerate(g.lambda_grid):
            A = path.Q @ (path.shrink(l)[:, None] * QtK)
            C = A.T @ proj_.UY_train
            if objective == "val_mse_vs_projected_y":
                cs = np.cumsum(np.mean((C - U) ** 2, axis=0))
                out[i] = cs[cols] if cs.size else 0.0
            else:
                cs = np.cumsum(np.mean(C * C - 2.0 * C * U, axis=0))
                out[i] = np.mean(kd) + (cs[cols] if cs.size else 0.0)
        return out

    if tie_lambdas:
        g1 = GridSpec((lam1,), grid.p_grid)
        res_y = cross_validate(proj, plan, g1, "val_mse_vs_y", n)
        _, j = select_min(res_y.mean)
        return lam1, lam1, lam1, grid.p_grid[j]
    res2 = cross_validate(proj, plan, grid, "val_mse_vs_projected_y", n)
    res_y = cross_validate(proj, plan, grid, "val_mse_vs_y", n)
    _, j = select_min(res_y.mean)
    p = grid.p_grid[j]
    lam2 = res2.best_lambda_per_p()[p]
    return lam1, lam1, lam2, p


def _inner_select_f1(Kx, Kz, Y, grid, folds, seed):
    """``(lam_full, lam, lam, p)`` maximizing inner-CV example-based F1."""
    n = Kx.shape[0]
    plan = CvPlan(folds, seed=seed)
    pmax = max(grid.p_grid)
    full_scores, red_scores = [], []
    for tr, va in plan.splits(n):
        cand, rep = np.unique(Y[tr], axis=0, return_index=True)
        Kz_tr = Kz[np.ix_(tr, tr)]
        K_z_tr_c = Kz_tr[:, rep]  # candidates are the distinct training outputs
        N = np.diag(Kz_tr)[rep]
        truth = label_sets(Y[va])
        Ktr = Kx[np.ix_(tr, tr)]
        path = RidgePath.from_gram(Ktr)
        QtK = path.rotate_cross(Kx[np.ix_(va, tr)]).T
        fs = np.empty(len(grid.lambda_grid))
        rs = np.empty((len(grid.lambda_grid), len(grid.p_grid)))
        for i, lam in enumerate(grid.lambda_grid):
            A = path.Q @ (path.shrink(lam)[:, None] * QtK)  # n_tr x n_va
            D = N[None, :] - 2.0 * (A.T @ K_z_tr_c)
            fs[i] = f1_example_based(truth, label_sets(cand[np.argmin(D, axis=1)]))
            proj = fit_supervised_projection(path.W(lam), Ktr, Kz_tr, min(pmax, len(tr)))
            cols = _p_columns(grid.p_grid, max(proj.rank_p, 1))
            Uc = proj.coordinates(K_z_tr_c)  # n_c x r
            Uh = A.T @ proj.UY_train  # n_va x r
            for j, c in enumerate(cols):
                if proj.rank_p == 0:
                    D = np.repeat(N[None, :], len(va), axis=0)
                else:
                    D = N[None, :] - 2.0 * (Uh[:, :c + 1] @ Uc[:, :c + 1].T)
                rs[i, j] = f1_example_based(truth, label_sets(cand[np.argmin(D, axis=1)]))
        full_scores.append(fs)
        red_scores.append(rs)
    i_full, _ = select_min(-np.mean(full_scores, axis=0)[:, None])
    i, j = select_min(-np.mean(red_scores, axis=0))
    lam = grid.lambda_grid[i]
    return grid.lambda_grid[i_full], lam, lam, grid.p_grid[j]


def _decode_all(decoder, K_te_tr, kmax):
    ranked, t_total = [], 0
    for row in K_te_tr:
        r = decoder.decode(row, kmax)
        ranked.append(r.ranked_index)
        t_total += r.timing_ns
    return ranked, t_total


def run_structured_experiment(X, Y, cfg: StructuredConfig, seed: int = 0) -> ExperimentReport:
    """Reduced-rank versus full-rank IOKR on a multilabel problem.

    Candidates are the distinct training label vectors of each outer split.
    Reports example-based F1, RBF loss and top-k accuracy per split and
    their means; fit and decode times go to timing rows.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise ExperimentError(f"{X.shape[0]} inputs for {Y.shape[0]} outputs")
    kx = cfg.kernel_x or KernelSpec.gaussian(median_sigma2(X))
    lbar = float(Y.sum(axis=1).mean())
    kz = cfg.kernel_z or KernelSpec.gaussian(max(lbar, 1e-3))
    Kx = gram(kx, X).entries
    Kz = gram(kz, Y).entries
    kz_diag = kernel_diag(kz, Y)
    kmax = max(cfg.topk)
    report = ExperimentReport(cfg.experiment_id)
    per_split = {"reduced": [], "fullrank": []}
    n_all = X.shape[0]

    for s, (tr, te) in enumerate(cfg.plan.splits(n_all)):
        n = len(tr)
        if cfg.lam1 is None or cfg.lam2 is None or cfg.p is None or cfg.lam_full is None:
            g = GridSpec(cfg.grid.lambda_grid, tuple(q for q in cfg.grid.p_grid if q <= n))
            inner_seed = cfg.plan.seed + 101 * (s + 1)
            if cfg.selection == "f1":
                lf, l1, l2, p = _inner_select_f1(Kx[np.ix_(tr, tr)], Kz[np.ix_(tr, tr)], Y[tr],
                                                 g, cfg.inner_folds, inner_seed)
            else:
                lf, l1, l2, p = _inner_select(Kx[np.ix_(tr, tr)], Kz[np.ix_(tr, tr)],
                                              kz_diag[tr], g, cfg.inner_folds, inner_seed,
                                              cfg.tie_lambdas)
        lam_full = cfg.lam_full if cfg.lam_full is not None else lf
        lam1 = cfg.lam1 if cfg.lam1 is not None else l1
        lam2 = cfg.lam2 if cfg.lam2 is not None else l2
        p = cfg.p if cfg.p is not None else p

        cand, inv = np.unique(Y[tr], axis=0, return_inverse=True)
        cset = make_candidate_set(kz, cand)
        K_z_tr_c = gram(kz, Y[tr], cand).entries
        K_te_tr = Kx[np.ix_(te, tr)]
        Ktr = Kx[np.ix_(tr, tr)]
        Kz_tr = Kz[np.ix_(tr, tr)]
        # true candidate index of each test example, -1 when absent
        lookup = {row.tobytes(): i for i, row in enumerate(cand)}
        true_idx = [lookup.get(Y[i].tobytes(), -1) for i in te]

        t0 = time.perf_counter_ns()
        m_full = fit_krr(Ktr, lam_full)
        dec_full = FullRankDecoder(m_full, K_z_tr_c, cset)
        t_fit_full = time.perf_counter_ns() - t0

        t0 = time.perf_counter_ns()
        m1 = m_full if lam1 == lam_full else fit_krr(Ktr, lam1)
        proj = fit_supervised_projection(m1, Ktr, Kz_tr, p, lam1=lam1)
        m2 = m1 if lam2 == lam1 else fit_krr(Ktr, lam2)
        dec_red = ReducedDecoder(m2, proj, proj.coordinates(K_z_tr_c), cset)
        t_fit_red = time.perf_counter_ns() - t0

        for name, dec, t_fit, l1v, l2v, pv in (
                ("fullrank", dec_full, t_fit_full, lam_full, None, None),
                ("reduced", dec_red, t_fit_red, lam1, lam2, p)):
            ranked, t_dec = _decode_all(dec, K_te_tr, kmax)
            pred = cand[[r[0] for r in ranked]]
            f1 = f1_example_based(label_sets(Y[te]), label_sets(pred))
            kz_pred = kernel_diag(kz, pred)
            cross = np.array([gram(kz, Y[i:i + 1], pred[j:j + 1]).entries[0, 0]
                              for j, i in enumerate(te)])
            rbf = float(np.mean(kz_diag[te] + kz_pred - 2.0 * cross))
            kw = dict(n=n, p=pv, lam1=l1v, lam2=l2v, estimator=name)
            split_seed = cfg.plan.seed
            report.add(split_seed, f"f1[split={s}]", f1, **kw)
            report.add(split_seed, f"rbf_loss[split={s}]", rbf, **kw)
            accs = {}
            for k in cfg.topk:
                accs[k] = topk_accuracy([r.tolist() for r in ranked], true_idx, k)
                report.add(split_seed, f"top{k}[split={s}]", accs[k], **kw)
            report.add(split_seed, f"time_fit_ns[split={s}]", None, timing_ns=int(t_fit), **kw)
            report.add(split_seed, f"time_decode_ns_per_point[split={s}]", None,
                       timing_ns=int(t_dec // max(len(te), 1)), **kw)
            per_split[name].append({"f1": f1, "rbf_loss": rbf,
                                    **{f"top{k}": a for k, a in accs.items()}})

    summary = []
    for name, rows in per_split.items():
        for key in rows[0]:
            vals = np.array([r[key] for r in rows])
            se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            report.add(cfg.plan.seed, f"{key}_mean", vals.mean(), estimator=name)
            summary.append((name, key, float(vals.mean()), se, len(vals)))
    report.add_table("structured_summary", ("estimator", "metric", "mean", "stderr", "splits"),
                     summary)
    return report
