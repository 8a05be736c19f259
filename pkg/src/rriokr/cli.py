"""Command-line entry point.

Commands: diagnose, synth, train, decode, bench-decode, eval.

Each command reads an optional TOML or JSON config, applies flag overrides,
writes the resolved config to ``<out>/resolved_config.json`` and then its
outputs. Re-running with ``--config <out>/resolved_config.json`` and the same
``--threads`` reproduces every CSV except ``*timings*`` files byte for byte.

Exit codes: 0 success, 1 usage, 2 data or config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .kernels import KernelError, KernelSpec, gram
from .regression import NumericalError, RegressionError, fit_krr
from .spectral import SpectralError, default_t_grid, fit_loglog_slope, source_condition_profile
from .structpred import DecodeError, ReducedDecoder, FullRankDecoder, make_candidate_set, timing_probe
from .subspace import SubspaceError, SubspaceProjection, fit_supervised_projection
from .synthgen import (SynthError, build_problem, finite_rank_recipe, gamma_to_beta,
                       make_multilabel, output_regularity_recipe, source_condition_recipe)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------

def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _kernel_from(obj, default=None):
    if obj is None:
        return default
    if isinstance(obj, KernelSpec):
        return obj
    return KernelSpec.from_dict(obj)


def _resolve(args, section_name):
    """Merge config file and flags into ``(top-level dict, section dict)``."""
    cfg = load_config(args.config) if args.config else {}
    section = dict(cfg.get(section_name, {}))
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise UsageError("a seed is required (config 'seed' or --seed)")
    threads = args.threads if args.threads is not None else cfg.get("threads", 1)
    out = args.out or cfg.get("out")
    if out is None:
        raise UsageError("an output directory is required (config 'out' or --out)")
    if args.lam is not None:
        section["lambda"] = args.lam
    if args.p is not None:
        section["p"] = args.p
    if args.kernel is not None or args.sigma2 is not None:
        k = dict(section.get("kernel_x") or {"family": "gaussian", "sigma2": 1.0})
        if args.kernel is not None:
            k["family"] = args.kernel
            if args.kernel == "linear":
                k["sigma2"] = None
            elif k.get("sigma2") is None:
                k["sigma2"] = 1.0
        if args.sigma2 is not None:
            k["sigma2"] = args.sigma2
        section["kernel_x"] = k
    top = {"command": args.command, "seed": int(seed), "threads": int(threads),
           "out": str(out)}
    return top, section


def _write_resolved(top, section_name, section):
    out = Path(top["out"])
    rio.write_json(out / "resolved_config.json", {**top, section_name: section})


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_diagnose(top, sec):
    """Source-condition profiles and slopes for ``H = (H0 C H0^T)^gamma H0``."""
    gammas = [float(g) for g in sec.setdefault("gammas", [0.0, 0.5, 1.5])]
    d = int(sec.setdefault("d", 200))
    n_points = int(sec.setdefault("n_points", 30))
    window = tuple(sec.setdefault("window", [0.2, 0.8]))
    out = Path(top["out"])
    prof_rows, slope_rows = [], []
    for g in gammas:
        prob = build_problem(source_condition_recipe(g, d=d, seed=top["seed"]))
        for side, (A, B) in (("output", (prob.M, prob.H)), ("input", (prob.C, prob.H.T))):
            grid = default_t_grid(A, n_points)
            prof = source_condition_profile(A, B, grid)
            fit = fit_loglog_slope(prof, window)
            prof_rows += [(g, side, t, v) for t, v in prof]
            expected = -gamma_to_beta(g) if side == "output" else None
            slope_rows.append((g, side, fit.slope, fit.intercept, fit.r_squared, expected))
        _log(f"diagnose: gamma={g} done")
    rio.write_csv(out / "profiles.csv", ("gamma", "side", "t", "value"), prof_rows)
    rio.write_csv(out / "slopes.csv",
                  ("gamma", "side", "slope", "intercept", "r_squared", "expected_slope"),
                  slope_rows)
    return sec


def _synth_config(top, sec):
    from .evalbench.experiments import SyntheticExperimentConfig
    recipe = sec.get("recipe")
    if recipe is not None:
        params = dict(sec.get("recipe_params", {}))
        params["seed"] = top["seed"]
        if recipe == "finite_rank":
            spec = finite_rank_recipe(**params)
        elif recipe == "output_regularity":
            spec = output_regularity_recipe(**params)
        else:
            raise ConfigError(f"unknown recipe {recipe!r}")
        body = {k: v for k, v in sec.items() if k not in ("recipe", "recipe_params", "p",
                                                          "lambda", "kernel_x")}
        body["spec"] = spec.to_dict()
    else:
        if "spec" not in sec:
            raise ConfigError("synth needs a 'spec' table or a 'recipe'")
        body = {k: v for k, v in sec.items() if k not in ("p", "lambda", "kernel_x")}
        body["spec"] = {**body["spec"], "seed": top["seed"]}
    body.setdefault("plan", {"outer_folds": 5})
    body["plan"] = {**body["plan"], "seed": top["seed"]}
    if "p" in sec:
        body["grid"] = {**body.get("grid", {}), "p_grid": [int(sec["p"])]}
    if "lambda" in sec:
        body["grid"] = {**body.get("grid", {}), "lambda_grid": [float(sec["lambda"])]}
    return SyntheticExperimentConfig.from_dict(body)


def cmd_synth(top, sec):
    from .evalbench.experiments import run_synthetic_experiment
    cfg = _synth_config(top, sec)
    _log(f"synth: d={cfg.spec.d} n_train={cfg.spec.n_train}")
    report = run_synthetic_experiment(cfg)
    report.write(top["out"])
    return sec


def _load_xy(sec):
    if "data" in sec:
        ds = rio.load_multilabel(sec["data"], sec.get("n_labels"))
        return ds.X, ds.Y
    if "inputs" in sec and "outputs" in sec:
        X = rio.load_dense_csv(sec["inputs"])
        Y = rio.load_dense_csv(sec["outputs"])
        if X.shape[0] != Y.shape[0]:
            raise rio.DataError(f"{X.shape[0]} input rows for {Y.shape[0]} output rows")
        return X, Y
    if "usps" in sec:
        return rio.load_usps_halves(sec["usps"])
    if "synthetic_multilabel" in sec:
        return make_multilabel(**sec["synthetic_multilabel"])
    raise ConfigError("no training data: give 'data', 'inputs'+'outputs', 'usps' "
                      "or 'synthetic_multilabel'")


def cmd_train(top, sec):
    """Fit reduced-rank IOKR and save the model bundle."""
    X, Y = _load_xy(sec)
    kx = _kernel_from(sec.get("kernel_x"))
    kz = _kernel_from(sec.get("kernel_z"))
    if kx is None:
        from .evalbench.experiments import median_sigma2
        kx = KernelSpec.gaussian(median_sigma2(X))
    if kz is None:
        kz = KernelSpec.gaussian(max(float(Y.sum(axis=1).mean()), 1e-3))
    lam = sec.get("lambda")
    lam1 = float(sec.get("lam1", lam if lam is not None else 1e-3))
    lam2 = float(sec.get("lam2", lam if lam is not None else lam1))
    p = int(sec.get("p", min(16, X.shape[0])))
    sec.update(kernel_x=kx.to_dict(), kernel_z=kz.to_dict(), lam1=lam1, lam2=lam2, p=p)
    Kx = gram(kx, X).entries
    Kz = gram(kz, Y).entries
    m1 = fit_krr(Kx, lam1)
    proj = fit_supervised_projection(m1, Kx, Kz, p, lam1=lam1)
    m2 = m1 if lam2 == lam1 else fit_krr(Kx, lam2)
    meta = {"kernel_x": kx.to_dict(), "kernel_z": kz.to_dict(), "lam1": lam1, "lam2": lam2,
            "p": p, "rank_p": proj.rank_p, "n": X.shape[0]}
    rio.save_bundle(Path(top["out"]) / "model.npz",
                    {"W": m2.W, "beta_coeffs": proj.beta_coeffs,
                     "output_coeffs": proj.output_coeffs, "UY_train": proj.UY_train,
                     "kept_eigenvalues": proj.kept_eigenvalues, "X_train": X, "Z_train": Y},
                    meta)
    _log(f"train: n={X.shape[0]} p={proj.rank_p} saved model.npz")
    return sec


def load_model(path):
    """``(W, projection, X_train, Z_train, kernel_x, kernel_z, meta)`` from a bundle."""
    a, meta = rio.load_bundle(path)
    proj = SubspaceProjection(int(meta["rank_p"]), int(meta["p"]), a["beta_coeffs"],
                              a["output_coeffs"], a["UY_train"], a["kept_eigenvalues"],
                              "supervised", meta["lam1"])
    return (a["W"], proj, a["X_train"], a["Z_train"], KernelSpec.from_dict(meta["kernel_x"]),
            KernelSpec.from_dict(meta["kernel_z"]), meta)


def cmd_decode(top, sec):
    """Rank candidates for each test input with a saved bundle."""
    for key in ("model", "inputs", "candidates"):
        if key not in sec:
            raise ConfigError(f"decode needs '{key}'")
    W, proj, Xtr, Ztr, kx, kz, meta = load_model(sec["model"])
    Xte = rio.load_dense_csv(sec["inputs"])
    C = rio.load_dense_csv(sec["candidates"])
    k = int(sec.setdefault("k", 1))
    variant = sec.setdefault("variant", "reduced")
    cset = make_candidate_set(kz, C)
    K_z_tr_c = gram(kz, Ztr, C).entries
    if variant == "reduced":
        dec = ReducedDecoder(W, proj, proj.coordinates(K_z_tr_c), cset)
    elif variant == "fullrank":
        dec = FullRankDecoder(W, K_z_tr_c, cset)
    else:
        raise ConfigError(f"unknown decode variant {variant!r}")
    K = gram(kx, Xte, Xtr).entries
    rows = []
    for i, kx_row in enumerate(K):
        r = dec.decode(kx_row, min(k, len(cset)))
        rows += [(i, rank + 1, int(j), float(dist))
                 for rank, (j, dist) in enumerate(zip(r.ranked_index, r.distances))]
    rio.write_csv(Path(top["out"]) / "predictions.csv",
                  ("test_index", "rank", "candidate_index", "distance"), rows)
    return sec


def cmd_bench_decode(top, sec):
    """Per-test-point decode timings for both variants over doubling ladders."""
    n = int(sec.setdefault("n", 2000))
    n_c = int(sec.setdefault("n_c", 5000))
    p = int(sec.setdefault("p", 16))
    repeats = int(sec.setdefault("repeats", 20))
    p_ladder = [int(v) for v in sec.setdefault("p_ladder", [p, 2 * p, 4 * p, 8 * p])]
    nc_ladder = [int(v) for v in sec.setdefault("n_c_ladder",
                                                [n_c // 8, n_c // 4, n_c // 2, n_c])]
    rows = []
    cases = [("fullrank", n, n_c, p), ("reduced", n, n_c, p)]
    cases += [("reduced", n, n_c, q) for q in p_ladder]
    cases += [("reduced", n, c, p) for c in nc_ladder]
    for variant, nn, cc, pp in cases:
        t = timing_probe(variant, nn, cc, pp, repeats=repeats, seed=top["seed"])
        rows.append((t.variant, t.n, t.n_c, t.p, t.median_ns, t.repeats))
        _log(f"bench-decode: {variant} n={nn} n_c={cc} p={pp} median={t.median_ns} ns")
    rio.write_csv(Path(top["out"]) / "decode_timings.csv",
                  ("variant", "n", "n_c", "p", "median_ns", "repeats"), rows)
    return sec


def cmd_eval(top, sec):
    """Structured benchmark: reduced-rank versus full-rank IOKR."""
    from .evalbench.cv import CvPlan, GridSpec, log_lambda_grid, log_p_grid
    from .evalbench.experiments import StructuredConfig, run_structured_experiment
    X, Y = _load_xy(sec)
    plan_d = {**sec.get("plan", {"outer_folds": 5}), "seed": top["seed"]}
    plan = CvPlan.from_dict(plan_d)
    g = sec.get("grid", {})
    grid = GridSpec(tuple(g.get("lambda_grid", log_lambda_grid())),
                    tuple(g.get("p_grid", log_p_grid(X.shape[0] // 2))))
    fixed = {k: sec.get(k) for k in ("lam1", "lam2", "lam_full")}
    if "lambda" in sec:
        for k in fixed:
            fixed[k] = fixed[k] if fixed[k] is not None else float(sec["lambda"])
    cfg = StructuredConfig(grid, plan, _kernel_from(sec.get("kernel_x")),
                           _kernel_from(sec.get("kernel_z")),
                           int(sec.get("inner_folds", 3)), tuple(sec.get("topk", (1, 5))),
                           fixed["lam1"], fixed["lam2"], sec.get("p"), fixed["lam_full"])
    _log(f"eval: n={X.shape[0]} labels={Y.shape[1]}")
    report = run_structured_experiment(X, Y, cfg, seed=top["seed"])
    report.write(top["out"])
    return sec


COMMANDS = {
    "diagnose": ("diagnose", cmd_diagnose),
    "synth": ("synth", cmd_synth),
    "train": ("train", cmd_train),
    "decode": ("decode", cmd_decode),
    "bench-decode": ("bench", cmd_bench_decode),
    "eval": ("eval", cmd_eval),
}


def build_parser():
    parser = _Parser(prog="rriokr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (section, fn) in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        sp.add_argument("--config", type=str, help="TOML or JSON config file")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
        sp.add_argument("--threads", type=int, help="BLAS threads (default 1)")
        sp.add_argument("--out", type=str, help="output directory")
        sp.add_argument("--lambda", dest="lam", type=float, help="ridge parameter")
        sp.add_argument("--p", type=int, help="projection rank")
        sp.add_argument("--kernel", choices=("gaussian", "linear", "gaussian_tanimoto"),
                        help="input kernel family")
        sp.add_argument("--sigma2", type=float, help="input kernel width")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    section_name, fn = COMMANDS[args.command]
    try:
        top, sec = _resolve(args, section_name)
        if top["threads"] < 1:
            raise UsageError("--threads must be >= 1")
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=top["threads"]):
            Path(top["out"]).mkdir(parents=True, exist_ok=True)
            resolved = fn(top, sec)
        _write_resolved(top, section_name, resolved)
    except UsageError as exc:
        _log(f"rriokr: usage error: {exc}")
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _log(f"rriokr: numeric failure: {exc}")
        return EXIT_NUMERIC
    except (rio.DataError, ConfigError, KernelError, SynthError, SpectralError,
            SubspaceError, DecodeError, RegressionError, KeyError, TypeError,
            ValueError) as exc:
        _log(f"rriokr: data error: {exc}")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
