"""Synthetic least-squares problems with controlled output regularity.

A problem is ``y = H x + eps`` in ``R^d`` with ``x ~ N(0, Sigma_x)`` and
``eps ~ N(0, E)``. ``C``, ``E`` and (optionally) ``H H^T`` get prescribed
spectra with Haar-random eigenvectors; ``H`` can also be built as
``(H0 C H0^T)^gamma H0`` to tune the output source condition.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .spectral import haar_orthogonal, matrix_power, eigh


class SynthError(ValueError):
    pass


PROFILE_KINDS = ("polynomial", "finite_rank", "exponential", "explicit", "zero")
H_MODES = ("gaussian_H0", "powered", "diagonal", "spectral")
X_LAWS = ("standard_normal", "normal_with_cov_C")


@dataclass(frozen=True)
class SpectralProfile:
    """Eigenvalue recipe.

    polynomial   scale * p^-rate
    finite_rank  value for p <= rank, else 0
    exponential  scale * exp(-rate * p)
    explicit     the given list (padded with zeros)
    zero         all zeros
    """

    kind: str
    rate: float = 1.0
    scale: float = 1.0
    rank: int = 0
    value: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise SynthError(f"unknown profile kind {self.kind!r}")
        if self.kind in ("polynomial", "exponential") and not (self.rate > 0 and self.scale > 0):
            raise SynthError(f"{self.kind} profile needs rate > 0 and scale > 0")
        if self.kind == "finite_rank" and (self.rank < 0 or self.value < 0):
            raise SynthError("finite_rank profile needs rank >= 0 and value >= 0")

    def eigenvalues(self, d: int) -> np.ndarray:
        p = np.arange(1, d + 1, dtype=float)
        if self.kind == "polynomial":
            mu = self.scale * p ** (-self.rate)
        elif self.kind == "exponential":
            mu = self.scale * np.exp(-self.rate * p)
        elif self.kind == "finite_rank":
            mu = np.where(p <= self.rank, self.value, 0.0)
        elif self.kind == "zero":
            mu = np.zeros(d)
        else:
            vals = np.asarray(self.values, dtype=float)
            if vals.size > d:
                raise SynthError(f"explicit profile has {vals.size} values for d={d}")
            mu = np.zeros(d)
            mu[:vals.size] = vals
        if np.any(mu < 0):
            raise SynthError("profile produced negative eigenvalues")
        return np.sort(mu)[::-1].copy()

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind in ("polynomial", "exponential"):
            d.update(rate=self.rate, scale=self.scale)
        elif self.kind == "finite_rank":
            d.update(rank=self.rank, value=self.value)
        elif self.kind == "explicit":
            d["values"] = list(self.values)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(**d)


@dataclass(frozen=True)
class HMode:
    kind: str = "gaussian_H0"
    gamma: float = 0.0        # powered
    r_h: float = 1.0          # diagonal
    random_bases: bool = False  # diagonal: Haar u/v bases instead of identity
    profile: Optional[SpectralProfile] = None  # spectral: eigenvalues of H H^T

    def __post_init__(self):
        if self.kind not in H_MODES:
            raise SynthError(f"unknown H mode {self.kind!r}")
        if self.gamma < 0:
            raise SynthError(f"gamma must be >= 0, got {self.gamma}")
        if self.kind == "spectral" and self.profile is None:
            raise SynthError("spectral H mode needs a profile for H H^T")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "powered":
            d["gamma"] = self.gamma
        elif self.kind == "diagonal":
            d.update(r_h=self.r_h, random_bases=self.random_bases)
        elif self.kind == "spectral":
            d["profile"] = self.profile.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("profile") is not None:
            d["profile"] = SpectralProfile.from_dict(d["profile"])
        return cls(**d)


@dataclass(frozen=True)
class SyntheticProblemSpec:
    """Full recipe for one synthetic problem.

    ``signal_to_noise``, when set, rescales H so that ``tr(M) = snr * tr(E)``
    with ``M = H Sigma_x H^T``.
    """

    d: int
    n_train: int
    n_test: int
    C_profile: SpectralProfile
    H_mode: HMode
    E_profile: SpectralProfile
    n_val: int = 0
    x_law: str = "standard_normal"
    C_random_eigvecs: bool = True
    E_random_eigvecs: bool = True
    signal_to_noise: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n_train < 1 or self.n_test < 0 or self.n_val < 0:
            raise SynthError("dimensions must be positive")
        if self.x_law not in X_LAWS:
            raise SynthError(f"unknown x law {self.x_law!r}")
        if self.signal_to_noise is not None and not self.signal_to_noise > 0:
            raise SynthError("signal_to_noise must be > 0")

    def to_dict(self):
        return {
            "d": self.d, "n_train": self.n_train, "n_val": self.n_val, "n_test": self.n_test,
            "C_profile": self.C_profile.to_dict(), "H_mode": self.H_mode.to_dict(),
            "E_profile": self.E_profile.to_dict(), "x_law": self.x_law,
            "C_random_eigvecs": self.C_random_eigvecs,
            "E_random_eigvecs": self.E_random_eigvecs,
            "signal_to_noise": self.signal_to_noise, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["C_profile"] = SpectralProfile.from_dict(d["C_profile"])
        d["E_profile"] = SpectralProfile.from_dict(d["E_profile"])
        d["H_mode"] = HMode.from_dict(d.get("H_mode", {}))
        return cls(**d)

    def with_seed(self, seed):
        return SyntheticProblemSpec.from_dict({**self.to_dict(), "seed": int(seed)})


# --------------------------------------------------------------------------
# Construction
# --------------------------------------------------------------------------

def build_covariance(profile: SpectralProfile, eigvecs, d: Optional[int] = None) -> np.ndarray:
    """``V diag(mu) V^T``; ``eigvecs=None`` means the identity basis."""
    if eigvecs is None:
        if d is None:
            raise SynthError("need d when eigvecs is the identity")
        mu = profile.eigenvalues(d)
        return np.diag(mu)
    V = np.asarray(eigvecs, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise SynthError(f"eigvecs must be square, got {V.shape}")
    if d is not None and d != V.shape[0]:
        raise SynthError(f"profile dimension {d} does not match eigvecs {V.shape}")
    mu = profile.eigenvalues(V.shape[0])
    S = (V * mu) @ V.T
    return 0.5 * (S + S.T)


def build_H(spec: SyntheticProblemSpec, C, seed) -> np.ndarray:
    """Signal operator for ``spec.H_mode``.

    gaussian_H0  iid N(0, 1) entries
    powered      (H0 C H0^T)^gamma H0
    diagonal     sum_i i^-r_h v_i u_i^T
    spectral     V diag(sqrt(mu)) U^T with mu the profile for H H^T
    """
    mode = spec.H_mode
    d = spec.d
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if mode.kind in ("gaussian_H0", "powered"):
        H0 = rng.standard_normal((d, d))
        if mode.kind == "gaussian_H0":
            return H0
        return matrix_power(H0 @ C @ H0.T, mode.gamma) @ H0
    if mode.kind == "diagonal":
        s = np.arange(1, d + 1, dtype=float) ** (-mode.r_h)
        if not mode.random_bases:
            return np.diag(s)
        V = haar_orthogonal(d, rng)
        U = haar_orthogonal(d, rng)
        return (V * s) @ U.T
    mu = mode.profile.eigenvalues(d)
    V = haar_orthogonal(d, rng)
    U = haar_orthogonal(d, rng)
    return (V * np.sqrt(mu)) @ U.T


@dataclass
class SyntheticProblem:
    """Population quantities of one instantiated spec."""

    spec: SyntheticProblemSpec
    C: np.ndarray
    H: np.ndarray
    E: np.ndarray
    Sigma_x: np.ndarray
    M: np.ndarray = field(init=False)

    def __post_init__(self):
        M = self.H @ self.Sigma_x @ self.H.T
        self.M = 0.5 * (M + M.T)

    def sample(self, n, seed):
        return sample_dataset(self.spec, self.Sigma_x, self.H, self.E, n, seed)


def build_problem(spec: SyntheticProblemSpec) -> SyntheticProblem:
    """Draw C, H, E for ``spec`` from ``spec.seed`` (independent child streams)."""
    ss = np.random.SeedSequence(spec.seed)
    c_seed, h_seed, e_seed = ss.spawn(3)
    d = spec.d
    Vc = haar_orthogonal(d, np.random.default_rng(c_seed)) if spec.C_random_eigvecs else None
    C = build_covariance(spec.C_profile, Vc, d)
    H = build_H(spec, C, np.random.default_rng(h_seed))
    Ve = haar_orthogonal(d, np.random.default_rng(e_seed)) if spec.E_random_eigvecs else None
    E = build_covariance(spec.E_profile, Ve, d)
    Sigma_x = C if spec.x_law == "normal_with_cov_C" else np.eye(d)
    if spec.signal_to_noise is not None:
        trM = np.trace(H @ Sigma_x @ H.T)
        trE = np.trace(E)
        if not (trM > 0 and trE > 0):
            raise SynthError("signal_to_noise needs nonzero signal and noise")
        H = H * np.sqrt(spec.signal_to_noise * trE / trM)
    return SyntheticProblem(spec, C, H, E, Sigma_x)


def _psd_sqrt(S, name):
    dec = eigh(S)
    w = dec.eigenvalues
    scale = max(abs(w[0]), 1.0) if w.size else 1.0
    if w.size and w[-1] < -1e-8 * scale:
        raise SynthError(f"{name} is not positive semidefinite (min eigenvalue {w[-1]:.3g})")
    V = dec.eigenvectors
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_dataset(spec: SyntheticProblemSpec, C, H, E, n: int, seed):
    """Draw ``(X, Y, Y_clean)`` with rows ``x``, ``H x + eps`` and ``H x``.

    ``C`` is the input covariance used when ``spec.x_law`` asks for it.
    """
    d = spec.d
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Ex = _psd_sqrt(E, "E")
    G = rng.standard_normal((n, d))
    if spec.x_law == "normal_with_cov_C":
        X = G @ _psd_sqrt(C, "C")
    else:
        X = G
    noise = rng.standard_normal((n, d)) @ Ex
    Y_clean = X @ H.T
    return X, Y_clean + noise, Y_clean


# --------------------------------------------------------------------------
# Closed-form exponents of the polynomial example
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionExponents:
    alpha: float
    beta: float
    gamma: float
    s: float
    gamma_in_range: bool

    def as_dict(self):
        return asdict(self)


def compute_assumption_exponents(r_c: float, r_h: float, r_e: float) -> AssumptionExponents:
    """Exponents for ``C = sum i^-r_c``, ``H = sum i^-r_h``, ``E ~ sum i^-r_e``.

    ``M = H C H^T`` decays like ``p^-s`` with ``s = 2 r_h + r_c``; gamma is
    reported even when it leaves [0, 1] (``r_e > s``) and flagged.
    """
    if min(r_c, r_h, r_e) <= 0:
        raise SynthError("rates must be positive")
    s = 2.0 * r_h + r_c
    gamma = 1.0 - r_e / s
    return AssumptionExponents(2.0 / s, r_c / s, gamma, s, bool(0.0 <= gamma <= 1.0))


def gamma_to_beta(gamma: float) -> float:
    """Output source exponent of ``(H0 C H0^T)^gamma H0``: ``1 / (2 gamma + 1)``."""
    if gamma < 0:
        raise SynthError("gamma must be >= 0")
    return 1.0 / (2.0 * gamma + 1.0)


# --------------------------------------------------------------------------
# Ready-made recipes
# --------------------------------------------------------------------------

def source_condition_recipe(gamma: float, d: int = 200, seed: int = 0) -> SyntheticProblemSpec:
    """``mu_p(C) = p^-2`` with Haar eigenvectors, ``H = (H0 C H0^T)^gamma H0``."""
    return SyntheticProblemSpec(
        d=d, n_train=1, n_test=0,
        C_profile=SpectralProfile("polynomial", rate=2.0),
        H_mode=HMode("powered", gamma=gamma),
        E_profile=SpectralProfile("zero"),
        x_law="normal_with_cov_C", seed=seed)


def finite_rank_recipe(seed: int = 0, d: int = 250, n_train: int = 500, n_test: int = 1000,
                       rank: int = 5, signal: float = 1.0, noise_scale: float = 1.5,
                       noise_rate: float = 0.01) -> SyntheticProblemSpec:
    """Rank-``rank`` signal, slowly decaying noise whose top directions exceed it.

    ``x ~ N(0, I)`` so ``M = H H^T`` has eigenvalue ``signal`` with multiplicity
    ``rank``; noise eigenvalues are ``noise_scale * exp(-noise_rate * k)``.
    """
    return SyntheticProblemSpec(
        d=d, n_train=n_train, n_test=n_test,
        C_profile=SpectralProfile("finite_rank", rank=d, value=1.0),
        H_mode=HMode("spectral", profile=SpectralProfile("finite_rank", rank=rank, value=signal)),
        E_profile=SpectralProfile("exponential", rate=noise_rate, scale=noise_scale),
        x_law="standard_normal", C_random_eigvecs=False, seed=seed)


def output_regularity_recipe(n_train: int, seed: int = 0, d: int = 300, gamma: float = 1.0,
                             n_val: int = 1000, n_test: int = 1000,
                             signal_to_noise: Optional[float] = 1.0) -> SyntheticProblemSpec:
    """``mu_p(C) = p^-1/2``, ``mu_p(E) = 0.2 p^-1/10``, ``H = (H0 C H0^T)^gamma H0``,
    ``x ~ N(0, C)``; ``gamma = 1`` gives beta = 1/3 and ``gamma = 0`` gives beta = 1."""
    mode = HMode("powered", gamma=gamma) if gamma > 0 else HMode("gaussian_H0")
    return SyntheticProblemSpec(
        d=d, n_train=n_train, n_val=n_val, n_test=n_test,
        C_profile=SpectralProfile("polynomial", rate=0.5),
        H_mode=mode,
        E_profile=SpectralProfile("polynomial", rate=0.1, scale=0.2),
        x_law="normal_with_cov_C", signal_to_noise=signal_to_noise, seed=seed)


def make_multilabel(n: int, n_features: int = 30, n_labels: int = 20, rank: int = 3,
                    density: float = 0.15, noise: float = 0.5, seed: int = 0):
    """Binary labels from a low-rank latent model: ``Y = 1[X A B + noise > threshold]``.

    The threshold is the ``1 - density`` quantile so about ``density * n_labels``
    labels are on per example. Returns ``(X, Y)``.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_features))
    A = rng.standard_normal((n_features, rank)) / np.sqrt(n_features)
    B = rng.standard_normal((rank, n_labels))
    S = X @ A @ B + noise * rng.standard_normal((n, n_labels))
    thr = np.quantile(S, 1.0 - density)
    Y = (S > thr).astype(float)
    return X, Y
