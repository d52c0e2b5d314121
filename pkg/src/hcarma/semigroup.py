"""
Evaluation of the semigroup S_p(t) = exp(t C_p).

Three routes are available and are meant to check one another:

``matrix_exponential``
    Dense exponential of the truncated companion matrix (scipy's
    scaling-and-squaring Pade algorithm).
``recursive_series``
    Variation-of-constants series.  C_p is split into the block-diagonal
    generator diag(0, C_{p-1}) and the bounded perturbation holding I_p and
    A_p; the perturbation series is summed with time convolutions computed
    by composite Simpson quadrature on a uniform grid.  The inner
    semigroup S_{p-1} is obtained the same way, down to exp(t A_1).
``wave_closed_form``
    Mode-wise rotation blocks of the wave equation on the sine basis.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .operators import CompanionSystem, NumericalError, stability_check
from .quadrature import simpson_weights
from .spaces import SINE

MATRIX_EXPONENTIAL = "matrix_exponential"
RECURSIVE_SERIES = "recursive_series"
WAVE_CLOSED_FORM = "wave_closed_form"
METHODS = (MATRIX_EXPONENTIAL, RECURSIVE_SERIES, WAVE_CLOSED_FORM)

MAX_EXPONENT = 700.0


class SeriesTruncationWarning(UserWarning):
    """The truncated perturbation series may not have converged."""

    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


def weighted_norm(M: np.ndarray, weights: np.ndarray) -> float:
    """Operator norm of a coordinate matrix in the weighted Hilbert norm."""
    s = np.sqrt(weights)
    return float(np.linalg.norm(s[:, None] * M / s[None, :], 2))


def _checked_expm(M: np.ndarray, t: float) -> np.ndarray:
    if t == 0:
        return np.eye(M.shape[0])
    if M.size:
        growth = float(np.max(np.linalg.eigvals(M).real)) * t
        if growth > MAX_EXPONENT:
            raise NumericalError(
                f"exp(t C) overflows: spectral abscissa * t = {growth:.3g} > {MAX_EXPONENT}")
    E = expm(t * M)
    if not np.all(np.isfinite(E)):
        raise NumericalError("matrix exponential produced non-finite entries")
    return E


def wave_blocks(modes: np.ndarray, t: float) -> np.ndarray:
    """Rotation blocks ``[[cos, sin/w], [-w sin, cos]]`` with ``w = pi n``."""
    w = np.pi * np.asarray(modes, dtype=float)
    c, s = np.cos(w * t), np.sin(w * t)
    return np.stack([np.stack([c, s / w], -1), np.stack([-w * s, c], -1)], -2)


def evaluate_wave(N: int, t: float) -> np.ndarray:
    """Closed-form wave semigroup on the 2N coordinates (Y modes, then dY/dt modes).

    Functional calculus on the sine basis: g(Laplacian) acts on mode n as
    g(-pi^2 n^2), so cos((-Lap)^{1/2} t) is diag(cos(pi n t)) and so on.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    blocks = wave_blocks(np.arange(1, N + 1), t)
    S = np.zeros((2 * N, 2 * N))
    idx = np.arange(N)
    S[idx, idx] = blocks[:, 0, 0]
    S[idx, N + idx] = blocks[:, 0, 1]
    S[N + idx, idx] = blocks[:, 1, 0]
    S[N + idx, N + idx] = blocks[:, 1, 1]
    return S


def is_wave_system(system: CompanionSystem, atol: float = 0.0) -> bool:
    """True for [[0, Id], [Laplacian, 0]] on two sine spaces of equal size."""
    if system.p != 2:
        return False
    H1, H2 = system.spaces.spaces
    if H1.basis_kind != SINE or H2.basis_kind != SINE or H1.dim != H2.dim:
        return False
    N = H1.dim
    lap = np.diag(-np.pi**2 * np.arange(1, N + 1) ** 2.0)
    return (np.allclose(system.A(1).matrix, 0, rtol=0, atol=atol)
            and np.allclose(system.I(2).matrix, np.eye(N), rtol=0, atol=atol)
            and np.allclose(system.A(2).matrix, lap, rtol=1e-14, atol=atol))


def _conv_weights(K: int, h: float) -> np.ndarray:
    """Row k holds Simpson weights for the integral over [0, t_k]."""
    W = np.zeros((K + 1, K + 1))
    for k in range(1, K + 1):
        W[k, :k + 1] = simpson_weights(k, h)
    return W


def _series_on_grid(system: CompanionSystem, K: int, h: float, terms: int,
                    W: np.ndarray, info: list) -> np.ndarray:
    """S_p(t_k) for t_k = k h, k = 0..K, via the nested perturbation series."""
    if system.p == 1:
        A1 = system.A(1).matrix
        return np.stack([_checked_expm(A1, k * h) for k in range(K + 1)])

    inner = _series_on_grid(system.inner(), K, h, terms, W, info)
    n1 = system.spaces.spaces[0].dim
    d = system.dim
    Splus = np.zeros((K + 1, d, d))
    Splus[:, :n1, :n1] = np.eye(n1)
    Splus[:, n1:, n1:] = inner
    B = system.perturbation()

    total = Splus.copy()
    R = Splus
    for _ in range(terms):
        BR = np.einsum("ab,kbc->kac", B, R)
        Rn = np.zeros_like(R)
        for k in range(1, K + 1):
            # sum_j W[k, j] S+(t_k - t_j) B R(t_j) as one (d, (k+1)d) x ((k+1)d, d) product
            lhs = (W[k, :k + 1, None, None] * Splus[k::-1]).transpose(1, 0, 2).reshape(d, -1)
            Rn[k] = lhs @ BR[:k + 1].reshape(-1, d)
        R = Rn
        total += R

    weights = system.spaces.weights
    norms = np.array([weighted_norm(S, weights) for S in Splus])
    tk = h * np.arange(K + 1)
    c = max(stability_check(system.inner()).spectral_abscissa, 0.0)
    Kc = float(np.max(norms * np.exp(-c * tk)))
    info.append({"p": system.p, "K": Kc, "c": c, "B_norm": weighted_norm(B, weights),
                 "last_term_norm": weighted_norm(R[-1], weights)})
    return total


def remainder_bound(K: float, c: float, b_norm: float, t: float, terms: int) -> float:
    """Dyson-type tail estimate K e^{ct} (K |B| t)^{n+1} / (n+1)!."""
    x = K * b_norm * t
    n1 = terms + 1
    log_bound = math.log(K) + c * t + (n1 * math.log(x) if x > 0 else -math.inf) - math.lgamma(n1 + 1)
    return math.exp(log_bound) if log_bound < 700 else math.inf


@dataclass(frozen=True, eq=False)
class SemigroupEvaluator:
    """Maps t >= 0 to the coordinate matrix of S_p(t).

    Evaluations are cached; the cache is guarded by a lock so concurrent
    calls are safe and return identical matrices.
    """

    system: CompanionSystem
    method: str = MATRIX_EXPONENTIAL
    series_terms: int = 25
    quadrature_nodes: int = 64
    series_tol: float = 1e-6
    min_intervals: int = 4
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown semigroup method {self.method!r}")
        if self.method == WAVE_CLOSED_FORM and not is_wave_system(self.system):
            raise ValueError("wave_closed_form needs the [[0, Id], [Laplacian, 0]] sine system")
        if self.series_terms < 1 or self.quadrature_nodes < 1:
            raise ValueError("series_terms and quadrature_nodes must be positive")

    @property
    def dim(self) -> int:
        return self.system.dim

    def with_method(self, method: str) -> "SemigroupEvaluator":
        return SemigroupEvaluator(self.system, method, self.series_terms,
                                  self.quadrature_nodes, self.series_tol, self.min_intervals)

    def evaluate(self, t: float) -> np.ndarray:
        t = float(t)
        if t < 0:
            raise ValueError("t must be >= 0")
        with self._lock:
            hit = self._cache.get(t)
        if hit is not None:
            return hit
        if self.method == MATRIX_EXPONENTIAL:
            S = _checked_expm(self.system.assembled, t)
        elif self.method == RECURSIVE_SERIES:
            S = self.evaluate_recursive(t)
        else:
            S = evaluate_wave(self.system.spaces.spaces[0].dim, t)
        S.setflags(write=False)
        with self._lock:
            self._cache.setdefault(t, S)
            return self._cache[t]

    __call__ = evaluate

    def adjoint(self, t: float) -> np.ndarray:
        """Coordinate matrix of S_p(t)* in the weighted inner product."""
        w = self.system.spaces.weights
        return (self.evaluate(t).T / w[:, None]) * w[None, :]

    def evaluate_recursive(self, t: float, return_info: bool = False):
        """S_p(t) from the perturbation series on a uniform Simpson grid.

        Emits :class:`SeriesTruncationWarning` when the estimated remainder
        exceeds ``series_tol`` relative to the growth bound.
        """
        t = float(t)
        d = self.system.dim
        if t == 0:
            S = np.eye(d)
            return (S, {"remainder_bound": 0.0, "levels": []}) if return_info else S
        if self.system.p == 1:
            S = _checked_expm(self.system.A(1).matrix, t)
            return (S, {"remainder_bound": 0.0, "levels": []}) if return_info else S
        K = max(int(math.ceil(self.quadrature_nodes * t)), self.min_intervals)
        h = t / K
        W = _conv_weights(K, h)
        levels: list = []
        S_grid = _series_on_grid(self.system, K, h, self.series_terms, W, levels)
        S = S_grid[-1]
        if not np.all(np.isfinite(S)):
            raise NumericalError("perturbation series diverged")
        bound = max(remainder_bound(lv["K"], lv["c"], lv["B_norm"], t, self.series_terms)
                    for lv in levels)
        scale = max(lv["K"] * math.exp(lv["c"] * t) for lv in levels)
        if bound > self.series_tol * scale:
            warnings.warn(SeriesTruncationWarning(
                f"{self.series_terms} series terms at t={t:g}: remainder bound {bound:.3g}", bound),
                stacklevel=2)
        info = {"remainder_bound": bound, "levels": levels, "intervals": K}
        return (S, info) if return_info else S
