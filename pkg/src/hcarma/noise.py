"""
Zero-mean square-integrable Lévy noise on a truncated space.

The noise is a Q-Wiener part plus an optional compensated compound-Poisson
part.  Both covariance operators are diagonal in the basis of the space:
``Q e_n = q_n e_n``.  With basis weights ``w_n = |e_n|^2`` the coordinate
``n`` of W(t) then has variance ``q_n t / w_n``; for orthonormal bases this
is simply ``q_n t``.

Jumps arrive at rate ``rate``.  Each jump has independent centred
coordinates, either two-point (``+-sqrt(v_n / w_n)``) or Gaussian with
variance ``v_n / w_n``, so the jump covariance operator is diag(v_n).

Random numbers come from :class:`numpy.random.Generator` (PCG64).  Path
``i`` of an ensemble is driven by ``default_rng(base_seed + i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spaces import HVector, SpaceSpec, _frozen

TWO_POINT = "two_point"
GAUSSIAN = "gaussian"
JUMP_LAWS = (TWO_POINT, GAUSSIAN)


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    space: SpaceSpec
    eigenvalues: np.ndarray

    def __post_init__(self):
        q = _frozen(self.eigenvalues)
        if q.shape != (self.space.dim,):
            raise ValueError(f"need {self.space.dim} covariance eigenvalues, got shape {q.shape}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("covariance eigenvalues must be finite and >= 0")
        object.__setattr__(self, "eigenvalues", q)

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    @property
    def matrix(self) -> np.ndarray:
        """Coordinate matrix of Q."""
        return np.diag(self.eigenvalues)

    @property
    def coordinate_variances(self) -> np.ndarray:
        return self.eigenvalues / self.space.weights


@dataclass(frozen=True, eq=False)
class JumpSpec:
    rate: float
    jump_law: str
    variances: np.ndarray

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("jump rate must be > 0")
        if self.jump_law not in JUMP_LAWS:
            raise ValueError(f"jump_law must be one of {JUMP_LAWS}, got {self.jump_law!r}")
        v = _frozen(self.variances)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("jump variances must be finite and >= 0")
        object.__setattr__(self, "variances", v)


@dataclass(frozen=True, eq=False)
class LevyModel:
    space: SpaceSpec
    wiener: Optional[CovarianceSpec] = None
    jumps: Optional[JumpSpec] = None
    seed: int = 0

    def __post_init__(self):
        if self.wiener is not None and not self.wiener.space.same_as(self.space):
            raise ValueError("Wiener covariance lives on a different space")
        if self.jumps is not None and self.jumps.variances.shape != (self.space.dim,):
            raise ValueError(f"need {self.space.dim} jump variances")

    @classmethod
    def wiener_only(cls, space: SpaceSpec, q, seed: int = 0) -> "LevyModel":
        return cls(space, CovarianceSpec(space, q), None, seed)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def has_jumps(self) -> bool:
        return self.jumps is not None and self.jumps.rate > 0 and bool(np.any(self.jumps.variances > 0))

    @property
    def is_gaussian(self) -> bool:
        return not self.has_jumps

    @property
    def q(self) -> np.ndarray:
        return np.zeros(self.dim) if self.wiener is None else np.asarray(self.wiener.eigenvalues)

    @property
    def covariance_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the covariance operator of L(1): q_n + rate * v_n."""
        total = self.q.copy()
        if self.jumps is not None:
            total = total + self.jumps.rate * self.jumps.variances
        return total

    def trace(self) -> float:
        return float(np.sum(self.covariance_eigenvalues))


def sample_increments(model: LevyModel, dt: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Independent draws of L(dt); shape ``size + (N,)``.

    The Gaussian part is drawn first, then the Poisson counts, then the
    jump sizes, so the stream layout is fixed for a given ``size``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    shape = () if size is None else (tuple(size) if np.iterable(size) else (int(size),))
    N = model.dim
    w = model.space.weights
    out = np.zeros(shape + (N,))
    if model.wiener is not None:
        sd = np.sqrt(model.wiener.eigenvalues / w * dt)
        out += rng.standard_normal(shape + (N,)) * sd
    if model.jumps is not None:
        J = model.jumps
        counts = rng.poisson(J.rate * dt, size=shape)
        scale = np.sqrt(J.variances / w)
        if np.any(counts > 0):
            cnt = np.broadcast_to(np.asarray(counts)[..., None], shape + (N,))
            if J.jump_law == TWO_POINT:
                ups = rng.binomial(cnt, 0.5)
                out += (2 * ups - cnt) * scale
            else:
                out += rng.standard_normal(shape + (N,)) * np.sqrt(cnt) * scale
    return out


def sample_increment(model: LevyModel, dt: float, rng: np.random.Generator) -> HVector:
    """One draw of L(dt) as a vector in the noise space."""
    return HVector(model.space, sample_increments(model, dt, rng))


def sample_path(model: LevyModel, dt: float, M: int, rng: np.random.Generator) -> np.ndarray:
    """L(t_i), i = 0..M, on the grid t_i = i dt (L(0) = 0)."""
    inc = sample_increments(model, dt, rng, size=M)
    return np.vstack([np.zeros(model.dim), np.cumsum(inc, axis=0)])


def char_exponent(model: LevyModel, h) -> complex:
    """psi_L(h) with log E exp(i<h, L(t)>) = t psi_L(h).

    Closed forms: -1/2 <Q h, h> for the Wiener part and
    rate * (E exp(i<h, J>) - 1) for the centred jumps.
    """
    hc = h.coords if isinstance(h, HVector) else np.asarray(h, dtype=float)
    return complex(char_exponent_batch(model, hc[None, :])[0])


def char_exponent_batch(model: LevyModel, H: np.ndarray) -> np.ndarray:
    """Vectorised :func:`char_exponent` over the rows of ``H``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    w = model.space.weights
    psi = np.zeros(H.shape[0], dtype=complex)
    if model.wiener is not None:
        psi += -0.5 * (H**2 * (w * model.wiener.eigenvalues)).sum(axis=1)
    if model.jumps is not None:
        J = model.jumps
        # <h, J> = sum_n w_n h_n J_n with J_n of variance v_n / w_n
        a = H * np.sqrt(w * J.variances)
        if J.jump_law == TWO_POINT:
            phi = np.prod(np.cos(a), axis=1)
        else:
            phi = np.exp(-0.5 * (a**2).sum(axis=1))
        psi += J.rate * (phi - 1.0)
    return psi


def mode_decompose(path: np.ndarray) -> np.ndarray:
    """Scalar mode paths l_n(t_i) = <L(t_i), e_n> / |e_n|^2, shape (N, M+1).

    Path rows are coordinate vectors, so this is a transpose.
    """
    return np.ascontiguousarray(np.asarray(path, dtype=float).T)


def sine_field(coords: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate sum_n c_n sqrt(2) sin(pi n x); ``coords`` may be (..., N)."""
    coords = np.asarray(coords, dtype=float)
    n = np.arange(1, coords.shape[-1] + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(np.asarray(x, dtype=float), n))
    return coords @ basis.T


def sine_coefficients(values: np.ndarray, N: int) -> np.ndarray:
    """Sine coefficients of a field sampled at x_j = j / K, j = 0..K (trapezoid)."""
    values = np.asarray(values, dtype=float)
    K = values.shape[-1] - 1
    x = np.linspace(0.0, 1.0, K + 1)
    n = np.arange(1, N + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, n))
    wq = np.full(K + 1, 1.0 / K)
    wq[0] = wq[-1] = 0.5 / K
    return (values * wq) @ basis
