"""
Discrete-time views of a CARMA process.

Sampling the state on t_i = i delta gives the linear process
z_{i+1} = S_p(delta) z_i + eps_i with iid innovations.  Replacing the
time derivatives in Q_p(d/dt) X = I_p...I_2 dL/dt by scaled forward
differences gives the functional AR(p) recursion

    x_{i+p} = sum_q Bt_q x_{i+p-q} + delta^p eps_i,
    Bt_q = (-1)^{q+1} C(p, q) Id + sum_{k<=q} delta^k B_k (-1)^{q-k} C(p-k, q-k),

with eps_i = I_p...I_2 (L(t_{i+1}) - L(t_i)) / delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .carma import CarmaSystem, covariance_integral, to_operator
from .operators import BOperators, CompanionSystem, _I_product
from .spaces import DimensionError, LinearMap, SpaceSpec

MAX_ORDER = 20


def ar1_step(S_delta, z, eps):
    """z_{i+1} = S(delta) z_i + eps_i on coordinate arrays or LinearMap/vectors."""
    S = S_delta.matrix if isinstance(S_delta, LinearMap) else np.asarray(S_delta)
    z = getattr(z, "coords", z)
    eps = getattr(eps, "coords", eps)
    z = np.asarray(z, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if S.shape != (z.shape[-1], z.shape[-1]) or eps.shape != z.shape:
        raise DimensionError(f"ar1_step: S {S.shape}, z {z.shape}, eps {eps.shape} do not agree")
    return S @ z + eps


def innovation_covariance(sys: CarmaSystem, delta: float, nodes=None) -> LinearMap:
    """Covariance operator on H of eps_i = int_0^delta S(s) P_p* dL(s).

    Its H_1 block is the P_1-compressed covariance.
    """
    if sys.noise.wiener is None:
        raise ValueError("innovation covariance needs a Wiener component")
    cov = covariance_integral(sys, delta, observe=False, nodes=nodes)
    return to_operator(cov, sys.H)


def forward_difference(f: Sequence, n: int, delta: float, i: int):
    """n-th forward difference sum_k C(n,k) (-1)^k f_{i+n-k} of a sampled sequence.

    ``f[j]`` is the value at t_j = j delta; ``delta`` only fixes the grid.
    Entries may be scalars or arrays.
    """
    if n < 0:
        raise ValueError("order must be >= 0")
    if i < 0 or i + n >= len(f):
        raise IndexError(f"forward difference of order {n} at {i} needs index {i + n} < {len(f)}")
    out = 0
    for k in range(n + 1):
        out = out + comb(n, k) * (-1) ** k * np.asarray(f[i + n - k])
    return out


@dataclass(frozen=True, eq=False)
class FarModel:
    p: int
    space: SpaceSpec
    B_tilde: tuple
    delta: float

    @property
    def noise_scale(self) -> float:
        return self.delta**self.p

    def __getitem__(self, q: int) -> LinearMap:
        return self.B_tilde[q - 1]


def far_coefficients(B: BOperators, delta: float) -> FarModel:
    """The FAR(p) coefficient operators Bt_1..Bt_p for step ``delta``."""
    p = B.p
    if p > MAX_ORDER:
        raise ValueError(f"order {p} above supported maximum {MAX_ORDER}")
    H1 = B.space
    eye = np.eye(H1.dim)
    Bt = []
    for q in range(1, p + 1):
        M = (-1) ** (q + 1) * comb(p, q) * eye
        for k in range(1, q + 1):
            M = M + delta**k * (-1) ** (q - k) * comb(p - k, q - k) * B[k].matrix
        Bt.append(LinearMap(H1, H1, M))
    return FarModel(p, H1, tuple(Bt), float(delta))


def far_innovations(companion: CompanionSystem, increments: np.ndarray, delta: float) -> np.ndarray:
    """eps_i = I_p...I_2 (L(t_{i+1}) - L(t_i)) / delta, rows in H_1 coordinates."""
    Ip = _I_product(companion, 2)
    return np.asarray(increments, dtype=float) @ Ip.T / delta


def far_simulate(model: FarModel, initial: Sequence, innovations: np.ndarray, M: int) -> np.ndarray:
    """Run the FAR(p) recursion M times; returns x_0..x_{M+p-1} as rows.

    Divergence is reported, not prevented: a ``FloatingPointError`` is
    raised once an iterate stops being finite.
    """
    p = model.p
    init = np.atleast_2d(np.asarray(initial, dtype=float))
    if init.shape != (p, model.space.dim):
        raise DimensionError(f"need {p} initial vectors of length {model.space.dim}")
    eps = np.asarray(innovations, dtype=float)
    if eps.shape[0] < M:
        raise ValueError(f"need {M} innovations, got {eps.shape[0]}")
    mats = [b.matrix for b in model.B_tilde]
    x = np.empty((M + p, model.space.dim))
    x[:p] = init
    scale = model.noise_scale
    for i in range(M):
        acc = scale * eps[i]
        for q in range(1, p + 1):
            acc = acc + mats[q - 1] @ x[i + p - q]
        if not np.all(np.isfinite(acc)):
            raise FloatingPointError(f"FAR recursion diverged at step {i}")
        x[i + p] = acc
    return x


def far_residual(B: BOperators, xs: np.ndarray, delta: float) -> np.ndarray:
    """Apply Q_p(Delta_delta / delta) to the iterates; recovers eps_i.

    Q_p(D) x_i = D^p x_i - sum_q B_q D^{p-q} x_i with D = Delta_delta / delta.
    """
    p = B.p
    n = len(xs) - p
    out = np.empty((n, xs.shape[1]))
    for i in range(n):
        r = forward_difference(xs, p, delta, i) / delta**p
        for q in range(1, p + 1):
            r = r - B[q].matrix @ (forward_difference(xs, p - q, delta, i) / delta ** (p - q))
        out[i] = r
    return out
