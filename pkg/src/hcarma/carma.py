"""
CARMA processes in Hilbert space: simulation and distributional analysis.

The state solves dZ = C_p Z dt + P_p* dL with mild solution

    Z(t) = S_p(t) Z_0 + int_0^t S_p(t - s) P_p* dL(s)

and the observed process is X(t) = L_U Z(t).  On a uniform grid the state
obeys the exact AR(1) recursion Z_{i+1} = S_p(dt) Z_i + eps_i.  Two
innovation schemes are provided:

``left_point`` ("a")
    eps_i = S_p(dt) P_p* (L(t_{i+1}) - L(t_i)).  Works with jumps and keeps
    the raw increments for pathwise replay.
``exact_gaussian`` ("b")
    eps_i ~ N(0, Q_eps), the exact law of the innovation for Wiener noise.

Covariances are reported as operators on U, i.e. the matrix C with
<C x, y>_U = E[<X, x>_U <X, y>_U].  In coordinates this is the coordinate
covariance times the Gram matrix of U.  All Bochner integrals use composite
Simpson on uniform grids.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .noise import LevyModel, char_exponent_batch, sample_increments
from .operators import CompanionSystem, NumericalError, stability_check
from .quadrature import simpson_weights, uniform_grid
from .semigroup import MATRIX_EXPONENTIAL, SemigroupEvaluator
from .spaces import LinearMap, ProductSpace, SpaceSpec, projection_map

LEFT_POINT = "left_point"
EXACT_GAUSSIAN = "exact_gaussian"
_SCHEME_ALIASES = {"a": LEFT_POINT, LEFT_POINT: LEFT_POINT,
                   "b": EXACT_GAUSSIAN, EXACT_GAUSSIAN: EXACT_GAUSSIAN}

# Simpson step is also capped at STIFFNESS_STEP / spectral radius so that
# fast modes are resolved.
STIFFNESS_STEP = 0.01


class UnsupportedError(ValueError):
    """The requested operation does not apply to this configuration."""


class UnstableSystemError(NumericalError):
    def __init__(self, abscissa: float):
        super().__init__(f"system is not exponentially stable (spectral abscissa {abscissa:.6g})")
        self.abscissa = abscissa


def scheme_name(scheme: str) -> str:
    try:
        return _SCHEME_ALIASES[scheme]
    except KeyError:
        raise ValueError(f"unknown innovation scheme {scheme!r}") from None


@dataclass(frozen=True, eq=False)
class CarmaSystem:
    """A CARMA(p, U, L_U) model: companion system, noise, readout and initial state."""

    companion: CompanionSystem
    noise: LevyModel
    observation: LinearMap
    Z0: np.ndarray
    semigroup: SemigroupEvaluator
    quadrature_nodes: int = 64
    _factors: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        H = self.companion.spaces
        if not self.noise.space.same_as(H.spaces[-1]):
            raise ValueError("noise must live on the last component space H_p")
        if not (isinstance(self.observation.domain, ProductSpace)
                and self.observation.domain.same_as(H)):
            raise ValueError("observation must be defined on the product space H")
        z0 = np.array(self.Z0, dtype=float)
        if z0.shape != (H.dim,):
            raise ValueError(f"Z0 needs {H.dim} coordinates, got shape {z0.shape}")
        z0.setflags(write=False)
        object.__setattr__(self, "Z0", z0)
        if self.semigroup.system is not self.companion:
            raise ValueError("semigroup evaluator belongs to a different companion system")

    @classmethod
    def build(cls, companion: CompanionSystem, noise: LevyModel, observation=None, Z0=None,
              method: str = MATRIX_EXPONENTIAL, series_terms: int = 25,
              quadrature_nodes: int = 64) -> "CarmaSystem":
        """Convenience constructor; ``observation`` defaults to P_1 (a CAR(p) process)."""
        H = companion.spaces
        if observation is None:
            observation = projection_map(H, 1)
        elif not isinstance(observation, LinearMap):
            observation = vector_observation(H, observation)
        Z0 = np.zeros(H.dim) if Z0 is None else Z0
        ev = SemigroupEvaluator(companion, method, series_terms, quadrature_nodes)
        return cls(companion, noise, observation, Z0, ev, quadrature_nodes)

    @property
    def H(self) -> ProductSpace:
        return self.companion.spaces

    @property
    def U(self):
        return self.observation.codomain

    @property
    def p(self) -> int:
        return self.companion.p

    @property
    def L(self) -> np.ndarray:
        return self.observation.matrix

    @property
    def inj(self) -> np.ndarray:
        """Coordinate matrix of P_p*."""
        m = np.zeros((self.H.dim, self.noise.dim))
        m[self.H.block(self.p), :] = np.eye(self.noise.dim)
        return m

    def S(self, t: float) -> np.ndarray:
        return self.semigroup.evaluate(t)

    def is_car(self) -> bool:
        P1 = projection_map(self.H, 1).matrix
        return self.L.shape == P1.shape and np.array_equal(self.L, P1)

    def with_Z0(self, Z0) -> "CarmaSystem":
        return CarmaSystem(self.companion, self.noise, self.observation, Z0, self.semigroup,
                           self.quadrature_nodes)

    def with_noise(self, noise: LevyModel) -> "CarmaSystem":
        return CarmaSystem(self.companion, noise, self.observation, self.Z0, self.semigroup,
                           self.quadrature_nodes)


def vector_observation(H: ProductSpace, b: Sequence[float]) -> LinearMap:
    """Scalar readout z -> sum_k b_k z_k (the real CARMA(p, q) vector b)."""
    b = np.asarray(b, dtype=float).reshape(1, -1)
    if b.shape[1] != H.dim:
        raise ValueError(f"observation vector needs {H.dim} entries, got {b.shape[1]}")
    return LinearMap(H, SpaceSpec.scalar("U"), b)


# -- simulation ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimulationPath:
    """States, observations and the noise that produced them on t_i = i dt."""

    times: np.ndarray
    states: np.ndarray
    observations: np.ndarray
    increments: Optional[np.ndarray]
    innovations: np.ndarray
    scheme: str
    dt: float

    @property
    def M(self) -> int:
        return len(self.times) - 1

    def noise_path(self) -> np.ndarray:
        """L(t_i) rebuilt from the recorded increments."""
        if self.increments is None:
            raise UnsupportedError("exact-Gaussian paths do not record raw noise increments")
        return np.vstack([np.zeros(self.increments.shape[1]), np.cumsum(self.increments, axis=0)])


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def innovation_factor(sys: CarmaSystem, dt: float) -> np.ndarray:
    """F with F F^T the coordinate covariance of the exact innovation (cached per dt)."""
    key = float(dt)
    with sys._lock:
        hit = sys._factors.get(key)
    if hit is not None:
        return hit
    C = covariance_integral(sys, dt, observe=False)
    C = 0.5 * (C + C.T)
    lam, V = np.linalg.eigh(C)
    F = V * np.sqrt(np.clip(lam, 0.0, None))
    F.setflags(write=False)
    with sys._lock:
        return sys._factors.setdefault(key, F)


def simulate_path(sys: CarmaSystem, dt: float, M: int, rng=None, scheme: str = LEFT_POINT,
                  increments: Optional[np.ndarray] = None) -> SimulationPath:
    """Simulate Z and X on t_i = i dt, i = 0..M.

    ``rng`` is a Generator or a seed.  ``increments`` (shape (M, N_p))
    replays a given noise path instead of sampling; only valid with the
    left-point scheme.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    scheme = scheme_name(scheme)
    M = int(M)
    d = sys.H.dim
    S = sys.S(dt)
    if scheme == EXACT_GAUSSIAN:
        if sys.noise.has_jumps:
            raise UnsupportedError("exact-Gaussian innovations need a Wiener-only noise model")
        if increments is not None:
            raise UnsupportedError("increment replay needs the left-point scheme")
        F = innovation_factor(sys, dt)
        eps = _rng(rng).standard_normal((M, d)) @ F.T
        inc = None
    else:
        if increments is None:
            inc = sample_increments(sys.noise, dt, _rng(rng), size=M)
        else:
            inc = np.asarray(increments, dtype=float)
            if inc.shape != (M, sys.noise.dim):
                raise ValueError(f"increments must have shape {(M, sys.noise.dim)}, got {inc.shape}")
        eps = inc @ (S @ sys.inj).T
    Z = np.empty((M + 1, d))
    Z[0] = sys.Z0
    for i in range(M):
        Z[i + 1] = S @ Z[i] + eps[i]
    X = Z @ sys.L.T
    times = dt * np.arange(M + 1)
    return SimulationPath(times, Z, X, inc, eps, scheme, float(dt))


def simulate_paths(sys: CarmaSystem, dt: float, M: int, base_seed: int, n_paths: int,
                   scheme: str = LEFT_POINT, threads: int = 1) -> list:
    """Ensemble with path i seeded by ``base_seed + i``; returned in path order."""
    sys.S(dt)  # fill the cache before fanning out
    if scheme_name(scheme) == EXACT_GAUSSIAN:
        innovation_factor(sys, dt)

    def run(i):
        return simulate_path(sys, dt, M, np.random.default_rng(base_seed + i), scheme)

    if threads <= 1:
        return [run(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(n_paths)))


def simulate_ensemble(sys: CarmaSystem, dt: float, M: int, n_paths: int, seed: int,
                      scheme: str = LEFT_POINT, z0=None, record: Sequence[int] = ()) -> dict:
    """Vectorised ensemble for Monte-Carlo work.

    All paths are driven by one generator seeded with ``seed``; the draws
    for step i are taken for every path at once.  Returns a dict with the
    final states ``"final"`` (n_paths, d) and states at the step indices
    listed in ``record``.
    """
    scheme = scheme_name(scheme)
    rng = np.random.default_rng(seed)
    S = sys.S(dt)
    d = sys.H.dim
    if scheme == EXACT_GAUSSIAN:
        if sys.noise.has_jumps:
            raise UnsupportedError("exact-Gaussian innovations need a Wiener-only noise model")
        F = innovation_factor(sys, dt)
    else:
        G = S @ sys.inj
    Z = np.empty((n_paths, d))
    Z[:] = sys.Z0 if z0 is None else np.asarray(z0, dtype=float)
    out = {}
    record = set(int(k) for k in record)
    if 0 in record:
        out[0] = Z.copy()
    for i in range(M):
        if scheme == EXACT_GAUSSIAN:
            eps = rng.standard_normal((n_paths, d)) @ F.T
        else:
            eps = sample_increments(sys.noise, dt, rng, size=n_paths) @ G.T
        Z = Z @ S.T + eps
        if i + 1 in record:
            out[i + 1] = Z.copy()
    out["final"] = Z
    return out


def observe(sys: CarmaSystem, path: SimulationPath) -> np.ndarray:
    """X(t_i) = L_U Z(t_i)."""
    return path.states @ sys.L.T


# -- Bochner integrals -----------------------------------------------------------

def _quad_grid(sys: CarmaSystem, length: float, nodes: Optional[int] = None):
    nodes = sys.quadrature_nodes if nodes is None else nodes
    rho = float(np.max(np.abs(stability_check(sys.companion).eigenvalues)))
    max_step = STIFFNESS_STEP / rho if rho > 0 else None
    return uniform_grid(length, nodes, max_step=max_step)


def _readout_flow(sys: CarmaSystem, grid_h: float, n: int, readout: np.ndarray):
    """Yield readout @ S(t_k) for k = 0..n using the one-step propagator."""
    Sh = sys.S(grid_h)
    Y = readout.copy()
    for k in range(n + 1):
        yield k, Y
        Y = Y @ Sh


def covariance_integral(sys: CarmaSystem, length: float, observe: bool = True,
                        q: Optional[np.ndarray] = None, nodes: Optional[int] = None) -> np.ndarray:
    """Coordinate covariance int_0^length R S(u) P_p* Q P_p S(u)^T R^T du.

    R is L_U when ``observe`` is true, otherwise the identity on H.  ``q``
    overrides the covariance eigenvalues (default: those of the Wiener
    part).
    """
    if length <= 0:
        m = sys.U.dim if observe else sys.H.dim
        return np.zeros((m, m))
    q = sys.noise.q if q is None else np.asarray(q, dtype=float)
    qc = q / sys.noise.space.weights
    readout = sys.L if observe else np.eye(sys.H.dim)
    grid, h = _quad_grid(sys, length, nodes)
    n = len(grid) - 1
    w = simpson_weights(n, h)
    inj = sys.inj
    acc = np.zeros((readout.shape[0], readout.shape[0]))
    for k, Y in _readout_flow(sys, h, n, readout):
        F = Y @ inj
        acc += w[k] * (F * qc) @ F.T
    return 0.5 * (acc + acc.T)


def to_operator(coord_cov: np.ndarray, space) -> LinearMap:
    """Operator form C G of a coordinate covariance C."""
    return LinearMap(space, space, coord_cov * space.weights[None, :])


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    mean: np.ndarray
    covariance: LinearMap

    @property
    def coordinate_covariance(self) -> np.ndarray:
        return self.covariance.matrix / self.covariance.domain.weights[None, :]


def _grid_index(path: SimulationPath, s: float) -> int:
    k = int(round(s / path.dt))
    if abs(k * path.dt - s) > 1e-9 * max(1.0, s) or k > path.M:
        raise ValueError(f"s={s} is not a grid time of the recorded path")
    return k


def stochastic_convolution(sys: CarmaSystem, path: Optional[SimulationPath], s: float, t: float) -> np.ndarray:
    """int_0^s S(t - u) P_p* dL(u) replayed from the recorded innovations (H coordinates)."""
    if s == 0:
        return np.zeros(sys.H.dim)
    if path is None:
        raise ValueError("a recorded path is needed for s > 0")
    k = _grid_index(path, s)
    S = sys.S(path.dt)
    acc = np.zeros(sys.H.dim)
    for j in range(k):
        acc = S @ acc + path.innovations[j]
    return sys.S(t - s) @ acc


def conditional_law(sys: CarmaSystem, s: float, t: float, path: Optional[SimulationPath] = None) -> GaussianLaw:
    """Law of X(t) given F_s for Wiener noise."""
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    if sys.noise.has_jumps:
        raise UnsupportedError("conditional law is Gaussian only for Wiener noise")
    mean = sys.L @ (sys.S(t) @ sys.Z0 + stochastic_convolution(sys, path, s, t))
    cov = covariance_integral(sys, t - s)
    return GaussianLaw(mean, to_operator(cov, sys.U))


def growth_constants(sys: CarmaSystem, probe_time: float, margin: float = 0.9, n: int = 400):
    """(K, c) with |L_U S(t) P_p*| <= K e^{c t}; c is a fraction of the abscissa."""
    c = margin * stability_check(sys.companion).spectral_abscissa
    ts = np.linspace(0.0, probe_time, n + 1)
    wU = np.sqrt(sys.U.weights)
    wp = np.sqrt(sys.noise.space.weights)
    K = 0.0
    for t in ts:
        F = (wU[:, None] * (sys.L @ sys.S(t) @ sys.inj)) / wp[None, :]
        K = max(K, np.linalg.norm(F, 2) * math.exp(-c * t))
    return K, c


def stationary_horizon(sys: CarmaSystem, tolerance: float = 1e-10) -> float:
    rep = stability_check(sys.companion)
    if not rep.stable:
        raise UnstableSystemError(rep.spectral_abscissa)
    a = abs(rep.spectral_abscissa)
    K, c = growth_constants(sys, 20.0 / a)
    trace = max(sys.noise.trace(), 1e-300)
    log_arg = K**2 * trace / (2 * abs(c) * tolerance)
    return max(math.log(log_arg) / (2 * abs(c)) if log_arg > 1 else 0.0, 1.0 / a)


def stationary_covariance(sys: CarmaSystem, horizon: Optional[float] = None,
                          tolerance: float = 1e-10) -> LinearMap:
    """Covariance operator of the invariant law of X.

    The improper integral is cut at ``horizon`` where the tail bound
    K^2 e^{2 c horizon} tr(Q) / (2|c|) drops below ``tolerance``.  Jump
    noise contributes through its covariance rate * v_n.
    """
    rep = stability_check(sys.companion)
    if not rep.stable:
        raise UnstableSystemError(rep.spectral_abscissa)
    if horizon is None:
        horizon = stationary_horizon(sys, tolerance)
    cov = covariance_integral(sys, horizon, q=sys.noise.covariance_eigenvalues)
    return to_operator(cov, sys.U)


def char_functional(sys: CarmaSystem, s: float, t: float, x, path: Optional[SimulationPath] = None,
                    nodes: Optional[int] = None) -> complex:
    """E[exp(i <X(t), x>_U) | F_s].

    exp(i<L S(t) Z0, x> + int_0^{t-s} psi_L(P_p S(u)* L* x) du) times the
    phase of the replayed stochastic integral up to s.
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    x = np.asarray(x, dtype=float).reshape(-1)
    wU = sys.U.weights
    Gx = wU * x
    phase = float((sys.L @ (sys.S(t) @ sys.Z0)) @ Gx)
    phase += float((sys.L @ stochastic_convolution(sys, path, s, t)) @ Gx)
    integral = 0j
    if t > s and np.any(x):
        grid, h = _quad_grid(sys, t - s, nodes)
        n = len(grid) - 1
        w = simpson_weights(n, h)
        wp = sys.noise.space.weights
        hs = np.empty((n + 1, sys.noise.dim))
        for k, Y in _readout_flow(sys, h, n, sys.L):
            # P_p S(u)* L_U* x = G_p^{-1} (L S(u) P_p*)^T G_U x
            hs[k] = ((Y @ sys.inj).T @ Gx) / wp
        integral = complex(w @ char_exponent_batch(sys.noise, hs))
    return complex(np.exp(1j * phase + integral))


def empirical_char_function(samples: np.ndarray, x: np.ndarray, weights: np.ndarray):
    """Sample mean of exp(i <X, x>_U) with its Monte-Carlo standard errors (re, im)."""
    vals = np.exp(1j * (samples @ (weights * np.asarray(x, dtype=float))))
    n = len(vals)
    mean = vals.mean()
    se = (vals.real.std(ddof=1) / math.sqrt(n), vals.imag.std(ddof=1) / math.sqrt(n))
    return complex(mean), se


# -- pathwise identities ---------------------------------------------------------

@dataclass(frozen=True)
class SemimartingaleReport:
    max_deviation: float
    scale: float
    deviations: np.ndarray
    derivative_rel_error: float


def semimartingale_check(sys: CarmaSystem, path: SimulationPath) -> SemimartingaleReport:
    """Rebuild X from P_1 S(t) Z0 + P_1 C int_0^t int_0^u S(u-s) P_p* dL(s) du.

    The inner stochastic integral is replayed from the recorded innovations
    and the outer time integral uses the trapezoid rule on the path grid.
    Also compares X'(t) = P_1 C S(t) Z0 + P_1 C int_0^t S(t-s) P_p* dL(s)
    with central differences of X.  Deviations are measured in the H_1 norm.
    """
    if sys.p == 1:
        raise UnsupportedError("p = 1: the Ornstein-Uhlenbeck observation does not have differentiable paths")
    if not sys.is_car():
        raise UnsupportedError("semimartingale check needs the CAR observation P_1")
    dt, M = path.dt, path.M
    S = sys.S(dt)
    C = sys.companion.assembled
    P1 = sys.L
    d = sys.H.dim

    Y = np.zeros((M + 1, d))
    D = np.zeros((M + 1, d))
    D[0] = sys.Z0
    for i in range(M):
        Y[i + 1] = S @ Y[i] + path.innovations[i]
        D[i + 1] = S @ D[i]
    cum = np.zeros((M + 1, d))
    cum[1:] = np.cumsum(0.5 * dt * (Y[1:] + Y[:-1]), axis=0)
    rebuilt = D @ P1.T + cum @ (P1 @ C).T

    w1 = sys.U.weights
    X = path.observations

    def hnorm(v):
        return np.sqrt((v**2 * w1).sum(axis=-1))

    dev = hnorm(rebuilt - X)
    if path.increments is not None:
        L = path.noise_path()
        scale = float(max(1.0, np.max(hnorm(L @ (P1 @ C @ sys.inj).T))))
    else:
        scale = float(max(1.0, np.max(hnorm(X))))

    deriv = (D + Y) @ (P1 @ C).T
    if M >= 2:
        fd = (X[2:] - X[:-2]) / (2 * dt)
        ref = float(np.max(hnorm(deriv[1:-1])))
        rel = float(np.max(hnorm(deriv[1:-1] - fd)) / ref) if ref > 0 else 0.0
    else:
        rel = float("nan")
    return SemimartingaleReport(float(np.max(dev)), scale, dev, rel)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments (same noise, coarser grid)."""
    M = increments.shape[0]
    if M % factor:
        raise ValueError("number of increments must be divisible by factor")
    return increments.reshape(M // factor, factor, -1).sum(axis=1)


def wave_exact_modewise(increments: np.ndarray, dt: float) -> np.ndarray:
    """Mode-wise sine convolutions of the wave equation with Z0 = 0.

    Coefficient n of X(t_i) is sum_{j<i} sin(pi n (t_i - t_j)) dl_n(j) / (pi n),
    the left-point sum of int_0^t sin(pi n (t - s)) dl_n(s) / (pi n).  The
    angle-addition formula turns the double sum into running sums.
    Returns an array of shape (M+1, N).
    """
    inc = np.asarray(increments, dtype=float)
    M, N = inc.shape
    w = np.pi * np.arange(1, N + 1)
    t = dt * np.arange(M + 1)
    ph = np.outer(t, w)
    sin_t, cos_t = np.sin(ph), np.cos(ph)
    csum = np.zeros((M + 1, N))
    ssum = np.zeros((M + 1, N))
    csum[1:] = np.cumsum(cos_t[:-1] * inc, axis=0)
    ssum[1:] = np.cumsum(sin_t[:-1] * inc, axis=0)
    return (sin_t * csum - cos_t * ssum) / w
