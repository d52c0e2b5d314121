"""
The companion operator matrix and the operators derived from it.

Block layout (1-based)::

    C_p = [[0,   I_p, 0,       ..., 0  ],
           [0,   0,   I_{p-1}, ..., 0  ],
           ...
           [0,   ...,               I_2],
           [A_p, A_{p-1}, ...,      A_1]]

with ``A_i : H_{p+1-i} -> H_p`` and ``I_i : H_{p+2-i} -> H_{p+1-i}``.
Unbounded operators such as the Laplacian enter through their truncated
matrices; nothing else distinguishes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spaces import DimensionError, LinearMap, ProductSpace, SpaceSpec, SINE, same_space

DEFAULT_STABILITY_TOL = 1e-9
MAX_CONDITION = 1e12


class AssemblyError(DimensionError):
    """A block does not fit the space layout."""


class DerivationError(ValueError):
    """The commutation operators B_q cannot be constructed."""


class NumericalError(ArithmeticError):
    """An eigen- or exponential computation broke down."""


# -- named block constructors --------------------------------------------------

def identity(space: SpaceSpec, codomain: SpaceSpec | None = None) -> LinearMap:
    codomain = space if codomain is None else codomain
    if codomain.dim != space.dim:
        raise AssemblyError(f"identity needs equal dims, got {space.dim} -> {codomain.dim}")
    return LinearMap(space, codomain, np.eye(space.dim))


def scaled_identity(space: SpaceSpec, c: float, codomain: SpaceSpec | None = None) -> LinearMap:
    return c * identity(space, codomain)


def zero(space: SpaceSpec, codomain: SpaceSpec | None = None) -> LinearMap:
    return LinearMap.zero(space, space if codomain is None else codomain)


def laplacian_sine(space: SpaceSpec, codomain: SpaceSpec | None = None) -> LinearMap:
    """Dirichlet Laplacian on (0, 1): diag(-pi^2 n^2) in the sine basis."""
    codomain = space if codomain is None else codomain
    for s in (space, codomain):
        if s.basis_kind != SINE:
            raise AssemblyError(f"laplacian_sine needs a sine basis, {s.label!r} is {s.basis_kind!r}")
    if codomain.dim != space.dim:
        raise AssemblyError("laplacian_sine needs equal dims")
    n = space.modes
    return LinearMap(space, codomain, np.diag(-np.pi**2 * n**2.0))


# -- companion system ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompanionSystem:
    """Blocks A_1..A_p, I_2..I_p and the assembled matrix of C_p."""

    spaces: ProductSpace
    A_blocks: tuple
    I_blocks: tuple
    assembled: np.ndarray

    @property
    def p(self) -> int:
        return self.spaces.p

    @property
    def dim(self) -> int:
        return self.spaces.dim

    @property
    def generator(self) -> LinearMap:
        return LinearMap(self.spaces, self.spaces, self.assembled)

    def A(self, i: int) -> LinearMap:
        return self.A_blocks[i - 1]

    def I(self, i: int) -> LinearMap:
        return self.I_blocks[i - 2]

    def inner(self) -> "CompanionSystem":
        """The order p-1 system C_{p-1} on H_2 x ... x H_p."""
        if self.p < 2:
            raise ValueError("C_1 has no inner system")
        return assemble_companion(self.spaces.spaces[1:], self.A_blocks[:-1], self.I_blocks[:-1])

    def perturbation(self) -> np.ndarray:
        """The bounded part B_p: I_p in block (1,2), A_p in block (p,1)."""
        B = np.zeros_like(self.assembled)
        sl = self.spaces.block
        B[sl(1), sl(2)] = self.I(self.p).matrix
        B[sl(self.p), sl(1)] = self.A(self.p).matrix
        return B

    def is_all_identity_I(self) -> bool:
        return all(m.matrix.shape[0] == m.matrix.shape[1]
                   and np.array_equal(m.matrix, np.eye(m.matrix.shape[0]))
                   for m in self.I_blocks)


def _as_block(block, domain: SpaceSpec, codomain: SpaceSpec, name: str) -> LinearMap:
    if isinstance(block, LinearMap):
        if not (same_space(block.domain, domain) and same_space(block.codomain, codomain)):
            if block.matrix.shape != (codomain.dim, domain.dim):
                raise AssemblyError(
                    f"block {name}: shape {block.matrix.shape} but layout needs "
                    f"{codomain.dim}x{domain.dim} ({codomain.label} <- {domain.label})")
            block = LinearMap(domain, codomain, block.matrix)
        return block
    m = np.atleast_2d(np.asarray(block, dtype=float))
    if m.shape != (codomain.dim, domain.dim):
        raise AssemblyError(
            f"block {name}: shape {m.shape} but layout needs "
            f"{codomain.dim}x{domain.dim} ({codomain.label} <- {domain.label})")
    return LinearMap(domain, codomain, m)


def assemble_companion(spaces: Sequence[SpaceSpec] | ProductSpace,
                       A_blocks: Sequence, I_blocks: Sequence = ()) -> CompanionSystem:
    """Assemble C_p from ``A_blocks = [A_1, ..., A_p]`` and ``I_blocks = [I_2, ..., I_p]``.

    Blocks may be :class:`LinearMap` instances or plain arrays.
    """
    H = spaces if isinstance(spaces, ProductSpace) else ProductSpace(tuple(spaces))
    p = H.p
    if len(A_blocks) != p:
        raise AssemblyError(f"need {p} A blocks, got {len(A_blocks)}")
    if len(I_blocks) != p - 1:
        raise AssemblyError(f"need {p - 1} I blocks, got {len(I_blocks)}")
    Hs = H.spaces  # Hs[k-1] is H_k

    A = tuple(_as_block(A_blocks[i - 1], Hs[p - i], Hs[p - 1], f"A_{i}") for i in range(1, p + 1))
    I = tuple(_as_block(I_blocks[i - 2], Hs[p + 1 - i], Hs[p - i], f"I_{i}") for i in range(2, p + 1))

    M = np.zeros((H.dim, H.dim))
    for r in range(1, p):
        M[H.block(r), H.block(r + 1)] = I[p + 1 - r - 2].matrix
    for c in range(1, p + 1):
        M[H.block(p), H.block(c)] = A[p + 1 - c - 1].matrix
    M.setflags(write=False)
    return CompanionSystem(H, A, I, M)


def scalar_companion(alphas: Sequence[float]) -> CompanionSystem:
    """Real companion matrix for lambda^p + alpha_1 lambda^{p-1} + ... + alpha_p.

    All component spaces are one-dimensional and the I blocks are 1.
    """
    p = len(alphas)
    spaces = [SpaceSpec.scalar(f"R{k}") for k in range(1, p + 1)]
    return assemble_companion(spaces, [[[-a]] for a in alphas], [[[1.0]]] * (p - 1))


def wave_system(N: int = 16) -> CompanionSystem:
    """The stochastic wave equation as a CAR(2) system on H_1 x L^2(0, 1).

    H_1 carries the energy norm, A_1 = 0, I_2 = Id and A_2 = Laplacian.
    """
    H1 = SpaceSpec.sine(N, "H1", energy=True)
    H2 = SpaceSpec.sine(N, "L2")
    return assemble_companion([H1, H2], [zero(H2), laplacian_sine(H1, H2)], [identity(H2, H1)])


def check_structure(system: CompanionSystem) -> bool:
    """True when every block of the assembled matrix sits where it should."""
    H, p, M = system.spaces, system.p, system.assembled
    for r in range(1, p + 1):
        for c in range(1, p + 1):
            blk = M[H.block(r), H.block(c)]
            if r == p:
                expected = system.A(p + 1 - c).matrix
            elif c == r + 1:
                expected = system.I(p + 1 - r).matrix
            else:
                expected = np.zeros_like(blk)
            if not np.array_equal(blk, expected):
                return False
    return True


# -- B operators and the operator polynomial ----------------------------------

@dataclass(frozen=True, eq=False)
class BOperators:
    """B_1..B_p, each acting on H_1."""

    B: tuple

    @property
    def p(self) -> int:
        return len(self.B)

    @property
    def space(self) -> SpaceSpec:
        return self.B[0].domain

    def __getitem__(self, q: int) -> LinearMap:
        return self.B[q - 1]


def _I_product(system: CompanionSystem, lo: int) -> np.ndarray:
    """Matrix of I_p I_{p-1} ... I_lo (identity on H_1 when lo > p)."""
    p = system.p
    M = np.eye(system.spaces.spaces[0].dim)
    for i in range(p, lo - 1, -1):
        M = M @ system.I(i).matrix
    return M


def commutation_residual(system: CompanionSystem, B: BOperators) -> float:
    """Worst relative Frobenius residual of I_p...I_2 A_q = B_q I_p...I_{q+1}."""
    full = _I_product(system, 2)
    worst = 0.0
    for q in range(1, system.p + 1):
        lhs = full @ system.A(q).matrix
        rhs = B[q].matrix @ _I_product(system, q + 1)
        scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1e-300)
        worst = max(worst, np.linalg.norm(lhs - rhs) / scale)
    return float(worst)


def derive_B(system: CompanionSystem) -> BOperators:
    """Solve the commutation relation for B_1..B_p.

    ``B_q = (I_p...I_2 A_q)(I_p...I_{q+1})^{-1}`` for q < p and
    ``B_p = I_p...I_2 A_p``.  When every I block is the identity the A
    blocks are returned unchanged.  Singular or rectangular I products are
    refused rather than pseudo-inverted.
    """
    p = system.p
    H1 = system.spaces.spaces[0]
    if system.is_all_identity_I():
        return BOperators(tuple(LinearMap(H1, H1, system.A(q).matrix) for q in range(1, p + 1)))

    full = _I_product(system, 2)
    Bs = []
    for q in range(1, p + 1):
        lhs = full @ system.A(q).matrix
        if q == p:
            Bs.append(LinearMap(H1, H1, lhs))
            continue
        R = _I_product(system, q + 1)
        if R.shape[0] != R.shape[1]:
            raise DerivationError(f"I_p...I_{q + 1} is not square ({R.shape}); B_{q} undefined")
        cond = np.linalg.cond(R)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise DerivationError(
                f"I_p...I_{q + 1} is singular or ill-conditioned (cond={cond:.3g}); B_{q} undefined")
        # B R = lhs  <=>  R^T B^T = lhs^T
        Bq = np.linalg.solve(R.T, lhs.T).T
        Bs.append(LinearMap(H1, H1, Bq))
    return BOperators(tuple(Bs))


def q_polynomial(B: BOperators, lam: complex) -> LinearMap:
    """Q_p(lam) = lam^p Id - B_1 lam^{p-1} - ... - B_p, as a complex matrix."""
    p = B.p
    n = B.space.dim
    M = (lam**p) * np.eye(n, dtype=complex)
    for q in range(1, p + 1):
        M = M - (lam ** (p - q)) * B[q].matrix
    return LinearMap(B.space, B.space, M)


# -- stability -----------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    spectral_abscissa: float
    eigenvalues: tuple


def stability_check(system: CompanionSystem, tol: float = DEFAULT_STABILITY_TOL) -> StabilityReport:
    """Spectral stability test: stable iff max Re(lambda) < -tol.

    The wave equation sits exactly on the imaginary axis and is reported as
    not stable.
    """
    M = system.assembled
    if not np.all(np.isfinite(M)):
        raise NumericalError("companion matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    order = np.lexsort((eig.imag, eig.real))
    eig = eig[order]
    abscissa = float(np.max(eig.real))
    return StabilityReport(abscissa < -tol, abscissa, tuple(complex(z) for z in eig))
