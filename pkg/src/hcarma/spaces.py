"""
Truncated Hilbert spaces and the linear maps between them.

Every space is represented by the first ``dim`` coefficients in a fixed
orthogonal basis.  The basis need not be orthonormal: the squared norms of
the basis vectors are stored as ``weights`` (the diagonal of the Gram
matrix).  This lets one coefficient vector describe the same function in
L²(0, 1) and in the energy space of the wave equation, whose norm is
``|f|² = π² Σ n² f_n²``.

A product space H₁ × ... × H_p is a concatenation of coordinate blocks.
Linear maps carry the coordinate matrix together with their domain and
codomain so that adjoints can be taken with respect to the weighted inner
products.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

ABSTRACT = "abstract"
SINE = "sine_on_unit_interval"
BASIS_KINDS = (ABSTRACT, SINE)

DEFAULT_DIM = 16


class DimensionError(ValueError):
    """Raised when vectors or maps live on incompatible spaces."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpaceSpec:
    """A truncated separable Hilbert space.

    Parameters
    ----------
    label : str
        Name used in error messages and scenario files.
    dim : int
        Truncation level N.
    weights : array_like, optional
        Squared norms of the N basis vectors.  Defaults to all ones
        (orthonormal basis).
    basis_kind : {"abstract", "sine_on_unit_interval"}
        For the sine basis, basis vector n is ``sqrt(2) sin(pi n x)`` and
        the Dirichlet Laplacian is diagonal with eigenvalue ``-pi^2 n^2``.
    """

    label: str
    dim: int
    weights: np.ndarray = None
    basis_kind: str = ABSTRACT

    def __post_init__(self):
        dim = int(self.dim)
        if dim < 1:
            raise DimensionError(f"space {self.label!r}: dim must be >= 1, got {self.dim}")
        w = np.ones(dim) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (dim,):
            raise DimensionError(
                f"space {self.label!r}: expected {dim} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError(f"space {self.label!r}: weights must be finite and > 0")
        if self.basis_kind not in BASIS_KINDS:
            raise ValueError(f"space {self.label!r}: unknown basis_kind {self.basis_kind!r}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def sine(cls, dim: int = DEFAULT_DIM, label: str = "L2", energy: bool = False) -> "SpaceSpec":
        """Sine basis on (0, 1); ``energy=True`` gives the H₁ wave norm."""
        n = np.arange(1, dim + 1)
        weights = np.pi**2 * n**2 if energy else np.ones(dim)
        return cls(label, dim, weights, SINE)

    @classmethod
    def scalar(cls, label: str = "R") -> "SpaceSpec":
        return cls(label, 1)

    @property
    def gram(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def modes(self) -> np.ndarray:
        """Mode numbers 1..N."""
        return np.arange(1, self.dim + 1)

    def same_as(self, other) -> bool:
        return (isinstance(other, SpaceSpec)
                and self.dim == other.dim
                and self.basis_kind == other.basis_kind
                and np.array_equal(self.weights, other.weights))

    def zeros(self) -> "HVector":
        return HVector(self, np.zeros(self.dim))

    def basis_vector(self, n: int) -> "HVector":
        """Basis vector with 1-based mode index ``n``."""
        c = np.zeros(self.dim)
        c[n - 1] = 1.0
        return HVector(self, c)

    def __repr__(self):
        return f"SpaceSpec({self.label!r}, dim={self.dim}, basis_kind={self.basis_kind!r})"


@dataclass(frozen=True, eq=False)
class ProductSpace:
    """The product H₁ × ... × H_p with the summed inner product."""

    spaces: tuple

    def __post_init__(self):
        spaces = tuple(self.spaces)
        if not spaces:
            raise DimensionError("product space needs at least one component")
        object.__setattr__(self, "spaces", spaces)

    @property
    def p(self) -> int:
        return len(self.spaces)

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self.spaces)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([s.weights for s in self.spaces])

    @property
    def gram(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def label(self) -> str:
        return " x ".join(s.label for s in self.spaces)

    def block(self, i: int) -> slice:
        """Coordinate slice of component ``i`` (1-based)."""
        if not 1 <= i <= self.p:
            raise IndexError(f"component index {i} out of range 1..{self.p}")
        off = self.offsets
        return slice(int(off[i - 1]), int(off[i]))

    def same_as(self, other) -> bool:
        return (isinstance(other, ProductSpace) and other.p == self.p
                and all(a.same_as(b) for a, b in zip(self.spaces, other.spaces)))

    def split(self, coords) -> "ProductVector":
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            raise DimensionError(f"expected {self.dim} coordinates, got shape {coords.shape}")
        return ProductVector(tuple(HVector(s, coords[self.block(i + 1)])
                                   for i, s in enumerate(self.spaces)))

    def zeros(self) -> "ProductVector":
        return ProductVector(tuple(s.zeros() for s in self.spaces))


Space = Union[SpaceSpec, ProductSpace]


def same_space(a: Space, b: Space) -> bool:
    return a is b or a.same_as(b)


@dataclass(frozen=True, eq=False)
class HVector:
    space: SpaceSpec
    coords: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coords)
        if c.shape != (self.space.dim,):
            raise DimensionError(
                f"vector in {self.space.label!r} needs {self.space.dim} coords, got shape {c.shape}")
        object.__setattr__(self, "coords", c)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))

    def __add__(self, other: "HVector") -> "HVector":
        _check_same(self.space, other.space)
        return HVector(self.space, self.coords + other.coords)

    def __mul__(self, c: float) -> "HVector":
        return HVector(self.space, c * self.coords)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ProductVector:
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def space(self) -> ProductSpace:
        return ProductSpace(tuple(c.space for c in self.components))

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([c.coords for c in self.components])

    def norm(self) -> float:
        # Inner-product-induced norm sqrt(sum |x_i|_i^2).
        return float(np.sqrt(inner(self, self)))


def _check_same(a: Space, b: Space):
    if not same_space(a, b):
        raise DimensionError(f"space mismatch: {a.label!r} vs {b.label!r}")


def inner(u, v) -> float:
    """Weighted inner product ``sum_n w_n u_n v_n``.

    For product vectors this is the sum of the component inner products.
    """
    if isinstance(u, ProductVector) and isinstance(v, ProductVector):
        if len(u.components) != len(v.components):
            raise DimensionError("product vectors have different numbers of components")
        return float(sum(inner(a, b) for a, b in zip(u.components, v.components)))
    if isinstance(u, HVector) and isinstance(v, HVector):
        _check_same(u.space, v.space)
        return float(np.sum(u.space.weights * u.coords * v.coords))
    raise TypeError("inner() needs two HVectors or two ProductVectors")


def project(x: ProductVector, i: int) -> HVector:
    """The projection P_i onto the ``i``-th component (1-based)."""
    if not 1 <= i <= len(x.components):
        raise IndexError(f"component index {i} out of range 1..{len(x.components)}")
    return x.components[i - 1]


def inject(x: HVector, i: int, layout: Sequence[SpaceSpec]) -> ProductVector:
    """The adjoint P_i*: ``x`` in slot ``i``, zeros elsewhere."""
    layout = tuple(layout.spaces) if isinstance(layout, ProductSpace) else tuple(layout)
    if not 1 <= i <= len(layout):
        raise IndexError(f"component index {i} out of range 1..{len(layout)}")
    _check_same(x.space, layout[i - 1])
    return ProductVector(tuple(x if k == i - 1 else s.zeros() for k, s in enumerate(layout)))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A bounded map between truncated spaces, stored as its coordinate matrix.

    ``matrix`` has shape ``(codomain.dim, domain.dim)`` and acts on
    coefficient vectors.  Complex matrices are allowed (used for the
    operator polynomial evaluated at complex arguments).
    """

    domain: Space
    codomain: Space
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        m = _frozen(m, dtype=complex if np.iscomplexobj(m) else float)
        if m.shape != (self.codomain.dim, self.domain.dim):
            raise DimensionError(
                f"matrix shape {m.shape} does not match "
                f"{self.codomain.label!r} <- {self.domain.label!r} "
                f"({self.codomain.dim}x{self.domain.dim})")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, space: Space) -> "LinearMap":
        return cls(space, space, np.eye(space.dim))

    @classmethod
    def zero(cls, domain: Space, codomain: Space) -> "LinearMap":
        return cls(domain, codomain, np.zeros((codomain.dim, domain.dim)))

    def __call__(self, x):
        if isinstance(x, (HVector, ProductVector)):
            _check_same(x.space, self.domain)
            y = self.matrix @ x.coords
            if isinstance(self.codomain, ProductSpace):
                return self.codomain.split(y)
            return HVector(self.codomain, y)
        return self.matrix @ np.asarray(x)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        _check_same(self.domain, other.codomain)
        return LinearMap(other.domain, self.codomain, self.matrix @ other.matrix)

    def __add__(self, other: "LinearMap") -> "LinearMap":
        _check_same(self.domain, other.domain)
        _check_same(self.codomain, other.codomain)
        return LinearMap(self.domain, self.codomain, self.matrix + other.matrix)

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        return self + (-1.0) * other

    def __mul__(self, c) -> "LinearMap":
        return LinearMap(self.domain, self.codomain, c * self.matrix)

    __rmul__ = __mul__

    @property
    def T(self) -> "LinearMap":
        return adjoint(self)


def adjoint(T: LinearMap) -> LinearMap:
    """Adjoint with respect to the weighted inner products.

    The matrix is ``G_dom^{-1} T^H G_cod`` where the G are the diagonal
    Gram matrices.
    """
    m = np.conj(T.matrix).T
    m = (m / T.domain.weights[:, None]) * T.codomain.weights[None, :]
    return LinearMap(T.codomain, T.domain, m)


def adjoint_matrix(matrix: np.ndarray, dom_weights: np.ndarray, cod_weights: np.ndarray) -> np.ndarray:
    """Raw-array version of :func:`adjoint` for hot loops."""
    return (np.conj(matrix).T / dom_weights[:, None]) * cod_weights[None, :]


def projection_map(space: ProductSpace, i: int) -> LinearMap:
    """P_i as a linear map H -> H_i."""
    m = np.zeros((space.spaces[i - 1].dim, space.dim))
    m[:, space.block(i)] = np.eye(space.spaces[i - 1].dim)
    return LinearMap(space, space.spaces[i - 1], m)


def injection_map(space: ProductSpace, i: int) -> LinearMap:
    """P_i* as a linear map H_i -> H."""
    return adjoint(projection_map(space, i))
