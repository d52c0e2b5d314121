import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_system
from hcarma.operators import (AssemblyError, DerivationError, NumericalError, assemble_companion,
                              check_structure, commutation_residual, derive_B, identity,
                              laplacian_sine, q_polynomial, scalar_companion, scaled_identity,
                              stability_check, wave_system, zero)
from hcarma.spaces import SpaceSpec

seeds = st.integers(0, 2**32 - 1)


def test_wave_assembly():
    N = 4
    sys = wave_system(N)
    lap = np.diag(-np.pi**2 * np.arange(1, N + 1) ** 2.0)
    expected = np.block([[np.zeros((N, N)), np.eye(N)], [lap, np.zeros((N, N))]])
    np.testing.assert_array_equal(sys.assembled, expected)
    assert check_structure(sys)


def test_p1_assembled_is_A1(rng):
    s = SpaceSpec("H", 3)
    A1 = rng.standard_normal((3, 3))
    sys = assemble_companion([s], [A1], [])
    np.testing.assert_array_equal(sys.assembled, A1)


def test_scalar_companion_matches_real_companion():
    a1, a2, a3 = 1.5, 2.0, 0.7
    sys = scalar_companion([a1, a2, a3])
    np.testing.assert_array_equal(sys.assembled, [[0, 1, 0], [0, 0, 1], [-a3, -a2, -a1]])


def test_assembly_errors_name_the_block():
    a, b = SpaceSpec("a", 2), SpaceSpec("b", 3)
    with pytest.raises(AssemblyError, match="A_2"):
        assemble_companion([a, b], [np.zeros((3, 3)), np.zeros((2, 2))], [np.zeros((2, 3))])
    with pytest.raises(AssemblyError, match="I_2"):
        assemble_companion([a, b], [np.zeros((3, 3)), np.zeros((3, 2))], [np.zeros((3, 3))])
    with pytest.raises(AssemblyError):
        assemble_companion([a], [np.zeros((2, 2)), np.zeros((2, 2))], [])


def test_mixed_dims_block_layout(rng):
    # A_i : H_{p+1-i} -> H_p, I_i : H_{p+2-i} -> H_{p+1-i}
    dims = (2, 3, 4)
    H = [SpaceSpec(f"H{k}", d) for k, d in enumerate(dims, 1)]
    A = [rng.standard_normal((4, dims[3 - i])) for i in range(1, 4)]
    I = [rng.standard_normal((dims[3 - i], dims[4 - i])) for i in range(2, 4)]
    sys = assemble_companion(H, A, I)
    assert check_structure(sys)
    sl = sys.spaces.block
    np.testing.assert_array_equal(sys.assembled[sl(1), sl(2)], sys.I(3).matrix)
    np.testing.assert_array_equal(sys.assembled[sl(3), sl(1)], sys.A(3).matrix)
    np.testing.assert_array_equal(sys.assembled[sl(1), sl(3)], 0)


def test_named_constructors():
    s = SpaceSpec.sine(3)
    np.testing.assert_array_equal(identity(s).matrix, np.eye(3))
    np.testing.assert_array_equal(scaled_identity(s, -2.0).matrix, -2 * np.eye(3))
    np.testing.assert_array_equal(zero(s).matrix, 0)
    np.testing.assert_allclose(np.diag(laplacian_sine(s).matrix), -np.pi**2 * np.array([1, 4, 9]))
    with pytest.raises(AssemblyError):
        laplacian_sine(SpaceSpec("abstract", 3))


@given(seeds, st.integers(1, 4))
def test_structural_zeros_exact(seed, p):
    sys = random_system(p, 2, np.random.default_rng(seed))
    assert check_structure(sys)


def test_derive_B_identity_I(rng):
    sys = random_system(3, 3, rng)
    B = derive_B(sys)
    for q in range(1, 4):
        np.testing.assert_array_equal(B[q].matrix, sys.A(q).matrix)


def test_derive_B_p1(rng):
    sys = random_system(1, 3, rng)
    np.testing.assert_array_equal(derive_B(sys)[1].matrix, sys.A(1).matrix)


def test_derive_B_diagonal_example():
    s = SpaceSpec("H", 3)
    d = np.diag([1.0, -2.0, 0.5])
    sys = assemble_companion([s, s], [d, np.eye(3)], [2 * np.eye(3)])
    B = derive_B(sys)
    np.testing.assert_allclose(B[1].matrix, d, atol=1e-15)
    np.testing.assert_allclose(B[2].matrix, 2 * np.eye(3))


@pytest.mark.parametrize("seed", range(50))
def test_commutation_identity_random(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 5))
    sys = random_system(p, 3, rng, invertible_I=True)
    B = derive_B(sys)
    assert commutation_residual(sys, B) <= 1e-10
    # B_p is exact
    from hcarma.operators import _I_product
    np.testing.assert_array_equal(B[p].matrix, _I_product(sys, 2) @ sys.A(p).matrix)


def test_derive_B_refuses_singular():
    s = SpaceSpec("H", 2)
    sing = np.array([[1.0, 0.0], [0.0, 0.0]])
    sys = assemble_companion([s, s, s], [np.eye(2)] * 3, [np.eye(2), sing])
    with pytest.raises(DerivationError):
        derive_B(sys)


def test_derive_B_refuses_rectangular():
    a, b = SpaceSpec("a", 2), SpaceSpec("b", 3)
    sys = assemble_companion([a, b], [np.zeros((3, 3)), np.zeros((3, 2))], [np.ones((2, 3))])
    with pytest.raises(DerivationError):
        derive_B(sys)


def test_q_polynomial_examples(rng):
    sys = random_system(3, 2, rng)
    B = derive_B(sys)
    np.testing.assert_array_equal(q_polynomial(B, 0).matrix, -B[3].matrix)
    s = SpaceSpec("H", 2)
    B1 = derive_B(assemble_companion([s], [0.7 * np.eye(2)], []))
    np.testing.assert_allclose(q_polynomial(B1, 1.5 + 2j).matrix, (1.5 + 2j - 0.7) * np.eye(2))
    b1, b2 = 0.3, -1.2
    B2 = derive_B(scalar_companion([-b1, -b2]))
    assert q_polynomial(B2, 1.0).matrix[0, 0] == pytest.approx(1 - b1 - b2)


def test_stability_examples():
    N = 5
    s = SpaceSpec.sine(N)
    heat = assemble_companion([s], [laplacian_sine(s)], [])
    rep = stability_check(heat)
    assert rep.stable
    np.testing.assert_allclose(sorted(z.real for z in rep.eigenvalues),
                               sorted(-np.pi**2 * np.arange(1, N + 1) ** 2.0))

    wave = stability_check(wave_system(N))
    assert not wave.stable
    assert abs(wave.spectral_abscissa) < 1e-9
    imag = np.sort(np.abs([z.imag for z in wave.eigenvalues]))
    np.testing.assert_allclose(imag, np.repeat(np.pi * np.arange(1, N + 1), 2), rtol=1e-12)

    sc = stability_check(scalar_companion([3.0, 2.0]))
    assert sc.stable
    np.testing.assert_allclose(sorted(z.real for z in sc.eigenvalues), [-2.0, -1.0], atol=1e-12)


@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5, unique=True))
def test_scalar_eigenvalues_are_polynomial_roots(roots):
    # alphas built from well-separated real roots so the oracle is well conditioned
    roots = np.sort(-np.asarray(roots))
    if len(roots) > 1 and np.min(np.diff(roots)) < 0.1:
        roots = np.sort(-0.1 - 0.5 * np.arange(len(roots)))
    alphas = np.poly(roots)[1:]
    eig = np.sort(np.array(stability_check(scalar_companion(alphas)).eigenvalues).real)
    np.testing.assert_allclose(eig, roots, rtol=1e-8, atol=1e-8)


def test_stability_tolerance_configurable():
    rep = stability_check(wave_system(3), tol=-1.0)
    assert rep.stable


def test_stability_nonfinite():
    s = SpaceSpec("H", 1)
    sys = assemble_companion([s], [[[np.nan]]], [])
    with pytest.raises(NumericalError):
        stability_check(sys)
