import numpy as np
import pytest
from hypothesis import given, strategies as st

from apsg.numerics import (
    BlockTridiagonalMatrix,
    QuadratureRule,
    SingularSystemError,
    TridiagonalMatrix,
    gauss_legendre,
    is_spd,
    map_rule,
    minmod,
    solve_block_tridiagonal,
    solve_block_tridiagonal_cyclic,
    solve_tridiagonal,
    solve_tridiagonal_cyclic,
    velocity_average,
)

finite = st.floats(min_value=-1e8, max_value=1e8, allow_nan=False)


# ---------------------------------------------------------------------------
# Gauss-Legendre
# ---------------------------------------------------------------------------

def test_gauss_legendre_n1():
    r = gauss_legendre(1)
    assert r.nodes == pytest.approx([0.0])
    assert r.weights == pytest.approx([2.0])


def test_gauss_legendre_n2():
    # roots of P_2: +- 1/sqrt(3), from the exactness conditions up to degree 3
    r = gauss_legendre(2)
    np.testing.assert_allclose(r.nodes, [-0.5773502691896257, 0.5773502691896257], atol=1e-15)
    np.testing.assert_allclose(r.weights, [1.0, 1.0], atol=1e-15)


def test_gauss_legendre_n3():
    r = gauss_legendre(3)
    np.testing.assert_allclose(r.nodes, [-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)], atol=1e-15)
    np.testing.assert_allclose(r.weights, [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0], atol=1e-15)


@pytest.mark.parametrize("n", range(1, 13))
def test_gauss_legendre_exactness(n):
    r = gauss_legendre(n)
    for p in range(2 * n):
        exact = 2.0 / (p + 1) if p % 2 == 0 else 0.0
        assert abs(r.integrate(r.nodes ** p) - exact) <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 5, 16, 32, 64])
def test_gauss_legendre_matches_numpy(n):
    # independent oracle: numpy's Golub-Welsch implementation
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_legendre(n)
    np.testing.assert_allclose(r.nodes, x, atol=1e-14)
    np.testing.assert_allclose(r.weights, w, atol=1e-14)


def test_gauss_legendre_structure():
    r = gauss_legendre(12)
    assert np.all(np.diff(r.nodes) > 0)
    assert np.all(r.weights > 0)
    assert abs(r.weights.sum() - 2.0) < 1e-13
    assert np.all(r.nodes > -1.0) and np.all(r.nodes < 1.0)


def test_gauss_legendre_invalid():
    with pytest.raises(ValueError):
        gauss_legendre(0)


# ---------------------------------------------------------------------------
# map_rule / velocity_average
# ---------------------------------------------------------------------------

def test_map_rule_midpoint():
    r = map_rule(gauss_legendre(1), 0.0, 1.0)
    assert r.nodes == pytest.approx([0.5])
    assert r.weights == pytest.approx([1.0])


def test_map_rule_n2_unit_interval():
    r = map_rule(gauss_legendre(2), 0.0, 1.0)
    np.testing.assert_allclose(r.nodes, [0.5 - 1.0 / (2 * np.sqrt(3)), 0.5 + 1.0 / (2 * np.sqrt(3))])
    np.testing.assert_allclose(r.weights, [0.5, 0.5])
    # exactness on the mapped interval: int_0^1 v dv = 1/2
    assert r.integrate(r.nodes) == pytest.approx(0.5, abs=1e-15)


def test_map_rule_rejects_bad_interval():
    with pytest.raises(ValueError):
        map_rule(gauss_legendre(2), 1.0, 1.0)


def test_velocity_average_constant():
    r = map_rule(gauss_legendre(4), 0.0, 1.0)
    assert velocity_average(np.ones(4), r) == pytest.approx(1.0)


def test_velocity_average_linear_and_quadratic():
    r = map_rule(gauss_legendre(2), 0.0, 1.0)
    assert velocity_average(r.nodes, r) == pytest.approx(0.5, abs=1e-15)
    assert velocity_average(r.nodes ** 2, r) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_velocity_average_axis_and_mismatch():
    r = map_rule(gauss_legendre(3), 0.0, 1.0)
    vals = np.tile(r.nodes[None, :, None], (2, 1, 4))
    out = velocity_average(vals, r, axis=1)
    assert out.shape == (2, 4)
    np.testing.assert_allclose(out, 0.5)
    with pytest.raises(ValueError):
        velocity_average(np.ones(5), r)


# ---------------------------------------------------------------------------
# minmod
# ---------------------------------------------------------------------------

def test_minmod_examples():
    assert minmod(1.0, 2.0) == 1.0
    assert minmod(-1.0, 2.0) == 0.0
    assert minmod(-3.0, -2.0) == -2.0


def test_minmod_vectorized():
    out = minmod(np.array([1.0, -1.0, -3.0]), np.array([2.0, 2.0, -2.0]))
    np.testing.assert_array_equal(out, [1.0, 0.0, -2.0])


@given(finite, finite)
def test_minmod_symmetry_and_bound(a, b):
    m = minmod(a, b)
    assert m == minmod(b, a)
    assert abs(m) <= min(abs(a), abs(b)) + 1e-30


@given(finite, finite, st.floats(min_value=1e-3, max_value=1e3))
def test_minmod_positive_homogeneity(a, b, lam):
    np.testing.assert_allclose(minmod(lam * a, lam * b), lam * minmod(a, b), rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# tridiagonal solves
# ---------------------------------------------------------------------------

def _random_dd_tridiag(rng, n):
    sub = rng.uniform(-1, 1, n - 1)
    sup = rng.uniform(-1, 1, n - 1)
    diag = np.zeros(n)
    diag[:-1] += np.abs(sup)
    diag[1:] += np.abs(sub)
    diag += rng.uniform(0.5, 1.5, n)
    return TridiagonalMatrix(sub, diag, sup)


def test_tridiagonal_identity():
    T = TridiagonalMatrix(np.zeros(2), np.ones(3), np.zeros(2))
    np.testing.assert_array_equal(solve_tridiagonal(T, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_tridiagonal_2x2():
    # [[2, 1], [1, 2]] x = (3, 3) -> x = (1, 1) by direct inversion
    T = TridiagonalMatrix([1.0], [2.0, 2.0], [1.0])
    np.testing.assert_allclose(solve_tridiagonal(T, np.array([3.0, 3.0])), [1.0, 1.0])


def test_tridiagonal_vs_dense_oracle():
    rng = np.random.default_rng(7)
    T = _random_dd_tridiag(rng, 5)
    rhs = rng.standard_normal(5)
    x = solve_tridiagonal(T, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(T.to_dense(), rhs), rtol=1e-12, atol=1e-12)


def test_tridiagonal_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        T = _random_dd_tridiag(rng, n)
        rhs = rng.standard_normal(n)
        x = solve_tridiagonal(T, rhs)
        ref = np.linalg.solve(T.to_dense(), rhs)
        assert np.linalg.norm(x - ref) <= 1e-9 * max(np.linalg.norm(ref), 1.0)


def test_tridiagonal_multiple_rhs():
    rng = np.random.default_rng(3)
    T = _random_dd_tridiag(rng, 8)
    rhs = rng.standard_normal((8, 3))
    x = solve_tridiagonal(T, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(T.to_dense(), rhs), rtol=1e-11, atol=1e-12)


def test_tridiagonal_singular_raises():
    T = TridiagonalMatrix([1.0], [0.0, 1.0], [1.0])
    with pytest.raises(SingularSystemError) as exc:
        solve_tridiagonal(T, np.array([1.0, 1.0]))
    assert exc.value.index == 0


def test_tridiagonal_shape_check():
    with pytest.raises(ValueError):
        TridiagonalMatrix([1.0, 2.0], [1.0, 1.0], [1.0])


def test_cyclic_tridiagonal_vs_dense():
    rng = np.random.default_rng(11)
    n = 12
    T = _random_dd_tridiag(rng, n)
    wf, wl = 0.3, -0.2
    dense = T.to_dense()
    dense[0, -1] += wf
    dense[-1, 0] += wl
    rhs = rng.standard_normal(n)
    x = solve_tridiagonal_cyclic(T, wf, wl, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), rtol=1e-11, atol=1e-12)


# ---------------------------------------------------------------------------
# block-tridiagonal solves
# ---------------------------------------------------------------------------

def _random_dd_blocks(rng, nb, k):
    sub = rng.uniform(-0.3, 0.3, (nb - 1, k, k))
    sup = rng.uniform(-0.3, 0.3, (nb - 1, k, k))
    diag = rng.uniform(-0.2, 0.2, (nb, k, k))
    for i in range(nb):
        row_sum = np.sum(np.abs(diag[i]), axis=1)
        if i > 0:
            row_sum += np.sum(np.abs(sub[i - 1]), axis=1)
        if i < nb - 1:
            row_sum += np.sum(np.abs(sup[i]), axis=1)
        diag[i][np.diag_indices(k)] += row_sum + 1.0
    return BlockTridiagonalMatrix(sub, diag, sup)


def test_block_tridiagonal_reduces_to_scalar():
    rng = np.random.default_rng(5)
    T = _random_dd_tridiag(rng, 9)
    M = BlockTridiagonalMatrix(T.sub[:, None, None], T.diag[:, None, None], T.sup[:, None, None])
    rhs = rng.standard_normal(9)
    np.testing.assert_allclose(
        solve_block_tridiagonal(M, rhs), solve_tridiagonal(T, rhs), rtol=1e-13, atol=1e-14
    )


def test_block_tridiagonal_identity():
    nb, k = 4, 3
    eye = np.tile(np.eye(k), (nb, 1, 1))
    M = BlockTridiagonalMatrix(np.zeros((nb - 1, k, k)), eye, np.zeros((nb - 1, k, k)))
    rhs = np.arange(nb * k, dtype=float)
    np.testing.assert_array_equal(solve_block_tridiagonal(M, rhs), rhs)


def test_block_tridiagonal_vs_dense_oracle():
    rng = np.random.default_rng(19)
    M = _random_dd_blocks(rng, 4, 2)  # Nx = 3 -> 4 block rows
    rhs = rng.standard_normal(8)
    x = solve_block_tridiagonal(M, rhs)
    ref = np.linalg.solve(M.to_dense(), rhs)
    assert np.linalg.norm(x - ref) <= 1e-10 * max(np.linalg.norm(ref), 1.0)


def test_block_tridiagonal_random_instances():
    rng = np.random.default_rng(100)
    for _ in range(100):
        nb = int(rng.integers(2, 12))
        k = int(rng.integers(1, 5))
        M = _random_dd_blocks(rng, nb, k)
        rhs = rng.standard_normal(nb * k)
        x = solve_block_tridiagonal(M, rhs)
        ref = np.linalg.solve(M.to_dense(), rhs)
        assert np.linalg.norm(x - ref) <= 1e-9 * max(np.linalg.norm(ref), 1.0)


def test_block_tridiagonal_singular_names_block():
    k = 2
    diag = np.tile(np.eye(k), (3, 1, 1))
    diag[1] = 0.0
    M = BlockTridiagonalMatrix(np.zeros((2, k, k)), diag, np.zeros((2, k, k)))
    with pytest.raises(SingularSystemError) as exc:
        solve_block_tridiagonal(M, np.ones(6))
    assert exc.value.index == 1


def test_block_cyclic_vs_dense():
    rng = np.random.default_rng(23)
    nb, k = 6, 3
    M = _random_dd_blocks(rng, nb, k)
    wf = rng.uniform(-0.2, 0.2, (k, k))
    wl = rng.uniform(-0.2, 0.2, (k, k))
    dense = M.to_dense()
    dense[:k, -k:] += wf
    dense[-k:, :k] += wl
    rhs = rng.standard_normal(nb * k)
    x = solve_block_tridiagonal_cyclic(M, wf, wl, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(dense, rhs), rtol=1e-10, atol=1e-11)


# ---------------------------------------------------------------------------
# is_spd
# ---------------------------------------------------------------------------

def test_is_spd_identity():
    assert is_spd(np.eye(4))


def test_is_spd_indefinite():
    # eigenvalues 3 and -1
    assert not is_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_is_spd_asymmetric():
    assert not is_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_is_spd_nonsquare():
    with pytest.raises(ValueError):
        is_spd(np.ones((2, 3)))


def test_is_spd_galerkin_matrix():
    from apsg.chaos import RandomField, assemble_S, build_basis

    basis = build_basis(3)
    field = RandomField(lambda x, z: 1.0 + 0.5 * z)
    assert is_spd(assemble_S(field, basis, 0.0))
