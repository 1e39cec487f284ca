"""Shared numerical kernels: Gauss-Legendre quadrature, the minmod limiter,
and structured (block-)tridiagonal solvers.

Everything here is a pure function of its inputs; there is no module state,
so concurrent callers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

# Relative pivot threshold for the unpivoted Thomas sweeps.  Call sites
# assemble diagonally dominant systems, so anything below this is a bug
# or a genuinely singular matrix, not roundoff.
_PIVOT_RTOL = 1e-14


class SingularSystemError(Exception):
    """A (block-)tridiagonal elimination hit a vanishing pivot.

    ``index`` is the row (or block-row) where elimination broke down.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a quadrature rule on ``interval``."""

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _legendre_and_derivative(n: int, x: np.ndarray):
    """Evaluate P_n and P_n' by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n`` nodes on [-1, 1].

    Nodes are the roots of the Legendre polynomial P_n, obtained by Newton
    iteration from cosine initial guesses (tolerance 1e-15); the rule is
    exact for polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise ValueError(f"Gauss-Legendre rule needs n >= 1, got {n}")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.full(1, 2.0))
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return QuadratureRule(x[order], w[order])


def map_rule(rule: QuadratureRule, lo: float, hi: float) -> QuadratureRule:
    """Affinely map ``rule`` onto the interval (lo, hi)."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got ({lo}, {hi})")
    a, b = rule.interval
    scale = (hi - lo) / (b - a)
    nodes = lo + (rule.nodes - a) * scale
    return QuadratureRule(nodes, rule.weights * scale, interval=(lo, hi))


def velocity_average(values: np.ndarray, rule: QuadratureRule, axis: int = 0):
    """Weighted sum sum_m w_m values_m along ``axis``.

    With ``rule`` on (0, 1) and weights summing to one this is the velocity
    average <u> = int_0^1 u dv used throughout the kinetic solvers.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[axis] != len(rule):
        raise ValueError(
            f"values axis {axis} has length {values.shape[axis]}, "
            f"rule has {len(rule)} nodes"
        )
    out = np.tensordot(values, rule.weights, axes=([axis], [0]))
    if values.ndim == 1:
        return float(out)
    return out


def minmod(a, b):
    """The argument of smaller magnitude when a and b share a sign, else 0."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    out = np.where(np.abs(a_arr) < np.abs(b_arr), a_arr, b_arr)
    out = np.where(a_arr * b_arr > 0.0, out, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Tridiagonal solvers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TridiagonalMatrix:
    """Tridiagonal matrix with sub-, main and super-diagonals.

    ``sub`` has length n-1 (entry i couples row i+1 to column i) and ``sup``
    has length n-1 (entry i couples row i to column i+1).
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sub", np.asarray(self.sub, dtype=float))
        object.__setattr__(self, "diag", np.asarray(self.diag, dtype=float))
        object.__setattr__(self, "sup", np.asarray(self.sup, dtype=float))
        n = self.diag.size
        if self.sub.size != n - 1 or self.sup.size != n - 1:
            raise ValueError(
                f"inconsistent diagonals: sub {self.sub.size}, diag {n}, sup {self.sup.size}"
            )

    @property
    def n(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diag)
            + np.diag(self.sub, -1)
            + np.diag(self.sup, 1)
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag.reshape(-1, *([1] * (x.ndim - 1))) * x
        y[1:] += self.sub.reshape(-1, *([1] * (x.ndim - 1))) * x[:-1]
        y[:-1] += self.sup.reshape(-1, *([1] * (x.ndim - 1))) * x[1:]
        return y


def solve_tridiagonal(T: TridiagonalMatrix, rhs: np.ndarray) -> np.ndarray:
    """Thomas algorithm without pivoting.

    ``rhs`` may be (n,) or (n, m) for several right-hand sides sharing the
    matrix.  A pivot below 1e-14 times the row infinity-norm raises
    SingularSystemError; callers guarantee diagonal dominance.
    """
    n = T.n
    rhs_arr = np.asarray(rhs, dtype=float)
    squeeze = rhs_arr.ndim == 1
    x = rhs_arr.reshape(n, -1).astype(float, copy=True)
    sub, diag, sup = T.sub, T.diag, T.sup

    cp = np.empty(max(n - 1, 0))
    piv = diag[0]
    rownorm = abs(diag[0]) + (abs(sup[0]) if n > 1 else 0.0)
    if abs(piv) <= _PIVOT_RTOL * rownorm:
        raise SingularSystemError(f"zero pivot in row 0 (pivot={piv:g})", index=0)
    if n > 1:
        cp[0] = sup[0] / piv
    x[0] /= piv
    for i in range(1, n):
        piv = diag[i] - sub[i - 1] * cp[i - 1]
        rownorm = abs(sub[i - 1]) + abs(diag[i]) + (abs(sup[i]) if i < n - 1 else 0.0)
        if abs(piv) <= _PIVOT_RTOL * rownorm:
            raise SingularSystemError(f"zero pivot in row {i} (pivot={piv:g})", index=i)
        if i < n - 1:
            cp[i] = sup[i] / piv
        x[i] = (x[i] - sub[i - 1] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x[:, 0] if squeeze else x


def solve_tridiagonal_cyclic(
    T: TridiagonalMatrix, wrap_first: float, wrap_last: float, rhs: np.ndarray
) -> np.ndarray:
    """Solve the cyclic system T + corner entries by a rank-2 correction.

    ``wrap_first`` is the matrix entry (0, n-1) and ``wrap_last`` the entry
    (n-1, 0); the interior T is solved with the Thomas sweep and the corners
    are folded in with the Sherman-Morrison-Woodbury identity.
    """
    n = T.n
    if n < 3:
        raise ValueError("cyclic solve needs n >= 3")
    rhs_arr = np.asarray(rhs, dtype=float)
    squeeze = rhs_arr.ndim == 1
    b = rhs_arr.reshape(n, -1)

    u = np.zeros((n, 2))
    u[0, 0] = 1.0
    u[-1, 1] = 1.0
    y = solve_tridiagonal(T, np.hstack([b, u]))
    yb, z = y[:, : b.shape[1]], y[:, b.shape[1]:]
    # V^T rows: [0 ... 0 wrap_first], [wrap_last 0 ... 0]
    vty = np.vstack([wrap_first * yb[-1], wrap_last * yb[0]])
    vtz = np.array(
        [
            [wrap_first * z[-1, 0], wrap_first * z[-1, 1]],
            [wrap_last * z[0, 0], wrap_last * z[0, 1]],
        ]
    )
    corr = np.linalg.solve(np.eye(2) + vtz, vty)
    x = yb - z @ corr
    return x[:, 0] if squeeze else x


# ---------------------------------------------------------------------------
# Block-tridiagonal solvers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockTridiagonalMatrix:
    """Block-tridiagonal matrix with uniform K x K blocks.

    ``sub[i]`` couples block-row i+1 to block-column i, ``sup[i]`` block-row
    i to block-column i+1; zero outside the three block diagonals.
    """

    sub: np.ndarray   # (nb-1, K, K)
    diag: np.ndarray  # (nb, K, K)
    sup: np.ndarray   # (nb-1, K, K)

    def __post_init__(self):
        object.__setattr__(self, "sub", np.asarray(self.sub, dtype=float))
        object.__setattr__(self, "diag", np.asarray(self.diag, dtype=float))
        object.__setattr__(self, "sup", np.asarray(self.sup, dtype=float))
        nb, k, k2 = self.diag.shape
        if k != k2:
            raise ValueError("diagonal blocks must be square")
        if self.sub.shape != (nb - 1, k, k) or self.sup.shape != (nb - 1, k, k):
            raise ValueError("off-diagonal block arrays must be (nb-1, K, K)")

    @property
    def nb(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    def to_dense(self) -> np.ndarray:
        nb, k = self.nb, self.block_size
        dense = np.zeros((nb * k, nb * k))
        for i in range(nb):
            dense[i * k:(i + 1) * k, i * k:(i + 1) * k] = self.diag[i]
            if i + 1 < nb:
                dense[(i + 1) * k:(i + 2) * k, i * k:(i + 1) * k] = self.sub[i]
                dense[i * k:(i + 1) * k, (i + 1) * k:(i + 2) * k] = self.sup[i]
        return dense


def _factor_block(block: np.ndarray, index: int):
    lu, piv = lu_factor(block, check_finite=False)
    scale = np.max(np.abs(block))
    if not np.all(np.abs(np.diag(lu)) > _PIVOT_RTOL * max(scale, 1e-300)):
        raise SingularSystemError(f"singular pivot block {index}", index=index)
    return lu, piv


def solve_block_tridiagonal(M: BlockTridiagonalMatrix, rhs: np.ndarray) -> np.ndarray:
    """Block Thomas elimination with a fresh LU per pivot block.

    ``rhs`` is the stacked vector of length nb*K (or (nb*K, m)).  The LU
    factors live only for the duration of one solve; stage matrices change
    between calls so nothing is cached.
    """
    nb, k = M.nb, M.block_size
    rhs_arr = np.asarray(rhs, dtype=float)
    squeeze = rhs_arr.ndim == 1
    if rhs_arr.shape[0] != nb * k:
        raise ValueError(f"rhs length {rhs_arr.shape[0]} != nb*K = {nb * k}")
    b = rhs_arr.reshape(nb, k, -1)

    gam = np.empty((nb - 1, k, k)) if nb > 1 else None
    y = np.empty_like(b)
    lu = _factor_block(M.diag[0], 0)
    y[0] = lu_solve(lu, b[0], check_finite=False)
    for i in range(1, nb):
        gam[i - 1] = lu_solve(lu, M.sup[i - 1], check_finite=False)
        d_eff = M.diag[i] - M.sub[i - 1] @ gam[i - 1]
        lu = _factor_block(d_eff, i)
        y[i] = lu_solve(lu, b[i] - M.sub[i - 1] @ y[i - 1], check_finite=False)
    x = y
    for i in range(nb - 2, -1, -1):
        x[i] -= gam[i] @ x[i + 1]
    out = x.reshape(nb * k, -1)
    return out[:, 0] if squeeze else out


def solve_block_tridiagonal_cyclic(
    M: BlockTridiagonalMatrix,
    wrap_first: np.ndarray,
    wrap_last: np.ndarray,
    rhs: np.ndarray,
) -> np.ndarray:
    """Cyclic block-tridiagonal solve via a rank-2K Woodbury correction.

    ``wrap_first`` is the block at (row 0, column nb-1), ``wrap_last`` the
    block at (row nb-1, column 0).
    """
    nb, k = M.nb, M.block_size
    if nb < 3:
        raise ValueError("cyclic solve needs nb >= 3")
    rhs_arr = np.asarray(rhs, dtype=float)
    squeeze = rhs_arr.ndim == 1
    b = rhs_arr.reshape(nb * k, -1)

    u = np.zeros((nb * k, 2 * k))
    u[:k, :k] = np.eye(k)
    u[-k:, k:] = np.eye(k)
    y = solve_block_tridiagonal(M, np.hstack([b, u]))
    yb, z = y[:, : b.shape[1]], y[:, b.shape[1]:]
    vty = np.vstack([wrap_first @ yb[-k:], wrap_last @ yb[:k]])
    vtz = np.vstack([wrap_first @ z[-k:], wrap_last @ z[:k]])
    corr = np.linalg.solve(np.eye(2 * k) + vtz, vty)
    x = yb - z @ corr
    return x[:, 0] if squeeze else x


def is_spd(A: np.ndarray, tol: float = 1e-12) -> bool:
    """True iff A is symmetric to ``tol`` and positive definite."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > tol * scale:
        return False
    try:
        np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        return False
    return True
