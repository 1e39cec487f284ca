"""Orthonormal gPC basis in the random variable z and Galerkin operator
assembly by z-quadrature.

The basis is one-dimensional in z (``d = 1`` is carried explicitly on the
type to make the restriction visible).  For the uniform density on [-1, 1]
the basis functions are normalized Legendre polynomials,
``Phi_{k+1}(z) = sqrt(2k+1) P_k(z)``, so the Gram matrix under the density
is the identity.

All assembled matrices are plain numpy arrays; a ``GalerkinMatrix`` wrapper
carries the kind tag and position for diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import QuadratureRule, gauss_legendre


class PositivityError(ValueError):
    """A coefficient field dipped below its positivity floor at a node."""


@dataclass(frozen=True)
class GpcBasis:
    """Orthonormal polynomial basis for a scalar random variable.

    ``table[k, q]`` holds Phi_{k+1}(z_q); ``zweights`` are the quadrature
    weights already multiplied by the density, so that
    ``sum_q zweights[q] f(z_q) ~ int f(z) pi(z) dz``.
    """

    degree: int
    size: int
    density: str
    zrule: QuadratureRule
    table: np.ndarray
    zweights: np.ndarray
    dim: int = 1

    @property
    def nodes(self) -> np.ndarray:
        return self.zrule.nodes

    def gram(self) -> np.ndarray:
        return (self.table * self.zweights) @ self.table.T

    def evaluate(self, coeffs: np.ndarray) -> np.ndarray:
        """Realizations sum_k coeffs[..., k] Phi_k(z_q) at the z-nodes."""
        return np.asarray(coeffs, dtype=float) @ self.table

    def project(self, values: np.ndarray) -> np.ndarray:
        """gPC coefficients of point values given at the z-nodes."""
        return (np.asarray(values, dtype=float) * self.zweights) @ self.table.T


def default_quadrature_size(degree: int) -> int:
    """Quadrature size that keeps every operator assembly exact.

    Covers the Gram matrix (degree 2N), the quartic emission projection
    (degree 5N) and its cubic Jacobian (also 5N) for polynomial coefficient
    fields.
    """
    return max(2 * (degree + 1), math.ceil((5 * degree + 2) / 2))


def build_basis(degree: int, density: str = "uniform", quad_size: int | None = None) -> GpcBasis:
    """Build the orthonormal basis of polynomials up to ``degree``.

    Only the uniform density on [-1, 1] is supported; the quadrature hook is
    the place to extend this.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if density != "uniform":
        raise ValueError(f"unsupported density {density!r}; only 'uniform' is implemented")
    q = default_quadrature_size(degree) if quad_size is None else quad_size
    if q < degree + 1:
        raise ValueError(f"quadrature size {q} < K = {degree + 1} cannot resolve the basis")
    zrule = gauss_legendre(q)
    # density pi(z) = 1/2 on [-1, 1]
    zweights = 0.5 * zrule.weights
    k = degree + 1
    table = np.empty((k, q))
    table[0] = 1.0
    if k > 1:
        table[1] = zrule.nodes
    for n in range(2, k):
        table[n] = ((2 * n - 1) * zrule.nodes * table[n - 1] - (n - 1) * table[n - 2]) / n
    scale = np.sqrt(2.0 * np.arange(k) + 1.0)
    table *= scale[:, None]
    return GpcBasis(
        degree=degree, size=k, density=density, zrule=zrule, table=table, zweights=zweights
    )


# ---------------------------------------------------------------------------
# Coefficient fields and operator assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomField:
    """Scalar coefficient field sigma(x, z) with a positivity floor.

    ``evaluator`` must broadcast over numpy arguments.  Assemblies check the
    floor at every quadrature node they touch.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sigma_min: float = 1e-12

    def __call__(self, x, z) -> np.ndarray:
        return np.asarray(self.evaluator(x, z), dtype=float)


def constant_field(value: float) -> RandomField:
    value = float(value)
    return RandomField(
        lambda x, z: np.broadcast_to(value, np.broadcast(np.asarray(x), np.asarray(z)).shape).copy()
    )


def check_positivity(field: RandomField, basis: GpcBasis, xs: np.ndarray) -> None:
    """Eagerly verify field >= sigma_min on all grid points x all z-nodes."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    vals = _field_values(field, basis, xs)
    bad = vals < field.sigma_min
    if np.any(bad):
        i, q = np.unravel_index(np.argmin(vals), vals.shape)
        raise PositivityError(
            f"coefficient field below its floor {field.sigma_min:g}: "
            f"value {vals[i, q]:.6g} at x={xs[i]:.6g}, z={basis.nodes[q]:.6g}"
        )


def _field_values(field: RandomField, basis: GpcBasis, x) -> np.ndarray:
    """Field values on the z-nodes, shaped (len(x), Q); x may be scalar."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = field(xs[:, None], basis.nodes[None, :])
    return np.broadcast_to(vals, (xs.size, len(basis.zrule))).astype(float)


def _assemble_weighted_gram(weights_q: np.ndarray, basis: GpcBasis) -> np.ndarray:
    """K x K matrices int w(z) Phi_i Phi_j pi dz for each row of weights_q."""
    wq = weights_q * basis.zweights
    return np.einsum("mq,iq,jq->mij", wq, basis.table, basis.table)


def assemble_S(field: RandomField, basis: GpcBasis, x) -> np.ndarray:
    """Galerkin matrix of the field: s_ij = int sigma(x,z) Phi_i Phi_j pi dz.

    Symmetric, and positive definite whenever the field is positive on the
    z-nodes (checked here).
    """
    scalar = np.ndim(x) == 0
    vals = _field_values(field, basis, x)
    if np.any(vals < field.sigma_min):
        i, q = np.unravel_index(np.argmin(vals), vals.shape)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        raise PositivityError(
            f"field not positive at quadrature node: value {vals[i, q]:.6g} "
            f"at x={xs[i]:.6g}, z={basis.nodes[q]:.6g}; assembled matrix would risk losing SPD"
        )
    out = _assemble_weighted_gram(vals, basis)
    return out[0] if scalar else out


def assemble_S_tilde(field: RandomField, basis: GpcBasis, x) -> np.ndarray:
    """Galerkin matrix of the reciprocal field 1/sigma.

    The integrand is not polynomial, so this is quadrature-approximate; by
    construction it stays spectrally close to inv(assemble_S(...)).
    """
    scalar = np.ndim(x) == 0
    vals = _field_values(field, basis, x)
    if np.any(vals < field.sigma_min):
        i, q = np.unravel_index(np.argmin(vals), vals.shape)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        raise PositivityError(
            f"field not positive at quadrature node: value {vals[i, q]:.6g} "
            f"at x={xs[i]:.6g}, z={basis.nodes[q]:.6g}"
        )
    out = _assemble_weighted_gram(1.0 / vals, basis)
    return out[0] if scalar else out


def assemble_B(theta_hat: np.ndarray, field: RandomField, basis: GpcBasis, x) -> np.ndarray:
    """Galerkin projection of the quartic emission sigma * theta^4.

    ``theta_hat`` may be a single coefficient vector (K,) or a stack (M, K)
    with matching positions ``x`` (scalar or (M,)).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    scalar = theta_hat.ndim == 1
    th = np.atleast_2d(theta_hat)
    vals = _field_values(field, basis, x)
    vals = np.broadcast_to(vals, (th.shape[0], vals.shape[1]))
    theta_q = th @ basis.table
    out = ((theta_q ** 4) * vals * basis.zweights) @ basis.table.T
    return out[0] if scalar else out


def assemble_C(theta_hat: np.ndarray, field: RandomField, basis: GpcBasis, x) -> np.ndarray:
    """Galerkin matrix of the cubic emission density sigma * theta^3.

    One quarter of the Jacobian of assemble_B with respect to theta_hat;
    SPD when the temperature realization is positive on the z-nodes.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    scalar = theta_hat.ndim == 1
    th = np.atleast_2d(theta_hat)
    vals = _field_values(field, basis, x)
    vals = np.broadcast_to(vals, (th.shape[0], vals.shape[1]))
    theta_q = th @ basis.table
    out = _assemble_weighted_gram((theta_q ** 3) * vals, basis)
    return out[0] if scalar else out


def mean_and_std(coeffs: np.ndarray):
    """Mean and standard deviation implied by orthonormal gPC coefficients.

    mean = first coefficient, std = sqrt(sum of squares of the rest);
    operates on the last axis for stacked inputs.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] < 1:
        raise ValueError("need at least one gPC mode")
    mean = coeffs[..., 0]
    std = np.sqrt(np.sum(coeffs[..., 1:] ** 2, axis=-1))
    if coeffs.ndim == 1:
        return float(mean), float(std)
    return mean, std


@dataclass(frozen=True)
class GalerkinMatrix:
    """Assembled K x K operator with its provenance tag, for diagnostics."""

    entries: np.ndarray
    kind: str
    position: float | int | None = None

    _KINDS = ("S", "S_tilde", "C")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=float))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.entries))))
        return float(np.max(np.abs(self.entries - self.entries.T))) <= tol * scale
