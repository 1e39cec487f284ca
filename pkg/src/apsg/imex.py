"""Double Butcher tableaux for IMEX Runge-Kutta schemes of type A.

Type A means the implicit matrix is lower triangular with a nonzero
diagonal, so every stage has an invertible relaxation operator and the
scheme needs no special treatment of the first stage.  Coefficients are
stored as exact rationals and rendered to floats once, at registry load.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class DoubleTableau:
    """Paired explicit/implicit Butcher tableaux (A_ex strictly lower,
    A_im lower triangular with nonzero diagonal)."""

    name: str
    A_ex: np.ndarray
    A_im: np.ndarray
    b_ex: np.ndarray
    b_im: np.ndarray
    c_ex: np.ndarray
    c_im: np.ndarray

    def __post_init__(self):
        for attr in ("A_ex", "A_im", "b_ex", "b_im", "c_ex", "c_im"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))

    @property
    def stages(self) -> int:
        return self.b_im.size

    @property
    def stiffly_accurate(self) -> bool:
        """True when b_im equals the last row of A_im (so the final implicit
        combination coincides with the last stage)."""
        return bool(np.array_equal(self.b_im, self.A_im[-1]))


def validate(t: DoubleTableau) -> list[str]:
    """Structural check; returns a list of violations (empty when valid)."""
    s = t.stages
    issues: list[str] = []
    if t.A_ex.shape != (s, s) or t.A_im.shape != (s, s):
        issues.append(f"matrix shapes {t.A_ex.shape}, {t.A_im.shape} inconsistent with s={s}")
        return issues
    if t.b_ex.shape != (s,) or t.c_ex.shape != (s,) or t.c_im.shape != (s,):
        issues.append("weight/abscissa vectors inconsistent with stage count")
        return issues
    for i in range(s):
        for j in range(i, s):
            if t.A_ex[i, j] != 0.0:
                issues.append(f"explicit matrix not strictly lower triangular at ({i + 1},{j + 1})")
        for j in range(i + 1, s):
            if t.A_im[i, j] != 0.0:
                issues.append(f"implicit matrix not lower triangular at ({i + 1},{j + 1})")
        if t.A_im[i, i] == 0.0:
            issues.append(f"type-A diagonal zero at stage {i + 1}")
        if abs(t.c_ex[i] - t.A_ex[i, :i].sum()) > 1e-14:
            issues.append(f"explicit abscissa mismatch at stage {i + 1}")
        if abs(t.c_im[i] - t.A_im[i, : i + 1].sum()) > 1e-14:
            issues.append(f"implicit abscissa mismatch at stage {i + 1}")
    return issues


def _build(name, a_ex, a_im, b_ex, b_im) -> DoubleTableau:
    a_ex = np.array([[float(Fraction(v)) for v in row] for row in a_ex])
    a_im = np.array([[float(Fraction(v)) for v in row] for row in a_im])
    b_ex = np.array([float(Fraction(v)) for v in b_ex])
    b_im = np.array([float(Fraction(v)) for v in b_im])
    c_ex = np.array([a_ex[i, :i].sum() for i in range(len(b_ex))])
    c_im = np.array([a_im[i, : i + 1].sum() for i in range(len(b_im))])
    t = DoubleTableau(name, a_ex, a_im, b_ex, b_im, c_ex, c_im)
    problems = validate(t)
    if problems:
        raise ValueError(f"tableau {name!r} failed validation: {problems}")
    return t


_REGISTRY = {
    "SSP2-332": lambda: _build(
        "SSP2-332",
        a_ex=[["0", "0", "0"], ["1/2", "0", "0"], ["1/2", "1/2", "0"]],
        a_im=[["1/4", "0", "0"], ["0", "1/4", "0"], ["1/3", "1/3", "1/3"]],
        b_ex=["1/3", "1/3", "1/3"],
        b_im=["1/3", "1/3", "1/3"],
    ),
    # Degenerate one-stage pair (explicit/backward Euler); handy for debugging.
    "backward-euler-pair": lambda: _build(
        "backward-euler-pair",
        a_ex=[["0"]],
        a_im=[["1"]],
        b_ex=["1"],
        b_im=["1"],
    ),
}


def tableau(name: str) -> DoubleTableau:
    """Look up a registered, validated tableau by name."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown tableau {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None
    return factory()


def register(name: str, factory) -> None:
    """Extension hook for additional type-A pairs."""
    _REGISTRY[name] = factory
