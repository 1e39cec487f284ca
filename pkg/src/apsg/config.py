"""Experiment configuration, run reports, and the shared time-marching loop.

The solvers march a fixed-step main trajectory; output times that fall
between steps are reached by a shortened probe step off the main
trajectory, so snapshots land exactly on the requested times while the
recorded NT counts full-length steps only (matching the step counts the
experiments are defined by).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` is a list of
    (line_number, message) pairs (line 0 for whole-config problems)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {ln}: {msg}" for ln, msg in self.errors))


class DivergenceError(RuntimeError):
    """A solver produced non-finite values (or crossed a safety floor)."""

    def __init__(self, message: str, stage: int | None = None):
        super().__init__(message)
        self.stage = stage


# ---------------------------------------------------------------------------
# Field expressions
# ---------------------------------------------------------------------------

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_UNARY = (ast.USub, ast.UAdd)
_CALLS = {"exp": 1, "min": 2}


def _check_expr(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check_expr(node.body)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check_expr(node.left)
        _check_expr(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        _check_expr(node.operand)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        pass
    elif isinstance(node, ast.Name) and node.id in ("x", "z"):
        pass
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _CALLS):
            raise ValueError(f"unsupported call {ast.dump(node.func)}")
        if len(node.args) != _CALLS[node.func.id] or node.keywords:
            raise ValueError(f"{node.func.id} takes exactly {_CALLS[node.func.id]} argument(s)")
        for a in node.args:
            _check_expr(a)
    else:
        raise ValueError(f"unsupported syntax {type(node).__name__}")


def compile_expression(text: str) -> Callable:
    """Compile a field expression in x and z to a broadcasting function.

    Grammar: +, -, *, /, unary minus, numeric constants, the names x and z,
    and the calls exp(a), min(a, b).
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
        _check_expr(tree)
    except (SyntaxError, ValueError) as exc:
        raise ValueError(f"cannot parse field expression {text!r}: {exc}") from None
    code = compile(tree, "<field-expression>", "eval")
    env = {"__builtins__": {}}

    def fn(x, z):
        return eval(code, env, {"x": x, "z": z, "exp": np.exp, "min": np.minimum})

    fn.text = text.strip()
    return fn


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

PROBLEMS = ("transport", "rht", "diffusion-transport", "diffusion-rht", "collocation")
BC_KINDS = ("inflow", "periodic", "reflect")


@dataclass
class ExperimentConfig:
    """Problem, discretization, and scheme parameters for one run.

    Field expressions (``sigma``, inflow and wall data) are text formulas in
    x and z, compiled on demand.  ``seedless`` records that runs contain no
    randomness source beyond z-quadrature; it is asserted, never consumed.
    """

    problem: str = "transport"
    eps: float = 1e-6
    dx: float = 0.01
    lam: float = 0.04
    dt: float | None = None
    gpc_degree: int = 0
    nv: int = 16
    zq: int | None = None
    tableau_name: str = "SSP2-332"
    bc: str = "inflow"
    sigma: str = "1"
    f_left: str = "1"
    f_right: str = "0"
    theta_left: str = "1"
    theta_right: str = "0"
    times: tuple[float, ...] = (0.01, 0.05, 0.15)
    out_path: str | None = None
    base_problem: str = "transport"
    colloc_nodes: int = 16
    theta_floor: float = -0.1
    seedless: bool = True

    def validate(self) -> list[str]:
        problems = []
        if self.problem not in PROBLEMS:
            problems.append(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if not self.eps > 0:
            problems.append("eps must be positive")
        if not self.dx > 0:
            problems.append("dx must be positive")
        if not 0 < self.lam <= 0.5:
            problems.append("lambda must lie in (0, 0.5]")
        if self.dt is not None and not self.dt > 0:
            problems.append("dt must be positive")
        if self.gpc_degree < 0:
            problems.append("gpc_n must be >= 0")
        if self.nv < 1:
            problems.append("nv must be >= 1")
        if self.bc not in BC_KINDS:
            problems.append(f"bc must be one of {BC_KINDS}, got {self.bc!r}")
        if list(self.times) != sorted(self.times):
            problems.append("times must be sorted ascending")
        if any(t < 0 for t in self.times):
            problems.append("times must be nonnegative")
        if self.problem == "collocation" and self.base_problem not in ("transport", "rht"):
            problems.append("base_problem must be transport or rht")
        if self.colloc_nodes < 1:
            problems.append("colloc_nodes must be >= 1")
        for name in ("sigma", "f_left", "f_right", "theta_left", "theta_right"):
            try:
                compile_expression(getattr(self, name))
            except ValueError as exc:
                problems.append(str(exc))
        return problems

    @property
    def timestep(self) -> float:
        return self.dt if self.dt is not None else self.lam * self.dx

    def echo(self) -> str:
        pairs = [
            ("problem", self.problem),
            ("eps", repr(self.eps)),
            ("dx", repr(self.dx)),
            ("lambda", repr(self.lam)),
            ("dt", "auto" if self.dt is None else repr(self.dt)),
            ("gpc_n", self.gpc_degree),
            ("nv", self.nv),
            ("zq", "auto" if self.zq is None else self.zq),
            ("tableau", self.tableau_name),
            ("bc", self.bc),
            ("sigma", self.sigma),
            ("f_left", self.f_left),
            ("f_right", self.f_right),
            ("theta_left", self.theta_left),
            ("theta_right", self.theta_right),
            ("times", ", ".join(repr(t) for t in self.times)),
            ("base_problem", self.base_problem),
            ("colloc_nodes", self.colloc_nodes),
            ("theta_floor", repr(self.theta_floor)),
            ("seedless", str(self.seedless).lower()),
        ]
        return "\n".join(f"{k} = {v}" for k, v in pairs)

    def frozen_at(self, z_value: float) -> "ExperimentConfig":
        """Deterministic copy with z replaced by a number in every field
        expression (used by the collocation oracle)."""
        zrepr = repr(float(z_value))

        def freeze(expr: str) -> str:
            return f"({expr.replace('z', f'({zrepr})')})" if "z" in expr else expr

        return replace(
            self,
            gpc_degree=0,
            zq=None,
            sigma=freeze(self.sigma),
            f_left=freeze(self.f_left),
            f_right=freeze(self.f_right),
            theta_left=freeze(self.theta_left),
            theta_right=freeze(self.theta_right),
        )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class Snapshot:
    """Mean/std fields (and mode arrays) of the tracked quantities at one
    output time."""

    time: float
    fields: dict[str, dict] = field(default_factory=dict)

    def add(self, name: str, modes: np.ndarray | None = None,
            mean: np.ndarray | None = None, std: np.ndarray | None = None):
        entry = {}
        if modes is not None:
            modes = np.asarray(modes, dtype=float)
            entry["modes"] = modes
            entry["mean"] = modes[:, 0].copy()
            entry["std"] = np.sqrt(np.sum(modes[:, 1:] ** 2, axis=1))
        if mean is not None:
            entry["mean"] = np.asarray(mean, dtype=float)
        if std is not None:
            entry["std"] = np.asarray(std, dtype=float)
        self.fields[name] = entry
        return self


@dataclass
class RunReport:
    """Snapshots plus step counts, timing, and run metadata."""

    x: np.ndarray
    snapshots: list[Snapshot]
    nt: list[int]
    wall_seconds: float
    config_echo: str
    scheme: str

    def __post_init__(self):
        if len(self.snapshots) != len(self.nt):
            raise ValueError("one NT entry per snapshot required")

    def field_names(self) -> list[str]:
        return sorted(self.snapshots[0].fields) if self.snapshots else []


# ---------------------------------------------------------------------------
# Time marching
# ---------------------------------------------------------------------------

def march(state, advance, dt: float, times, snapshot):
    """Fixed-step march with exact landings on the requested output times.

    ``advance(state, h)`` performs one step of size h; ``snapshot(state, t)``
    extracts output.  The recorded NT per output time is the number of
    full-length steps taken from t = 0; the shortened landing step is a probe
    off the main trajectory and is not counted.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    records = []
    nts = []
    if not times:
        records.append(snapshot(state, 0.0))
        nts.append(0)
        return records, nts
    n = 0
    for t_out in times:
        n_full = int(math.floor(t_out / dt + 1e-9))
        while n < n_full:
            state = advance(state, dt)
            n += 1
        remainder = t_out - n_full * dt
        if remainder > 1e-12 * max(dt, 1.0):
            probe = advance(state, remainder)
        else:
            probe = state
        records.append(snapshot(probe, t_out))
        nts.append(n_full)
    return records, nts
