"""Limiting-diffusion reference solvers and the stochastic-collocation
oracle used to validate the kinetic gPC-SG schemes.

The diffusion steppers are the implicit Runge-Kutta schemes the kinetic
solvers formally reduce to as eps -> 0: each stage inverts the same
interface-averaged (block-)tridiagonal operator as the kinetic P solve.
Stage derivatives are recovered algebraically so the stage relations hold
exactly, mirroring the kinetic implementation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import rht as rht_mod
from . import transport as tr
from .chaos import (
    GpcBasis,
    RandomField,
    assemble_B,
    assemble_C,
    assemble_S_tilde,
    build_basis,
    mean_and_std,
)
from .config import ConfigError, RunReport, Snapshot, compile_expression, march
from .imex import DoubleTableau, tableau
from .numerics import gauss_legendre, velocity_average


@dataclass
class DiffusionState:
    """gPC coefficients of the limiting macroscopic field on the grid."""

    field_hat: np.ndarray
    t: float = 0.0


# ---------------------------------------------------------------------------
# Linear transport limit:  d_t rho = (1/3) d_x(S^{-1} d_x rho)
# ---------------------------------------------------------------------------

def implicit_rk_diffusion_step(rho_hat: np.ndarray, ops: tr.TransportOperators,
                               tab: DoubleTableau, dt: float) -> np.ndarray:
    """One implicit-RK step of the random diffusion limit equation.

    Stage k solves (I - dt a_kk (1/3) div S^{-1} grad) P^k = rho^n +
    dt sum_{l<k} a_kl kappa^l, each a single (block-)tridiagonal inversion;
    the combination applies the implicit weights.
    """
    rates = []
    rho_hat = np.asarray(rho_hat, dtype=float)
    for k in range(tab.stages):
        a_kk = tab.A_im[k, k]
        rhs = rho_hat.copy()
        for l in range(k):
            if tab.A_im[k, l] != 0.0:
                rhs += (dt * tab.A_im[k, l]) * rates[l]
        p = tr.solve_P_stage(rhs, ops, a_kk, dt, mu_val=1.0)
        rates.append((p - rhs) / (dt * a_kk))
    out = rho_hat.copy()
    for k in range(tab.stages):
        out += (dt * tab.b_im[k]) * rates[k]
    return out


def stilde_operators(ops: tr.TransportOperators) -> tr.TransportOperators:
    """Variant operator set whose interface matrices are the Galerkin
    projection of 1/sigma instead of the inverted projection of sigma.

    The interface value keeps the same arithmetic-average convention.
    """
    basis, field = ops.basis, ops.field
    m = ops.ncells
    if ops.periodic:
        st_cells = assemble_S_tilde(field, basis, ops.x)
        pairs = 0.5 * (st_cells[np.arange(-1, m - 1)] + st_cells)
        st_pad = np.concatenate([pairs, pairs[:1]], axis=0)
    else:
        x_ext = np.concatenate([[-ops.dx], ops.x, [1.0 + ops.dx]])
        st_ext = assemble_S_tilde(field, basis, x_ext)
        st_pad = 0.5 * (st_ext[:-1] + st_ext[1:])
    k = basis.size
    test = st_pad - st_pad[:, 0, 0][:, None, None] * np.eye(k)
    scalar = np.max(np.abs(test)) <= 1e-13 * max(np.max(np.abs(st_pad)), 1.0)
    return replace(
        ops,
        sinv_pad=st_pad,
        sinv_pad_scalar=st_pad[:, 0, 0].copy() if scalar and ops.sig is not None else None,
        sig=ops.sig if scalar and ops.sig is not None else None,
    )


def implicit_rk_diffusion_step_tilde(rho_hat: np.ndarray, ops_tilde: tr.TransportOperators,
                                     tab: DoubleTableau, dt: float) -> np.ndarray:
    """Diffusion step for the directly-projected limit equation (S-tilde
    interface matrices); pass operators from :func:`stilde_operators`."""
    return implicit_rk_diffusion_step(rho_hat, ops_tilde, tab, dt)


# ---------------------------------------------------------------------------
# Radiative heat transfer limit:  d_t[theta + B(theta)] = d_x[(I + 4C/3) d_x theta]
# ---------------------------------------------------------------------------

def implicit_rk_rht_diffusion_step(theta_hat: np.ndarray, ops: "rht_mod.RhtOperators",
                                   tab: DoubleTableau, dt: float) -> np.ndarray:
    """One implicit-RK step of the nonlinear radiative diffusion limit.

    The nonlinear stage relation is closed by the same one-sweep
    linearization as the kinetic temperature stage: the emission at stage k
    is expanded around the previous stage value through its Jacobian 4C.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    m, k_modes = theta_hat.shape
    basis, field, bc, dx = ops.basis, ops.field, ops.bc, ops.dx
    b_n = rht_mod.emission(theta_hat, ops)
    w_n = theta_hat + b_n

    rates = []
    theta_prev = theta_hat
    theta_stage = theta_hat
    for k in range(tab.stages):
        a_kk = tab.A_im[k, k]
        rhs = w_n.copy()
        for l in range(k):
            if tab.A_im[k, l] != 0.0:
                rhs += (dt * tab.A_im[k, l]) * rates[l]
        b_prev, c_prev, c_pad = rht_mod.linearization(theta_prev, ops)
        # stage system: (I + 4 C_prev) Theta - dt a_kk [lap Theta + (4/3) div C grad Theta]
        #             = rhs + 3 B_prev   (ghost closures on the right-hand side)
        theta_stage = rht_mod.solve_linearized_stage(
            rhs + 3.0 * b_prev, c_prev, c_pad, ops, dt * a_kk,
            lap_weight=dt * a_kk, pen_weight=dt * a_kk * (4.0 / 3.0),
            relax_eye=1.0, relax_c=4.0,
        )
        b_lin = b_prev + 4.0 * np.einsum("mij,mj->mi", c_prev, theta_stage - theta_prev)
        kappa = (theta_stage + b_lin - rhs) / (dt * a_kk)
        rates.append(kappa)
        theta_prev = theta_stage

    if tab.stiffly_accurate:
        return theta_stage
    w_next = w_n.copy()
    for k in range(tab.stages):
        w_next += (dt * tab.b_im[k]) * rates[k]
    # invert theta + B(theta) = w by one linearization around the last stage
    b_prev, c_prev, _ = rht_mod.linearization(theta_stage, ops)
    lhs = np.eye(k_modes)[None] + 4.0 * c_prev
    rhs = w_next - b_prev + 4.0 * np.einsum("mij,mj->mi", c_prev, theta_stage)
    return np.linalg.solve(lhs, rhs[..., None])[..., 0]


# ---------------------------------------------------------------------------
# Experiment drivers for the reference problems
# ---------------------------------------------------------------------------

def run_diffusion(config) -> RunReport:
    """March the gPC diffusion limit of the transport problem."""
    ops, _, tab = tr.setup(replace(config, problem="transport"))
    dt = config.timestep
    rho0 = np.zeros((ops.ncells, ops.basis.size))

    def advance(state, h):
        return DiffusionState(implicit_rk_diffusion_step(state.field_hat, ops, tab, h),
                              state.t + h)

    def snap(state, t):
        return Snapshot(t).add("rho", modes=state.field_hat)

    start = time.perf_counter()
    records, nts = march(DiffusionState(rho0), advance, dt, list(config.times), snap)
    wall = time.perf_counter() - start
    return RunReport(
        x=ops.x, snapshots=records, nt=nts, wall_seconds=wall,
        config_echo=config.echo(), scheme=f"diffusion limit gPC implicit RK {tab.name}",
    )


def run_rht_diffusion(config) -> RunReport:
    """March the gPC diffusion limit of the radiative heat transfer system."""
    ops, _, tab = rht_mod.setup(replace(config, problem="rht"))
    dt = config.timestep
    theta0 = np.zeros((ops.ncells, ops.basis.size))

    def advance(state, h):
        return DiffusionState(implicit_rk_rht_diffusion_step(state.field_hat, ops, tab, h),
                              state.t + h)

    def snap(state, t):
        return Snapshot(t).add("theta", modes=state.field_hat)

    start = time.perf_counter()
    records, nts = march(DiffusionState(theta0), advance, dt, list(config.times), snap)
    wall = time.perf_counter() - start
    return RunReport(
        x=ops.x, snapshots=records, nt=nts, wall_seconds=wall,
        config_echo=config.echo(), scheme=f"RHT diffusion limit gPC implicit RK {tab.name}",
    )


# ---------------------------------------------------------------------------
# Stochastic collocation oracle
# ---------------------------------------------------------------------------

def collocation_oracle(config, z_rule=None) -> RunReport:
    """Validate a stochastic run by deterministic solves at z-quadrature
    nodes.

    Each node gets the full kinetic (or diffusion) solver with every field
    expression frozen at z = z_q and the same spatial/temporal
    discretization; means and standard deviations come from quadrature over
    the node solutions.
    """
    base = config.base_problem if config.problem == "collocation" else config.problem
    if base not in ("transport", "rht", "diffusion-transport", "diffusion-rht"):
        raise ConfigError([(0, f"collocation cannot wrap problem {base!r}")])
    if z_rule is None:
        z_rule = gauss_legendre(config.colloc_nodes)
    # uniform density on [-1, 1]
    pi_weights = 0.5 * z_rule.weights

    runner = {
        "transport": tr.run,
        "rht": rht_mod.run,
        "diffusion-transport": run_diffusion,
        "diffusion-rht": run_rht_diffusion,
    }[base]

    node_reports = []
    start = time.perf_counter()
    for zq in z_rule.nodes:
        node_cfg = replace(config.frozen_at(zq), problem=base)
        node_reports.append(runner(node_cfg))
    wall = time.perf_counter() - start

    first = node_reports[0]
    snapshots = []
    for j, snap in enumerate(first.snapshots):
        out = Snapshot(snap.time)
        for name in first.field_names():
            stack = np.stack([rep.snapshots[j].fields[name]["mean"] for rep in node_reports])
            mean = np.tensordot(pi_weights, stack, axes=(0, 0))
            second = np.tensordot(pi_weights, stack**2, axes=(0, 0))
            std = np.sqrt(np.clip(second - mean**2, 0.0, None))
            out.add(name, mean=mean, std=std)
        snapshots.append(out)
    return RunReport(
        x=first.x, snapshots=snapshots, nt=list(first.nt), wall_seconds=wall,
        config_echo=config.echo(), scheme=f"collocation({len(z_rule)}) of {base}",
    )
