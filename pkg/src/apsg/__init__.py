"""Asymptotic-preserving stochastic-Galerkin IMEX solvers for kinetic
transport and radiative heat transfer with random inputs."""

__version__ = "0.1.0"
