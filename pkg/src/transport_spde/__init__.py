"""Pathwise solvers for parabolic SPDEs with skew-adjoint transport noise.

The stochastic equation is reduced, path by path, to a random PDE through the
group generated by the noise operator; the random PDE is integrated by
implicit proximal steps and checked with Brezis-Ekeland certificates.
"""
from .certify import CertificateReport, certify, dual_objective, duality_defect, energy_identity_residual, primal_objective
from .convex import Piecewise, Power, Quadratic, Thermostat
from .energy import build_energy
from .field import Geometry, ScalarField
from .noise import NoisePath, sample_brownian, wong_zakai
from .solver import Problem, Trajectory, solve_euler_lagrange, solve_random_pde, solve_spde, step
from .transport import NoiseOperator, TransportField

__all__ = [
    "CertificateReport", "Geometry", "NoiseOperator", "NoisePath", "Piecewise", "Power", "Problem",
    "Quadratic", "ScalarField", "Thermostat", "Trajectory", "TransportField", "build_energy", "certify",
    "dual_objective", "duality_defect", "energy_identity_residual", "primal_objective",
    "sample_brownian", "solve_euler_lagrange", "solve_random_pde", "solve_spde", "step", "wong_zakai",
]
__version__ = "0.1.0"
