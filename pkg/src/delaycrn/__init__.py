"""Delayed chemical reaction networks with product-form kinetics."""

from __future__ import annotations

from .dde import History, SimConfig, Trajectory, class_distance, conserved_value, delay_integrals, simulate
from .equilibria import (
    BalanceReport,
    check_complex_balance,
    class_equilibrium,
    equilibrium_set_contains,
    quasi_thermo_certificate,
    solve_class_equilibrium,
)
from .kinetics import RateTransform, gamma_derivative, gamma_eval, gamma_inverse, log_gamma_antideriv
from .lyapunov import DecreaseReport, decrease_report, v_krasovskii, v_point
from .modelfile import ModelFile, parse_model
from .network import Network, Reaction, SpeciesDef, build_network, laplacian, stoich_bases

__all__ = [
    "BalanceReport",
    "DecreaseReport",
    "History",
    "ModelFile",
    "Network",
    "RateTransform",
    "Reaction",
    "SimConfig",
    "SpeciesDef",
    "Trajectory",
    "build_network",
    "check_complex_balance",
    "class_distance",
    "class_equilibrium",
    "conserved_value",
    "decrease_report",
    "delay_integrals",
    "equilibrium_set_contains",
    "gamma_derivative",
    "gamma_eval",
    "gamma_inverse",
    "laplacian",
    "log_gamma_antideriv",
    "parse_model",
    "quasi_thermo_certificate",
    "simulate",
    "solve_class_equilibrium",
    "stoich_bases",
    "v_krasovskii",
    "v_point",
]
