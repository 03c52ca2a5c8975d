"""Dyson-series and inchworm Monte Carlo solvers for the spin-boson model,
with reuse of bath influence functionals across time steps."""

from .bath import BathCorrelation, BathSpec, b_star, build_bath, two_point
from .costmodel import CostReport, r_dyson, r_inch, r_time
from .diagrams import enumerate_pairings, is_linked, lb_connected, lb_full
from .dyson import DysonResult, bare_dqmc, run_dyson, run_dyson_lowmem
from .sampling import SamplingConfig
from .spinsys import ModelConfig, bare_propagator, u0_functional

__all__ = [
    "BathCorrelation", "BathSpec", "b_star", "build_bath", "two_point",
    "CostReport", "r_dyson", "r_inch", "r_time",
    "enumerate_pairings", "is_linked", "lb_connected", "lb_full",
    "DysonResult", "bare_dqmc", "run_dyson", "run_dyson_lowmem",
    "SamplingConfig", "ModelConfig", "bare_propagator", "u0_functional",
]
