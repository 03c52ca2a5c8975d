"""Shared fixtures and independent numerical oracles for the test suite."""

import numpy as np
import pytest

from fastbath.bath import BathSpec, build_bath
from fastbath.spinsys import SIGMA_X, SIGMA_Z, ModelConfig

ACCEPTANCE_LINES = []


def expm_taylor(A, terms=40):
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    A = np.asarray(A, dtype=complex)
    norm = np.max(np.sum(np.abs(A), axis=1))
    k = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    B = A / 2.0 ** k
    out = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for n in range(1, terms):
        term = term @ B / n
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def g0_oracle(eps, delta, O, s_i, s_f):
    """Bare propagator from the three-branch definition using the series exponential."""
    H = eps * SIGMA_Z + delta * SIGMA_X
    if s_f < 0:
        return expm_taylor(-1j * (s_f - s_i) * H)
    if s_i >= 0:
        return expm_taylor(-1j * (s_i - s_f) * H)
    return expm_taylor(1j * s_f * H) @ O @ expm_taylor(1j * s_i * H)


def bstar_direct(bath, x):
    """Mode sum evaluated term by term, no vectorization or coefficient caching."""
    tot = 0j
    for c, w in zip(bath.couplings, bath.frequencies):
        tot += c * c / (2 * w) * (np.cos(w * x) / np.tanh(bath.beta * w / 2) - 1j * np.sin(w * x))
    return tot


@pytest.fixture(scope="session")
def bath_strong():
    return build_bath(BathSpec(xi=0.4, omega_c=2.5, beta=5.0, omega_max=10.0, num_modes=400))


@pytest.fixture(scope="session")
def bath_weak():
    return build_bath(BathSpec(xi=0.2, omega_c=2.5, beta=5.0, omega_max=10.0, num_modes=400))


@pytest.fixture(scope="session")
def bath_small():
    return build_bath(BathSpec(xi=0.2, omega_c=2.5, beta=5.0, omega_max=10.0, num_modes=40))


@pytest.fixture(scope="session")
def bath_zero():
    return build_bath(BathSpec(xi=0.0, omega_c=2.5, beta=5.0, omega_max=10.0, num_modes=40))


@pytest.fixture(scope="session")
def model():
    return ModelConfig()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
