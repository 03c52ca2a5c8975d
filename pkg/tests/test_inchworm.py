import numpy as np
import pytest

from fastbath.bath import BathSpec, build_bath
from fastbath.diagrams import lb_connected
from fastbath.dyson import run_dyson
from fastbath.grid import ZERO_MINUS, ZERO_PLUS, PropagatorGrid
from fastbath.inchworm import (QuadratureRule, inchworm_counts, inchworm_rhs_term, inchworm_step,
                               prepare_samples, run_inchworm)
from fastbath.sampling import SamplingConfig, allocate_inch, in_inch_region
from fastbath.spinsys import IDENTITY, SIGMA_Z, ModelConfig, dag, evolution

from conftest import bstar_direct


def sampling(**kw):
    base = dict(B_emp=0.2, M_bar=3, M0_hat=20, h=0.25, N=4, seed=0)
    return SamplingConfig(**{**base, **kw})


def bath_of(xi):
    return build_bath(BathSpec(xi=xi, omega_c=2.5, beta=5.0, omega_max=10.0, num_modes=40))


@pytest.fixture(scope="module")
def store(bath_small):
    return prepare_samples(sampling(), bath_small)


@pytest.fixture(scope="module")
def evolved(model, bath_small):
    return run_inchworm(model, bath_small, sampling())


# -- grid structure after a full run -------------------------------------------

def test_grid_fully_populated(evolved):
    g = evolved.grid
    labels = list(range(-g.N, 0)) + [ZERO_MINUS, ZERO_PLUS] + list(range(1, g.N + 1))
    for a, j in enumerate(labels):
        for k in labels[a:]:
            assert g.is_set(j, k), (j, k)


def test_grid_jump_symmetry_and_shift_chains(evolved, model):
    g, N = evolved.grid, evolved.grid.N
    O = model.observable
    for n in range(1, N + 1):
        assert np.array_equal(g[-n, ZERO_PLUS], O @ g[-n, ZERO_MINUS])
        assert np.array_equal(g[ZERO_PLUS, n], dag(g[-n, ZERO_MINUS]))
        assert np.array_equal(g[ZERO_MINUS, n], dag(g[-n, ZERO_PLUS]))
        for ell in range(1, n):
            assert np.array_equal(g[-ell, n], dag(g[-n, ell]))
        for ell in range(1, N - n + 1):
            assert np.array_equal(g[-n - ell, -ell], g[-n, ZERO_MINUS])
            assert np.array_equal(g[ell, n + ell], g[ZERO_PLUS, n])
    assert np.array_equal(evolved.G[0], O)
    for n in range(1, N + 1):
        assert np.array_equal(evolved.G[n], g[-n, n])


def test_smallest_grid(model, bath_small):
    res = run_inchworm(model, bath_small, sampling(N=1, M_bar=1))
    assert res.G.shape == (2, 2, 2)
    assert np.all(np.isfinite(res.G))


def test_run_validation(model, bath_small):
    with pytest.raises(ValueError):
        run_inchworm(model, bath_small, sampling(), mode="bogus")
    with pytest.raises(ValueError):
        run_inchworm(model, bath_small, sampling(), stepper="rk4")
    with pytest.raises(ValueError):
        run_inchworm(model, bath_small, sampling(M_bar=3), mode="deterministic")


# -- sample store ---------------------------------------------------------------

def test_first_fold_node_is_pure_fresh(store):
    for m, pieces in store.pieces[(-1, 0)].items():
        assert len(pieces) == 1 and pieces[0].kind == "fresh"
        assert pieces[0].batch.n == allocate_inch(store.sampling, -1, 0)[m]


def test_arrow_union_counts_and_reused_values(store):
    h = store.sampling.h
    sources = [(-3, 2), (-2, 1), (-1, 0)]
    for m, pieces in store.pieces[(-3, 2)].items():
        assert [pc.source for pc in pieces] == sources
        assert sum(pc.batch.n for pc in pieces) == sum(store.fresh[s][m].n for s in sources)
        for pc in pieces:
            # values of the stretched copy are those of the source's fresh piece
            src_piece = store.pieces[pc.source][m][0]
            assert src_piece.kind == "fresh"
            assert pc.L is src_piece.L
            assert np.all(in_inch_region(pc.batch.values(), -3, 2, h))
            assert pc.batch.end_value == 2 * h


def test_stretched_functionals_match_direct_evaluation(store, bath_small):
    for m, pieces in store.pieces[(-3, 2)].items():
        for pc in pieces:
            vals = pc.batch.values()
            for r in range(min(pc.batch.n, 20)):
                ref = lb_connected(bath_small, np.append(vals[r], pc.batch.end_value))
                assert abs(pc.L[r] - ref) <= 1e-12 * max(1.0, abs(ref))


def test_shifted_node_uses_conjugated_values(store, bath_small):
    h = store.sampling.h
    checked = 0
    for m, pieces in store.pieces[(1, 2)].items():
        (pc,) = pieces
        assert pc.kind == "shifted-conjugate" and pc.source == (-1, 0)
        src = store.pieces[(-1, 0)][m][0]
        assert np.array_equal(pc.L, np.conj(src.L))
        vals = pc.batch.values()
        assert np.all(in_inch_region(vals, 1, 2, h))
        for r in range(min(pc.batch.n, 100)):
            ref = lb_connected(bath_small, np.append(vals[r], 2 * h))
            assert abs(pc.L[r] - ref) <= 1e-12 * max(1.0, abs(ref))
            checked += 1
    assert checked >= 20


def test_translated_column(store, bath_small):
    h = store.sampling.h
    for p in range(-store.sampling.N, -1):
        for m, pieces in store.pieces[(p, -1)].items():
            (pc,) = pieces
            assert pc.kind == "translated" and pc.source == (p + 1, 0)
            assert pc.batch.end_value == -h
            vals = pc.batch.values()
            assert np.allclose(vals, store.fresh[(p + 1, 0)][m].values() - h, atol=1e-15)
            for r in range(min(pc.batch.n, 10)):
                ref = lb_connected(bath_small, np.append(vals[r], -h))
                assert abs(pc.L[r] - ref) <= 1e-12 * max(1.0, abs(ref))


def test_counts_from_allocation_match_store(store):
    fresh, total = inchworm_counts(store.sampling)
    N = store.sampling.N
    bullets = [(p, k) for k in range(N + 1) for p in range(-N, 0)]
    for m in store.sampling.orders:
        assert fresh[m] == sum(store.fresh[b][m].n for b in bullets)
        assert total[m] == sum(pc.batch.n for b in bullets for pc in store.pieces[b][m])
        assert store.cost.step_fresh[-1][m] == fresh[m]
        assert store.cost.step_total[-1][m] == total[m]


def test_reuse_matches_no_reuse_bitwise(model, bath_small):
    a = run_inchworm(model, bath_small, sampling(), mode="reuse")
    b = run_inchworm(model, bath_small, sampling(), mode="no-reuse")
    assert np.array_equal(a.G, b.G)
    assert np.array_equal(a.grid.values, b.grid.values, equal_nan=True)
    for m in sampling().orders:
        assert a.cost.evaluations[m] < b.cost.evaluations[m]


def test_same_seed_reproducible(model, bath_small):
    a = run_inchworm(model, bath_small, sampling(seed=3))
    b = run_inchworm(model, bath_small, sampling(seed=3))
    assert np.array_equal(a.G, b.G)


# -- right-hand side ------------------------------------------------------------

def test_rhs_zero_coupling_vanishes(evolved, model, bath_zero):
    out = inchworm_rhs_term(model, bath_zero, evolved.grid, -3, [-0.4, -0.1, 0.3], 2)
    assert np.array_equal(out, np.zeros((2, 2)))


def test_rhs_first_order_factor_oracle(evolved, model, bath_small):
    g, h = evolved.grid, evolved.grid.h
    j, s_node, k = -3, -2, 2
    s = s_node * h
    ref = (1j ** 2) * SIGMA_Z @ g[s_node, k] @ SIGMA_Z @ g[j, s_node]
    ref = -ref * bstar_direct(bath_small, abs(s) - abs(k * h))  # one negative point
    got = inchworm_rhs_term(model, bath_small, g, j, [s], k)
    assert np.allclose(got, ref, atol=1e-13)


def test_rhs_negative_endpoint_flips_sign(evolved, model, bath_small):
    g, h = evolved.grid, evolved.grid.h
    j, s_node, k = -4, -3, -1
    s = s_node * h
    ref = -(1j ** 2) * SIGMA_Z @ g[s_node, k] @ SIGMA_Z @ g[j, s_node]
    ref = -ref * bstar_direct(bath_small, abs(s) - abs(k * h))
    got = inchworm_rhs_term(model, bath_small, g, j, [s], k)
    assert np.allclose(got, ref, atol=1e-13)


def test_rhs_override_replaces_end_node(evolved, model, bath_small):
    g = evolved.grid
    X = 2.0 * IDENTITY
    with_override = inchworm_rhs_term(model, bath_small, g, -3, [-0.5], 2, override=((-2, 2), X))
    expected = (1j ** 2) * SIGMA_Z @ X @ SIGMA_Z @ g[-3, -2]
    expected = -expected * bstar_direct(bath_small, 0.5 - 0.5)
    assert np.allclose(with_override, expected, atol=1e-13)
    assert not np.array_equal(g[-2, 2], X)


# -- single steps -----------------------------------------------------------------

def test_first_step_onto_fold_is_free_euler(model):
    h = 0.1
    grid = PropagatorGrid(2, h, model.observable)
    G = inchworm_step(grid, None, model, -1, ZERO_MINUS, "euler")
    assert np.allclose(G, IDENTITY - h * 1j * model.hamiltonian, atol=1e-15)
    assert np.array_equal(grid[-1, ZERO_MINUS], G)


def test_crossing_step_starts_from_positive_side(model, bath_zero):
    h = 0.1
    grid = PropagatorGrid(2, h, model.observable)
    start = model.observable @ (IDENTITY - h * 1j * model.hamiltonian)
    grid[-1, ZERO_MINUS] = IDENTITY
    grid[-1, ZERO_PLUS] = start
    G = inchworm_step(grid, None, model, -1, 1, "euler", QuadratureRule(bath_zero))
    assert np.allclose(G, start + h * 1j * model.hamiltonian @ start, atol=1e-15)


# -- deterministic mode --------------------------------------------------------------

def _final(model, bath, h, stepper):
    cfg = SamplingConfig(B_emp=0.2, M_bar=1, M0_hat=1, h=h, N=int(round(1.0 / h)))
    return run_inchworm(model, bath, cfg, mode="deterministic", stepper=stepper).G[-1]


@pytest.mark.parametrize("stepper, order, tol", [("heun", 2.0, 0.3), ("euler", 1.0, 0.2)])
def test_deterministic_self_convergence_order(model, bath_small, stepper, order, tol):
    g = [_final(model, bath_small, h, stepper) for h in (0.1, 0.05, 0.025)]
    ratio = np.linalg.norm(g[0] - g[1]) / np.linalg.norm(g[1] - g[2])
    assert abs(np.log2(ratio) - order) <= tol


def test_zero_coupling_tends_to_free_evolution(model, bath_zero):
    t = 1.0
    exact = evolution(model, -t) @ SIGMA_Z @ evolution(model, t)
    errs = [np.abs(_final(model, bath_zero, h, "heun") - exact).max() for h in (0.1, 0.05)]
    assert errs[1] < errs[0] / 3.0


def test_weak_coupling_agrees_with_dyson(model):
    # both first-order truncations share the leading bath term; their bath
    # contributions differ only at second order in the coupling
    cfg = SamplingConfig(B_emp=0.2, M_bar=1, M0_hat=1, h=0.05, N=20)
    zero = bath_of(0.0)
    I0 = run_inchworm(model, zero, cfg, mode="deterministic").G
    D0 = run_dyson(model, zero, cfg, mode="deterministic").G
    gaps = []
    for xi in (0.1, 0.05):
        b = bath_of(xi)
        I = run_inchworm(model, b, cfg, mode="deterministic").G - I0
        D = run_dyson(model, b, cfg, mode="deterministic").G - D0
        assert np.abs(I - D).max() < 0.1 * np.abs(D).max()
        gaps.append(np.abs(I - D).max())
    assert 3.0 <= gaps[0] / gaps[1] <= 5.0
