import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from chdbc.diagnostics import energies, masses
from chdbc.fem import Discretization
from chdbc.models import (
    InvalidStateError, Model, ModelConfig, Order, Scheme, SystemState, assemble_step_jacobian,
    assemble_step_residual, initial_chemical_potentials, initial_state, parse_model, simulate,
    step_first_order, step_first_order_substepped, step_second_order,
)
from chdbc.potential import double_well
from chdbc.solver import NewtonSettings
from conftest import random_consistent

SCHEMES = [(m, o) for m in Model for o in Order]
TIGHT = NewtonSettings(abs_tol=1e-13)


def cfg_for(model, order, ell=1, tau=1e-2, **kw):
    p = dict(epsilon=0.3, delta=0.4, sigma=1.0, kappa=0.7)
    p.update(kw)
    return ModelConfig(model, order, tau=tau, T=tau, ell=ell, **p)


def test_parse_model_aliases():
    assert parse_model("Liu-Wu") is Model.LIU_WU
    assert parse_model("AC") is Model.ALLEN_CAHN
    with pytest.raises(ValueError):
        parse_model("robin")


def test_config_validation():
    with pytest.raises(ValueError, match="order=first"):
        cfg_for(Model.ALLEN_CAHN, Order.SECOND, ell=2)
    with pytest.raises(ValueError, match="not available"):
        cfg_for(Model.GMS, Order.FIRST, ell=2)
    with pytest.raises(ValueError, match="positive"):
        cfg_for(Model.NEUMANN, Order.FIRST, epsilon=-1.0)
    with pytest.raises(ValueError, match="ell"):
        cfg_for(Model.LIU_WU, Order.FIRST, ell=0)
    with pytest.raises(ValueError, match="multiple"):
        ModelConfig("neumann", "first", 1, 1, 1, 1, tau=0.3, T=1.0)
    with pytest.raises(ValueError, match="double-well"):
        ModelConfig("neumann", "second", 1, 1, 1, 1, 0.1, 0.1, potential=double_well())
    assert ModelConfig("neumann", "first", 1, 1, 1, 1, tau=0.1, T=1.0).num_steps == 10


@pytest.mark.parametrize("model, order", SCHEMES)
@pytest.mark.parametrize("c", [0.0, 1.0, -1.0])
def test_pure_phase_and_zero_fixed_points(model, order, c):
    d = Discretization.build(2, 2)
    cfg = cfg_for(model, order)
    s0 = initial_state(cfg, d, np.full(d.n_u, c), np.full(d.n_p, c))
    for v in (s0.w, s0.w_gamma, s0.lam, s0.mu):
        if v is not None:
            np.testing.assert_allclose(v, 0, atol=1e-14)
    sch = Scheme(cfg, d)
    assert np.linalg.norm(sch.residual(s0, sch.initial_guess(s0))) <= 1e-13
    s1, rep = sch.step(s0)
    assert rep.newton_iterations == 0
    np.testing.assert_array_equal(s1.u, s0.u)


@pytest.mark.parametrize("model, order", SCHEMES)
@pytest.mark.parametrize("factor", [1, 2])
def test_jacobian_matches_finite_differences(model, order, factor):
    rng = np.random.default_rng(7)
    d = Discretization.build(2, factor)
    ell = 2 if model in (Model.ALLEN_CAHN, Model.LIU_WU) and order is Order.FIRST else 1
    cfg = cfg_for(model, order, ell=ell)
    u, p = random_consistent(d, rng)
    s0 = initial_state(cfg, d, u, p)
    sch = Scheme(cfg, d)
    x = sch.initial_guess(s0) + 0.3 * rng.normal(size=sch.size)
    J = assemble_step_jacobian(cfg, d, s0, x)
    for _ in range(3):
        v = rng.normal(size=sch.size)
        h = 1e-6
        fd = (assemble_step_residual(cfg, d, s0, x + h * v)
              - assemble_step_residual(cfg, d, s0, x - h * v)) / (2 * h)
        assert np.linalg.norm(J @ v - fd) <= 1e-6 * np.linalg.norm(fd)


def test_neumann_block_structure():
    d = Discretization.build(1, 1)
    cfg = cfg_for(Model.NEUMANN, Order.FIRST)
    u = np.array([0.1, -0.3, 0.5, 0.2, -0.7])
    s0 = initial_state(cfg, d, u)
    sch = Scheme(cfg, d)
    x = sch.initial_guess(s0)
    J = sch.jacobian(s0, x).toarray()
    eps, tau, sig = cfg.epsilon, cfg.tau, cfg.sigma
    M, K = d.M.toarray(), d.K.toarray()
    expected = np.block([[M, tau * sig * K],
                         [eps * K + np.diag(d.m / eps * 3 * u**2), -M]])
    np.testing.assert_allclose(J, expected, atol=1e-14)
    assert sch.names == ["u", "w"]


def test_substep_layout_and_ell_one_equivalence():
    rng = np.random.default_rng(1)
    d = Discretization.build(4, 2)
    u, p = random_consistent(d, rng, 0.8)
    for model in (Model.ALLEN_CAHN, Model.LIU_WU):
        cfg = cfg_for(model, Order.FIRST)
        s0 = initial_state(cfg, d, u, p)
        a, _ = step_first_order(cfg, d, s0)
        b, _ = step_first_order_substepped(cfg, d, s0)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.p, b.p)
    cfg = cfg_for(Model.ALLEN_CAHN, Order.FIRST, ell=4)
    sch = Scheme(cfg, d)
    assert sch.size == 2 * d.n_u + 4 * d.n_p + d.n_lambda
    s1, _ = sch.step(initial_state(cfg, d, u, p))
    assert len(s1.substates) == 3
    assert all(len(q) == d.n_p for q in s1.substates)


def test_substepping_rejected_for_gms_and_second_order():
    d = Discretization.build(2, 1)
    cfg = cfg_for(Model.GMS, Order.FIRST)
    s0 = initial_state(cfg, d, np.zeros(d.n_u), np.zeros(d.n_p))
    with pytest.raises(ValueError):
        step_first_order_substepped(cfg, d, s0)
    with pytest.raises(ValueError):
        step_first_order_substepped(cfg.with_(model=Model.LIU_WU, order=Order.SECOND), d, s0)


def test_invalid_states():
    d = Discretization.build(2, 1)
    cfg = cfg_for(Model.ALLEN_CAHN, Order.FIRST)
    u = np.zeros(d.n_u)
    bad = SystemState(0, u, p=np.full(d.n_p, 0.5))
    with pytest.raises(InvalidStateError, match="inconsistent"):
        step_first_order(cfg, d, bad)
    with pytest.raises(InvalidStateError, match="w\\^n"):
        step_second_order(cfg.with_(order=Order.SECOND), d, SystemState(0, u, p=np.zeros(d.n_p)))
    with pytest.raises(ValueError, match="length"):
        assemble_step_residual(cfg, d, SystemState(0, u, p=np.zeros(d.n_p)), np.zeros(3))
    with pytest.raises(InvalidStateError):
        initial_state(cfg, d, u)


def test_initial_potential_constant_neumann():
    d = Discretization.build(4, 1)
    cfg = cfg_for(Model.NEUMANN, Order.SECOND)
    for c in (0.0, 0.3, -1.7):
        w0, *_ = initial_chemical_potentials(cfg, d, np.full(d.n_u, c))
        np.testing.assert_allclose(w0, (c**3 - c) / cfg.epsilon, atol=1e-12)


@pytest.mark.parametrize("model", list(Model))
def test_initial_potentials_satisfy_semidiscrete_system(model):
    """Dense check on n=16: the returned potentials make the algebraic
    equations hold and the implied time derivatives satisfy the
    differentiated constraints."""
    d = Discretization.build(16, 1)
    cfg = ModelConfig(model, Order.SECOND, 0.02, 0.2, 0.01, 10.0, 1e-4, 1e-4)
    u0, p0 = d.consistent_boundary_data(lambda x, y: np.cos(4 * np.pi * x) * np.cos(4 * np.pi * y))
    w, g, lam, mu = initial_chemical_potentials(cfg, d, u0, p0)
    M, K, Mg, Kg = (A.toarray() for A in (d.M, d.K, d.M_gamma, d.K_gamma))
    Tu, Tp = d.T_u.toarray(), d.T_p.toarray()
    eps, dlt, sig, kap = cfg.epsilon, cfg.delta, cfg.sigma, cfg.kappa
    Fu = eps * K @ u0 + d.m / eps * (u0**3 - u0)
    if model is Model.NEUMANN:
        np.testing.assert_allclose(w, np.linalg.solve(M, Fu), rtol=0, atol=1e-10 * abs(w).max())
        return
    Fp = dlt * kap * Kg @ p0 + d.m_gamma / dlt * (p0**3 - p0)
    scale = abs(Fu).max()
    np.testing.assert_allclose(M @ w, Fu - eps * Tu.T @ lam, atol=1e-10 * scale)
    mu_term = Tu.T @ mu if mu is not None else 0
    du = np.linalg.solve(M, -sig * K @ w + mu_term)
    if model is Model.ALLEN_CAHN:
        dp = -np.linalg.solve(Mg, Fp + eps * Tp.T @ lam)
    else:
        np.testing.assert_allclose(Mg @ g, Fp + eps * Tp.T @ lam, atol=1e-10 * scale)
        extra = Tp.T @ mu if mu is not None else 0
        dp = -np.linalg.solve(Mg, Kg @ g + extra)
    np.testing.assert_allclose(Tu @ du, Tp @ dp, atol=1e-10 * abs(Tu @ du).max())
    if model is Model.GMS:
        np.testing.assert_allclose(Tu @ w, Tp @ g, atol=1e-10 * abs(w).max())


@pytest.mark.parametrize("model, order", SCHEMES)
def test_short_run_dissipates_and_conserves(model, order):
    d = Discretization.build(8, 2)
    cfg = ModelConfig(model, order, 0.05, 0.05, 1.0, 1.0, 1e-4, 1e-3)
    u0, p0 = d.consistent_boundary_data(lambda x, y: np.cos(2 * np.pi * x) * np.cos(np.pi * y))
    traj = simulate(cfg, d, initial_state(cfg, d, u0, p0), TIGHT)
    e = np.array([energies(s, cfg, d)[2] for s in traj.states])
    assert (np.diff(e) <= 1e-10 * abs(e[0])).all()
    m = np.array([masses(s, d) for s in traj.states])
    col = {Model.NEUMANN: [0], Model.ALLEN_CAHN: [0], Model.LIU_WU: [0, 1], Model.GMS: [2]}[model]
    for c in col:
        assert abs(m[:, c] - m[0, c]).max() <= 1e-10
    for s in traj.states:
        if s.p is not None:
            assert abs(d.constraint_residual(s.u, s.p)).max() <= 1e-12


def test_first_order_dissipation_bound():
    # E(n) - E(n+1) >= tau sigma w^T K w for the first-order Neumann step
    d = Discretization.build(8, 1)
    cfg = ModelConfig("neumann", "first", 0.05, 1.0, 1.0, 1.0, 1e-4, 1e-3)
    u0, _ = d.consistent_boundary_data(lambda x, y: np.cos(2 * np.pi * x) * np.sin(np.pi * y))
    traj = simulate(cfg, d, initial_state(cfg, d, u0), TIGHT)
    for a, b in zip(traj.states, traj.states[1:]):
        drop = energies(a, cfg, d)[2] - energies(b, cfg, d)[2]
        assert drop >= cfg.tau * cfg.sigma * b.w @ d.K @ b.w - 1e-12


@given(st.integers(0, 2**31))
def test_residual_vanishes_at_converged_step(seed):
    rng = np.random.default_rng(seed)
    d = Discretization.build(2, 1)
    cfg = cfg_for(Model.LIU_WU, Order.SECOND)
    u, p = random_consistent(d, rng)
    s0 = initial_state(cfg, d, u, p)
    sch = Scheme(cfg, d)
    s1, rep = sch.step(s0)
    x = sch.pack({"u": s1.u, "w": s1.w, "p1": s1.p, "g1": s1.w_gamma, "lambda": s1.lam})
    assert np.linalg.norm(sch.residual(s0, x)) <= 1e-11
    assert rep.residual <= 1e-11
