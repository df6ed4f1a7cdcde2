"""One-step schemes for the four boundary models, in block form.

Every scheme is a square nonlinear system in the stacked unknowns of one
time step. The first-order schemes treat the convex part of the potential
implicitly and the concave part explicitly; the second-order schemes are of
Crank-Nicolson type with the secant slope of the double well.

Block layout (new-time values; ``g`` is w_Gamma for Liu-Wu and r for GMS)::

    Neumann      u, w
    AllenCahn    u, w, p_1..p_l, lambda
    LiuWu        u, w, p_1..p_l, g_1..g_l, lambda
    GMS          u, w, p, r, lambda, mu

Conventions, signs and multiplier scalings follow the operator equations
literally; vertex quadrature (the lumped weights ``m``) is used for every
nonlinear term so the discrete energy identities telescope exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .fem import Discretization
from .potential import DOUBLE_WELL, PotentialSplit, cn_slope, cn_slope_partials
from .solver import NewtonSettings, StepReport, newton_solve, sparse_linear_solve


class Model(str, Enum):
    NEUMANN = "neumann"
    ALLEN_CAHN = "allen_cahn"
    LIU_WU = "liu_wu"
    GMS = "gms"


class Order(str, Enum):
    FIRST = "first"
    SECOND = "second"


class InvalidStateError(ValueError):
    pass


_ALIASES = {
    "neumann": Model.NEUMANN,
    "allencahn": Model.ALLEN_CAHN,
    "allen_cahn": Model.ALLEN_CAHN,
    "ac": Model.ALLEN_CAHN,
    "liuwu": Model.LIU_WU,
    "liu_wu": Model.LIU_WU,
    "lw": Model.LIU_WU,
    "gms": Model.GMS,
    "goldstein": Model.GMS,
}


def parse_model(name) -> Model:
    if isinstance(name, Model):
        return name
    key = str(name).strip().lower().replace("-", "_")
    if key not in _ALIASES:
        raise ValueError(f"unknown model {name!r}")
    return _ALIASES[key]


def parse_order(order) -> Order:
    if isinstance(order, Order):
        return order
    key = str(order).strip().lower()
    if key in ("1", "first", "first_order"):
        return Order.FIRST
    if key in ("2", "second", "secondcn", "second_cn", "cn"):
        return Order.SECOND
    raise ValueError(f"unknown scheme order {order!r}")


@dataclass(frozen=True)
class ModelConfig:
    model: Model
    order: Order
    epsilon: float
    delta: float
    sigma: float
    kappa: float
    tau: float
    T: float
    ell: int = 1
    potential: PotentialSplit = DOUBLE_WELL
    surface_potential: PotentialSplit = DOUBLE_WELL

    def __post_init__(self):
        object.__setattr__(self, "model", parse_model(self.model))
        object.__setattr__(self, "order", parse_order(self.order))
        for name in ("epsilon", "delta", "sigma", "kappa", "tau", "T"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive number, got {v!r}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell!r}")
        object.__setattr__(self, "ell", int(self.ell))
        if self.order is Order.SECOND:
            if self.ell != 1:
                raise ValueError("boundary substepping (ell > 1) is only available for order=first")
            if self.potential is not DOUBLE_WELL or self.surface_potential is not DOUBLE_WELL:
                raise ValueError("second-order schemes require the double-well potential")
        if self.ell > 1 and self.model not in (Model.ALLEN_CAHN, Model.LIU_WU):
            raise ValueError(f"boundary substepping is not available for model {self.model.value}")
        self.num_steps  # validates the time grid

    @property
    def num_steps(self) -> int:
        N = round(self.T / self.tau)
        if N < 1 or abs(N * self.tau - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not an integer multiple of tau={self.tau}")
        return N

    @property
    def has_boundary(self) -> bool:
        return self.model is not Model.NEUMANN

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class SystemState:
    """Unknowns at time index ``n``.

    ``w_gamma`` holds the surface chemical potential (Liu-Wu) or the trace
    variable r (GMS). ``substates`` are the intermediate p^{n+j/l}.
    """

    n: int
    u: np.ndarray
    w: np.ndarray | None = None
    p: np.ndarray | None = None
    w_gamma: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    substates: tuple = field(default=(), compare=False)

    @property
    def r(self):
        return self.w_gamma


def _diag(v):
    return sp.diags(v, format="csr")


class Scheme:
    """Residual, Jacobian and Newton step for one (model, order, ell)."""

    def __init__(self, cfg: ModelConfig, disc: Discretization):
        self.cfg = cfg
        self.disc = disc
        self.model = cfg.model
        self.second = cfg.order is Order.SECOND
        self.ell = cfg.ell
        self.c = 0.5 if self.second else 1.0
        d = disc
        sizes = [("u", d.n_u), ("w", d.n_u)]
        if self.model is Model.ALLEN_CAHN:
            sizes += [(f"p{j}", d.n_p) for j in range(1, self.ell + 1)]
            sizes += [("lambda", d.n_lambda)]
        elif self.model is Model.LIU_WU:
            sizes += [(f"p{j}", d.n_p) for j in range(1, self.ell + 1)]
            sizes += [(f"g{j}", d.n_p) for j in range(1, self.ell + 1)]
            sizes += [("lambda", d.n_lambda)]
        elif self.model is Model.GMS:
            sizes += [("p1", d.n_p), ("g1", d.n_p), ("lambda", d.n_lambda), ("mu", d.n_lambda)]
        self.names = [n for n, _ in sizes]
        self.slices = {}
        off = 0
        for name, n in sizes:
            self.slices[name] = slice(off, off + n)
            off += n
        self.size = off
        self.blocks = [(n, self.slices[n]) for n in self.names]
        self._TuT = d.T_u.T.tocsr()
        self._TpT = d.T_p.T.tocsr()

    # -- packing ---------------------------------------------------------
    def unpack(self, x: np.ndarray) -> dict:
        if len(x) != self.size:
            raise ValueError(f"candidate has length {len(x)}, scheme expects {self.size}")
        return {n: x[s] for n, s in self.slices.items()}

    def pack(self, parts: dict) -> np.ndarray:
        x = np.zeros(self.size)
        for n, s in self.slices.items():
            x[s] = parts[n]
        return x

    def initial_guess(self, state: SystemState) -> np.ndarray:
        d = self.disc
        parts = {"u": state.u, "w": state.w if state.w is not None else np.zeros(d.n_u)}
        zl = np.zeros(d.n_lambda)
        for j in range(1, self.ell + 1):
            parts[f"p{j}"] = state.p
            g = state.w_gamma if state.w_gamma is not None else np.zeros(d.n_p)
            parts[f"g{j}"] = g
        parts["lambda"] = state.lam if state.lam is not None else zl
        parts["mu"] = state.mu if state.mu is not None else zl
        return self.pack({n: parts[n] for n in self.names})

    # -- nonlinear pieces ------------------------------------------------
    def _nl(self, pot: PotentialSplit, old, new):
        """Nonlinearity and its partials with respect to (old, new)."""
        if self.second:
            da, db = cn_slope_partials(old, new)
            return cn_slope(old, new), da, db
        return (
            pot.convex_derivative(new) - pot.concave_derivative(old),
            -pot.concave_curvature(old),
            pot.convex_curvature(new),
        )

    def _bar(self, new, old):
        return 0.5 * (new + old) if self.second else new

    def check_state(self, state: SystemState, tol: float = 1e-8):
        d = self.disc
        if len(state.u) != d.n_u:
            raise InvalidStateError("u has the wrong length for this discretization")
        if self.second and state.w is None:
            raise InvalidStateError("second-order step needs w^n; see initial_chemical_potentials")
        if self.model is Model.NEUMANN:
            return
        if state.p is None or len(state.p) != d.n_p:
            raise InvalidStateError("boundary field p missing or of wrong length")
        scale = max(1.0, float(np.abs(state.u).max()))
        if np.abs(d.constraint_residual(state.u, state.p)).max() > tol * scale:
            raise InvalidStateError("inconsistent state: T_u u - T_p p != 0")
        if self.second and self.model in (Model.LIU_WU, Model.GMS) and state.w_gamma is None:
            raise InvalidStateError("second-order step needs the surface potential at t^n")
        if self.second and self.model is Model.GMS:
            scale = max(1.0, float(np.abs(state.w).max()))
            if np.abs(d.constraint_residual(state.w, state.w_gamma)).max() > tol * scale:
                raise InvalidStateError("inconsistent state: T_u w - T_p r != 0")

    # -- residual --------------------------------------------------------
    def residual(self, state: SystemState, x: np.ndarray) -> np.ndarray:
        cfg, d = self.cfg, self.disc
        X = self.unpack(x)
        eps, dlt, sig, kap, tau = cfg.epsilon, cfg.delta, cfg.sigma, cfg.kappa, cfg.tau
        u, w = X["u"], X["w"]
        wbar = self._bar(w, state.w) if self.second else w
        ubar = self._bar(u, state.u)
        R = {}
        R["u"] = d.M @ (u - state.u) + tau * sig * (d.K @ wbar)
        nl, _, _ = self._nl(cfg.potential, state.u, u)
        R["w"] = eps * (d.K @ ubar) + (d.m / eps) * nl - d.M @ wbar
        if self.model is Model.NEUMANN:
            return np.concatenate([R[n] for n in self.names])

        lam = X["lambda"]
        R["w"] -= eps * (self._TuT @ lam)
        pot = cfg.surface_potential
        dt = tau / self.ell
        p_prev = state.p
        if self.model is Model.ALLEN_CAHN:
            for j in range(1, self.ell + 1):
                p = X[f"p{j}"]
                nlg, _, _ = self._nl(pot, p_prev, p)
                R[f"p{j}"] = (
                    d.M_gamma @ (p - p_prev)
                    + dt * dlt * kap * (d.K_gamma @ self._bar(p, p_prev))
                    + (dt / dlt) * d.m_gamma * nlg
                    + dt * eps * (self._TpT @ lam)
                )
                p_prev = p
        elif self.model is Model.LIU_WU:
            for j in range(1, self.ell + 1):
                p, g = X[f"p{j}"], X[f"g{j}"]
                gbar = self._bar(g, state.w_gamma) if self.second else g
                nlg, _, _ = self._nl(pot, p_prev, p)
                R[f"p{j}"] = d.M_gamma @ (p - p_prev) + dt * (d.K_gamma @ gbar)
                R[f"g{j}"] = (
                    dlt * kap * (d.K_gamma @ self._bar(p, p_prev))
                    + (d.m_gamma / dlt) * nlg
                    + eps * (self._TpT @ lam)
                    - d.M_gamma @ gbar
                )
                p_prev = p
        else:  # GMS
            p, r, mu = X["p1"], X["g1"], X["mu"]
            rbar = self._bar(r, state.w_gamma) if self.second else r
            nlg, _, _ = self._nl(pot, state.p, p)
            R["u"] -= tau * (self._TuT @ mu)
            R["p1"] = d.M_gamma @ (p - state.p) + tau * (d.K_gamma @ rbar) + tau * (self._TpT @ mu)
            R["g1"] = (
                dlt * kap * (d.K_gamma @ self._bar(p, state.p))
                + (d.m_gamma / dlt) * nlg
                + eps * (self._TpT @ lam)
                - d.M_gamma @ rbar
            )
            R["mu"] = d.T_u @ w - d.T_p @ r
        R["lambda"] = d.T_u @ u - d.T_p @ X[f"p{self.ell}"]
        return np.concatenate([R[n] for n in self.names])

    # -- Jacobian --------------------------------------------------------
    def jacobian(self, state: SystemState, x: np.ndarray) -> sp.csr_matrix:
        cfg, d = self.cfg, self.disc
        X = self.unpack(x)
        eps, dlt, sig, kap, tau = cfg.epsilon, cfg.delta, cfg.sigma, cfg.kappa, cfg.tau
        c = self.c
        J = {}
        J["u", "u"] = d.M
        J["u", "w"] = (tau * sig * c) * d.K
        _, _, db = self._nl(cfg.potential, state.u, X["u"])
        J["w", "u"] = (eps * c) * d.K + _diag(d.m / eps * db)
        J["w", "w"] = -c * d.M
        if self.model is not Model.NEUMANN:
            J["w", "lambda"] = -eps * self._TuT
            J["lambda", "u"] = d.T_u
            J["lambda", f"p{self.ell}"] = -d.T_p
        pot = cfg.surface_potential
        dt = tau / self.ell
        p_prev = state.p
        if self.model is Model.ALLEN_CAHN:
            for j in range(1, self.ell + 1):
                p = X[f"p{j}"]
                _, da, db = self._nl(pot, p_prev, p)
                pj = f"p{j}"
                J[pj, pj] = d.M_gamma + (dt * dlt * kap * c) * d.K_gamma + _diag(dt / dlt * d.m_gamma * db)
                if j > 1:
                    J[pj, f"p{j-1}"] = -d.M_gamma + _diag(dt / dlt * d.m_gamma * da)
                J[pj, "lambda"] = (dt * eps) * self._TpT
                p_prev = p
        elif self.model is Model.LIU_WU:
            for j in range(1, self.ell + 1):
                p = X[f"p{j}"]
                _, da, db = self._nl(pot, p_prev, p)
                pj, gj = f"p{j}", f"g{j}"
                J[pj, pj] = d.M_gamma
                J[pj, gj] = (dt * c) * d.K_gamma
                J[gj, pj] = (dlt * kap * c) * d.K_gamma + _diag(d.m_gamma / dlt * db)
                J[gj, gj] = -c * d.M_gamma
                J[gj, "lambda"] = eps * self._TpT
                if j > 1:
                    J[pj, f"p{j-1}"] = -d.M_gamma
                    J[gj, f"p{j-1}"] = _diag(d.m_gamma / dlt * da)
                p_prev = p
        elif self.model is Model.GMS:
            _, _, db = self._nl(pot, state.p, X["p1"])
            J["u", "mu"] = -tau * self._TuT
            J["p1", "p1"] = d.M_gamma
            J["p1", "g1"] = (tau * c) * d.K_gamma
            J["p1", "mu"] = tau * self._TpT
            J["g1", "p1"] = (dlt * kap * c) * d.K_gamma + _diag(d.m_gamma / dlt * db)
            J["g1", "g1"] = -c * d.M_gamma
            J["g1", "lambda"] = eps * self._TpT
            J["mu", "w"] = d.T_u
            J["mu", "g1"] = -d.T_p
        grid = [[J.get((r, col)) for col in self.names] for r in self.names]
        # bmat needs every block row/column to be sized; diagonal blocks may be absent
        for i, name in enumerate(self.names):
            if grid[i][i] is None:
                n = self.slices[name].stop - self.slices[name].start
                grid[i][i] = sp.csr_matrix((n, n))
        return sp.bmat(grid, format="csr")

    # -- stepping --------------------------------------------------------
    def state_from(self, x: np.ndarray, state: SystemState) -> SystemState:
        X = self.unpack(x.copy())
        kw = dict(n=state.n + 1, u=X["u"], w=X["w"])
        if self.model is not Model.NEUMANN:
            kw["p"] = X[f"p{self.ell}"]
            kw["lam"] = X["lambda"]
            if self.ell > 1:
                kw["substates"] = tuple(X[f"p{j}"] for j in range(1, self.ell))
        if self.model in (Model.LIU_WU, Model.GMS):
            kw["w_gamma"] = X[f"g{self.ell}"]
        if self.model is Model.GMS:
            kw["mu"] = X["mu"]
        return SystemState(**kw)

    def step(self, state: SystemState, settings: NewtonSettings | None = None,
             linear_solve=sparse_linear_solve):
        self.check_state(state)
        t0 = time.perf_counter()
        x, report = newton_solve(
            lambda x: self.residual(state, x),
            lambda x: self.jacobian(state, x),
            self.initial_guess(state),
            settings,
            linear_solve=linear_solve,
            blocks=self.blocks,
        )
        report.wall_time = time.perf_counter() - t0
        return self.state_from(x, state), report


def step_first_order(cfg: ModelConfig, disc: Discretization, state: SystemState,
                     settings: NewtonSettings | None = None):
    if cfg.order is not Order.FIRST:
        cfg = cfg.with_(order=Order.FIRST)
    if cfg.ell != 1:
        cfg = cfg.with_(ell=1)
    return Scheme(cfg, disc).step(state, settings)


def step_first_order_substepped(cfg: ModelConfig, disc: Discretization, state: SystemState,
                                settings: NewtonSettings | None = None):
    if cfg.order is not Order.FIRST:
        raise ValueError("substepping is a first-order scheme")
    if cfg.model not in (Model.ALLEN_CAHN, Model.LIU_WU):
        raise ValueError(f"substepping is not available for model {cfg.model.value}")
    return Scheme(cfg, disc).step(state, settings)


def step_second_order(cfg: ModelConfig, disc: Discretization, state: SystemState,
                      settings: NewtonSettings | None = None):
    if cfg.order is not Order.SECOND:
        cfg = cfg.with_(order=Order.SECOND, ell=1)
    return Scheme(cfg, disc).step(state, settings)


def assemble_step_residual(cfg, disc, state, candidate):
    return Scheme(cfg, disc).residual(state, candidate)


def assemble_step_jacobian(cfg, disc, state, candidate):
    return Scheme(cfg, disc).jacobian(state, candidate)


def initial_chemical_potentials(cfg: ModelConfig, disc: Discretization, u0, p0=None):
    """Chemical potentials at t = 0 consistent with (u0, p0).

    Fixes u0 (and p0) and solves the semi-discrete system at t = 0 for the
    time derivatives, the chemical potentials and the multipliers; the
    differentiated constraints close the system. Returns ``(w0, g0, lam0,
    mu0)`` where ``g0`` is w_Gamma (Liu-Wu) or r (GMS) and unused entries are
    ``None``.
    """
    d = disc
    eps, dlt, sig, kap = cfg.epsilon, cfg.delta, cfg.sigma, cfg.kappa
    pot, spot = cfg.potential, cfg.surface_potential
    F_u = eps * (d.K @ u0) + d.m / eps * pot.derivative(u0)
    if cfg.model is Model.NEUMANN:
        w0 = sparse_linear_solve(d.M, F_u)
        return w0, None, None, None
    if p0 is None:
        raise InvalidStateError("boundary models need p0")
    F_p = dlt * kap * (d.K_gamma @ p0) + d.m_gamma / dlt * spot.derivative(p0)
    nu, np_, nl = d.n_u, d.n_p, d.n_lambda
    TuT, TpT = d.T_u.T, d.T_p.T
    Z = None
    if cfg.model is Model.ALLEN_CAHN:
        # unknowns: du, w, dp, lambda
        A = sp.bmat([
            [d.M, sig * d.K, Z, Z],
            [Z, d.M, Z, eps * TuT],
            [Z, Z, d.M_gamma, eps * TpT],
            [d.T_u, Z, -d.T_p, sp.csr_matrix((nl, nl))],
        ], format="csc")
        b = np.concatenate([np.zeros(nu), F_u, -F_p, np.zeros(nl)])
        x = sparse_linear_solve(A, b)
        return x[nu:2 * nu], None, x[2 * nu + np_:], None
    if cfg.model is Model.LIU_WU:
        # unknowns: du, w, dp, w_gamma, lambda
        A = sp.bmat([
            [d.M, sig * d.K, Z, Z, Z],
            [Z, d.M, Z, Z, eps * TuT],
            [Z, Z, d.M_gamma, d.K_gamma, Z],
            [Z, Z, Z, d.M_gamma, -eps * TpT],
            [d.T_u, Z, -d.T_p, Z, sp.csr_matrix((nl, nl))],
        ], format="csc")
        b = np.concatenate([np.zeros(nu), F_u, np.zeros(np_), F_p, np.zeros(nl)])
        x = sparse_linear_solve(A, b)
        o = 2 * nu + np_
        return x[nu:2 * nu], x[o:o + np_], x[o + np_:], None
    # GMS unknowns: du, w, dp, r, lambda, mu
    zl = sp.csr_matrix((nl, nl))
    A = sp.bmat([
        [d.M, sig * d.K, Z, Z, Z, -TuT],
        [Z, d.M, Z, Z, eps * TuT, Z],
        [Z, Z, d.M_gamma, d.K_gamma, Z, TpT],
        [Z, Z, Z, d.M_gamma, -eps * TpT, Z],
        [d.T_u, Z, -d.T_p, Z, zl, None],
        [Z, d.T_u, Z, -d.T_p, None, zl],
    ], format="csc")
    b = np.concatenate([np.zeros(nu), F_u, np.zeros(np_), F_p, np.zeros(2 * nl)])
    x = sparse_linear_solve(A, b)
    o = 2 * nu + np_
    return x[nu:2 * nu], x[o:o + np_], x[o + np_:o + np_ + nl], x[o + np_ + nl:]


def initial_state(cfg: ModelConfig, disc: Discretization, u0, p0=None) -> SystemState:
    """State at n = 0 including the initial chemical potentials."""
    u0 = np.asarray(u0, dtype=float)
    if cfg.model is Model.NEUMANN:
        p0 = None
    elif p0 is None:
        raise InvalidStateError("boundary models need p0")
    w0, g0, lam0, mu0 = initial_chemical_potentials(cfg, disc, u0, p0)
    return SystemState(n=0, u=u0, w=w0, p=p0, w_gamma=g0, lam=lam0, mu=mu0)


def simulate(cfg: ModelConfig, disc: Discretization, state0: SystemState,
             settings: NewtonSettings | None = None, stride: int = 1,
             keep_substates: bool = False, callback=None):
    """March ``cfg.num_steps`` steps from ``state0``.

    Every ``stride``-th state is stored (plus the final one when it falls on
    the stride). Each report carries energies and masses before and after.
    """
    from .diagnostics import Trajectory, energies, masses

    scheme = Scheme(cfg, disc)
    traj = Trajectory(cfg=cfg, disc=disc, stride=stride)
    traj.states.append(state0)
    state = state0
    e_prev = energies(state, cfg, disc)[2]
    for _ in range(cfg.num_steps):
        state, report = scheme.step(state, settings)
        if state.substates and not keep_substates:
            state = replace(state, substates=())
        report.energy_before = e_prev
        report.energy_after = e_prev = energies(state, cfg, disc)[2]
        report.masses = masses(state, disc)
        if state.n % stride == 0:
            traj.states.append(state)
            traj.reports.append(report)
        if callback is not None:
            callback(state, report)
    return traj
