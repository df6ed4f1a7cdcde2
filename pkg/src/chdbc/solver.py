"""Newton iteration with a sparse direct inner solve."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    """Newton did not reach the tolerance; carries the last iterate."""

    def __init__(self, msg, x, history):
        super().__init__(msg)
        self.x = x
        self.history = list(history)


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True)
class NewtonSettings:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-12
    max_iters: int = 50
    damping: float | None = None  # backtracking factor in (0, 1), None disables
    max_backtracks: int = 8

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.damping is not None and not 0.0 < self.damping < 1.0:
            raise ValueError("damping factor must lie in (0, 1)")


@dataclass
class StepReport:
    newton_iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    energy_before: float = float("nan")
    energy_after: float = float("nan")
    masses: tuple = (float("nan"),) * 3
    wall_time: float = 0.0


Blocks = Sequence[tuple[str, slice]]


def _name_singular_block(A: sp.spmatrix, blocks: Blocks | None) -> str:
    if not blocks:
        return "unknown block"
    A = sp.csr_matrix(A)
    row_nnz = np.diff(A.indptr)
    col_nnz = np.diff(A.tocsc().indptr)
    for name, sl in blocks:
        if (row_nnz[sl] == 0).any() or (col_nnz[sl] == 0).any():
            return f"block '{name}'"
    for name, sl in blocks:
        sub = A[sl, :].toarray() if A.shape[0] <= 4000 else None
        if sub is not None and np.linalg.matrix_rank(sub) < sub.shape[0]:
            return f"block '{name}'"
    return "unknown block"


def sparse_linear_solve(A, b, blocks: Blocks | None = None) -> np.ndarray:
    """Solve ``A x = b`` by sparse LU (SuperLU with partial pivoting).

    Indefinite saddle-point matrices are fine. On a zero pivot a
    :class:`SingularSystemError` names the offending block when ``blocks``
    (name, slice) pairs are given.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"singular factorization in {_name_singular_block(A, blocks)}: {exc}"
        ) from exc
    x = lu.solve(np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            f"non-finite solution, zero pivot in {_name_singular_block(A, blocks)}"
        )
    return x


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], sp.spmatrix],
    x0: np.ndarray,
    settings: NewtonSettings | None = None,
    linear_solve: Callable = sparse_linear_solve,
    blocks: Blocks | None = None,
):
    """Plain Newton with optional backtracking on residual increase.

    Returns ``(x, report)``; raises :class:`NewtonError` after ``max_iters``.
    """
    settings = settings or NewtonSettings()
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    r = residual_fn(x)
    rn = float(np.linalg.norm(r))
    history = [rn]
    tol = max(settings.abs_tol, settings.rel_tol * rn)
    it = 0
    while rn > tol:
        if it >= settings.max_iters:
            raise NewtonError(
                f"Newton failed to converge in {settings.max_iters} iterations "
                f"(residual {rn:.3e}, tolerance {tol:.3e})",
                x,
                history,
            )
        J = jacobian_fn(x)
        if blocks is not None and linear_solve is sparse_linear_solve:
            dx = linear_solve(J, -r, blocks=blocks)
        else:
            dx = linear_solve(J, -r)
        step = 1.0
        x_new = x + dx
        r_new = residual_fn(x_new)
        rn_new = float(np.linalg.norm(r_new))
        if settings.damping is not None:
            k = 0
            while rn_new > rn and k < settings.max_backtracks:
                step *= settings.damping
                x_new = x + step * dx
                r_new = residual_fn(x_new)
                rn_new = float(np.linalg.norm(r_new))
                k += 1
        x, r, rn = x_new, r_new, rn_new
        history.append(rn)
        it += 1
        if not np.isfinite(rn):
            raise NewtonError("Newton iterate became non-finite", x, history)
    report = StepReport(
        newton_iterations=it,
        residual=rn,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
    )
    return x, report


# -- dense brute-force oracle ------------------------------------------------

ORACLE_MAX_UNKNOWNS = 200


def _dense(A):
    return np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, dtype=float)


def _oracle_residual(cfg, d, state, sub, x):
    """Step residual written out directly with dense matrices.

    Independent of the block assembly in :mod:`chdbc.models`: the secant
    slope uses its expanded polynomial form and every block is spelled out
    per model.
    """
    from .models import Model, Order

    M, K, Mg, Kg = (_dense(A) for A in (d.M, d.K, d.M_gamma, d.K_gamma))
    Tu, Tp = _dense(d.T_u), _dense(d.T_p)
    m, mg = d.m, d.m_gamma
    eps, dlt, sig, kap, tau = cfg.epsilon, cfg.delta, cfg.sigma, cfg.kappa, cfg.tau
    cn = cfg.order is Order.SECOND

    def f(pot, a, b):
        if cn:
            return (a**3 + a * a * b + a * b * b + b**3) / 4.0 - (a + b) / 2.0
        return pot.convex_derivative(b) - pot.concave_derivative(a)

    def mid(new, old):
        return (new + old) / 2.0 if cn else new

    X = {k: x[s] for k, s in sub.items()}
    u, w = X["u"], X["w"]
    wm = mid(w, state.w) if cn else w
    out = {
        "u": M @ (u - state.u) + tau * sig * K @ wm,
        "w": eps * K @ mid(u, state.u) + m / eps * f(cfg.potential, state.u, u) - M @ wm,
    }
    if cfg.model is Model.NEUMANN:
        return out
    lam = X["lambda"]
    out["w"] = out["w"] - eps * Tu.T @ lam
    sp_ = cfg.surface_potential
    L = cfg.ell
    dt = tau / L
    prev = state.p
    if cfg.model is Model.ALLEN_CAHN:
        for j in range(1, L + 1):
            p = X[f"p{j}"]
            out[f"p{j}"] = (Mg @ (p - prev) + dt * dlt * kap * Kg @ mid(p, prev)
                            + dt / dlt * mg * f(sp_, prev, p) + dt * eps * Tp.T @ lam)
            prev = p
    elif cfg.model is Model.LIU_WU:
        for j in range(1, L + 1):
            p, g = X[f"p{j}"], X[f"g{j}"]
            gm = mid(g, state.w_gamma) if cn else g
            out[f"p{j}"] = Mg @ (p - prev) + dt * Kg @ gm
            out[f"g{j}"] = (dlt * kap * Kg @ mid(p, prev) + mg / dlt * f(sp_, prev, p)
                            + eps * Tp.T @ lam - Mg @ gm)
            prev = p
    else:
        p, r, mu = X["p1"], X["g1"], X["mu"]
        rm = mid(r, state.w_gamma) if cn else r
        out["u"] = out["u"] - tau * Tu.T @ mu
        out["p1"] = Mg @ (p - state.p) + tau * Kg @ rm + tau * Tp.T @ mu
        out["g1"] = (dlt * kap * Kg @ mid(p, state.p) + mg / dlt * f(sp_, state.p, p)
                     + eps * Tp.T @ lam - Mg @ rm)
        out["mu"] = Tu @ w - Tp @ r
    out["lambda"] = Tu @ u - Tp @ X[f"p{L}"]
    return out


def dense_oracle_step(cfg, disc, state, tol: float = 1e-13, max_iters: int = 100):
    """One time step by brute force: dense residual, finite-difference
    Jacobian, dense LU.  Meant for tests on tiny meshes only.

    Returns the new :class:`~chdbc.models.SystemState`.
    """
    from .models import Scheme

    layout = Scheme(cfg, disc)  # only used for the unknown layout
    if layout.size > ORACLE_MAX_UNKNOWNS:
        raise ValueError(
            f"dense oracle is limited to {ORACLE_MAX_UNKNOWNS} unknowns, got {layout.size}"
        )
    sub = layout.slices

    def F(x):
        R = _oracle_residual(cfg, disc, state, sub, x)
        return np.concatenate([R[k] for k in layout.names])

    x = layout.initial_guess(state)
    r = F(x)
    floor = 1e-9 * max(1.0, float(np.linalg.norm(r)))
    for _ in range(max_iters):
        if np.linalg.norm(r) <= tol:
            break
        h = 1e-6 * max(1.0, float(np.abs(x).max()))
        J = np.empty((len(x), len(x)))
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = h
            J[:, i] = (F(x + e) - F(x - e)) / (2 * h)
        x_new = x + np.linalg.solve(J, -r)
        r_new = F(x_new)
        stalled = np.linalg.norm(r_new) >= np.linalg.norm(r)
        x, r = x_new, r_new
        if stalled and np.linalg.norm(r) <= floor:
            break  # roundoff floor reached
    else:
        raise NewtonError("dense oracle did not converge", x, [float(np.linalg.norm(r))])
    return layout.state_from(x, state)
