"""Discrete masses, energies, dissipation audits and trajectory errors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import Discretization, restrict_boundary


@dataclass
class Trajectory:
    """States on the uniform grid t = n * tau, kept every ``stride`` steps."""

    cfg: object
    disc: Discretization
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    stride: int = 1

    @property
    def tau(self) -> float:
        return self.cfg.tau

    @property
    def steps(self) -> np.ndarray:
        return np.array([s.n for s in self.states])

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.cfg.tau

    def __len__(self):
        return len(self.states)


def masses(state, disc: Discretization):
    """(bulk, surface, total) with the consistent mass matrices."""
    bulk = float(np.sum(disc.M @ state.u))
    surf = float(np.sum(disc.M_gamma @ state.p)) if state.p is not None else 0.0
    return bulk, surf, bulk + surf


def energies(state, cfg, disc: Discretization):
    """(E_bulk, E_surf, E_total) with vertex quadrature for the potentials."""
    u = state.u
    eb = 0.5 * cfg.epsilon * float(u @ (disc.K @ u))
    eb += float(disc.m @ cfg.potential.value(u)) / cfg.epsilon
    es = 0.0
    if cfg.has_boundary and state.p is not None:
        p = state.p
        es = 0.5 * cfg.delta * cfg.kappa * float(p @ (disc.K_gamma @ p))
        es += float(disc.m_gamma @ cfg.surface_potential.value(p)) / cfg.delta
    return eb, es, eb + es


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    max_increase: float
    first_violation: int | None
    tolerance: float


def dissipation_audit(energy, tol: float = 0.0) -> AuditReport:
    """Check that an energy sequence never increases by more than ``tol``.

    ``energy`` is either a sequence of numbers or a :class:`Trajectory`.
    ``first_violation`` is the index n such that E[n+1] - E[n] > tol.
    """
    if isinstance(energy, Trajectory):
        energy = [energies(s, energy.cfg, energy.disc)[2] for s in energy.states]
    e = np.asarray(energy, dtype=float)
    if len(e) == 0:
        raise ValueError("empty energy sequence")
    if len(e) == 1:
        return AuditReport(True, -np.inf, None, tol)
    inc = np.diff(e)
    bad = np.flatnonzero(inc > tol)
    return AuditReport(
        passed=len(bad) == 0,
        max_increase=float(inc.max()),
        first_violation=int(bad[0]) if len(bad) else None,
        tolerance=tol,
    )


def mass_series(traj: Trajectory) -> np.ndarray:
    return np.array([masses(s, traj.disc) for s in traj.states])


def energy_series(traj: Trajectory) -> np.ndarray:
    return np.array([energies(s, traj.cfg, traj.disc) for s in traj.states])


def relative_drift(series, scale: float | None = None) -> float:
    """max_n |m_n - m_0| divided by ``scale`` (default: max(|m_0|, 1e-300))."""
    series = np.asarray(series, dtype=float)
    if scale is None:
        scale = abs(series[0])
    return float(np.abs(series - series[0]).max() / max(scale, 1e-300))


def mass_scales(state, disc: Discretization):
    """Masses of |u| and |p|, the natural normalizers for drift."""
    bulk = float(np.sum(disc.M @ np.abs(state.u)))
    surf = float(np.sum(disc.M_gamma @ np.abs(state.p))) if state.p is not None else 0.0
    return bulk, surf, bulk + surf


def _norm2(A, e):
    return float(e @ (A @ e))


def trajectory_errors(traj: Trajectory, ref: Trajectory):
    """Errors of ``traj`` against a reference on a nested grid.

    Returns ``(LinfL2_bulk, L2H1_bulk, LinfL2_surf, L2H1_surf)``. The time
    integral uses the right-endpoint rule with the step of ``traj``; boundary
    fields of a finer reference chain are restricted nodally.
    """
    if traj.disc.n_u != ref.disc.n_u or traj.disc.mesh.n != ref.disc.mesh.n:
        raise ValueError("bulk meshes of trajectory and reference differ")
    ft, fr = traj.disc.bmesh.factor, ref.disc.bmesh.factor
    if fr % ft:
        raise ValueError(f"boundary chains are not nested (factors {ft} and {fr})")
    ratio = traj.cfg.tau / ref.cfg.tau
    k = round(ratio)
    if abs(k - ratio) > 1e-9 * ratio or k < 1:
        raise ValueError("reference time grid does not contain the trajectory grid")
    ref_by_step = {s.n: s for s in ref.states}
    d = traj.disc
    li_b = l2_b = li_s = l2_s = 0.0
    dt = traj.cfg.tau * traj.stride
    for s in traj.states:
        r = ref_by_step.get(s.n * k)
        if r is None:
            raise ValueError(f"reference lacks time step {s.n * k}")
        e = s.u - r.u
        mb = _norm2(d.M, e)
        li_b = max(li_b, mb)
        if s.n > 0:
            l2_b += dt * (mb + _norm2(d.K, e))
        if s.p is not None and r.p is not None:
            ep = s.p - restrict_boundary(r.p, fr, ft)
            ms = _norm2(d.M_gamma, ep)
            li_s = max(li_s, ms)
            if s.n > 0:
                l2_s += dt * (ms + _norm2(d.K_gamma, ep))
    return tuple(float(np.sqrt(v)) for v in (li_b, l2_b, li_s, l2_s))


def observed_orders(errors, ratio: float = 2.0) -> np.ndarray:
    """Consecutive orders log(e_i / e_{i+1}) / log(ratio)."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


def fitted_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step size)."""
    slope, _ = np.polyfit(np.log(np.asarray(steps, float)), np.log(np.asarray(errors, float)), 1)
    return float(slope)
