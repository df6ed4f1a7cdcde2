"""Scripted studies: model comparison, boundary substepping sweeps and
temporal convergence under boundary refinement.

All studies use self-references (the same code on a finer time grid or a
finer boundary chain). The presets are desk-scale: meshes and horizons are
small enough for one core.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import Trajectory, fitted_order, observed_orders, trajectory_errors
from .fem import Discretization
from .models import Model, ModelConfig, Order, SystemState, initial_state, parse_model, simulate
from .output import write_series, write_snapshot
from .solver import NewtonSettings

COMPARISON_PARAMS = dict(epsilon=0.02, delta=0.02, sigma=1.0, kappa=1.0)
AC_PARAMS = dict(epsilon=0.02, delta=0.2, sigma=0.01, kappa=5.0)
LW_PARAMS = dict(epsilon=0.02, delta=0.2, sigma=0.01, kappa=10.0)

ERROR_NAMES = ("u_linf_l2", "u_l2_h1", "p_linf_l2", "p_l2_h1")


def cos_cos(x, y):
    """The standard initial value cos(4 pi x) cos(4 pi y)."""
    return np.cos(4 * np.pi * x) * np.cos(4 * np.pi * y)


@dataclass(frozen=True)
class Preparation:
    """Short first-order pre-evolution that damps the stiff surface modes.

    Crank-Nicolson is A- but not L-stable, so unresolved modes that start
    off their slow manifold decay only like (-1)^n and contaminate the
    temporal errors with a first-order layer. A few steps of the first-order
    scheme settle them; the resulting state is then used as initial data.
    """

    steps: int = 10
    tau: float = 1e-7


def initial_data(cfg: ModelConfig, disc: Discretization, u0_fn=cos_cos,
                 prepare: Preparation | None = None,
                 settings: NewtonSettings | None = None) -> SystemState:
    """Consistent initial state for ``cfg`` with chemical potentials."""
    u0, p0 = disc.consistent_boundary_data(u0_fn)
    if prepare is not None and prepare.steps > 0:
        pre = cfg.with_(order=Order.FIRST, ell=1, tau=prepare.tau,
                        T=prepare.tau * prepare.steps)
        last = simulate(pre, disc, initial_state(pre, disc, u0, p0), settings).states[-1]
        u0, p0 = last.u, last.p
    return initial_state(cfg, disc, u0, p0)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # keeps input order


# -- model comparison ----------------------------------------------------------

def comparison_config(model, order=Order.FIRST, T=1e-3, steps=100) -> ModelConfig:
    return ModelConfig(model, order, tau=T / steps, T=T, **COMPARISON_PARAMS)


def run_model_comparison(n: int = 64, T: float = 1e-3, steps: int = 100,
                         order=Order.FIRST, models=tuple(Model),
                         settings: NewtonSettings | None = None,
                         out_dir=None, workers: int = 1) -> dict:
    """Run every model from cos(4 pi x) cos(4 pi y); returns model -> Trajectory.

    With ``out_dir`` each model gets a subdirectory with ``series.csv`` and
    the final snapshot.
    """
    disc = Discretization.build(n, 1)

    def one(model):
        cfg = comparison_config(model, order, T, steps)
        return simulate(cfg, disc, initial_data(cfg, disc), settings)

    trajs = dict(zip(models, _map(one, models, workers)))
    if out_dir is not None:
        for model, traj in trajs.items():
            d = Path(out_dir) / model.value
            write_series(traj, d / "series.csv")
            write_snapshot(traj.states[-1], disc, d)
    return trajs


# -- boundary substepping --------------------------------------------------------

@dataclass(frozen=True)
class EllRow:
    ell: int
    errors: tuple

    def as_dict(self):
        return {"ell": self.ell, **dict(zip(ERROR_NAMES, self.errors))}


def ac_ell_config(T: float = 0.025) -> ModelConfig:
    """Allen-Cahn substepping preset (tau = 0.1 * 2^-7)."""
    return ModelConfig(Model.ALLEN_CAHN, Order.FIRST, tau=0.1 * 2**-7, T=T, **AC_PARAMS)


def lw_ell_config(T: float = 0.1) -> ModelConfig:
    """Liu-Wu substepping preset (tau = 2e-3)."""
    return ModelConfig(Model.LIU_WU, Order.FIRST, tau=2e-3, T=T, **LW_PARAMS)


def run_ell_sweep(model, cfg: ModelConfig, ells, n: int = 16, ref_divisor: int = 16,
                  ref_order=Order.SECOND, u0_fn=cos_cos,
                  settings: NewtonSettings | None = None, workers: int = 1) -> list[EllRow]:
    """Errors of the substepped first-order scheme for each ell.

    The reference runs on the same mesh with step ``tau / ref_divisor``
    (by default with the second-order scheme, which makes it far more
    accurate than any sweep point).
    """
    model = parse_model(model)
    if model not in (Model.ALLEN_CAHN, Model.LIU_WU):
        raise ValueError(f"substepping sweeps need allen_cahn or liu_wu, got {model.value}")
    cfg = cfg.with_(model=model, order=Order.FIRST)
    disc = Discretization.build(n, 1)
    rcfg = cfg.with_(order=ref_order, ell=1, tau=cfg.tau / ref_divisor)
    ref = simulate(rcfg, disc, initial_data(rcfg, disc, u0_fn), settings, stride=ref_divisor)

    def one(ell):
        c = cfg.with_(ell=int(ell))
        traj = simulate(c, disc, initial_data(c, disc, u0_fn), settings)
        return EllRow(int(ell), trajectory_errors(traj, ref))

    return _map(one, list(ells), workers)


# -- temporal order under boundary refinement --------------------------------------

@dataclass(frozen=True)
class OrderRow:
    factor: int
    tau: float
    errors: tuple           # against the same-mesh fine-tau reference
    finest_errors: tuple    # against the finest-boundary reference


@dataclass
class OrderStudy:
    rows: list
    factors: tuple
    taus: tuple
    finest_factor: int
    fitted: dict = field(default_factory=dict)       # (factor, norm) -> order
    consecutive: dict = field(default_factory=dict)  # (factor, norm) -> orders

    def errors(self, factor, norm, finest=False) -> np.ndarray:
        i = ERROR_NAMES.index(norm)
        rows = [r for r in self.rows if r.factor == factor]
        return np.array([(r.finest_errors if finest else r.errors)[i] for r in rows])


def lw_order_config(order=Order.SECOND, T: float = 5e-5) -> ModelConfig:
    """Liu-Wu temporal order preset on a desk-scale horizon."""
    return ModelConfig(Model.LIU_WU, order, tau=T / 8, T=T, **LW_PARAMS)


def _check_halving(taus):
    taus = [float(t) for t in taus]
    if len(taus) < 2:
        raise ValueError("need at least two step sizes")
    for a, b in zip(taus, taus[1:]):
        if abs(a / b - 2.0) > 1e-9:
            raise ValueError(f"step sizes must halve, got {a} then {b}")
    return taus


def run_temporal_order_study(model, cfg: ModelConfig, taus, boundary_factors=(1,),
                             n: int = 16, ref_tau: float | None = None,
                             finest_factor: int | None = None,
                             prepare: Preparation | None = Preparation(),
                             settings: NewtonSettings | None = None,
                             workers: int = 1) -> OrderStudy:
    """Temporal errors per boundary factor and step size.

    Each factor is compared with its own run at ``ref_tau`` (pure temporal
    error) and with a run on the boundary chain refined by
    ``finest_factor`` at ``ref_tau`` (temporal plus spatial error).
    """
    model = parse_model(model)
    taus = _check_halving(taus)
    factors = tuple(int(f) for f in boundary_factors)
    ref_tau = ref_tau if ref_tau is not None else taus[-1] / 8
    finest = finest_factor if finest_factor is not None else 2 * max(factors)
    for f in factors:
        if finest % f:
            raise ValueError(f"boundary factor {f} is not nested in {finest}")
    cfg = cfg.with_(model=model)
    strides = []
    for t in taus:
        k = round(t / ref_tau)
        if k < 1 or abs(k * ref_tau - t) > 1e-9 * t:
            raise ValueError(f"reference step {ref_tau} does not divide {t}")
        strides.append(k)

    def reference(factor):
        disc = Discretization.build(n, factor)
        c = cfg.with_(tau=ref_tau)
        return simulate(c, disc, initial_data(c, disc, prepare=prepare, settings=settings),
                        settings, stride=strides[-1])

    ref_finest = reference(finest)
    refs = dict(zip(factors, _map(reference, factors, workers)))

    def point(key):
        f, t = key
        disc = refs[f].disc
        c = cfg.with_(tau=t)
        traj = simulate(c, disc, initial_data(c, disc, prepare=prepare, settings=settings),
                        settings)
        return OrderRow(f, t, trajectory_errors(traj, refs[f]),
                        trajectory_errors(traj, ref_finest))

    keys = [(f, t) for f in factors for t in taus]
    rows = _map(point, keys, workers)
    study = OrderStudy(rows=rows, factors=factors, taus=tuple(taus), finest_factor=finest)
    for f in factors:
        for norm in ERROR_NAMES:
            e = study.errors(f, norm)
            if np.all(e > 0):
                study.fitted[f, norm] = fitted_order(taus, e)
                study.consecutive[f, norm] = observed_orders(e)
    return study


def study_table(study: OrderStudy) -> list[dict]:
    """Flat rows for CSV output, sorted by (factor, tau descending)."""
    out = []
    for r in study.rows:
        row = {"factor": r.factor, "tau": r.tau}
        row.update(dict(zip(ERROR_NAMES, r.errors)))
        row.update({f"finest_{k}": v for k, v in zip(ERROR_NAMES, r.finest_errors)})
        row["fitted_order_p_l2_h1"] = study.fitted.get((r.factor, "p_l2_h1"), float("nan"))
        out.append(row)
    return out
