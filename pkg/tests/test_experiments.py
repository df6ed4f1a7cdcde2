import numpy as np
import pytest

from chdbc.diagnostics import dissipation_audit, mass_scales, mass_series, relative_drift, trajectory_errors
from chdbc.experiments import (
    ERROR_NAMES, Preparation, ac_ell_config, comparison_config, cos_cos, initial_data,
    lw_order_config, run_ell_sweep, run_model_comparison, run_temporal_order_study, study_table,
)
from chdbc.fem import Discretization
from chdbc.models import Model, Order, initial_state, simulate


@pytest.fixture(scope="module")
def comparison(tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    return out, run_model_comparison(n=8, T=1e-4, steps=10, out_dir=out, workers=2)


def test_model_comparison_outputs(comparison):
    out, trajs = comparison
    assert set(trajs) == set(Model)
    for model in Model:
        assert (out / model.value / "series.csv").exists()
        assert (out / model.value / "u_10.csv").exists()
        assert dissipation_audit(trajs[model]).passed


def test_model_comparison_masses(comparison):
    _, trajs = comparison
    for model, col in ((Model.NEUMANN, 0), (Model.GMS, 2)):
        t = trajs[model]
        m = mass_series(t)
        scale = mass_scales(t.states[0], t.disc)[col]
        assert relative_drift(m[:, col], scale) <= 1e-10
    t = trajs[Model.GMS]
    assert relative_drift(mass_series(t)[:, 0], mass_scales(t.states[0], t.disc)[0]) > 1e-6


def test_comparison_config():
    c = comparison_config(Model.GMS, Order.SECOND)
    assert (c.epsilon, c.delta, c.sigma, c.kappa, c.T, c.num_steps) == (0.02, 0.02, 1, 1, 1e-3, 100)


def test_ell_one_equals_plain_run():
    cfg = ac_ell_config(T=4 * 0.1 * 2**-7)
    rows = run_ell_sweep("allen_cahn", cfg, [1, 2], n=4, ref_divisor=4)
    d = Discretization.build(4, 1)
    u0, p0 = d.consistent_boundary_data(cos_cos)
    plain = simulate(cfg, d, initial_state(cfg, d, u0, p0))
    rc = cfg.with_(order=Order.SECOND, tau=cfg.tau / 4)
    ref = simulate(rc, d, initial_state(rc, d, u0, p0), stride=4)
    assert rows[0].errors == trajectory_errors(plain, ref)
    assert rows[0].as_dict()["ell"] == 1 and set(ERROR_NAMES) <= set(rows[1].as_dict())


def test_ell_sweep_rejects_other_models():
    with pytest.raises(ValueError, match="allen_cahn or liu_wu"):
        run_ell_sweep("gms", ac_ell_config(), [1, 2], n=2)


def test_initial_data_preparation():
    d = Discretization.build(4, 2)
    cfg = lw_order_config(Order.SECOND)
    raw = initial_data(cfg, d)
    prep = initial_data(cfg, d, prepare=Preparation(steps=3, tau=1e-7))
    assert raw.n == prep.n == 0
    assert not np.array_equal(raw.u, prep.u)
    np.testing.assert_allclose(d.constraint_residual(prep.u, prep.p), 0, atol=1e-12)
    assert prep.w is not None and prep.w_gamma is not None


def test_order_study_small():
    T = 4e-5
    st = run_temporal_order_study("liu_wu", lw_order_config(Order.SECOND, T),
                                  [T / 2, T / 4, T / 8], (1, 2), n=4, ref_tau=T / 32)
    assert st.finest_factor == 4
    assert len(st.rows) == 6 and len(study_table(st)) == 6
    for f in (1, 2):
        assert len(st.consecutive[f, "p_l2_h1"]) == 2
        assert st.fitted[f, "p_l2_h1"] > 1.0
        e, ef = st.errors(f, "p_l2_h1"), st.errors(f, "p_l2_h1", finest=True)
        assert (ef >= 0).all() and (e > 0).all()


@pytest.mark.parametrize("taus, match", [
    ([1e-5, 4e-6], "halve"),
    ([1e-5], "two"),
])
def test_order_study_rejects_bad_grids(taus, match):
    with pytest.raises(ValueError, match=match):
        run_temporal_order_study("liu_wu", lw_order_config(), taus, n=2)


def test_order_study_rejects_bad_reference():
    with pytest.raises(ValueError, match="divide"):
        run_temporal_order_study("liu_wu", lw_order_config(), [1e-5, 5e-6], n=2, ref_tau=3e-6)
    with pytest.raises(ValueError, match="nested"):
        run_temporal_order_study("liu_wu", lw_order_config(), [1e-5, 5e-6], (1, 3), n=2,
                                 finest_factor=4)
