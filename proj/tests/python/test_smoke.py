import math
import os

import numpy as np
import pytest

import spsalab as sl

CONFIGS = os.environ.get(
    "SPSALAB_CONFIG_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "configs"))


def test_moments_and_sampling():
    m = sl.moments(sl.PerturbationDist.spherical(), 3)
    assert m["phi"] == pytest.approx(9 / 5)
    assert m["upsilon"] == pytest.approx(0.6)
    b = sl.moments(sl.PerturbationDist.bernoulli(), 4)
    assert b["xi2"] == 1.0 and b["rho2"] == 1.0
    v = sl.sample(sl.PerturbationDist.bernoulli(), 5, sl.RngStream(1))
    assert set(np.abs(v)) == {1.0}
    s = sl.sample(sl.PerturbationDist.spherical(), 7, sl.RngStream(2))
    assert np.dot(s, s) == pytest.approx(7.0)


def test_gains():
    gs = sl.GainSequence(0.02, 0.2, A=10.0)
    a0, c0 = gs.at(0)
    assert a0 == pytest.approx(0.02 / 11 ** 0.602)
    assert c0 == 0.2
    ok, _ = sl.validate_a1(gs)
    assert ok
    ok, msg = sl.validate_a1(sl.GainSequence(1.0, 1.0, alpha=0.5, gamma=0.1))
    assert not ok and "divergence risk" in msg


def test_loss_and_estimators():
    L = sl.LossModel.parse("skewed_quartic:p=2")
    assert L.value(np.ones(2)) == pytest.approx(1.373125)
    assert np.allclose(L.gradient(np.zeros(2)), 0.0)
    H = L.hessian(np.zeros(2))
    assert H[1, 1] == pytest.approx(1.0)

    q = sl.LossModel.quadratic(np.eye(3))
    theta = np.array([1.0, -2.0, 0.5])
    g = sl.spsa_gradient(q, theta, 0.1, sl.PerturbationDist.bernoulli(), sl.RngStream(3))
    assert g.shape == (3,)
    g = sl.fdsa_gradient(q, theta, 0.1, sl.RngStream(3))
    assert np.allclose(g, 2.0 * theta)  # L = t^T H t
    g = sl.rdsa_gradient(q, theta, 0.1, sl.PerturbationDist.gaussian(), sl.RngStream(3))
    assert np.all(np.isfinite(g))


def test_callback_loss_runs_sa():
    L = sl.LossModel.callback(2, lambda t: float(np.sum((t - 1.0) ** 2)), np.ones(2))
    r = sl.run_sa(L, np.zeros(2), sl.GainSequence(0.1, 0.1), "spsa bernoulli", 300, seed=5)
    assert np.linalg.norm(r["final"] - 1.0) < 0.1
    assert r["loss_evals"] == 600
    assert not r["diverged"]
    again = sl.run_sa(L, np.zeros(2), sl.GainSequence(0.1, 0.1), "spsa bernoulli", 300, seed=5)
    assert np.array_equal(r["final"], again["final"])


def test_theory():
    L = sl.LossModel.parse("skewed_quartic:p=2")
    d = sl.mse_decomposition(L, 1.0, 1.0)
    assert d.Q2 == pytest.approx(0.01125)
    assert d.Q1 == pytest.approx(0.00625)
    assert d.u1Su1 == pytest.approx(0.000625)
    holds, value = sl.prop3_predicate(d)
    assert holds and value > 0
    bern = sl.predict_mse(d, sl.PerturbationDist.bernoulli(), 2)
    gauss = sl.predict_mse(d, sl.PerturbationDist.gaussian(), 2)
    assert bern < gauss

    z = sl.z_study(3, n_trials=20000, seed=1)
    assert z["p_z_leq_0"] < z["chebyshev_bound"]
    assert abs(z["p_z_leq_0"] - 0.009) < 0.004


def test_battery_and_welch():
    L = sl.LossModel.parse("skewed_quartic:p=3", noise_sigma2=0.01)
    gs = sl.GainSequence(0.12, 0.8, A=10.0, alpha=0.606)
    rows = sl.run_battery(L, ["spsa bernoulli", "rdsa gaussian"], gs, np.ones(3), 200, 6,
                          seed=9, curve_window=20)
    assert [r["label"] for r in rows] == ["Bernoulli SP", "Gaussian RD"]
    for r in rows:
        lo, hi = r["ci95"]
        assert lo <= r["mean_mse"] <= hi
        assert len(r["sq_errors"]) == 6
        assert len(r["curve"]) == 20
    t, dof, p = sl.welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t == pytest.approx(-1.0) and dof == pytest.approx(8.0)
    assert p == pytest.approx(0.3466, rel=1e-3)


def test_config_and_commands():
    path = os.path.join(CONFIGS, "table5.cfg")
    cfg = sl.ExperimentConfig.load(path)
    assert sl.ExperimentConfig.parse(cfg.serialize()) == cfg
    assert len(cfg.hash_hex()) == 16

    code, out, err = sl.cmd_theory(os.path.join(CONFIGS, "quartic.cfg"))
    assert code == 0, err
    assert "Q1" in out or "prop3" in out.lower()
    assert "Gaussian" in sl.moments_table(3)


def test_errors_are_value_errors():
    assert issubclass(sl.SpsalabError, ValueError)
    with pytest.raises(sl.SpsalabError, match="invalid_perturbation"):
        sl.PerturbationDist.parse("gaussian", sl.Family.SP)
    with pytest.raises(ValueError):
        sl.LossModel.parse("rosenbrock:p=2")
    with pytest.raises(sl.SpsalabError):
        sl.GainSequence(-1.0, 0.1)
