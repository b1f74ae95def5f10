import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatsheet import hitting
from heatsheet.dynamics import integrate
from heatsheet.errors import ApproximationError, ConfigError, DomainError
from heatsheet.hitting import (CENSORED, ExcursionRecord, ExperimentConfig, compact_core, detect_hit, excursions,
                               hitting_probability, homogeneity_test, log_convexity_check, no_hit_curve,
                               run_excursions, sup_tail, toy_chain, toy_chain_experiment, wilson_interval)
from heatsheet.potential import Cosine, Zero
from heatsheet.spectral import Truncation
from heatsheet.targets import Ball, Box, PointCloud


@pytest.fixture(scope="module")
def path():
    return integrate(lambda x: np.sin(np.pi * x), Zero(1), T=0.5, dt=0.01, trunc=Truncation(32, t_min=0.01), n_x=32, rng=0)


def test_detect_hit_box_covering_everything(path):
    res = detect_hit(path, Box([-100.0], [100.0]), ((0.1, 0.3), (0.2, 0.8)))
    assert res.hit and res.min_distance == 0.0
    t, x = res.first_hit
    assert t == pytest.approx(0.1) and x == pytest.approx(0.21875)


def test_detect_hit_far_target(path):
    res = detect_hit(path, Ball([50.0], 1.0), ((0.0, 0.5), (0.0, 1.0)))
    assert not res.hit and res.min_distance > 40


def test_detect_hit_window_checks(path):
    with pytest.raises(DomainError):
        detect_hit(path, Ball([0.0], 1.0), ((0.0, 0.8), (0.0, 1.0)))
    with pytest.raises(DomainError):
        detect_hit(path, Ball([0.0], 1.0), ((0.0, 0.2), (0.5, 1.2)))


def _point_cfg(T, **kw):
    base = dict(d=1, target=PointCloud([[0.0]], 0.01), J=(0.5, 0.5), I=(1.0, T), T=T, dt=0.5,
                n_trials=400, seed=3, batch=400)
    base.update(kw)
    return ExperimentConfig(**base)


def test_hitting_probability_increases_with_window():
    ps = [hitting_probability(_point_cfg(T), capacity_m=50).p_hat for T in (5.0, 20.0, 50.0)]
    assert ps[0] <= ps[1] <= ps[2] and ps[2] > ps[0]


def test_far_target_is_never_hit():
    cfg = ExperimentConfig(d=1, M=10.0, target=Ball([9.0], 0.5), n_trials=200, batch=200, dt=1e-2)
    est = hitting_probability(cfg, capacity_m=50)
    assert est.p_hat == 0.0 and est.ci[0] == 0.0 and est.min_distance_hist[0] == 0


def test_ball_at_zero_hit_with_positive_lower_bound():
    cfg = ExperimentConfig(d=1, target=Ball([0.0], 0.05), n_trials=2000, batch=1000, dt=1e-2)
    est = hitting_probability(cfg, capacity_m=50)
    assert est.ci[0] > 0
    assert len(est.trials) == 2000 and est.capacity["beta"] == -5


def test_uniform_in_initial_condition():
    common = dict(d=2, target=Ball([0.5, 0.5], 0.05 * np.sqrt(2)), n_trials=2000, batch=1000, dt=1e-2,
                  I=(1.0, 1.5), T=1.5)
    a = hitting_probability(ExperimentConfig(**common, seed=1), capacity_m=50)
    b = hitting_probability(ExperimentConfig(**common, seed=2, u0={"kind": "sine", "amplitude": 1.0}),
                            capacity_m=50)
    assert a.p_hat > 0 and b.p_hat > 0
    se = np.sqrt(a.p_hat * (1 - a.p_hat) / 2000 + b.p_hat * (1 - b.p_hat) / 2000)
    assert abs(a.p_hat - b.p_hat) < 4 * se + 0.05  # the initial condition only shifts the law mildly


def test_wide_exit_level_censors():
    cfg = ExperimentConfig(d=1, K=50.0, T=2.0, dt=1e-2, n_trials=50, batch=50)
    recs = excursions(cfg)
    assert all(r.status == CENSORED and r.completed == 0 for r in recs)


def test_start_outside_returns_and_interlaces():
    cfg = ExperimentConfig(d=1, u0={"kind": "sine", "amplitude": 3.0}, K=1.5, T=5.0, dt=1e-2, n_trials=300,
                           batch=300, seed=2)
    recs = excursions(cfg)
    back = np.mean([len(r.S) > 0 for r in recs])
    assert back >= 0.99
    assert all(r.interlaced() for r in recs)
    assert all(r.S[0] > 0 for r in recs if r.S)


def test_toy_chain_geometric_law():
    out = toy_chain_experiment(5000, seed=1)
    assert out["c"] == pytest.approx(0.6)
    assert out["max_z"] < 3.0


def test_toy_chain_exact_hit_probability():
    assert toy_chain().exact_hit_probability(0, 2.0) == pytest.approx(0.6, abs=1e-12)


def test_engine_records_interlace_on_chain():
    recs = run_excursions(toy_chain(0, range(200)), 1.0, 2.0, window=(0.0, np.inf), max_excursions=4,
                          stop_on_hit=False)
    assert all(r.interlaced() for r in recs)
    assert all(r.excursions_used == 4 for r in recs)


def test_no_hit_curve_and_convexity_on_geometric():
    rng = np.random.default_rng(0)
    recs = []
    for _ in range(5000):
        r = ExcursionRecord(1.0, 2.0)
        r.hits = list(rng.random(6) < 0.3)
        recs.append(r)
    q, se = no_hit_curve(recs, 6)
    assert q[0] == 1.0 and np.all(np.diff(q) <= 0)
    assert np.all(np.abs(q - 0.7 ** np.arange(7)) < 4 * se + 1e-12)
    ok, info = log_convexity_check(q, se)
    assert ok and info["decreasing"]
    assert homogeneity_test(recs, 5)["pvalue"] > 0.001


def test_convexity_detects_concave_curve():
    q = np.array([1.0, 0.99, 0.9, 0.5, 0.01])
    ok, info = log_convexity_check(q, np.full(5, 1e-4))
    assert not ok and info["worst_convexity_margin"] < 0


def test_greenwood_zero_survivors():
    r = ExcursionRecord(1.0, 2.0)
    r.hits = [True]
    q, se = no_hit_curve([r], 3)
    assert q.tolist() == [1.0, 0.0, 0.0, 0.0] and np.all(np.isfinite(se))


def test_homogeneity_from_stationary_start():
    cfg = ExperimentConfig(d=1, u0={"kind": "stationary"}, N=0.6, K=1.0, T=60.0, dt=1e-2, window=(0.1, 0.5),
                           target=Ball([0.3], 0.1), n_trials=300, batch=300, max_excursions=4, seed=7)
    recs = excursions(cfg, check_hits=True)
    res = homogeneity_test(recs, 3)
    assert res["pvalue"] > 0.001
    assert sum(len(r.hits) for r in recs) > 300


def test_sup_tail_decreasing():
    cfg = ExperimentConfig(d=1, dt=1e-2, n_trials=300, batch=300)
    out = sup_tail(cfg, [0.5, 1.0, 1.5, 3.0], horizon=1.0)
    assert np.all(np.diff(out["p"]) <= 0) and out["p"][-1] < out["p"][0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.data())
def test_wilson_interval_brackets(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_wilson_needs_trials():
    with pytest.raises(DomainError):
        wilson_interval(0, 0)


def test_compact_core_ball():
    A = Ball([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0)  # d = 7, beta = 1
    core = compact_core(A, 0.5, m=40)
    assert core.radius < 1.0
    assert core.radius == pytest.approx(0.5, rel=0.05)


def test_compact_core_negative_beta_and_points():
    A = Ball([0.0], 0.3)
    assert compact_core(A, 0.5) is A
    P = PointCloud([[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]], 0.1)
    assert compact_core(P, 0.5) is P
    with pytest.raises(DomainError):
        compact_core(A, 1.5)


def test_compact_core_failure(monkeypatch):
    class FakeCap:
        def __init__(self, value):
            self.value = value

    calls = iter([1.0] + [0.0] * 100)
    monkeypatch.setattr(hitting, "cap", lambda *a, **k: FakeCap(next(calls)))
    with pytest.raises(ApproximationError):
        compact_core(Ball([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0), 0.9, steps=5)


@pytest.mark.parametrize("kw,field", [
    (dict(d=0), "d"),
    (dict(N=-1.0), "N"),
    (dict(K=1.0), "K"),
    (dict(J=(0.5, 0.2)), "J"),
    (dict(I=(1.0, 5.0), T=2.0), "I"),
    (dict(target=Ball([0.0, 0.0], 0.1)), "target"),
    (dict(target=Ball([3.0], 0.1)), "target"),
    (dict(potential=Cosine(1.0), K=5.0, dt=0.05), "dt"),
    (dict(I=(1.0005, 2.0)), "I"),
    (dict(max_excursions=0), "max_excursions"),
])
def test_config_validation(kw, field):
    if kw.get("d") == 0:
        with pytest.raises((ConfigError, DomainError)):
            ExperimentConfig(**kw).validate()
        return
    with pytest.raises(ConfigError, match=f"experiment.{field}"):
        ExperimentConfig(**kw).validate()


def test_config_from_dict_round_trip():
    cfg = ExperimentConfig(d=2, potential=Cosine([0.5, 0.5]), K=3.0, target=Box([0.0, 0.0], [0.2, 0.2]))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError, match="experiment.bogus"):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="experiment.potential"):
        ExperimentConfig.from_dict({"potential": {"family": "nope"}})
