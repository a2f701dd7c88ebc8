from dataclasses import replace

import numpy as np
import pytest

from sensilogit.design import assign_panellists, generate_bibd
from sensilogit.errors import ConfigError
from sensilogit.mixed import MixedOptions, fit_mixed
from sensilogit.model import ModelSpec, ParamVector
from sensilogit.simulate import (DEFAULT_SCENARIOS, ScenarioSpec, _pairwise, canonical_pattern,
                                 concordance_study, infer_order, parse_pattern, run_replicate,
                                 scaled, simulate_dataset, simulate_panel)

SPEC = ModelSpec.unified(5, 3, 2, True, True)


def test_parse_pattern():
    assert parse_pattern("F2=F3<F1") == [[2, 3], [1]]
    assert canonical_pattern("F3=F1<F2") == "F1=F3<F2"
    for bad in ("", "F1<F1<F2", "F1<G2<F3", "F1<F2"):
        with pytest.raises(ConfigError):
            parse_pattern(bad, 3)


def test_default_scenarios_cover_all_weak_orders():
    # 13 weak orderings of three items
    assert len({canonical_pattern(p) for p in DEFAULT_SCENARIOS}) == 13


def test_true_params_encode_order():
    sc = ScenarioSpec("F3<F1<F2", gap=1.0)
    np.testing.assert_allclose(sc.true_params.beta, [-1.0, 1.0])
    sc = ScenarioSpec("F2=F3<F1")
    np.testing.assert_allclose(sc.true_params.beta, [1.0, 1.0])


def test_uniform_frequencies():
    theta = np.array([0.2, 0.4, 0.6, 0.8])
    sc = ScenarioSpec("F1=F2=F3", N=300, sigma_u=0.0, attribute_effect=0.0,
                      alpha=tuple(np.log(theta / (1 - theta))))
    y = simulate_dataset(sc, 0).arrays["response"]
    freq = np.bincount(y, minlength=6)[1:] / len(y)
    np.testing.assert_allclose(freq, 0.2, atol=0.03)


def test_simulation_is_deterministic():
    sc = ScenarioSpec("F1<F2<F3", N=20)
    a, b = simulate_dataset(sc, 3), simulate_dataset(sc, 3)
    assert a.observations == b.observations
    assert simulate_dataset(sc, 4).observations != a.observations


def test_streams_are_per_panellist():
    # panellist i's responses do not depend on how many panellists follow
    small = simulate_dataset(ScenarioSpec("F1<F2<F3", N=5), 0)
    big = simulate_dataset(ScenarioSpec("F1<F2<F3", N=9), 0)
    assert big.observations[:len(small.observations)] == small.observations


def test_strong_effect_orders_means():
    sc = ScenarioSpec("F3<F1<F2", N=150, gap=2.0)
    arr = simulate_dataset(sc, 0).arrays
    means = [arr["response"][arr["formulation"] == f].mean() for f in (1, 2, 3)]
    assert means[2] < means[0] < means[1]


def test_infer_order_strong_replicate():
    sc = ScenarioSpec("F3<F1<F2", gap=2.0)
    fit = fit_mixed(SPEC, simulate_dataset(sc, 0))
    assert infer_order(fit) == "F3<F1<F2"


def test_infer_order_null_replicate():
    sc = ScenarioSpec("F1=F2=F3")
    fit = fit_mixed(SPEC, simulate_dataset(sc, 1))
    assert infer_order(fit) == "F1=F2=F3"


def test_infer_order_constructed_tie():
    fit = fit_mixed(SPEC, simulate_dataset(ScenarioSpec("F2=F3<F1", N=60), 0))
    p = fit.params
    beta = np.array([0.8, 0.8])  # F2, F3 identical and less accepted than F1
    params = type(p)(p.spec, p.alpha, (beta, p.slopes[1]), p.log_sigma_u)
    fit = replace(fit, params=params, vcov=np.eye(fit.n_params) * 1e-4)
    assert infer_order(fit) == "F2=F3<F1"


def test_tie_groups_are_mutually_non_significant():
    # a middle formulation close to both ends cannot chain the ends together
    fit = fit_mixed(SPEC, simulate_dataset(ScenarioSpec("F1<F2<F3", N=60), 0))
    p = fit.params
    params = type(p)(p.spec, p.alpha, (np.array([-0.1, -0.2]), p.slopes[1]), p.log_sigma_u)
    V = np.zeros((fit.n_params, fit.n_params))
    V[np.diag_indices_from(V)] = 1e-6
    V[4, 4] = V[5, 5] = 0.0036  # se 0.06 on each slope, independent
    fit = replace(fit, params=params, vcov=V)
    pv = _pairwise(fit)
    assert pv[(1, 2)] > 0.05 and pv[(2, 3)] > 0.05 and pv[(1, 3)] < 0.05
    assert infer_order(fit) in ("F1=F2<F3", "F1<F2=F3")


def test_zero_replicates():
    rep = concordance_study([ScenarioSpec("F1<F2<F3", replicates=0)])
    s = rep.scenarios[0]
    assert all(np.isnan(r) for r in s.rates())
    assert rep.to_rows()[1][3] == "NA"


def test_all_equal_concordance_is_joint_non_significance():
    sc = ScenarioSpec("F1=F2=F3", replicates=12, master_seed=4)
    rep = concordance_study([sc])
    direct = 0
    for r in range(sc.replicates):
        fit = fit_mixed(SPEC, simulate_dataset(sc, r), MixedOptions(quad_order=10))
        direct += all(p >= 0.05 for p in _pairwise(fit).values())
    assert rep.scenarios[0].concordant[0] == direct


def test_study_deterministic_and_worker_independent(tmp_path):
    scs = [ScenarioSpec("F1<F3<F2", replicates=4, N=40),
           ScenarioSpec("F1=F2<F3", replicates=4, N=40)]
    a = concordance_study(scs)
    b = concordance_study(scs, workers=2)
    assert a.to_rows() == b.to_rows()
    assert a.to_json() == b.to_json()
    a.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0].startswith(
        "scenario,N,replicates,rate_unified,rate_attribute_A,rate_attribute_B")


def test_monotone_in_effect_size():
    base = [ScenarioSpec(p, replicates=6, N=40, master_seed=1)
            for p in ("F3<F1<F2", "F1<F2<F3")]
    weak = concordance_study(base)
    strong = concordance_study([scaled(s, 3.0) for s in base])
    for w, s in zip(weak.scenarios, strong.scenarios):
        assert s.concordant[0] >= w.concordant[0]


def test_replicate_outcome_lists_models():
    out = run_replicate(ScenarioSpec("F2<F3<F1", N=40), 0)
    assert len(out.per_attribute) == 2 and out.unified is not None


def test_simulate_panel_follows_schedule():
    layout = generate_bibd(7, 3)
    sched = assign_panellists(layout, 14, seed=1)
    spec = ModelSpec.unified(5, 7, 2, True, True)
    params = ParamVector.zeros(spec, np.array([-2.0, -0.7, 0.7, 2.0]), 0.0)
    ds = simulate_panel(params, sched, [f"F{i}" for i in range(1, 8)], ["x", "y"], seed=3)
    assert len(ds) == 14 * 3 * 2
    assert ds.observations == simulate_panel(params, sched, [f"F{i}" for i in range(1, 8)],
                                             ["x", "y"], seed=3).observations
