import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfic.channel import case_probabilities
from bfic.delayed import SchemeRun
from bfic.feedback import (OFB_RELAY_CASES, BlockPlan, _feedback_learn, icsit_expectations,
                           icsit_ofb_expectations, icsit_tx2_send_probability, ofb_common_mass,
                           relay_pool_expectation, run_dcsit_ofb_corner, run_dcsit_ofb_sum,
                           run_icsit, run_icsit_ofb)
from bfic.regions import point_a_rate


# -- delayed CSIT with feedback, equal rates ---------------------------------------

def test_ofb_sum_small_run_and_audit():
    m, p = 6000, 0.5
    res = run_dcsit_ofb_sum(m, p, 0.05, np.random.default_rng(3))
    assert res.ok, res.detail
    assert res.checks["feedback_bits"] > 0
    assert res.checks["feedback_mismatches"] == 0
    assert max(res.checks["common_mass"]) <= res.checks["common_bound"]
    assert res.empirical_rates.r1 == pytest.approx(point_a_rate(p), rel=0.1)


def test_ofb_sum_beats_no_feedback_cap_at_low_p():
    res = run_dcsit_ofb_sum(20_000, 0.2, 0.01, np.random.default_rng(1))
    assert res.ok, res.detail
    assert res.empirical_rates.r1 > 0.2


def test_feedback_audit_flags_wrong_bits():
    rng = np.random.default_rng(0)
    run = SchemeRun(64, 64, 0.5, 0.05, rng)
    g = np.ones((64, 4), np.uint8)
    slots = run.tr.add_slots(g, run.msg[0], run.msg[1])
    assert _feedback_learn(run, 2, slots, run.msg[0]) == 0
    flipped = run.tr.values[run.msg[0]] ^ 1
    assert _feedback_learn(run, 2, slots, run.msg[0][np.argsort(flipped, kind="stable")]) > 0
    assert run.checks["feedback_mismatches"] > 0


@given(st.floats(0.01, 0.99))
def test_ofb_common_mass_formula(p):
    q = 1 - p
    assert ofb_common_mass(p, 1.0) == pytest.approx(0.5 * p / (1 - q * q), rel=1e-12)


def test_ofb_sum_rejects_bad_p(rng):
    with pytest.raises(ValueError):
        run_dcsit_ofb_sum(100, 1.0, 0.02, rng)


# -- delayed CSIT with feedback, relay corner --------------------------------------

def test_relay_corner_rejects_zero_blocks(rng):
    with pytest.raises(ValueError):
        run_dcsit_ofb_corner(1000, 0, 0.5, 0.02, rng)


@pytest.mark.parametrize("adaptive", [False, True])
def test_relay_corner_small(adaptive):
    m, b, p = 4000, 3, 0.5
    res = run_dcsit_ofb_corner(m, b, p, 0.05, np.random.default_rng(9), adaptive=adaptive)
    assert res.ok, res.detail
    assert res.empirical_rates.r2 == 0.0
    assert res.empirical_rates.r1 == pytest.approx(b / (b + 1) * 0.75, rel=0.15)
    plan = res.checks["plan"]
    plan.check()
    assert plan.fresh[-1] == 0 and len(plan.bounds) == b + 1
    assert res.checks["feedback_mismatches"] == 0


def test_relay_pool_expectation_matches_runs():
    m, p = 20_000, 0.5
    sizes = []
    for seed in range(4):
        res = run_dcsit_ofb_corner(m, 2, p, 0.05, np.random.default_rng(seed), adaptive=True)
        plan = res.checks["plan"]
        sizes += [v for (j, _, _), v in plan.queues.items() if j < 2]
    assert relay_pool_expectation(p, m) == pytest.approx(0.25 / 0.75 * m)
    assert abs(np.mean(sizes) - relay_pool_expectation(p, m)) < 3 * np.sqrt(m)


# -- instantaneous CSIT ---------------------------------------------------------------

def test_tx2_send_probability_is_2pq():
    for p in np.random.default_rng(13).uniform(0.5, 1.0, 100):
        assert abs(icsit_tx2_send_probability(p) - 2 * p * (1 - p)) < 1e-12


def test_icsit_high_regime_expectations():
    e = icsit_expectations(0.7, 1000)
    assert e["C1"] == pytest.approx(0.7 * 0.09 * 1000)
    assert e["C2"] == pytest.approx(0.49 * 0.3 * 1000)
    low = icsit_expectations(0.4, 1000)
    assert low["C1"] == pytest.approx(case_probabilities(0.4)[1] / 0.4 * 1000)


def test_icsit_high_regime_queue_concentration():
    m, p = 20_000, 0.7
    res = run_icsit(m, 4, p, np.random.default_rng(6))
    assert res.ok, res.detail
    e = icsit_expectations(p, m)
    for (j, holder, name), n in res.checks["plan"].queues.items():
        if j < 4 and (holder, name) in ((1, "C1"), (1, "C2")):
            assert abs(n - e[name]) <= m ** (2 / 3), (j, name, n, e[name])


@pytest.mark.parametrize("p, r2", [(0.4, 0.4), (0.7, 0.42)])
def test_icsit_small_runs(p, r2):
    b = 4
    res = run_icsit(4000, b, p, np.random.default_rng(2), blockwise=True)
    assert res.ok, res.detail
    assert res.checks["blockwise_failures"] == []
    f = b / (b + 1)
    assert res.empirical_rates.r1 == pytest.approx(f * p, rel=0.06)
    assert res.empirical_rates.r2 == pytest.approx(f * r2, rel=0.06)


def test_icsit_rejects_bad_parameters(rng):
    with pytest.raises(ValueError):
        run_icsit(1000, 0, 0.5, rng)
    with pytest.raises(ValueError):
        run_icsit(1000, 2, 1.0, rng)


def test_icsit_ofb_expectations():
    e = icsit_ofb_expectations(0.5, 750)
    probs = case_probabilities(0.5)
    for c in (2, 11, 12, 14, 15):
        assert e[f"C{c}"] == pytest.approx(probs[c] * 1000)
    assert set(OFB_RELAY_CASES.values()) == set(e)


def test_icsit_ofb_small_run():
    b = 4
    res = run_icsit_ofb(4000, b, 0.5, np.random.default_rng(17), blockwise=True)
    assert res.ok, res.detail
    assert res.checks["backward_decoded"] is True
    assert res.checks["blockwise_failures"] == []
    assert res.checks["feedback_mismatches"] == 0
    r = res.empirical_rates
    assert r.r1 + r.r2 <= 0.75 + 0.25 + 0.01
    # five rate-tight relay duties per block stretch short blocks; full size is an acceptance check
    f = b / (b + 1)
    assert r.r1 == pytest.approx(f * 0.75, rel=0.1)
    assert r.r2 == pytest.approx(f * 0.25, rel=0.1)


# -- block bookkeeping ------------------------------------------------------------------

def test_block_plan_invariants():
    good = BlockPlan(2, 10, 20, bounds=[(0, 10), (10, 22), (22, 30)],
                     consumed=[(1, (0, 1, "C1")), (2, (1, 1, "C1"))], fresh=[5, 5, 0])
    good.check()
    stale = BlockPlan(2, 10, 20, bounds=[(0, 10), (10, 20), (20, 30)],
                      consumed=[(2, (0, 1, "C1"))], fresh=[5, 5, 0])
    with pytest.raises(AssertionError):
        stale.check()
    fresh_flush = BlockPlan(1, 10, 20, bounds=[(0, 10), (10, 20)], fresh=[5, 3])
    with pytest.raises(AssertionError):
        fresh_flush.check()
    gap = BlockPlan(1, 10, 20, bounds=[(0, 10), (11, 20)], fresh=[5, 0])
    with pytest.raises(AssertionError):
        gap.check()
