import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfic.channel import case_probabilities
from bfic.delayed import (GOLDEN, LOW_REGIME, TRANSITIONS, Halt, Table, corner_tx1_pool,
                          expected_counts, merge_type1, merge_type2, merge_type3,
                          merged_common_mass, phase1, phase1_expectations, run_corner_C,
                          run_point_A, split_c1_remainder, flush_to_both)
from bfic.queues import Kind, QueueSet, tag
from bfic.receiver import verify_delivery
from bfic.regions import corner_c, point_a_rate

T = tag


def hand_queues(**counts):
    """QueueSet with ``counts`` like ``NeedOther_1=3`` filled with fresh single bits."""
    qs = QueueSet()
    nxt = 1
    for key, n in counts.items():
        kind, tx = key.rsplit("_", 1)
        ids = qs.add_initial(int(tx), np.arange(nxt, nxt + n))
        nxt += n
        qs.take_all(T(Kind.Initial, int(tx)))
        qs.push(T(Kind[kind], int(tx)), ids)
    return qs


# -- queue bookkeeping -------------------------------------------------------

def test_tag_validation():
    with pytest.raises(ValueError):
        tag(Kind.C1, 3)
    assert str(tag(Kind.NeedOwn, 2)) == "NeedOwn(2)"


def test_fifo_order():
    qs = hand_queues(Final_1=5)
    first = qs.take(T(Kind.Final, 1), 2)
    assert first.tolist() == [0, 1]
    qs.push(T(Kind.Final, 1), first)
    assert qs.ids(T(Kind.Final, 1)).tolist() == [2, 3, 4, 0, 1]


def test_merge_type1_min_pairing():
    qs = hand_queues(NeedOther_1=3, NeedOwn_1=5)
    merge_type1(qs)
    assert qs.count(T(Kind.ToBoth, 1)) == 3
    assert qs.count(T(Kind.NeedOwn, 1)) == 2
    assert qs.count(T(Kind.NeedOther, 1)) == 0
    for bit in qs.bits(T(Kind.ToBoth, 1)):
        assert bit.xor_parents is not None
    qs.check_conservation()


def test_merge_type1_empty_partner_no_change():
    qs = hand_queues(NeedOwn_1=4, NeedOther_2=2, NeedOwn_2=1)
    before = qs.ids(T(Kind.NeedOwn, 1)).tolist()
    merge_type1(qs)
    assert qs.ids(T(Kind.NeedOwn, 1)).tolist() == before
    assert qs.count(T(Kind.ToBoth, 1)) == 0
    assert qs.count(T(Kind.ToBoth, 2)) == 1


@pytest.mark.parametrize("merge, partner", [(merge_type2, "NeedOwn"), (merge_type3, "NeedOther")])
def test_c1_merges_min_pairing(merge, partner):
    qs = hand_queues(C1_1=3, C1_2=3, **{f"{partner}_1": 5})
    merge(qs)
    assert qs.count(T(Kind[partner], 1)) == 2
    merged = [b for b in qs.bits(T(Kind.ToBoth, 1)) if b.xor_parents]
    assert len(merged) == 3
    # the partner side has nothing to pair, so its aligned C1 members ride alone
    assert qs.count(T(Kind.ToBoth, 2)) == 3
    assert qs.count(T(Kind.C1, 1)) == qs.count(T(Kind.C1, 2)) == 0
    qs.check_conservation()


@pytest.mark.parametrize("merge", [merge_type2, merge_type3])
def test_c1_merges_without_partner(merge):
    qs = hand_queues(C1_1=3, C1_2=3)
    merge(qs)
    assert qs.count(T(Kind.C1, 1)) == 3 and qs.count(T(Kind.ToBoth, 1)) == 0


def test_split_c1_remainder():
    qs = hand_queues(C1_1=4, C1_2=4)
    split_c1_remainder(qs)
    for tx in (1, 2):
        assert qs.count(T(Kind.ToBoth, tx)) == 2
        assert qs.count(T(Kind.Final, tx)) == 2
    empty = hand_queues(Final_1=1)
    split_c1_remainder(empty)
    assert empty.counts() == {"Final(1)": 1}


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30),
       st.integers(0, 30))
def test_merges_conserve_bits(c1, own1, oth1, own2, oth2):
    qs = hand_queues(C1_1=c1, C1_2=c1, NeedOwn_1=own1, NeedOther_1=oth1, NeedOwn_2=own2,
                     NeedOther_2=oth2)
    for step in (merge_type1, merge_type2, merge_type3, flush_to_both, split_c1_remainder):
        step(qs)
        qs.check_conservation()
    for tx in (1, 2):
        assert qs.count(T(Kind.C1, tx)) == 0


# -- transition tables ---------------------------------------------------------

def test_upgrade_tables_differ_in_two_cases():
    lit, fixed = TRANSITIONS[Table.UpgradeLiteral], TRANSITIONS[Table.Upgrade]
    diff = {c for c in range(1, 17) if lit[c] != fixed[c]}
    assert diff == {2, 3}
    assert fixed[2] == (Kind.NeedOther, Kind.NeedOther)
    assert fixed[3] == (Kind.NeedOther, Kind.NeedOther)


def test_table_variants_only_touch_listed_cases():
    base = TRANSITIONS[Table.TableI]
    iv = TRANSITIONS[Table.TableIV]
    assert {c for c in base if base[c] != iv[c]} == {7, 8, 11, 12}
    assert iv[7] == (Kind.Final, Kind.Intermediate) and iv[11] == (Kind.Intermediate, Kind.Final)
    v = TRANSITIONS[Table.TableV]
    assert v[1] == (Kind.C1, Kind.Final)
    assert v[2] == (Kind.Opportunistic, Kind.Final)


# -- phase 1 -------------------------------------------------------------------

def test_forced_case_15(rng):
    qs, halt = phase1(1, 1, 0.5, 1, Table.TableI, rng, forced_cases=[15])
    assert halt is None
    assert qs.count(T(Kind.NeedOwn, 1)) == 1 and qs.count(T(Kind.NeedOwn, 2)) == 1


def test_always_on_channel_fills_c1(rng):
    qs, halt = phase1(50, 50, 1.0, 50, Table.TableI, rng)
    assert halt is None
    assert qs.count(T(Kind.C1, 1)) == 50 and qs.count(T(Kind.C1, 2)) == 50
    assert qs.run.tr.T == 50


def test_short_duration_is_type_i(rng):
    _, halt = phase1(1000, 1000, 0.5, 100, Table.TableI, rng)
    assert halt is Halt.TypeI
    with pytest.raises(ValueError):
        phase1(1, 1, 0.5, 0, Table.TableI, rng)


def test_phase1_expectations_half():
    e = phase1_expectations(0.5, 90_000)
    assert e[Kind.C1] == pytest.approx(7500)
    assert e[Kind.NeedOwn] == pytest.approx(15000)
    assert e[Kind.NeedOther] == pytest.approx(7500)
    assert e[Kind.ToBoth] == pytest.approx(15000)


@given(st.floats(0.05, 0.95))
def test_expected_counts_agree_with_closed_forms(p):
    table = expected_counts(Table.TableI, 1000, 1000, p)
    closed = phase1_expectations(p, 1000)
    for kind in (Kind.C1, Kind.NeedOwn, Kind.NeedOther, Kind.ToBoth):
        assert table[T(kind, 1)] == pytest.approx(closed[kind], rel=1e-12)


def test_phase1_counts_near_expectation():
    m = 90_000
    qs, halt = phase1(m, m, 0.5, 2 * m, Table.TableI, np.random.default_rng(8))
    assert halt is None
    e = phase1_expectations(0.5, m)
    for kind in (Kind.C1, Kind.NeedOwn, Kind.NeedOther, Kind.ToBoth):
        for tx in (1, 2):
            assert abs(qs.count(T(kind, tx)) - e[kind]) <= m ** (2 / 3)


def test_merged_common_mass_near_expectation():
    m = 90_000
    qs, _ = phase1(m, m, 0.5, 2 * m, Table.TableI, np.random.default_rng(4))
    merge_type1(qs)
    merge_type2(qs)
    flush_to_both(qs)
    split_c1_remainder(qs)
    for tx in (1, 2):
        assert abs(qs.count(T(Kind.ToBoth, tx)) - 0.5 * 0.5 / 0.75 * m) <= 3 * m ** (2 / 3)


def test_merge_mass_identities():
    rng = np.random.default_rng(77)
    for p in rng.uniform(LOW_REGIME, GOLDEN, 100):
        assert abs(merged_common_mass(p, "type2") - 0.5 * p) < 1e-12
    for p in rng.uniform(GOLDEN, 1.0, 100):
        assert abs(merged_common_mass(p, "type3") - 0.5 * p) < 1e-12


def test_regime_boundary_masses_meet():
    for p in (GOLDEN - 1e-6, GOLDEN + 1e-6):
        assert merged_common_mass(p, "type2") == pytest.approx(merged_common_mass(p, "type3"),
                                                                abs=1e-6)


# -- decode chains built by hand ---------------------------------------------------

def _deliver_to_both(run, ids_by_tx):
    """Send each common bit in its own slot where both links of its sender are on."""
    qs, tr = run.qs, run.tr
    for tx, ids in ids_by_tx.items():
        for i in ids:
            g = [1, 1, 0, 0] if tx == 1 else [0, 0, 1, 1]
            pair = qs.var_pairs([i])
            tr.add_slots(np.array([g], np.uint8), pair if tx == 1 else None,
                         pair if tx == 2 else None)


def test_type1_chain_decodes(rng):
    # case 2 files a1 as NeedOther, case 14 files a2 as NeedOwn, case 9 drains Tx2
    qs, halt = phase1(2, 2, 0.5, 3, Table.TableI, rng, forced_cases=[2, 14, 9])
    assert halt is None
    merge_type1(qs)
    assert qs.count(T(Kind.ToBoth, 1)) == 1
    run = qs.run
    _deliver_to_both(run, {1: qs.ids(T(Kind.ToBoth, 1))})
    for rx in (1, 2):
        ok, *_ = verify_delivery(run.tr, rx, run.msg[rx - 1])
        assert ok


def test_type3_chain_recovers_six_bits(rng):
    # C1 pair (a, b); case 2 makes c NeedOther at Tx1; case 3 makes f NeedOther at Tx2
    qs, halt = phase1(3, 3, 0.5, 3, Table.TableI, rng, forced_cases=[1, 2, 3])
    assert halt is None
    merge_type3(qs)
    run = qs.run
    assert qs.count(T(Kind.ToBoth, 1)) == qs.count(T(Kind.ToBoth, 2)) == 1
    _deliver_to_both(run, {1: qs.ids(T(Kind.ToBoth, 1)), 2: qs.ids(T(Kind.ToBoth, 2))})
    for rx in (1, 2):
        ok, unknown, wrong, _ = verify_delivery(run.tr, rx, run.msg[rx - 1])
        assert ok, (rx, unknown, wrong)


def test_type2_chain_decodes(rng):
    # C1 pair, then case 15 leaves one NeedOwn bit on each side
    qs, halt = phase1(2, 2, 0.5, 2, Table.TableI, rng, forced_cases=[1, 15])
    merge_type2(qs)
    run = qs.run
    _deliver_to_both(run, {1: qs.ids(T(Kind.ToBoth, 1)), 2: qs.ids(T(Kind.ToBoth, 2))})
    for rx in (1, 2):
        assert verify_delivery(run.tr, rx, run.msg[rx - 1])[0]



def _loop_setup(rng):
    # C1 pair (a, b); cases 7 and 11 leave one intermediate bit per side; an upgrade
    # slot in case 3 files both as NeedOther while Rx1 hears only their XOR
    qs, halt = phase1(3, 3, 0.5, 3, Table.TableIV, rng, forced_cases=[1, 7, 11, 3])
    assert halt is None
    assert qs.run.drive(Table.Upgrade, Kind.Intermediate, 1) == 1
    assert qs.count(T(Kind.NeedOther, 1)) == qs.count(T(Kind.NeedOther, 2)) == 1
    return qs


def test_merge_breaks_equation_loops(rng):
    qs = _loop_setup(rng)
    merge_type3(qs)
    flush_to_both(qs)
    run = qs.run
    _deliver_to_both(run, {1: qs.ids(T(Kind.ToBoth, 1)), 2: qs.ids(T(Kind.ToBoth, 2))})
    for rx in (1, 2):
        ok, unknown, wrong, _ = verify_delivery(run.tr, rx, run.msg[rx - 1])
        assert ok, (rx, unknown, wrong)


def test_unbroken_loop_is_undecodable(rng, monkeypatch):
    import bfic.delayed as d
    monkeypatch.setattr(d, "_closed_loops", lambda qs, xs, ys: np.zeros(0, dtype=np.int64))
    qs = _loop_setup(rng)
    merge_type3(qs)
    flush_to_both(qs)
    run = qs.run
    _deliver_to_both(run, {1: qs.ids(T(Kind.ToBoth, 1)), 2: qs.ids(T(Kind.ToBoth, 2))})
    assert not verify_delivery(run.tr, 1, run.msg[0])[0]

# -- full schemes, reduced size ------------------------------------------------------

@pytest.mark.parametrize("p", [0.3, 0.45, 0.5, 0.7])
def test_point_a_small_runs(p):
    res = run_point_A(4000, p, 0.05, np.random.default_rng(int(p * 100)))
    assert res.ok, res.detail
    target = min(p, point_a_rate(p))
    assert res.empirical_rates.r1 == res.empirical_rates.r2
    assert 0.85 * target < res.empirical_rates.r1 <= target + 0.02
    assert res.bits_delivered == (4000, 4000)


def test_point_a_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        run_point_A(100, 1.0, 0.02, rng)
    with pytest.raises(ValueError):
        run_point_A(100, 0.0, 0.02, rng)


def test_halted_result_has_zero_rates():
    res = run_point_A(3000, 0.5, 0.2, np.random.default_rng(0))
    assert res.halted is not None or res.empirical_rates.r1 > 0
    if res.halted is not None:
        assert res.empirical_rates == (0.0, 0.0)


@pytest.mark.parametrize("adaptive", [False, True])
def test_corner_c_small(adaptive):
    m, p = 4000, 0.6
    res = run_corner_C(m, p, 0.05, np.random.default_rng(5), adaptive=adaptive)
    assert res.ok, res.detail
    assert res.bits_delivered == (corner_tx1_pool(m, p), m)
    target = corner_c(p)
    assert res.empirical_rates.r2 == pytest.approx(target.r2, rel=0.12)
    assert res.empirical_rates.r1 == pytest.approx(target.r1, rel=0.12)


def test_corner_c_regime_guard(rng):
    with pytest.raises(ValueError):
        run_corner_C(100, 0.3, 0.02, rng)


def test_phase_stats_recorded():
    res = run_point_A(3000, 0.6, 0.05, np.random.default_rng(2))
    names = [s.name for s in res.phase_stats]
    assert names[0] == "phase1"
    assert sum(s.slots for s in res.phase_stats) == res.slots_used
