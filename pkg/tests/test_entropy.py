import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfic.entropy import (BcStrategy, all_messages, constant_strategy, exact_entropies,
                          leakage_bound, leakage_delivery_closed_form, leakage_delivery_fraction,
                          leakage_strategy, permuted, random_count_strategy,
                          random_history_strategy, random_strategy, verify_leakage_bound)


def brute_force(strategy, p):
    """Enumerate every gain sequence with itertools and count outputs per message."""
    m, n = strategy.m, strategy.n
    msgs = all_messages(m)
    h = [0.0, 0.0]
    for seq in itertools.product(((0, 0), (0, 1), (1, 0), (1, 1)), repeat=n):
        g1 = tuple(a for a, _ in seq)
        g2 = tuple(b for _, b in seq)
        w = math.prod(p if v else 1 - p for v in g1 + g2)
        if w == 0:
            continue
        xs = np.stack([np.asarray(strategy.rule(t, g1[:t], g2[:t], msgs)) for t in range(n)], axis=1)
        for i, g in enumerate((g1, g2)):
            ys = Counter(tuple(int(v) for v in row * np.array(g)) for row in xs)
            probs = np.array(list(ys.values())) / len(msgs)
            h[i] += w * float(-(probs * np.log2(probs)).sum())
    return h


def copy_bit(m, n):
    return BcStrategy(m, n, lambda t, g1, g2, msgs: msgs[:, t % m], "copy")


@given(st.floats(0.0, 1.0))
def test_single_bit_single_slot(p):
    rep = exact_entropies(copy_bit(1, 1), p)
    assert rep.h1 == pytest.approx(p, abs=1e-12)
    assert rep.h2 == pytest.approx(p, abs=1e-12)


def test_constant_rule_has_no_entropy():
    rep = exact_entropies(constant_strategy(3, 4), 0.5)
    assert rep.h1 == 0 and rep.h2 == 0
    assert rep.undefined and rep.holds


def test_random_rules_respect_bound_at_half():
    rng = np.random.default_rng(99)
    worst = min(exact_entropies(random_strategy(2, 3, rng), 0.5).ratio or 1.0 for _ in range(200))
    assert worst >= 2 / 3 - 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = float(rng.uniform(0.1, 0.9))
    for strat in (random_history_strategy(2, 3, rng), random_count_strategy(3, 3, rng),
                  leakage_strategy(2, 3)):
        rep = exact_entropies(strat, p)
        h1, h2 = brute_force(strat, p)
        assert rep.h1 == pytest.approx(h1, abs=1e-10)
        assert rep.h2 == pytest.approx(h2, abs=1e-10)


def test_leakage_strategy_perfect_channel():
    rep = exact_entropies(leakage_strategy(3, 3), 1.0)
    assert rep.ratio == pytest.approx(1.0)
    assert rep.h1 == pytest.approx(3.0)


def test_leakage_strategy_exact_ratio_n6_m3():
    rep = exact_entropies(leakage_strategy(3, 6), 0.5)
    assert 2 / 3 - 1e-9 <= rep.ratio <= 1.0
    assert rep.ratio < 0.75
    # frozen from the enumeration oracle
    assert rep.ratio == pytest.approx(0.71586, abs=1e-5)


def test_leakage_delivery_fraction():
    rng = np.random.default_rng(2000)
    frac = leakage_delivery_fraction(2000, 0.5, rng)
    assert frac == pytest.approx(2 / 3, abs=0.03)


@given(st.floats(0.01, 1.0))
def test_delivery_closed_form_identities(p):
    q = 1 - p
    assert leakage_delivery_closed_form(p) == pytest.approx(1 / (1 + q), rel=1e-12)
    assert p / (1 - q * q) == pytest.approx(leakage_bound(p), rel=1e-12)


def test_bound_identity_random_p():
    for p in np.random.default_rng(5).uniform(0.001, 1.0, 100):
        q = 1 - p
        assert abs(p / (1 - q * q) - 1 / (2 - p)) < 1e-12


def test_falsification_harness_finds_no_violation():
    checks = verify_leakage_bound([0.3, 0.5, 0.8], 30, np.random.default_rng(1))
    for c in checks:
        assert c.ok
        assert c.min_ratio >= c.bound - 1e-9
        assert c.worst == "leakage"


def test_near_perfect_channel_ratios_tend_to_one():
    rng = np.random.default_rng(3)
    assert leakage_bound(0.999) == pytest.approx(1.0, abs=2e-3)
    for _ in range(20):
        rep = exact_entropies(random_strategy(2, 3, rng), 0.999)
        if not rep.undefined:
            assert rep.ratio == pytest.approx(1.0, abs=0.02)


@given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]), st.floats(0.05, 0.95))
def test_relabelling_message_bits_keeps_entropies(seed, perm, p):
    strat = random_strategy(3, 3, np.random.default_rng(seed))
    a = exact_entropies(strat, p)
    b = exact_entropies(permuted(strat, perm), p)
    assert a.h1 == pytest.approx(b.h1, abs=1e-10)
    assert a.h2 == pytest.approx(b.h2, abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 1.0))
def test_entropy_bounded_by_slots_and_message(seed, m, n, p):
    rep = exact_entropies(random_strategy(m, n, np.random.default_rng(seed)), p)
    for h in (rep.h1, rep.h2):
        assert -1e-12 <= h <= min(n, m) + 1e-9


def test_size_limits_and_bad_rules():
    with pytest.raises(ValueError):
        exact_entropies(constant_strategy(13, 2), 0.5)
    with pytest.raises(ValueError):
        exact_entropies(constant_strategy(2, 9), 0.5)
    with pytest.raises(ValueError):
        exact_entropies(constant_strategy(2, 2), 1.5)
    bad = BcStrategy(2, 2, lambda t, g1, g2, msgs: np.full(msgs.shape[0], 2), "bad")
    with pytest.raises(ValueError):
        exact_entropies(bad, 0.5)
    with pytest.raises(ValueError):
        leakage_strategy(0)
