import numpy as np
import pytest

from bfic.channel import classify_case, ChannelState
from bfic.delayed import TRANSITIONS, Table, phase1
from bfic.queues import Kind
from bfic.receiver import Transcript
from bfic.views import CausalityError, ChannelView, Csit, FeedbackView


def test_delayed_view_hides_current_slot(rng):
    g = rng.integers(0, 2, (10, 4))
    view = ChannelView(g, Csit.Delayed)
    view.advance(4)
    assert np.array_equal(view.state(3), g[3])
    assert np.array_equal(view.states(0, 4), g[:4])
    with pytest.raises(CausalityError):
        view.state(4)
    with pytest.raises(CausalityError):
        view.states(0, 5)


def test_instantaneous_view_shows_current_slot_only(rng):
    g = rng.integers(0, 2, (10, 4))
    view = ChannelView(g, "instantaneous")
    view.advance(4)
    assert np.array_equal(view.state(4), g[4])
    with pytest.raises(CausalityError):
        view.state(5)


def test_clock_is_monotone(rng):
    view = ChannelView(rng.integers(0, 2, (5, 4)))
    view.advance(3)
    with pytest.raises(CausalityError):
        view.advance(2)


def test_feedback_view_limits(rng):
    g = rng.integers(0, 2, (8, 4))
    y = (rng.integers(0, 2, 8), rng.integers(0, 2, 8))
    view = ChannelView(g)
    view.advance(5)
    fb = FeedbackView(1, y, view)
    assert np.array_equal(fb.output(1, 0, 5), y[0][:5])
    with pytest.raises(CausalityError):
        fb.output(1, 0, 6)
    with pytest.raises(CausalityError):
        fb.output(2, 0, 3)
    both = FeedbackView(1, y, view, both_links=True)
    assert np.array_equal(both.output(2, 0, 3), y[1][:3])
    with pytest.raises(ValueError):
        FeedbackView(3, y, view)


@pytest.mark.parametrize("tx", [1, 2])
def test_other_inputs_recovered_where_cross_link_on(rng, tx):
    n = 400
    tr = Transcript()
    a = tr.alloc(rng.integers(0, 2, n))
    b = tr.alloc(rng.integers(0, 2, n))
    tr.add_slots(rng.integers(0, 2, (n, 4)), a, b)
    x = tr.transmitted()
    view = ChannelView(tr.gains)
    view.advance(n)
    known, vals = FeedbackView(tx, tr.outputs(), view).other_inputs(x[tx - 1], 0, n)
    cross = 2 if tx == 1 else 1
    assert np.array_equal(known, tr.gains[:, cross] == 1)
    assert np.array_equal(vals[known], x[2 - tx][known])


def _causal_replay(gains, n1, n2, table=Table.TableI):
    """Queue heads of the fresh-bit phase, decided only from strictly past states."""
    tab = TRANSITIONS[table]
    view = ChannelView(gains, Csit.Delayed)
    heads = [0, 0]
    sizes = (n1, n2)
    sent = np.full((gains.shape[0], 2), -1)
    for t in range(gains.shape[0]):
        view.advance(t)
        if t:
            g = ChannelState(*(int(v) for v in view.state(t - 1)))
            prev = sent[t - 1]
            both = prev[0] >= 0 and prev[1] >= 0
            for i in (0, 1):
                if prev[i] < 0:
                    continue
                if both:
                    leaves = tab[classify_case(g)][i] != 0
                else:
                    direct, cross = (g.g11, g.g12) if i == 0 else (g.g22, g.g21)
                    leaves = bool(direct or cross)
                heads[i] += leaves
        for i in (0, 1):
            if heads[i] < sizes[i]:
                sent[t, i] = heads[i]
        if (sent[t] < 0).all():
            return sent[:t]
    return sent


@pytest.mark.parametrize("table", [Table.TableI, Table.TableIV, Table.TableV])
def test_fresh_phase_is_causal_under_delayed_state(table):
    """The simulator's inputs match a replay that may only look at past channel states."""
    rng = np.random.default_rng(21)
    m1, m2 = 300, 220
    qs, halt = phase1(m1, m2, 0.5, 2000, table, rng)
    assert halt is None
    run = qs.run
    sent = _causal_replay(run.tr.gains, m1, m2, table)
    assert sent.shape[0] == run.tr.T
    for i, col in ((0, 0), (1, 2)):
        expect = np.where(sent[:, i] >= 0, run.msg[i][np.maximum(sent[:, i], 0)], 0)
        assert np.array_equal(run.tr.sym[:, col], expect)
