"""What a transmitter may look at when it decides its next input.

A :class:`ChannelView` hands out channel states subject to the CSIT model and
a :class:`FeedbackView` hands out past receiver outputs.  Both keep a clock;
any read beyond what the model allows at the current slot raises
:class:`CausalityError`, so a protocol driven through them is causal by
construction.
"""

from __future__ import annotations

import enum

import numpy as np


class CausalityError(AssertionError):
    pass


class Csit(enum.Enum):
    Delayed = "delayed"
    Instantaneous = "instantaneous"


class ChannelView:
    """Channel states visible to the transmitters at slot ``now``."""

    def __init__(self, gains: np.ndarray, model=Csit.Delayed):
        self._gains = np.asarray(gains, dtype=np.uint8)
        self.model = Csit(model)
        self.now = 0

    def advance(self, t: int) -> None:
        if t < self.now:
            raise CausalityError("the clock only moves forward")
        self.now = t

    def _limit(self) -> int:
        return self.now + 1 if self.model is Csit.Instantaneous else self.now

    def state(self, t: int) -> np.ndarray:
        if t >= self._limit():
            raise CausalityError(f"read of slot {t} at slot {self.now} under {self.model.value} CSIT")
        return self._gains[t]

    def states(self, start: int, stop: int) -> np.ndarray:
        if stop > self._limit():
            raise CausalityError(f"read up to slot {stop - 1} at slot {self.now} "
                                 f"under {self.model.value} CSIT")
        return self._gains[start:stop]


class FeedbackView:
    """Receiver outputs fed back to one transmitter, strictly from past slots.

    By default a transmitter hears only its own receiver; ``both_links``
    gives it the other receiver's output as well.
    """

    def __init__(self, tx: int, outputs, channel: ChannelView, both_links: bool = False):
        if tx not in (1, 2):
            raise ValueError("transmitter index must be 1 or 2")
        self.tx = tx
        self._y = tuple(np.asarray(y, dtype=np.uint8) for y in outputs)
        self.channel = channel
        self.both_links = both_links

    def output(self, rx: int, start: int, stop: int) -> np.ndarray:
        if rx != self.tx and not self.both_links:
            raise CausalityError(f"transmitter {self.tx} has no feedback from receiver {rx}")
        if stop > self.channel.now:
            raise CausalityError(f"feedback of slot {stop - 1} read at slot {self.channel.now}")
        return self._y[rx - 1][start:stop]

    def other_inputs(self, own_x: np.ndarray, start: int, stop: int):
        """Recover the other transmitter's inputs on ``[start, stop)``.

        Uses ``y = g_own x_own + g_cross x_other`` at the own receiver.
        Returns ``(known mask, values)``; a slot is known when its cross
        link was on.
        """
        rx = self.tx
        y = self.output(rx, start, stop)
        g = self.channel.states(start, stop)
        own_col, cross_col = (0, 2) if self.tx == 1 else (3, 1)
        own = np.asarray(own_x, dtype=np.uint8)[start:stop]
        known = g[:, cross_col] == 1
        return known, (y ^ (g[:, own_col] & own)) & known
