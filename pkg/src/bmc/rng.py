"""Counter-based random streams for reproducible, schedule-independent trials.

Algorithm (fixed): numpy's Philox4x64 counter-based generator (Random123
family).  Every Monte Carlo trial owns the 2x64-bit Philox key

    key = (seed mod 2^64, trial_index mod 2^64)

and every generation of that trial owns the 256-bit counter block starting at

    counter = (0, 0, 0, generation)

Within one generation the stream is consumed in a fixed layout: first one
uniform per particle (branching decision, indexed by the particle's ordinal
in the canonically sorted cloud), then one uniform per offspring (movement
decision, indexed by the offspring's ordinal).  A draw is therefore a pure
function of (seed, trial, generation, ordinal): iteration order, chunking and
parallel schedule cannot change any particle's randomness.

Generation counters are 2^192 blocks apart, so streams of different
generations can never collide for any realistic draw count.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class TrialStreams:
    """Per-trial stream factory; re-key with `generation`, then draw in order.

    Not thread-safe: one instance per in-flight trial.  Concurrent trials use
    separate instances (distinct Philox keys), which is what makes results
    schedule-independent.
    """

    def __init__(self, seed: int, trial_index: int):
        self.seed = seed & _MASK64
        self.trial_index = trial_index & _MASK64
        self._bitgen = np.random.Philox(
            key=np.array([self.seed, self.trial_index], dtype=np.uint64)
        )
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def generation(self, generation: int) -> np.random.Generator:
        """Reset the stream to the start of `generation`'s counter block."""
        st = self._state
        inner = st["state"]
        inner["counter"][:] = 0
        inner["counter"][3] = generation & _MASK64
        inner["key"][0] = self.seed
        inner["key"][1] = self.trial_index
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


def philox_generator(seed: int, trial_index: int, generation: int = 0) -> np.random.Generator:
    """Stand-alone generator positioned at (seed, trial, generation)."""
    bg = np.random.Philox(
        key=np.array([seed & _MASK64, trial_index & _MASK64], dtype=np.uint64),
        counter=np.array([0, 0, 0, generation & _MASK64], dtype=np.uint64),
    )
    return np.random.Generator(bg)
