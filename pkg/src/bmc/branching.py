"""Offspring laws, generating functions, Galton-Watson extinction analysis.

Two finite-support law types: `OffspringLaw` forbids k = 0 (every branching
event leaves at least one particle, so populations never shrink) and is what
the particle system uses; `GWLaw` allows k = 0 and models the embedded
Galton-Watson processes used in the recurrence/transience arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .kernel import Kernel, State, Truncation, TruncatedKernel, TruncatedValue, parse_state

PROB_TOL = 1e-12


def _validate_support(pairs: Sequence[tuple[int, float]], min_k: int, kind: str):
    if not pairs:
        raise ValueError(f"{kind} needs a nonempty support")
    seen = set()
    total = 0.0
    for k, p in pairs:
        if k != int(k) or k < min_k:
            raise ValueError(f"{kind} offspring count {k} must be an integer >= {min_k}")
        if k in seen:
            raise ValueError(f"{kind} has duplicate offspring count {k}")
        seen.add(k)
        if not 0.0 < p <= 1.0:
            raise ValueError(f"{kind} probability {p} for k={k} outside (0, 1]")
        total += p
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"{kind} probabilities sum to {total!r}; normalize before "
                         "construction, the library does not renormalize")


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support distribution on {1, 2, ...} with cached mean."""

    support: tuple[tuple[int, float], ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.support))
        object.__setattr__(self, "support", ordered)
        _validate_support(ordered, 1, "offspring law")

    @classmethod
    def from_map(cls, probs: Mapping[int, float]) -> "OffspringLaw":
        return cls(tuple(probs.items()))

    @classmethod
    def parse(cls, text: str) -> "OffspringLaw":
        return cls(tuple(_parse_pairs(text)))

    @cached_property
    def mean(self) -> float:
        return sum(k * p for k, p in self.support)

    @cached_property
    def _ks(self) -> np.ndarray:
        return np.array([k for k, _ in self.support], dtype=np.int64)

    @cached_property
    def _cum(self) -> np.ndarray:
        cum = np.cumsum([p for _, p in self.support])
        cum[-1] = 1.0
        return cum

    def sample_inverse(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling over the sorted support; exact and order-free."""
        return self._ks[np.searchsorted(self._cum, u, side="right")]


@dataclass(frozen=True)
class GWLaw:
    """Finite-support offspring distribution allowing extinction (k = 0)."""

    support: tuple[tuple[int, float], ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.support))
        object.__setattr__(self, "support", ordered)
        _validate_support(ordered, 0, "GW law")

    @classmethod
    def from_map(cls, probs: Mapping[int, float]) -> "GWLaw":
        return cls(tuple(probs.items()))

    @classmethod
    def parse(cls, text: str) -> "GWLaw":
        return cls(tuple(_parse_pairs(text)))

    @cached_property
    def mean(self) -> float:
        return sum(k * p for k, p in self.support)


def _parse_pairs(text: str) -> list[tuple[int, float]]:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        k_str, _, p_str = chunk.partition(":")
        pairs.append((int(k_str), float(p_str)))
    return pairs


def pgf(law: OffspringLaw | GWLaw, s: float) -> float:
    """Probability generating function sum_k mu_k s^k at s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("pgf argument must lie in [0, 1]")
    return sum(p * s ** k for k, p in law.support)


def gw_extinction_probability(law: GWLaw, tol: float = 1e-12,
                              max_iters: int = 10 ** 6) -> float:
    """Smallest fixed point of q = pgf(q), i.e. the extinction probability.

    Supercritical laws are solved by fixed-point iteration from 0 (monotone
    convergence to the smallest root).  For mean <= 1 the smallest fixed
    point is exactly 1 unless the law is the point mass at k = 1 (whose
    iteration stays at 0); those cases are returned exactly rather than
    through the iteration, which at criticality converges only like 1/n.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if law.mean <= 1.0:
        if law.support == ((1, 1.0),):
            return 0.0
        return 1.0
    q = 0.0
    for _ in range(max_iters):
        nxt = pgf(law, q)
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    return q


def simulate_extinction_frequency(law: GWLaw, n_trees: int = 10_000,
                                  cap: int = 100_000, seed: int = 0,
                                  max_generations: int = 10 ** 6) -> float:
    """Fraction of simulated GW trees that die out.

    Population-level simulation: each generation draws a multinomial split
    of the current population over the support.  Trees whose population
    exceeds `cap` are counted as surviving.
    """
    rng = np.random.default_rng(seed)
    ks = np.array([k for k, _ in law.support], dtype=np.int64)
    probs = np.array([p for _, p in law.support])
    probs = probs / probs.sum()
    extinct = 0
    for _ in range(n_trees):
        z = 1
        for _ in range(max_generations):
            counts = rng.multinomial(z, probs)
            z = int(counts @ ks)
            if z == 0:
                extinct += 1
                break
            if z > cap:
                break
    return extinct / n_trees


class OffspringLawField:
    """Assignment of an offspring law to every state (default plus overrides)."""

    def __init__(self, default: OffspringLaw,
                 overrides: Mapping[State, OffspringLaw] | None = None):
        self.default = default
        self.overrides = dict(overrides or {})
        means = {default.mean, *(law.mean for law in self.overrides.values())}
        self.constant_mean: float | None = None
        if max(means) - min(means) <= PROB_TOL:
            self.constant_mean = default.mean

    @classmethod
    def constant(cls, law: OffspringLaw) -> "OffspringLawField":
        return cls(law)

    @property
    def is_constant(self) -> bool:
        return not self.overrides

    def law_at(self, x: State) -> OffspringLaw:
        return self.overrides.get(x, self.default)

    def mean_at(self, x: State) -> float:
        return self.law_at(x).mean


def constant_mean_law(m: float) -> OffspringLaw:
    """Minimal two-point law on {floor(m), floor(m)+1} with mean exactly m."""
    if m < 1.0:
        raise ValueError("mean must be at least 1")
    lo = int(math.floor(m))
    frac = m - lo
    if frac <= PROB_TOL:
        return OffspringLaw.from_map({lo: 1.0})
    return OffspringLaw.from_map({lo: 1.0 - frac, lo + 1: frac})


def embedded_gw_mean(kernel: Kernel, x0: State, k: int, m: float,
                     trunc: Truncation) -> TruncatedValue:
    """Mean p^(k)(x0,x0) * m^k of the k-step embedded GW process at x0."""
    if k < 1:
        raise ValueError("k must be positive")
    from .kernel import n_step_probability
    p_k = n_step_probability(kernel, x0, x0, k, trunc)
    return TruncatedValue(p_k.value * m ** k, p_k.exact)


def find_supercritical_k(kernel: Kernel, x0: State, m: float, k_max: int,
                         trunc: Truncation) -> int | None:
    """Smallest k <= k_max with p^(k)(x0,x0) > m^(-k), if any.

    Truncated return probabilities are lower bounds, so a returned k is
    always genuine; absence only means "not found within k_max at this
    truncation".
    """
    if m <= 1.0:
        raise ValueError("supercritical search requires mean offspring m > 1")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    tk = TruncatedKernel(kernel, trunc)
    if x0 not in tk:
        raise ValueError(f"state {x0} outside truncation ball")
    ix = tk.index[x0]
    w = tk.unit_vector(x0)
    for k in range(1, k_max + 1):
        w = tk.matrix @ w
        if float(w[ix]) > m ** (-k):
            return k
    return None


def parse_law_field(default: str, overrides: Mapping[str, str] | None = None) -> OffspringLawField:
    """Build a law field from "k1:p1, k2:p2" strings keyed by state strings."""
    parsed = {parse_state(s): OffspringLaw.parse(text)
              for s, text in (overrides or {}).items()}
    return OffspringLawField(OffspringLaw.parse(default), parsed)
