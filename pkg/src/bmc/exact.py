"""Exact enumeration of small branching clouds by probability bookkeeping.

Dynamic programming over (cloud multiset, cumulative visits): every
offspring-count choice and every movement choice is expanded with its exact
probability.  Feasible only for a couple of generations, which is exactly
what the Monte Carlo engine and the visit-law invariance check need as an
independent ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import TYPE_CHECKING

from .kernel import Kernel, State

if TYPE_CHECKING:
    from .branching import OffspringLawField

Cloud = tuple[State, ...]


class EnumerationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class VisitDistributions:
    """Exact distributions of particle counts at the target site.

    per_generation[n]: law of (number of particles at target at time n).
    cumulative[n]:     law of (total visits to target over times 1..n);
                       the initial particle at time 0 is not a visit.
    """

    per_generation: list[dict[int, float]]
    cumulative: list[dict[int, float]]


def _child_options(kernel: Kernel, laws: "OffspringLawField",
                   x: State) -> list[tuple[Cloud, float]]:
    """All (children multiset, probability) outcomes of one particle at x."""
    row = kernel.neighbors(x)
    options: list[tuple[Cloud, float]] = []
    for k, pk in laws.law_at(x).support:
        for combo in combinations_with_replacement(range(len(row)), k):
            prob = pk * math.factorial(k)
            counts: dict[int, int] = {}
            for i in combo:
                counts[i] = counts.get(i, 0) + 1
            for i, c in counts.items():
                prob *= row[i][1] ** c / math.factorial(c)
            children = tuple(sorted(row[i][0] for i in combo))
            options.append((children, prob))
    return options


def enumerate_visit_distributions(kernel: Kernel, laws: "OffspringLawField",
                                  x_s: State, target: State, n_max: int,
                                  cap: int = 10 ** 7) -> VisitDistributions:
    """Exact visit-count laws for a cloud started at x_s, up to time n_max.

    Raises EnumerationCapExceeded once more than `cap` weighted expansions
    have been performed.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    ops = 0
    option_cache: dict[State, list[tuple[Cloud, float]]] = {}
    # DP state: (sorted cloud, cumulative visits) -> probability
    dist: dict[tuple[Cloud, int], float] = {((x_s,), 0): 1.0}
    per_generation = [_marginal_count(dist, target)]
    cumulative = [_marginal_cum(dist)]
    for _ in range(n_max):
        nxt: dict[tuple[Cloud, int], float] = {}
        for (cloud, cum), prob in dist.items():
            # fold the per-particle outcome laws into a cloud transition
            partial: dict[Cloud, float] = {(): 1.0}
            for x in cloud:
                opts = option_cache.get(x)
                if opts is None:
                    opts = _child_options(kernel, laws, x)
                    option_cache[x] = opts
                grown: dict[Cloud, float] = {}
                for acc_cloud, acc_p in partial.items():
                    for children, cp in opts:
                        ops += 1
                        key = tuple(sorted(acc_cloud + children))
                        grown[key] = grown.get(key, 0.0) + acc_p * cp
                if ops > cap:
                    raise EnumerationCapExceeded(
                        f"more than {cap} weighted expansions")
                partial = grown
            for new_cloud, p_cloud in partial.items():
                hits = sum(1 for s in new_cloud if s == target)
                key = (new_cloud, cum + hits)
                nxt[key] = nxt.get(key, 0.0) + prob * p_cloud
        dist = nxt
        per_generation.append(_marginal_count(dist, target))
        cumulative.append(_marginal_cum(dist))
    return VisitDistributions(per_generation, cumulative)


def _marginal_count(dist: dict[tuple[Cloud, int], float],
                    target: State) -> dict[int, float]:
    out: dict[int, float] = {}
    for (cloud, _), p in dist.items():
        c = sum(1 for s in cloud if s == target)
        out[c] = out.get(c, 0.0) + p
    return out


def _marginal_cum(dist: dict[tuple[Cloud, int], float]) -> dict[int, float]:
    out: dict[int, float] = {}
    for (_, cum), p in dist.items():
        out[cum] = out.get(cum, 0.0) + p
    return out


def total_variation(a: dict[int, float], b: dict[int, float]) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)
