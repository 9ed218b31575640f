"""Countable-state Markov kernels, finite truncations, n-step probabilities.

States are integer tuples (dimension 1 states are 1-tuples).  Kernels are
accessed lazily through a neighbor function; nothing is materialized until a
`Truncation` pins down a finite ball, inside which the kernel becomes a
substochastic sparse matrix (mass leaving the ball is killed).  Killing only
removes mass, so every truncated quantity is a lower bound on its true value.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

State = tuple[int, ...]

ROW_SUM_TOL = 1e-12


def parse_state(text: str) -> State:
    """Parse "3" or "1,-2" into an integer tuple state."""
    parts = [p for p in text.strip().split(",") if p != ""]
    if not parts:
        raise ValueError(f"empty state string: {text!r}")
    return tuple(int(p) for p in parts)


def format_state(state: State) -> str:
    return ",".join(str(c) for c in state)


def origin(dimension: int) -> State:
    return (0,) * dimension


@dataclass(frozen=True)
class Kernel:
    """Irreducible transition law, given as a lazy neighbor generator.

    neighbor_fn must return a finite, deterministic list of
    (state, probability) pairs sorted by state.  `max_step` bounds the
    graph-distance displacement of a single step and feeds the exactness
    rule for truncated quantities.  Translation-invariant lattice kernels
    additionally carry a step table so simulation can vectorize moves.
    """

    neighbor_fn: Callable[[State], list[tuple[State, float]]]
    dimension: int | None
    name: str = "kernel"
    max_step: int = 1
    steps: np.ndarray | None = None        # (K, d) int64, lexicographically sorted
    step_probs: np.ndarray | None = None   # (K,) float, aligned with steps
    _step_cum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.steps is not None:
            cum = np.cumsum(self.step_probs)
            cum[-1] = 1.0
            object.__setattr__(self, "_step_cum", cum)

    @property
    def translation_invariant(self) -> bool:
        return self.steps is not None

    def neighbors(self, x: State) -> list[tuple[State, float]]:
        return self.neighbor_fn(x)

    def neighbor_arrays(self, x: State) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor states as an (K, d) array plus the cumulative-prob vector."""
        row = self.neighbor_fn(x)
        states = np.array([s for s, _ in row], dtype=np.int64)
        cum = np.cumsum([p for _, p in row])
        cum[-1] = 1.0
        return states, cum


def lattice_kernel(steps: Sequence[State], probs: Sequence[float], name: str) -> Kernel:
    """Translation-invariant kernel on Z^d with the given step distribution."""
    order = sorted(range(len(steps)), key=lambda i: steps[i])
    steps_arr = np.array([steps[i] for i in order], dtype=np.int64)
    probs_arr = np.array([probs[i] for i in order], dtype=float)
    d = steps_arr.shape[1]
    pairs = [(tuple(int(c) for c in steps_arr[i]), float(probs_arr[i])) for i in range(len(order))]

    def neighbor_fn(x: State) -> list[tuple[State, float]]:
        return [(tuple(x[j] + s[j] for j in range(d)), p) for s, p in pairs]

    max_step = int(np.abs(steps_arr).sum(axis=1).max())
    return Kernel(neighbor_fn, d, name=name, max_step=max_step,
                  steps=steps_arr, step_probs=probs_arr)


def kernel_from_edge_list(lines: Iterable[str], name: str = "edge_list") -> Kernel:
    """Build a kernel from "x y p" lines; states written as "i" or "i,j".

    The file describes a finite window of a possibly infinite kernel: states
    that appear only as targets have no outgoing edges and act as killing
    boundary.  Duplicate edges are rejected.
    """
    table: dict[State, list[tuple[State, float]]] = {}
    dim: int | None = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected 'x y p', got {raw!r}")
        x, y = parse_state(fields[0]), parse_state(fields[1])
        p = float(fields[2])
        if dim is None:
            dim = len(x)
        if len(x) != dim or len(y) != dim:
            raise ValueError(f"line {lineno}: inconsistent state dimension")
        if not 0.0 < p <= 1.0:
            raise ValueError(f"line {lineno}: probability {p} outside (0, 1]")
        row = table.setdefault(x, [])
        if any(s == y for s, _ in row):
            raise ValueError(f"line {lineno}: duplicate edge {x} -> {y}")
        row.append((y, p))
    if not table:
        raise ValueError("edge list is empty")
    for x in table:
        table[x].sort()

    def neighbor_fn(x: State) -> list[tuple[State, float]]:
        return table.get(x, [])

    return Kernel(neighbor_fn, dim, name=name)


@dataclass(frozen=True)
class Truncation:
    """Graph-distance ball; mass stepping outside it is killed."""

    center: State
    radius: int
    boundary_policy: str = "kill"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.boundary_policy != "kill":
            raise ValueError(f"unsupported boundary policy {self.boundary_policy!r}")


class TruncatedKernel:
    """Kernel restricted to a ball, as a substochastic sparse matrix.

    The ball is grown by BFS along outgoing edges, so any state reachable
    from x in n steps sits within distance(center -> x) + n of the center;
    that triangle inequality is what certifies exactness of matrix powers.
    """

    def __init__(self, kernel: Kernel, trunc: Truncation):
        self.kernel = kernel
        self.truncation = trunc
        dist: dict[State, int] = {trunc.center: 0}
        frontier = deque([trunc.center])
        while frontier:
            x = frontier.popleft()
            if dist[x] == trunc.radius:
                continue
            for y, _ in kernel.neighbors(x):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    frontier.append(y)
        self.states: list[State] = sorted(dist)
        self.index: dict[State, int] = {s: i for i, s in enumerate(self.states)}
        self.distance = dist
        n = len(self.states)
        rows, cols, vals = [], [], []
        for i, x in enumerate(self.states):
            for y, p in kernel.neighbors(x):
                j = self.index.get(y)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(p)
        self.matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.center_index = self.index[trunc.center]

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, x: State) -> bool:
        return x in self.index

    def exact_for(self, x: State, n: int) -> bool:
        """True iff every n-step path from x provably stays inside the ball."""
        if x not in self.index:
            return False
        return self.distance[x] + n * self.kernel.max_step <= self.truncation.radius

    def unit_vector(self, x: State) -> np.ndarray:
        v = np.zeros(len(self.states))
        v[self.index[x]] = 1.0
        return v


@dataclass(frozen=True)
class TruncatedValue:
    """Numeric result plus whether the truncation guarantees exactness.

    When `exact` is False the value is still a certified lower bound (the
    kill boundary only removes probability mass).
    """

    value: float
    exact: bool

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class StochasticCheck:
    passed: bool
    first_offender: State | None = None
    row_sum: float | None = None
    message: str = ""


def verify_stochastic(kernel: Kernel, states: Sequence[State]) -> StochasticCheck:
    """Check that each listed state's row has positive entries summing to 1."""
    if not states:
        raise ValueError("states must be nonempty")
    for x in states:
        row = kernel.neighbors(x)
        for y, p in row:
            if not 0.0 < p <= 1.0:
                return StochasticCheck(False, x, sum(p for _, p in row),
                                       f"probability {p} to {y} outside (0, 1]")
        total = sum(p for _, p in row)
        if abs(total - 1.0) > ROW_SUM_TOL:
            return StochasticCheck(False, x, total,
                                   f"row sum {total!r} differs from 1")
    return StochasticCheck(True)


def n_step_probability(kernel: Kernel, x: State, y: State, n: int,
                       trunc: Truncation) -> TruncatedValue:
    """(x, y) entry of the n-th power of the truncated kernel.

    Exact whenever distance(center -> x) + n * max_step <= radius; otherwise
    the returned value is a lower bound and is flagged as such.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    tk = TruncatedKernel(kernel, trunc)
    if x not in tk or y not in tk:
        raise ValueError(f"state outside truncation ball: {x if x not in tk else y}")
    w = tk.unit_vector(y)
    for _ in range(n):
        w = tk.matrix @ w
    return TruncatedValue(float(w[tk.index[x]]), tk.exact_for(x, n))


def green_partial_sum(kernel: Kernel, x: State, y: State, z: float, N: int,
                      trunc: Truncation) -> TruncatedValue:
    """Partial sum sum_{n<=N} p^(n)(x,y) z^n over the truncated kernel."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if z <= 0:
        raise ValueError("z must be positive")
    tk = TruncatedKernel(kernel, trunc)
    if x not in tk or y not in tk:
        raise ValueError(f"state outside truncation ball: {x if x not in tk else y}")
    ix = tk.index[x]
    w = tk.unit_vector(y)
    acc = w[ix]
    zn = 1.0
    for _ in range(N):
        w = tk.matrix @ w
        zn *= z
        acc += w[ix] * zn
    return TruncatedValue(float(acc), tk.exact_for(x, N))
