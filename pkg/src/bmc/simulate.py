"""Monte Carlo engine for branching particle clouds.

Two dynamics: the plain cloud (every particle branches and moves every
generation) and the absorbed-origin variant where particles reaching a
designated origin after the first time step freeze there and stop
reproducing.  Frozen particles are kept as a counter, not as cloud members.

Clouds are stored as canonically sorted integer position arrays; all
randomness is drawn from the counter-based streams in `rng`, so a trial is a
pure function of (seed, trial_index) and per-particle draws do not depend on
iteration order or scheduling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, IO, Mapping, Sequence

import numpy as np

from .branching import OffspringLawField, find_supercritical_k
from .kernel import Kernel, State, Truncation, origin as lattice_origin
from .rng import TrialStreams

FValues = Callable[[np.ndarray], np.ndarray] | Mapping[State, float]


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 100
    particle_cap: int = 10 ** 6
    trials: int = 1000
    seed: int = 0
    visit_threshold: int = 10

    def __post_init__(self):
        for name in ("horizon", "particle_cap", "trials", "visit_threshold"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(eq=False)
class ParticleCloud:
    """Multiset of particle positions at one generation.

    positions: (n, d) int64 array in canonical (lexicographic) order.  When
    the particle cap censors a generation, `total_size` still counts the
    particles that were produced but not stored.  Optional integer tags ride
    along with particles and are inherited by offspring (used by the
    restarted-subprocess construction).
    """

    positions: np.ndarray
    generation: int
    absorbed_at_origin: int = 0
    censored: bool = False
    total_size: int = -1
    tags: np.ndarray | None = None

    def __post_init__(self):
        if self.total_size < 0:
            self.total_size = len(self.positions)

    @classmethod
    def start(cls, x: State, tag: int | None = None) -> "ParticleCloud":
        pos = np.array([x], dtype=np.int64)
        tags = None if tag is None else np.array([tag], dtype=np.int64)
        return cls(pos, 0, tags=tags)

    @property
    def stored_size(self) -> int:
        return len(self.positions)

    def count_at(self, x: State) -> int:
        target = np.asarray(x, dtype=np.int64)
        return int((self.positions == target).all(axis=1).sum())


def _canonical(pos: np.ndarray, tags: np.ndarray | None):
    keys = [pos[:, j] for j in range(pos.shape[1] - 1, -1, -1)]
    if tags is not None:
        keys.insert(0, tags)
    order = np.lexsort(keys)
    return pos[order], (None if tags is None else tags[order])


def _row_group_bounds(pos: np.ndarray) -> list[tuple[int, int]]:
    """[start, stop) runs of equal rows in a canonically sorted array."""
    n = len(pos)
    if n == 0:
        return []
    change = np.nonzero((pos[1:] != pos[:-1]).any(axis=1))[0] + 1
    bounds = [0, *change.tolist(), n]
    return list(zip(bounds[:-1], bounds[1:]))


def _advance(pos: np.ndarray, tags: np.ndarray | None, generation: int,
             kernel: Kernel, laws: OffspringLawField,
             streams: TrialStreams) -> tuple[np.ndarray, np.ndarray | None]:
    """Branch and move every particle once; returns unsorted children."""
    g = streams.generation(generation)
    n = len(pos)
    u_branch = g.random(n)
    if laws.is_constant:
        ks = laws.default.sample_inverse(u_branch)
    else:
        ks = np.empty(n, dtype=np.int64)
        for start, stop in _row_group_bounds(pos):
            law = laws.law_at(tuple(int(c) for c in pos[start]))
            ks[start:stop] = law.sample_inverse(u_branch[start:stop])
    children = np.repeat(pos, ks, axis=0)
    ctags = None if tags is None else np.repeat(tags, ks)
    u_move = g.random(len(children))
    if kernel.translation_invariant:
        idx = np.searchsorted(kernel._step_cum, u_move, side="right")
        newpos = children + kernel.steps[idx]
    else:
        newpos = np.empty_like(children)
        for start, stop in _row_group_bounds(children):
            x = tuple(int(c) for c in children[start])
            nbr_states, cum = kernel.neighbor_arrays(x)
            if len(nbr_states) == 0:
                raise ValueError(f"state {x} has no outgoing edges")
            idx = np.searchsorted(cum, u_move[start:stop], side="right")
            newpos[start:stop] = nbr_states[idx]
    return newpos, ctags


def step_bmc(cloud: ParticleCloud, kernel: Kernel, laws: OffspringLawField,
             streams: TrialStreams, particle_cap: int = 10 ** 6) -> ParticleCloud:
    """One generation: each particle spawns k ~ mu(x) children, children move.

    If the new generation exceeds `particle_cap` the cloud is censored: the
    overflow is counted in total_size but only the first cap positions (in
    canonical order) are stored.
    """
    if cloud.censored:
        raise ValueError("cannot step a censored cloud")
    newpos, ctags = _advance(cloud.positions, cloud.tags, cloud.generation,
                             kernel, laws, streams)
    total = len(newpos)
    newpos, ctags = _canonical(newpos, ctags)
    censored = total > particle_cap
    if censored:
        newpos = newpos[:particle_cap]
        ctags = None if ctags is None else ctags[:particle_cap]
    return ParticleCloud(newpos, cloud.generation + 1, cloud.absorbed_at_origin,
                         censored, total, ctags)


def step_bmc_star(cloud: ParticleCloud, kernel: Kernel, laws: OffspringLawField,
                  x0: State, streams: TrialStreams,
                  particle_cap: int = 10 ** 6) -> ParticleCloud:
    """BMC step with an absorbing origin active from the first step on.

    Children landing on x0 are removed from the cloud and counted in
    absorbed_at_origin; they never move or branch again.  The starting
    particle itself branches and moves normally at time 0 even if it sits
    at x0 (absorption starts after the first time step).
    """
    if cloud.censored:
        raise ValueError("cannot step a censored cloud")
    newpos, ctags = _advance(cloud.positions, cloud.tags, cloud.generation,
                             kernel, laws, streams)
    target = np.asarray(x0, dtype=np.int64)
    arrived = (newpos == target).all(axis=1)
    n_arrived = int(arrived.sum())
    if n_arrived:
        keep = ~arrived
        newpos = newpos[keep]
        ctags = None if ctags is None else ctags[keep]
    total = len(newpos)
    newpos, ctags = _canonical(newpos, ctags)
    censored = total > particle_cap
    if censored:
        newpos = newpos[:particle_cap]
        ctags = None if ctags is None else ctags[:particle_cap]
    return ParticleCloud(newpos, cloud.generation + 1,
                         cloud.absorbed_at_origin + n_arrived,
                         censored, total, ctags)


@dataclass
class TrialSummary:
    """Per-generation record of one trial.

    visits_to_target[g] is the particle count at the target at generation g
    (absorbed-origin mode: the cumulative frozen count, i.e. the occupation
    of the origin).  nu_sample is only present in absorbed-origin mode.
    """

    visits_to_target: list[int]
    cloud_sizes: list[int]
    nu_sample: int | None
    censored: bool
    final_size: int
    q_trace: list[float] | None = None


def _f_values(f: FValues, pos: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.asarray(f(pos), dtype=float)
    try:
        return np.array([f[tuple(int(c) for c in row)] for row in pos], dtype=float)
    except KeyError as exc:
        raise ValueError(f"position outside certificate window: {exc}") from exc


def lyapunov_statistic(cloud: ParticleCloud, f: FValues,
                       x0: State | None = None) -> float:
    """Q(n) = sum of f over all particles; frozen particles contribute f(x0)."""
    q = float(_f_values(f, cloud.positions).sum()) if cloud.stored_size else 0.0
    if cloud.absorbed_at_origin:
        if x0 is None:
            raise ValueError("absorbed particles present but no origin given")
        q += cloud.absorbed_at_origin * float(
            _f_values(f, np.array([x0], dtype=np.int64))[0])
    return q


def geometric_fn(lambdas: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized f(x) = prod_i lambda_i^(x_i) for integer position arrays."""
    lam = np.asarray(lambdas, dtype=float)

    def f(pos: np.ndarray) -> np.ndarray:
        return np.prod(lam[None, :] ** pos, axis=1)

    return f


def _run_trial(kernel: Kernel, laws: OffspringLawField, x_s: State,
               cfg: SimConfig, trial_index: int, *,
               target: State | None = None, star_origin: State | None = None,
               f: FValues | None = None,
               stop_at_visits: int | None = None) -> TrialSummary:
    streams = TrialStreams(cfg.seed, trial_index)
    star = star_origin is not None
    cloud = ParticleCloud.start(x_s)
    visits: list[int] = []
    sizes: list[int] = []
    q_trace: list[float] | None = [] if f is not None else None

    def record(c: ParticleCloud):
        if star:
            visits.append(c.absorbed_at_origin)
            sizes.append(c.total_size + c.absorbed_at_origin)
        else:
            visits.append(c.count_at(target))
            sizes.append(c.total_size)
        if q_trace is not None:
            q_trace.append(lyapunov_statistic(c, f, star_origin))

    record(cloud)
    for _ in range(cfg.horizon):
        if star:
            cloud = step_bmc_star(cloud, kernel, laws, star_origin, streams,
                                  cfg.particle_cap)
        else:
            cloud = step_bmc(cloud, kernel, laws, streams, cfg.particle_cap)
        record(cloud)
        if cloud.censored:
            break
        if stop_at_visits is not None and sum(visits[1:]) >= stop_at_visits:
            break
        if star and cloud.stored_size == 0:
            # everything is frozen at the origin; nothing can change anymore
            break
    return TrialSummary(
        visits_to_target=visits,
        cloud_sizes=sizes,
        nu_sample=cloud.absorbed_at_origin if star else None,
        censored=cloud.censored,
        final_size=sizes[-1],
        q_trace=q_trace,
    )


def run_bmc_trial(kernel: Kernel, laws: OffspringLawField, x_s: State,
                  target: State, cfg: SimConfig, trial_index: int) -> TrialSummary:
    """Evolve a cloud from x_s for cfg.horizon generations or until censoring."""
    return _run_trial(kernel, laws, x_s, cfg, trial_index, target=target)


def run_bmc_star_trial(kernel: Kernel, laws: OffspringLawField, x0: State,
                       cfg: SimConfig, trial_index: int,
                       x_s: State | None = None,
                       f: FValues | None = None) -> TrialSummary:
    """Absorbed-origin trial; nu_sample is the frozen count at the horizon.

    The horizon truncates the limit that defines nu, so nu_sample is a
    censored-from-below observation of it.  With `f` given, the per
    generation statistic Q(n) is traced as well.
    """
    return _run_trial(kernel, laws, x_s if x_s is not None else x0, cfg,
                      trial_index, star_origin=x0, f=f)


def _wald_ci(p: float, n: int) -> tuple[float, float]:
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return (max(0.0, p - half), min(1.0, p + half))


@dataclass(frozen=True)
class AlphaEstimate:
    """Estimated probability of reaching the visit threshold ("alpha proxy").

    Censoring makes the infinite-time event undecidable for some trials;
    `optimistic` counts those as successes, `pessimistic` as failures.
    """

    state: State
    trials: int
    successes: int
    censored_without_threshold: int
    optimistic: float
    pessimistic: float
    ci_optimistic: tuple[float, float]
    ci_pessimistic: tuple[float, float]
    censoring_rate: float
    visit_threshold: int
    horizon: int


def estimate_alpha(kernel: Kernel, laws: OffspringLawField, x: State,
                   cfg: SimConfig, stop_at_threshold: bool = True) -> AlphaEstimate:
    """Fraction of trials whose cumulative visit count to x reaches the threshold.

    Trials start at x; visits are counted from generation 1 on.  With
    stop_at_threshold a trial ends as soon as it succeeds (the remaining
    generations cannot change the outcome).
    """
    successes = 0
    censored_unreached = 0
    censored_any = 0
    v = cfg.visit_threshold
    for t in range(cfg.trials):
        s = _run_trial(kernel, laws, x, cfg, t, target=x,
                       stop_at_visits=v if stop_at_threshold else None)
        reached = sum(s.visits_to_target[1:]) >= v
        if reached:
            successes += 1
        elif s.censored:
            censored_unreached += 1
        if s.censored:
            censored_any += 1
    n = cfg.trials
    opt = (successes + censored_unreached) / n
    pess = successes / n
    return AlphaEstimate(
        state=x, trials=n, successes=successes,
        censored_without_threshold=censored_unreached,
        optimistic=opt, pessimistic=pess,
        ci_optimistic=_wald_ci(opt, n), ci_pessimistic=_wald_ci(pess, n),
        censoring_rate=censored_any / n,
        visit_threshold=v, horizon=cfg.horizon,
    )


@dataclass(frozen=True)
class NuEstimate:
    mean: float
    se: float
    trials: int
    censoring_rate: float
    max_sample: int


def estimate_nu(kernel: Kernel, laws: OffspringLawField, x0: State,
                cfg: SimConfig, x_s: State | None = None) -> NuEstimate:
    """Sample mean of the absorbed count at the horizon over cfg.trials trials."""
    samples = np.empty(cfg.trials)
    censored = 0
    for t in range(cfg.trials):
        s = run_bmc_star_trial(kernel, laws, x0, cfg, t, x_s=x_s)
        samples[t] = s.nu_sample
        censored += s.censored
    se = float(samples.std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
    return NuEstimate(float(samples.mean()), se, cfg.trials,
                      censored / cfg.trials, int(samples.max()))


def _most_occupied(positions: np.ndarray) -> State:
    """Most frequent row of a canonically sorted position array (ties: smallest)."""
    best_count = 0
    best: State | None = None
    for start, stop in _row_group_bounds(positions):
        if stop - start > best_count:
            best_count = stop - start
            best = tuple(int(c) for c in positions[start])
    if best is None:
        raise ValueError("empty cloud has no occupied site")
    return best


@dataclass
class XiRecord:
    """One restarted subprocess: observed counts at its base site every k steps."""

    start_state: State
    start_count: int
    k: int
    counts: list[int] = field(default_factory=list)
    outcome: str = "running"


@dataclass
class CascadeReport:
    status: str
    restarts: int
    records: list[XiRecord]
    censored: bool
    generations_run: int


def run_xi_cascade(kernel: Kernel, laws: OffspringLawField, cfg: SimConfig,
                   k_max: int, x_s: State | None = None, trial_index: int = 0,
                   max_restarts: int = 100, survive_count: int = 100) -> CascadeReport:
    """Restarted embedded-process construction for the strong-recurrence argument.

    The cloud is observed every k steps (k chosen so that the k-step return
    probability beats m^-k); particles of the watched subprocess that sit
    away from the base site at an observation are dropped from it.  When the
    subprocess dies, it is restarted from the currently most occupied site.

    Resolution is observation-based: the trial runs to the first observation
    at or beyond the horizon, and the active subprocess survives if it is
    alive there (or earlier, once its count reaches `survive_count`, from
    which extinction is negligible).  If the particle cap censors the cloud
    mid-window, the trial resolves by the last completed observation; an
    alive subprocess at that point counts as survived, anything else stays
    unresolved ("censored").
    """
    m = laws.constant_mean
    if m is None or m <= 1.0:
        raise ValueError("cascade construction requires a constant mean m > 1")
    if x_s is None:
        x_s = lattice_origin(kernel.dimension)

    def supercritical_k(x: State) -> int | None:
        return find_supercritical_k(kernel, x, m, k_max, Truncation(x, k_max))

    k_cur = supercritical_k(x_s)
    if k_cur is None:
        return CascadeReport("construction_unavailable", 0, [], False, 0)
    streams = TrialStreams(cfg.seed, trial_index)
    cloud = ParticleCloud.start(x_s, tag=1)
    x_cur = x_s
    records = [XiRecord(x_cur, 1, k_cur)]
    restarts = 0
    next_obs = k_cur
    gen = 0
    status = "unresolved"
    while status == "unresolved":
        cloud = step_bmc(cloud, kernel, laws, streams, cfg.particle_cap)
        gen += 1
        if cloud.censored:
            rec = records[-1]
            if rec.counts and rec.counts[-1] > 0:
                rec.outcome = "survived"
                status = "survived"
            else:
                rec.outcome = "censored"
                status = "censored"
            break
        if gen == next_obs:
            at_base = (cloud.positions == np.asarray(x_cur, dtype=np.int64)).all(axis=1)
            xi = int((at_base & (cloud.tags == 1)).sum())
            records[-1].counts.append(xi)
            if xi >= survive_count or (xi > 0 and gen >= cfg.horizon):
                records[-1].outcome = "survived"
                status = "survived"
            elif xi == 0:
                records[-1].outcome = "extinct"
                if gen >= cfg.horizon:
                    status = "extinct_at_horizon"
                elif restarts >= max_restarts:
                    status = "exhausted_restarts"
                else:
                    x_cur = _most_occupied(cloud.positions)
                    k_cur = supercritical_k(x_cur)
                    if k_cur is None:
                        status = "construction_unavailable"
                    else:
                        restart_mask = (cloud.positions
                                        == np.asarray(x_cur, dtype=np.int64)).all(axis=1)
                        cloud.tags = restart_mask.astype(np.int64)
                        restarts += 1
                        start_count = int(restart_mask.sum())
                        records.append(XiRecord(x_cur, start_count, k_cur))
                        if start_count >= survive_count:
                            # extinction from this size is negligible
                            records[-1].outcome = "survived"
                            status = "survived"
                        else:
                            next_obs = gen + k_cur
            else:
                cloud.tags = (at_base & (cloud.tags == 1)).astype(np.int64)
                next_obs = gen + k_cur
    return CascadeReport(status, restarts, records, cloud.censored, gen)


@dataclass(frozen=True)
class XiFrequency:
    extinct: int
    runs: int
    frequency: float
    se: float


def xi_extinction_frequency(kernel: Kernel, laws: OffspringLawField, x: State,
                            k: int, n_obs: int, n_runs: int, seed: int,
                            particle_cap: int = 10 ** 6,
                            survive_count: int = 200) -> XiFrequency:
    """Empirical extinction frequency of the k-step observed process at x.

    One run: evolve a cloud from x; every k generations keep only the
    particles at x; extinct when none remain within n_obs observations.
    Runs whose count reaches `survive_count` (or that hit the particle cap)
    are declared survivors early; the same rule at every site keeps
    site-to-site comparisons fair.
    """
    cfg = SimConfig(horizon=k * n_obs, particle_cap=particle_cap, trials=n_runs,
                    seed=seed, visit_threshold=1)
    extinct = 0
    for r in range(n_runs):
        streams = TrialStreams(cfg.seed, r)
        cloud = ParticleCloud.start(x)
        dead = False
        for _ in range(n_obs):
            for _ in range(k):
                cloud = step_bmc(cloud, kernel, laws, streams, particle_cap)
                if cloud.censored:
                    break
            if cloud.censored:
                break
            keep = (cloud.positions == np.asarray(x, dtype=np.int64)).all(axis=1)
            cloud.positions = cloud.positions[keep]
            cloud.total_size = len(cloud.positions)
            if cloud.stored_size == 0:
                dead = True
                break
            if cloud.stored_size >= survive_count:
                break
        extinct += dead
    freq = extinct / n_runs
    se = math.sqrt(max(freq * (1.0 - freq), 0.0) / n_runs)
    return XiFrequency(extinct, n_runs, freq, se)


def trials_to_csv(summaries: Sequence[TrialSummary], out: IO[str]) -> None:
    """Write one row per (trial, generation): trial, generation, visits, cloud_size, censored."""
    writer = csv.writer(out)
    writer.writerow(["trial", "generation", "visits", "cloud_size", "censored"])
    for t, s in enumerate(summaries):
        for g, (v, size) in enumerate(zip(s.visits_to_target, s.cloud_sizes)):
            writer.writerow([t, g, v, size, int(s.censored)])
