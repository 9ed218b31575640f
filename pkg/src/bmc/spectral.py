"""Spectral radius estimation and multiplicative-drift certificate checks.

Three routes to rho(P): the closed form for nearest-neighbor lattice walks,
power iteration on a truncated window, and diagonal return probabilities.
The truncation kills mass, so the latter two are certified lower bounds.

Certificate inequalities (Pf <= t*f, and the branching variant
Pf <= f/m) are checked with per-state margins normalized by f(x).  The
normalization keeps the check invariant under rescaling f (both sides scale
equally) and keeps it meaningful when a geometric f spans dozens of orders
of magnitude across the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

import numpy as np

from .kernel import Kernel, State, Truncation, TruncatedKernel, parse_state

if TYPE_CHECKING:
    from .branching import OffspringLawField

CERT_TOL = 1e-12

CLOSED_FORM = "closed_form"
POWER_ITERATION = "power_iteration"
DIAGONAL_RETURN = "diagonal_return"


class PowerIterationError(RuntimeError):
    """Raised when power iteration fails to converge; carries last estimates."""

    def __init__(self, message: str, last_estimates: tuple[float, float]):
        super().__init__(message)
        self.last_estimates = last_estimates


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    method: str
    radius_used: int | None
    is_lower_bound: bool

    def __post_init__(self):
        if not 0.0 < self.value <= 1.0 + 1e-9:
            raise ValueError(f"spectral radius estimate {self.value} outside (0, 1]")


def rho_closed_form_lattice(drift: Sequence[tuple[float, float]],
                            d: int | None = None) -> SpectralEstimate:
    """rho = 2 * sum_i sqrt(p_i+ * p_i-) for a nearest-neighbor walk on Z^d."""
    if d is not None and d != len(drift):
        raise ValueError(f"dimension {d} does not match {len(drift)} drift pairs")
    total = 0.0
    value = 0.0
    for pp, pm in drift:
        if pp <= 0 or pm <= 0:
            raise ValueError("all step probabilities must be positive")
        total += pp + pm
        value += math.sqrt(pp * pm)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"step probabilities sum to {total!r}, expected 1")
    return SpectralEstimate(2.0 * value, CLOSED_FORM, None, is_lower_bound=False)


def rho_power_iteration(kernel: Kernel, trunc: Truncation,
                        max_iters: int = 200_000, tol: float = 1e-9) -> SpectralEstimate:
    """Dominant eigenvalue of the truncated substochastic operator.

    Starts from the uniform positive vector, renormalizes in max-norm, and
    reads the eigenvalue off the center state as sqrt((P^2 v)(c) / v(c)).
    The two-step ratio is used because lattice truncations have period 2:
    eigenvalues come in +/- pairs and the one-step center ratio oscillates
    instead of converging.  Converged when successive estimates differ by
    less than `tol` AND the eigen-residual ||P^2 v - est^2 v||_inf is below
    1000*tol.  The residual gate matters: for large windows the killing
    boundary's mass deficit stays below float precision at the center for
    hundreds of steps, during which successive ratios sit at exactly 1 and
    a difference test alone would declare convergence on that plateau.
    """
    if trunc.radius < 1:
        raise ValueError("power iteration needs radius >= 1")
    tk = TruncatedKernel(kernel, trunc)
    M = tk.matrix
    c = tk.center_index
    v = np.ones(len(tk))
    prev = math.inf
    res_tol = max(1e3 * tol, 1e-12)
    for _ in range(max_iters):
        u = M @ (M @ v)
        if v[c] <= 0.0 or u[c] <= 0.0:
            raise PowerIterationError(
                "center component vanished; window too small or kernel degenerate",
                (prev, 0.0))
        est = math.sqrt(u[c] / v[c])
        residual = float(np.abs(u - est * est * v).max())
        if abs(est - prev) < tol and residual < res_tol:
            return SpectralEstimate(min(est, 1.0), POWER_ITERATION,
                                    trunc.radius, is_lower_bound=True)
        prev = est
        v = u / u.max()
    raise PowerIterationError(
        f"no convergence within {max_iters} iterations; last estimates "
        f"{prev!r} and {est!r}", (prev, est))


def rho_diagonal_return(kernel: Kernel, x: State, n_max: int,
                        trunc: Truncation) -> SpectralEstimate:
    """max over n <= n_max of p^(n)(x,x)^(1/n), skipping zero returns.

    Periodic chains hit p^(n)(x,x) = 0 for off-parity n; those terms are
    skipped (the limsup over the full sequence equals the sup over the
    positive subsequence).  Always a lower bound on rho.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    tk = TruncatedKernel(kernel, trunc)
    if x not in tk:
        raise ValueError(f"state {x} outside truncation ball")
    if not tk.exact_for(x, n_max):
        raise ValueError(
            f"radius {trunc.radius} is not exact for {n_max} steps from {x}")
    ix = tk.index[x]
    w = tk.unit_vector(x)
    best = 0.0
    for n in range(1, n_max + 1):
        w = tk.matrix @ w
        p_n = float(w[ix])
        if p_n > 0.0:
            best = max(best, p_n ** (1.0 / n))
    if best == 0.0:
        raise ValueError(f"no positive return probability at {x} up to n_max={n_max}")
    return SpectralEstimate(best, DIAGONAL_RETURN, trunc.radius, is_lower_bound=True)


@dataclass(frozen=True)
class Certificate:
    """Strictly positive f on a window with a claimed level t (Pf <= t*f).

    f is normalized so that f(base_point) = 1; the normalization is a
    convention only and does not affect any check.
    """

    f: Mapping[State, float]
    level: float
    base_point: State
    window: Truncation | None = None

    def __post_init__(self):
        if self.level <= 0:
            raise ValueError("certificate level must be positive")
        if self.base_point not in self.f:
            raise ValueError("base point missing from certificate window")
        for x, v in self.f.items():
            if v <= 0:
                raise ValueError(f"certificate not strictly positive at {x}: {v}")
        base = self.f[self.base_point]
        if abs(base - 1.0) > 1e-9:
            normalized = {x: v / base for x, v in self.f.items()}
            object.__setattr__(self, "f", normalized)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    worst_margin: float
    argmin: State | None
    checked: int
    excluded: int


@dataclass(frozen=True)
class LyapunovCheckResult:
    passed: bool
    inequality_holds: bool
    has_supercritical_site: bool
    worst_margin: float
    argmin: State | None
    checked: int
    excluded: int


def _interior_margins(kernel: Kernel, f: Mapping[State, float],
                      rhs: Callable[[State], float]) -> tuple[float, State | None, int, int]:
    """Worst of rhs(x) - Pf(x)/f(x) over states whose neighbors stay in f's domain."""
    worst = math.inf
    argmin = None
    checked = 0
    excluded = 0
    for x, fx in f.items():
        row = kernel.neighbors(x)
        try:
            pf = sum(p * f[y] for y, p in row)
        except KeyError:
            excluded += 1
            continue
        margin = rhs(x) - pf / fx
        checked += 1
        if margin < worst:
            worst = margin
            argmin = x
    if checked == 0:
        raise ValueError("no checkable states: every window state has a neighbor "
                         "escaping the window")
    return worst, argmin, checked, excluded


def check_superharmonic(kernel: Kernel, cert: Certificate,
                        slack: float = 0.0) -> CheckResult:
    """Verify Pf(x) <= t*f(x) on the interior of the certificate window.

    Margins are relative: (t*f(x) - Pf(x)) / f(x).  Boundary states whose
    neighbors escape the window are excluded and counted.
    """
    worst, argmin, checked, excluded = _interior_margins(
        kernel, cert.f, lambda x: cert.level)
    return CheckResult(worst >= -(CERT_TOL + slack), worst, argmin, checked, excluded)


def lyapunov_transience_check(kernel: Kernel, f: Mapping[State, float],
                              laws: "OffspringLawField", window: Truncation,
                              slack: float = 0.0) -> LyapunovCheckResult:
    """Verify the transience certificate Pf(x) <= f(x)/m(x) on a window.

    Checks two things separately: the inequality on all interior window
    states, and the existence of at least one window state with mean
    offspring above 1 (without it the certificate proves nothing).
    """
    tk = TruncatedKernel(kernel, window)
    domain = {x: f[x] for x in tk.states if x in f}
    missing = [x for x in tk.states if x not in f]
    if missing:
        raise ValueError(f"certificate function undefined at window state {missing[0]}")
    worst, argmin, checked, excluded = _interior_margins(
        kernel, domain, lambda x: 1.0 / laws.mean_at(x))
    inequality = worst >= -(CERT_TOL + slack)
    supercritical = any(laws.mean_at(x) > 1.0 for x in tk.states)
    return LyapunovCheckResult(inequality and supercritical, inequality,
                               supercritical, worst, argmin, checked, excluded)


def geometric_f(lambdas: Sequence[float], window: Iterable[State],
                base_point: State) -> dict[State, float]:
    """Tabulate f(x) = prod_i lambda_i^(x_i) on a window, normalized at base."""
    lam = [float(v) for v in lambdas]
    base = math.prod(lv ** c for lv, c in zip(lam, base_point))
    return {x: math.prod(lv ** c for lv, c in zip(lam, x)) / base for x in window}


def fit_geometric_certificate(kernel: Kernel, window: Truncation,
                              grid_points: int = 401,
                              lambda_span: tuple[float, float] = (1e-2, 1e2)) -> Certificate:
    """Grid-search lambda per dimension minimizing the level of f = prod lambda_i^(x_i).

    Only the geometric family is searched (optimal for homogeneous lattice
    walks); requires a translation-invariant kernel.  The achieved level is
    stored on the returned certificate.
    """
    if not kernel.translation_invariant:
        raise ValueError("geometric certificate search needs a translation-invariant kernel")
    d = kernel.dimension
    grid = np.exp(np.linspace(math.log(lambda_span[0]), math.log(lambda_span[1]), grid_points))
    steps = kernel.steps
    probs = kernel.step_probs
    best_level = math.inf
    best_lam: tuple[float, ...] | None = None

    def search(prefix: tuple[float, ...]):
        nonlocal best_level, best_lam
        if len(prefix) == d - 1:
            # vectorize the innermost dimension
            levels = np.zeros(grid_points)
            for s, p in zip(steps, probs):
                factor = math.prod(lv ** int(c) for lv, c in zip(prefix, s[:-1]))
                levels += p * factor * grid ** int(s[-1])
            i = int(np.argmin(levels))
            if levels[i] < best_level:
                best_level = float(levels[i])
                best_lam = prefix + (float(grid[i]),)
        else:
            for lv in grid:
                search(prefix + (float(lv),))

    search(())
    tk = TruncatedKernel(kernel, window)
    f = geometric_f(best_lam, tk.states, window.center)
    return Certificate(f, best_level, window.center, window)


def load_certificate(lines: Iterable[str], level: float, base_point: State,
                     window: Truncation | None = None) -> Certificate:
    """Read a certificate from "state value" lines."""
    f: dict[State, float] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected 'state value', got {raw!r}")
        x = parse_state(fields[0])
        if x in f:
            raise ValueError(f"line {lineno}: duplicate state {x}")
        f[x] = float(fields[1])
    return Certificate(f, level, base_point, window)
