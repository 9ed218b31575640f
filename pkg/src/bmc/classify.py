"""Verdict logic: transience / recurrence / strong recurrence.

The analytic rules, for constant mean offspring m > 1:

  * exact spectral radius: transient iff m <= 1/rho (ties are transient and
    flagged critical), recurrent iff m > 1/rho; infinite mean is recurrent.
  * lower-bound spectral radius: m > 1/rho_lb proves recurrence (the true
    rho is at least rho_lb); anything else stays Unknown, because truncation
    only ever underestimates rho.
  * verified quasi-transitivity upgrades Recurrent to StronglyRecurrent
    (the zero-one law removes the intermediate regime).

A passing multiplicative-drift certificate proves transience on its own; a
failing one proves nothing.  Monte Carlo evidence never overrides an
analytic verdict, it only annotates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .branching import OffspringLawField
from .exact import enumerate_visit_distributions
from .kernel import Kernel, State, Truncation, TruncatedKernel
from .simulate import AlphaEstimate
from .spectral import (Certificate, LyapunovCheckResult, SpectralEstimate,
                       lyapunov_transience_check)

TRANSIENT = "Transient"
RECURRENT = "Recurrent"
STRONGLY_RECURRENT = "StronglyRecurrent"
UNKNOWN = "Unknown"

# evidence tags
CLOSED_FORM_RHO = "ClosedFormRho"
RHO_LOWER_BOUND = "RhoLowerBound"
CERTIFICATE = "Certificate"
QUASI_TRANSITIVE = "QuasiTransitive"
SIMULATION = "Simulation"
INFINITE_MEAN = "InfiniteMean"

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Verdict:
    verdict: str
    basis: tuple[str, ...]
    critical_flag: bool = False
    evidence: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "basis": list(self.basis),
                "critical_flag": self.critical_flag, "evidence": self.evidence}


def classify_constant_mean(m: float, rho: SpectralEstimate,
                           tol: float = DEFAULT_TOL) -> Verdict:
    """Constant-mean dichotomy: transient iff m <= 1/rho, else recurrent.

    `m` may be math.inf (declared infinite mean), which is recurrent.  With
    a lower-bound rho only the recurrent side can be proven.
    """
    if math.isinf(m):
        return Verdict(RECURRENT, (INFINITE_MEAN,), False, {"m": "infinite"})
    if m <= 1.0:
        raise ValueError("classification requires constant mean offspring m > 1")
    threshold = 1.0 / rho.value
    near = abs(m - threshold) <= tol
    evidence = {"m": m, "rho": rho.value, "rho_method": rho.method,
                "one_over_rho": threshold, "margin": m - threshold, "tol": tol}
    if not rho.is_lower_bound:
        if m <= threshold + tol:
            return Verdict(TRANSIENT, (CLOSED_FORM_RHO,), near, evidence)
        return Verdict(RECURRENT, (CLOSED_FORM_RHO,), near, evidence)
    if m > threshold + tol:
        return Verdict(RECURRENT, (RHO_LOWER_BOUND,), near, evidence)
    return Verdict(UNKNOWN, (RHO_LOWER_BOUND,), near, evidence)


@dataclass(frozen=True)
class SymmetrySpec:
    """Declared symmetries: state bijections preserving kernel and laws.

    orbit_count is the number of orbits of the generated group (math.inf
    when it does not act with finitely many orbits); quasi-transitivity
    needs it finite.
    """

    generators: tuple[Callable[[State], State], ...]
    orbit_of: Callable[[State], int] | None = None
    orbit_count: float = 1


@dataclass(frozen=True)
class SymmetryCheck:
    passed: bool
    states_checked: int
    violations: tuple[tuple[int, State, str], ...] = ()


def verify_symmetry(kernel: Kernel, laws: OffspringLawField, sym: SymmetrySpec,
                    window: Truncation, tol: float = 1e-12) -> SymmetryCheck:
    """Check p(gx, gy) = p(x, y) and mu(gx) = mu(x) for every generator on a window."""
    tk = TruncatedKernel(kernel, window)
    violations: list[tuple[int, State, str]] = []
    for gi, gamma in enumerate(sym.generators):
        for x in tk.states:
            gx = gamma(x)
            row = kernel.neighbors(x)
            mapped = sorted((gamma(y), p) for y, p in row)
            actual = kernel.neighbors(gx)
            if len(mapped) != len(actual) or any(
                    my != ay or abs(mp - ap) > tol
                    for (my, mp), (ay, ap) in zip(mapped, actual)):
                violations.append((gi, x, "kernel rows differ under generator"))
                continue
            if laws.law_at(x).support != laws.law_at(gx).support:
                violations.append((gi, x, "offspring law differs under generator"))
    return SymmetryCheck(not violations, len(tk.states), tuple(violations))


def classify_quasi_transitive(m: float, rho: SpectralEstimate, sym: SymmetrySpec,
                              verification: SymmetryCheck,
                              tol: float = DEFAULT_TOL) -> Verdict:
    """Zero-one law under verified quasi-transitivity: Recurrent becomes Strong.

    Falls back to the plain constant-mean verdict when the symmetry did not
    verify or the orbit count is not finite.
    """
    base = classify_constant_mean(m, rho, tol)
    if not verification.passed or not math.isfinite(sym.orbit_count):
        evidence = dict(base.evidence)
        evidence["symmetry_verified"] = False
        return Verdict(base.verdict, base.basis, base.critical_flag, evidence)
    if base.verdict == RECURRENT:
        evidence = dict(base.evidence)
        evidence["orbit_count"] = sym.orbit_count
        return Verdict(STRONGLY_RECURRENT, base.basis + (QUASI_TRANSITIVE,),
                       base.critical_flag, evidence)
    return Verdict(base.verdict, base.basis + (QUASI_TRANSITIVE,),
                   base.critical_flag, base.evidence)


def transience_by_certificate(kernel: Kernel, f: Mapping[State, float],
                              laws: OffspringLawField, window: Truncation,
                              slack: float = 0.0) -> tuple[Verdict, LyapunovCheckResult]:
    """Transient if Pf <= f/m holds on the window (one-sided: failure proves nothing)."""
    check = lyapunov_transience_check(kernel, f, laws, window, slack=slack)
    evidence = {"worst_margin": check.worst_margin,
                "argmin": check.argmin,
                "checked": check.checked, "excluded": check.excluded,
                "inequality_holds": check.inequality_holds,
                "has_supercritical_site": check.has_supercritical_site}
    if check.passed:
        return Verdict(TRANSIENT, (CERTIFICATE,), False, evidence), check
    return Verdict(UNKNOWN, (CERTIFICATE,), False, evidence), check


@dataclass(frozen=True)
class InvarianceCheck:
    passed: bool
    max_discrepancy: float
    generations_checked: int
    detail: tuple[tuple[int, int, float], ...] = ()   # (n, count, |diff|) violations


def verify_visitlaw_invariance(kernel: Kernel, laws: OffspringLawField,
                               gamma: Callable[[State], State], x: State, y: State,
                               n_max: int, tol: float = 1e-10,
                               cap: int = 10 ** 7) -> InvarianceCheck:
    """Exactly compare visit-count laws from (x, y) and (gamma x, gamma y).

    Both distributions of (number of particles at the target at time n) are
    enumerated exactly for every n <= n_max and compared entrywise.
    """
    if n_max > 3:
        raise ValueError("exact enumeration is limited to n_max <= 3")
    left = enumerate_visit_distributions(kernel, laws, x, y, n_max, cap)
    right = enumerate_visit_distributions(kernel, laws, gamma(x), gamma(y), n_max, cap)
    worst = 0.0
    bad: list[tuple[int, int, float]] = []
    for n in range(n_max + 1):
        a, b = left.per_generation[n], right.per_generation[n]
        for count in set(a) | set(b):
            diff = abs(a.get(count, 0.0) - b.get(count, 0.0))
            worst = max(worst, diff)
            if diff > tol:
                bad.append((n, count, diff))
    return InvarianceCheck(not bad, worst, n_max + 1, tuple(bad))


@dataclass(frozen=True)
class ReconcileThresholds:
    contradiction_alpha: float = 0.5     # pessimistic alpha contradicting Transient
    transient_consistent_max: float = 0.2
    recurrent_consistent_min: float = 0.5
    interior_low: float = 0.1            # heuristic weak-recurrence band
    interior_high: float = 0.9


@dataclass(frozen=True)
class ReconcileReport:
    status: str                          # consistent | contradiction | inconclusive
    notes: tuple[str, ...]


def reconcile(analytic: Verdict, mc: AlphaEstimate,
              thresholds: ReconcileThresholds = ReconcileThresholds()) -> ReconcileReport:
    """Annotate an analytic verdict with Monte Carlo evidence (never override).

    The pessimistic estimate counts only uncensored successes, so it is the
    one that can genuinely contradict transience; shortfalls on the
    recurrent side are attributed to horizon/cap first.
    """
    notes: list[str] = []
    status = "inconclusive"
    if analytic.verdict == TRANSIENT:
        if mc.pessimistic >= thresholds.contradiction_alpha:
            status = "contradiction"
            notes.append(f"analytic Transient but pessimistic alpha "
                         f"{mc.pessimistic:.3f} >= {thresholds.contradiction_alpha}")
        elif mc.optimistic <= thresholds.transient_consistent_max:
            status = "consistent"
        else:
            notes.append("optimistic estimate inflated by censoring; "
                         "horizon/cap suspected")
    elif analytic.verdict in (RECURRENT, STRONGLY_RECURRENT):
        if mc.pessimistic >= thresholds.recurrent_consistent_min:
            status = "consistent"
        else:
            notes.append("inconclusive: horizon/cap suspected "
                         f"(pessimistic alpha {mc.pessimistic:.3f}, censoring rate "
                         f"{mc.censoring_rate:.3f})")
    else:
        notes.append("no analytic verdict to compare against")
    if (thresholds.interior_low <= mc.pessimistic
            and mc.optimistic <= thresholds.interior_high
            and analytic.verdict in (RECURRENT, UNKNOWN)):
        notes.append("weakly-recurrent-consistent (heuristic: interior alpha "
                     "estimates; not a verdict)")
    return ReconcileReport(status, tuple(notes))
