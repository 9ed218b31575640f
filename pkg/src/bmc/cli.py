"""Command-line surface: preset registry, experiment pipelines, JSON reports.

Exit codes: 0 success, 2 configuration/validation error, 3 inconclusive
result under --strict (e.g. an Unknown verdict or a failed certificate).

Reports are JSON with sorted keys; the only field that changes between two
runs of the same config and seed is the top-level "timestamp" object (wall
clock and runtime), so replays are byte-identical after dropping it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone

from . import classify as cl
from .branching import find_supercritical_k
from .config import (ConfigError, ExperimentConfig, build_config, load_config,
                     mean_value, resolve_kernel, resolve_laws, resolve_state,
                     sim_config)
from .kernel import Truncation, TruncatedKernel, verify_stochastic
from .presets import PRESETS
from .simulate import (estimate_alpha, estimate_nu, run_bmc_star_trial,
                       run_bmc_trial, run_xi_cascade, trials_to_csv)
from .spectral import (Certificate, check_superharmonic, fit_geometric_certificate,
                       geometric_f, load_certificate, rho_closed_form_lattice,
                       rho_diagonal_return, rho_power_iteration)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3


def _estimate_dict(est) -> dict:
    return {"value": est.value, "method": est.method,
            "radius_used": est.radius_used, "is_lower_bound": est.is_lower_bound}


def _alpha_dict(est) -> dict:
    return {"state": list(est.state), "trials": est.trials,
            "successes": est.successes,
            "censored_without_threshold": est.censored_without_threshold,
            "optimistic": est.optimistic, "pessimistic": est.pessimistic,
            "ci_optimistic": list(est.ci_optimistic),
            "ci_pessimistic": list(est.ci_pessimistic),
            "censoring_rate": est.censoring_rate,
            "visit_threshold": est.visit_threshold, "horizon": est.horizon}


def _preset_info(inst) -> dict | None:
    if inst is None:
        return None
    return {"name": inst.name, "params": inst.params,
            "description": inst.description}


def _rho_estimates(cfg: ExperimentConfig, kernel, inst, center) -> dict:
    out: dict = {}
    if inst is not None:
        out["closed_form"] = _estimate_dict(inst.closed_form_rho())
    out["power_iteration"] = _estimate_dict(
        rho_power_iteration(kernel, Truncation(center, cfg.radius)))
    n_max = max(2, cfg.n_max)
    out["diagonal_return"] = _estimate_dict(
        rho_diagonal_return(kernel, center, n_max, Truncation(center, n_max)))
    return out


def _analytic_rho(cfg, kernel, inst, center):
    if inst is not None:
        return inst.closed_form_rho()
    return rho_power_iteration(kernel, Truncation(center, cfg.radius))


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, int]:
    """Dispatch one experiment; returns (report, exit_code)."""
    t0 = time.perf_counter()
    results: dict = {}
    code = EXIT_OK
    preset_info = None

    if cfg.mode == "presets":
        results["presets"] = {name: {"params": entry["params"],
                                     "description": entry["description"]}
                              for name, entry in PRESETS.items()}
    else:
        kernel, inst = resolve_kernel(cfg)
        preset_info = _preset_info(inst)
        center = resolve_state(cfg.origin or cfg.start, kernel)

        if cfg.mode == "rho":
            results["rho"] = _rho_estimates(cfg, kernel, inst, center)

        elif cfg.mode == "classify":
            m = mean_value(cfg)
            rho = _analytic_rho(cfg, kernel, inst, center)
            results["rho"] = _estimate_dict(rho)
            if inst is not None:
                window = Truncation(center, min(cfg.radius, 25))
                laws_for_sym = resolve_laws(cfg) if not math.isinf(m) else None
                if laws_for_sym is not None:
                    sym_check = cl.verify_symmetry(kernel, laws_for_sym,
                                                   inst.symmetry, window)
                    verdict = cl.classify_quasi_transitive(
                        m, rho, inst.symmetry, sym_check, tol=cfg.tol)
                    results["symmetry"] = {"verified": sym_check.passed,
                                           "states_checked": sym_check.states_checked,
                                           "violations": len(sym_check.violations)}
                else:
                    sym_check = cl.SymmetryCheck(True, 0)
                    verdict = cl.classify_quasi_transitive(
                        m, rho, inst.symmetry, sym_check, tol=cfg.tol)
                    results["symmetry"] = {"verified": True, "states_checked": 0,
                                           "violations": 0,
                                           "note": "laws not checked (infinite mean)"}
            else:
                verdict = cl.classify_constant_mean(m, rho, tol=cfg.tol)
            results["verdict"] = verdict.as_dict()
            if cfg.mc and not math.isinf(m):
                laws = resolve_laws(cfg)
                alpha = estimate_alpha(kernel, laws, center, sim_config(cfg))
                rec = cl.reconcile(verdict, alpha)
                results["mc"] = _alpha_dict(alpha)
                results["reconcile"] = {"status": rec.status, "notes": list(rec.notes)}
            if cfg.strict and verdict.verdict == cl.UNKNOWN:
                code = EXIT_INCONCLUSIVE

        elif cfg.mode == "simulate":
            laws = resolve_laws(cfg)
            scfg = sim_config(cfg)
            summaries = []
            if cfg.star:
                x0 = resolve_state(cfg.origin, kernel)
                x_s = resolve_state(cfg.start, kernel) if cfg.start else x0
                if cfg.csv:
                    summaries = [run_bmc_star_trial(kernel, laws, x0, scfg, t, x_s=x_s)
                                 for t in range(scfg.trials)]
                nu = estimate_nu(kernel, laws, x0, scfg, x_s=x_s)
                results["nu"] = {"mean": nu.mean, "se": nu.se, "trials": nu.trials,
                                 "censoring_rate": nu.censoring_rate,
                                 "max_sample": nu.max_sample}
            else:
                x = resolve_state(cfg.target or cfg.start, kernel)
                alpha = estimate_alpha(kernel, laws, x, scfg,
                                       stop_at_threshold=not cfg.csv)
                results["alpha"] = _alpha_dict(alpha)
                if cfg.csv:
                    summaries = [run_bmc_trial(kernel, laws, x, x, scfg, t)
                                 for t in range(scfg.trials)]
            if cfg.csv:
                with open(cfg.csv, "w", newline="") as fh:
                    trials_to_csv(summaries, fh)
                results["csv"] = cfg.csv

        elif cfg.mode == "certificate":
            laws = None
            window = Truncation(center, cfg.radius)
            if cfg.fit:
                cert = fit_geometric_certificate(kernel, window)
                results["fitted_level"] = cert.level
            elif cfg.lambdas:
                tk = TruncatedKernel(kernel, window)
                f = geometric_f(cfg.lambdas, tk.states, center)
                cert = Certificate(f, cfg.level if cfg.level else 1.0, center, window)
            elif cfg.certificate_file:
                if cfg.level is None and cfg.m is None:
                    raise ConfigError("level: required with certificate_file "
                                      "(or provide m for the branching check)")
                with open(cfg.certificate_file) as fh:
                    cert = load_certificate(fh, cfg.level if cfg.level else 1.0,
                                            center, window)
            else:
                raise ConfigError("certificate: provide certificate_file, "
                                  "lambdas, or fit")
            passed_any = False
            if cfg.level is not None or cfg.fit:
                check = check_superharmonic(kernel, cert, slack=cfg.slack)
                results["superharmonic"] = {
                    "passed": check.passed, "level": cert.level,
                    "worst_margin": check.worst_margin,
                    "argmin": list(check.argmin) if check.argmin else None,
                    "checked": check.checked, "excluded": check.excluded}
                passed_any = passed_any or check.passed
            if cfg.m is not None:
                laws = resolve_laws(cfg)
                verdict, lcheck = cl.transience_by_certificate(
                    kernel, cert.f, laws, window, slack=cfg.slack)
                results["transience"] = verdict.as_dict()
                passed_any = passed_any or verdict.verdict == cl.TRANSIENT
            if cfg.strict and not passed_any:
                code = EXIT_INCONCLUSIVE

        elif cfg.mode == "invariance":
            laws = resolve_laws(cfg)
            if not cfg.shift:
                raise ConfigError("shift: required for invariance mode")
            if kernel.dimension is not None and len(cfg.shift) != kernel.dimension:
                raise ConfigError(f"shift: dimension {len(cfg.shift)} does not "
                                  f"match kernel dimension {kernel.dimension}")
            shift = tuple(int(c) for c in cfg.shift)

            def gamma(state):
                return tuple(c + s for c, s in zip(state, shift))

            x = resolve_state(cfg.start, kernel)
            y = resolve_state(cfg.target, kernel)
            inv = cl.verify_visitlaw_invariance(kernel, laws, gamma, x, y,
                                                min(cfg.n_max, 3))
            results["visitlaw_invariance"] = {
                "passed": inv.passed, "max_discrepancy": inv.max_discrepancy,
                "generations_checked": inv.generations_checked,
                "violations": len(inv.detail)}
            if inst is not None:
                window = Truncation(center, min(cfg.radius, 25))
                sym_check = cl.verify_symmetry(kernel, laws, inst.symmetry, window)
                results["symmetry"] = {"verified": sym_check.passed,
                                       "states_checked": sym_check.states_checked,
                                       "violations": len(sym_check.violations)}
            if cfg.strict and not inv.passed:
                code = EXIT_INCONCLUSIVE

        elif cfg.mode == "cascade":
            laws = resolve_laws(cfg)
            scfg = sim_config(cfg)
            reports = [run_xi_cascade(kernel, laws, scfg, cfg.k_max,
                                      x_s=resolve_state(cfg.start, kernel),
                                      trial_index=t, max_restarts=cfg.max_restarts)
                       for t in range(cfg.meta_trials)]
            survived = sum(r.status == "survived" for r in reports)
            unavailable = sum("unavailable" in r.status for r in reports)
            per_start: dict[str, dict] = {}
            for r in reports:
                for rec in r.records:
                    key = ",".join(str(c) for c in rec.start_state)
                    slot = per_start.setdefault(key, {"starts": 0, "extinct": 0})
                    slot["starts"] += 1
                    slot["extinct"] += rec.outcome == "extinct"
            for slot in per_start.values():
                slot["extinction_frequency"] = slot["extinct"] / slot["starts"]
            results["cascade"] = {
                "meta_trials": cfg.meta_trials,
                "survived": survived,
                "survival_fraction": survived / cfg.meta_trials,
                "construction_unavailable": unavailable,
                "mean_restarts": sum(r.restarts for r in reports) / cfg.meta_trials,
                "max_restarts_seen": max(r.restarts for r in reports),
                "per_start": per_start,
            }
            if cfg.strict and (unavailable == cfg.meta_trials or survived == 0):
                code = EXIT_INCONCLUSIVE

    report = {
        "config": cfg.resolved(),
        "mode": cfg.mode,
        "preset_info": preset_info,
        "results": results,
        "seed": cfg.seed,
        "timestamp": {
            "written_at": datetime.now(timezone.utc).isoformat(),
            "runtime_seconds": time.perf_counter() - t0,
        },
    }
    return report, code


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--preset", help="preset kernel name (see 'presets')")
    p.add_argument("--p", type=float, help="z_drift step-right probability")
    p.add_argument("--d", type=int, help="lattice dimension for zd_* presets")
    p.add_argument("--probs", help="comma-separated p1+,p1-,... for zd_anisotropic")
    p.add_argument("--edge-list", help="kernel from an edge-list file (x y p lines)")
    p.add_argument("--law", help="offspring law, e.g. '1:0.5,2:0.5'")
    p.add_argument("--law-override", action="append", default=None,
                   metavar="STATE=LAW", help="site-dependent law override; repeatable")
    p.add_argument("--m", help="constant mean offspring (> 1) or 'infinite'")
    p.add_argument("--start", help="start state, e.g. '0' or '0,0'")
    p.add_argument("--target", help="target state for visit counting")
    p.add_argument("--origin", help="absorbing origin / window center")
    p.add_argument("--radius", type=int, help="truncation radius (default 200)")
    p.add_argument("--seed", type=int, help="RNG seed (env BMC_SEED; flag wins)")
    p.add_argument("--tol", type=float, help="classification boundary tolerance")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--strict", action="store_const", const=True, default=None,
                   help="exit 3 on inconclusive outcomes")


def _add_sim(p: argparse.ArgumentParser):
    p.add_argument("--trials", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--cap", dest="particle_cap", type=int)
    p.add_argument("--visit-threshold", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmc",
        description="Classify and simulate branching random walks on lattices "
                    "and general countable-state kernels.")
    sub = parser.add_subparsers(dest="mode", required=True)

    sp = sub.add_parser("classify", help="analytic verdict from m and the spectral radius")
    _add_common(sp)
    _add_sim(sp)
    sp.add_argument("--mc", action="store_const", const=True, default=None,
                    help="add a Monte Carlo cross-check to the verdict")

    sp = sub.add_parser("simulate", help="Monte Carlo visit/absorption estimates")
    _add_common(sp)
    _add_sim(sp)
    sp.add_argument("--star", action="store_const", const=True, default=None,
                    help="absorbed-origin dynamics (estimates nu instead of alpha)")
    sp.add_argument("--csv", help="write per-trial CSV here")

    sp = sub.add_parser("rho", help="spectral radius estimates (all methods)")
    _add_common(sp)
    sp.add_argument("--n-max", type=int, help="depth for the diagonal-return bound")

    sp = sub.add_parser("certificate", help="check superharmonic / transience certificates")
    _add_common(sp)
    sp.add_argument("--certificate-file", help="file of 'state value' lines")
    sp.add_argument("--level", type=float, help="level t for Pf <= t f")
    sp.add_argument("--lambdas", help="comma-separated geometric certificate bases")
    sp.add_argument("--fit", action="store_const", const=True, default=None,
                    help="grid-search a geometric certificate")
    sp.add_argument("--slack", type=float, help="extra tolerance for the margin check")

    sp = sub.add_parser("invariance", help="exact visit-law invariance under a shift")
    _add_common(sp)
    sp.add_argument("--shift", help="comma-separated shift vector, e.g. '3' or '1,0'")
    sp.add_argument("--n-max", type=int, help="generations to enumerate (max 3)")

    sp = sub.add_parser("cascade", help="restarted embedded-process construction")
    _add_common(sp)
    _add_sim(sp)
    sp.add_argument("--k-max", type=int, help="max k for the supercritical search")
    sp.add_argument("--meta-trials", type=int)
    sp.add_argument("--max-restarts", type=int)

    sp = sub.add_parser("presets", help="list available preset kernels")
    sp.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def _flags_from_args(args: argparse.Namespace) -> dict:
    flags: dict = {}
    skip = {"config", "mode", "p", "d", "probs", "law_override"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        flags[key] = value
    preset_params = {}
    if getattr(args, "p", None) is not None:
        preset_params["p"] = args.p
    if getattr(args, "d", None) is not None:
        preset_params["d"] = args.d
    if getattr(args, "probs", None) is not None:
        preset_params["probs"] = [float(v) for v in args.probs.split(",")]
    if preset_params:
        flags["preset_params"] = preset_params
    if getattr(args, "law_override", None):
        overrides = {}
        for item in args.law_override:
            state, _, law = item.partition("=")
            if not law:
                raise ConfigError(f"law_override: expected STATE=LAW, got {item!r}")
            overrides[state.strip()] = law.strip()
        flags["law_overrides"] = overrides
    if "shift" in flags:
        flags["shift"] = [int(v) for v in str(flags["shift"]).split(",")]
    if "lambdas" in flags:
        flags["lambdas"] = [float(v) for v in str(flags["lambdas"]).split(",")]
    return flags


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = load_config(args.config) if getattr(args, "config", None) else None
        flags = _flags_from_args(args)
        flags["mode"] = args.mode
        cfg = build_config(file_values, flags)
        report, code = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(report, sort_keys=True, indent=2)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
        print(f"report written to {cfg.out}", file=sys.stderr)
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
