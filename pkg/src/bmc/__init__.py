"""Branching Markov chains on countable state spaces.

Particle clouds move under an irreducible kernel and branch with at least
one offspring per event.  The package decides transience / recurrence /
strong recurrence three ways (closed-form spectral radius, positive
certificate functions, Monte Carlo) and cross-validates them against exact
small-instance enumeration.
"""

from .branching import (GWLaw, OffspringLaw, OffspringLawField, constant_mean_law,
                        embedded_gw_mean, find_supercritical_k,
                        gw_extinction_probability, pgf,
                        simulate_extinction_frequency)
from .classify import (SymmetryCheck, SymmetrySpec, Verdict, classify_constant_mean,
                       classify_quasi_transitive, reconcile,
                       transience_by_certificate, verify_symmetry,
                       verify_visitlaw_invariance)
from .exact import enumerate_visit_distributions, total_variation
from .kernel import (Kernel, Truncation, TruncatedKernel, TruncatedValue,
                     green_partial_sum, kernel_from_edge_list, lattice_kernel,
                     n_step_probability, verify_stochastic)
from .presets import preset, z_drift, zd_anisotropic, zd_symmetric
from .rng import TrialStreams
from .simulate import (AlphaEstimate, ParticleCloud, SimConfig, TrialSummary,
                       estimate_alpha, estimate_nu, geometric_fn,
                       lyapunov_statistic, run_bmc_star_trial, run_bmc_trial,
                       run_xi_cascade, step_bmc, step_bmc_star,
                       xi_extinction_frequency)
from .spectral import (Certificate, SpectralEstimate, check_superharmonic,
                       fit_geometric_certificate, geometric_f,
                       lyapunov_transience_check, rho_closed_form_lattice,
                       rho_diagonal_return, rho_power_iteration)

__version__ = "0.1.0"
