"""Tempered sequential Monte Carlo with adaptive temperature schedules.

The package is organized around the tempered path
``mu_lam \\propto mu0^(1-lam) * pi^lam``:

- :mod:`tempersmc.model` — target/proposal pairs and the exact
  diagonal-Gaussian reference family,
- :mod:`tempersmc.schedule` — temperature/step-size calculus, convergence
  certificates, and the constant-divergence schedule ODE,
- :mod:`tempersmc.smc` — the SMC sampler with pluggable adaptive
  temperature rules,
- :mod:`tempersmc.altschemes` — KDE-based samplers (particle mirror
  descent, growing-mixture adaptive importance sampling),
- :mod:`tempersmc.diagnostics` — divergence quadrature and particle-side
  estimators,
- :mod:`tempersmc.cli` — experiment runner (``tempersmc`` entry point).
"""

from .model import (
    GaussianPair,
    GaussianState,
    LogDensityPair,
    fisher_info,
    gaussian_state,
    kl_gaussian,
    load_model_config,
    score,
    tempered_logpdf,
)
from .schedule import (
    OdePath,
    Schedule,
    StepSizes,
    analytic_shape,
    gammas_to_lambdas,
    lambdas_to_gammas,
    rate_bound,
    rate_cn,
    solve_schedule_ode,
)
from .smc import (
    AdaptiveRule,
    ConstantRateAis,
    EssBisection,
    Fixed,
    FisherStep,
    KernelConfig,
    KlConstant,
    ParticleCloud,
    RunResult,
    ess,
    incremental_log_weights,
    next_lambda,
    resample,
    run_smc,
    rwm_move,
)
from .altschemes import (
    KdeMixture,
    kde_logpdf,
    renyi_gamma,
    run_pmd,
    run_srais,
    silverman_bandwidth,
)
from .diagnostics import (
    DivergenceReport,
    empirical_fisher,
    empirical_kl_between_iterates,
    f_divergence_1d,
    moment_error,
    prop2_check,
)
from .errors import BudgetExceededError, DegenerateError, NumericError

__version__ = "0.1.0"
