"""Tempered SMC sampler with pluggable adaptive temperature rules.

The sampler tracks the tempered family ``mu_lam \\propto mu0^(1-lam) pi^lam``
with a cloud of ``N`` weighted particles.  One iteration, starting from an
equally-weighted cloud at temperature ``lam``:

1. pick the next temperature ``lam*`` with the configured rule
   (:func:`next_lambda`),
2. compute the incremental log-weights ``(lam* - lam) * s(x_i)`` at the
   current positions and record their effective sample size,
3. resample (systematic by default, multinomial available),
4. move every particle with a few random-walk Metropolis steps invariant
   for ``mu_lam*``, calibrated on the current cloud.

The run finishes after the iteration that lands on ``lam = 1``.  The
normalizing-constant estimate accumulates ``log mean exp`` of each
iteration's incremental log-weights.  All weight handling is done in log
space.

Temperature rules
-----------------

===================  ========================================================
:class:`EssBisection`  solve ``ESS(lam) = N / (beta + 1)`` by bisection
:class:`KlConstant`    solve ``KLhat(lam) = kappa`` by bisection, where
                       ``KLhat = -mean(log w) + log mean(w)`` (log-domain
                       variant, more stable than the ESS for long jumps)
:class:`FisherStep`    ``lam* = lam + sqrt(beta / Ihat)`` with ``Ihat`` the
                       score variance over the cloud
:class:`ConstantRateAis`  ``lam* = lam + delta / ((1 - lam) Ihat)``, the
                       Euler step of the constant-decay path; kept as a
                       benchmark for its instability on narrow targets
:class:`Fixed`         walk a prescribed :class:`~tempersmc.schedule.Schedule`
===================  ========================================================

Reproducibility: a run is keyed by an integer seed.  Every draw comes from
a counter-based stream addressed by ``(seed, iteration, purpose)`` (see
:mod:`tempersmc.streams`), with particle ``i`` consuming fixed offsets of
its iteration's block, so results are bit-identical for a fixed seed no
matter how the particle loop is scheduled.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetExceededError, DegenerateError
from .model import GaussianPair, LogDensityPair, score, tempered_logpdf
from .schedule import Schedule, StepSizes
from .streams import RunStreams, TAG_INIT, TAG_MOVE, TAG_RESAMPLE

__all__ = [
    "ParticleCloud",
    "EssBisection",
    "KlConstant",
    "FisherStep",
    "ConstantRateAis",
    "Fixed",
    "AdaptiveRule",
    "KernelConfig",
    "RunResult",
    "ess",
    "incremental_log_weights",
    "next_lambda",
    "resample",
    "rwm_move",
    "run_smc",
    "write_result_json",
    "write_trace_csv",
]

_BISECT_TOL = 1e-10
_BISECT_MAX_ITER = 100
_STD_FLOOR = 1e-8


@dataclass(eq=False)
class ParticleCloud:
    """Weighted particle approximation of one tempered marginal.

    ``log_weights`` are kept normalized (their log-sum-exp is 0) by the
    constructors used in this package; :func:`resample` resets them to
    uniform.
    """

    positions: np.ndarray
    log_weights: np.ndarray
    lam: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.positions.ndim != 2:
            raise ValueError("positions must be an (N, d) array")
        if self.log_weights.shape != (self.positions.shape[0],):
            raise ValueError("log_weights must be one value per particle")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"cloud temperature must lie in [0, 1], got {self.lam}")

    @classmethod
    def uniform(cls, positions, lam) -> "ParticleCloud":
        positions = np.asarray(positions, dtype=float)
        n = positions.shape[0]
        return cls(positions, np.full(n, -np.log(n)), float(lam))

    @property
    def n_particles(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def weights(self):
        """Normalized weights (softmax of the log-weights)."""
        lw = self.log_weights
        w = np.exp(lw - logsumexp(lw))
        return w


@dataclass(frozen=True)
class EssBisection:
    """Keep the effective sample size of each jump at ``N / (beta + 1)``."""

    beta: float = 1.0

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class KlConstant:
    """Keep the estimated KL between consecutive marginals at ``kappa``."""

    kappa: float

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class FisherStep:
    """Step ``sqrt(beta / Ihat)`` using the cloud's score variance."""

    beta: float = 1.0

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ConstantRateAis:
    """Euler step ``delta / ((1 - lam) Ihat)`` of the constant-decay path."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True, eq=False)
class Fixed:
    """Walk a prescribed schedule instead of adapting."""

    schedule: Schedule


AdaptiveRule = Union[EssBisection, KlConstant, FisherStep, ConstantRateAis, Fixed]


@dataclass(frozen=True)
class KernelConfig:
    """Random-walk Metropolis configuration.

    The proposal standard deviation per coordinate is
    ``scale_factor * 2.38 / sqrt(d)`` times the cloud's empirical standard
    deviation, recalibrated once per move call.
    """

    n_mh_steps: int = 5
    scale_factor: float = 1.0

    def __post_init__(self):
        if self.n_mh_steps < 1:
            raise ValueError("n_mh_steps must be at least 1")
        if self.scale_factor <= 0.0:
            raise ValueError("scale_factor must be positive")


@dataclass(eq=False)
class RunResult:
    """Record of one sampler run.

    ``schedule`` holds the realized temperatures including the initial 0;
    the traces have one entry per temperature move.  For the KDE schemes
    of :mod:`tempersmc.altschemes` the final mixture is attached as
    ``kde`` and the acceptance trace is NaN (no Metropolis moves there).
    ``weight_eval_ops`` counts density evaluations spent on weights, the
    cost statistic separating the O(N) schemes from the O(N^2) ones.
    """

    schedule: np.ndarray
    ess_trace: np.ndarray
    acceptance_trace: np.ndarray
    log_z_estimate: float
    final_cloud: ParticleCloud
    n_steps: int
    rule_used: object
    n_particles: int
    weight_eval_ops: int = 0
    kde: object = None

    def summary_moments(self):
        """Weighted mean and variance per coordinate of the final cloud."""
        w = self.final_cloud.weights
        x = self.final_cloud.positions
        mean = w @ x
        var = w @ (x - mean) ** 2
        return mean, var

    def to_dict(self):
        mean, var = self.summary_moments()
        return {
            "n_steps": int(self.n_steps),
            "n_particles": int(self.n_particles),
            "schedule": [float(v) for v in self.schedule],
            "ess_trace": [float(v) for v in self.ess_trace],
            "acceptance_trace": [float(v) for v in self.acceptance_trace],
            "log_z_estimate": float(self.log_z_estimate),
            "rule": _rule_to_dict(self.rule_used),
            "weight_eval_ops": int(self.weight_eval_ops),
            "summary": {
                "mean": [float(v) for v in mean],
                "var": [float(v) for v in var],
            },
        }


def _rule_to_dict(rule):
    if isinstance(rule, EssBisection):
        return {"kind": "ess", "beta": rule.beta}
    if isinstance(rule, KlConstant):
        return {"kind": "kl", "kappa": rule.kappa}
    if isinstance(rule, FisherStep):
        return {"kind": "fisher", "beta": rule.beta}
    if isinstance(rule, ConstantRateAis):
        return {"kind": "constant_rate", "delta": rule.delta}
    if isinstance(rule, Fixed):
        return {"kind": "fixed", "lambdas": [float(v) for v in rule.schedule.lambdas]}
    if isinstance(rule, StepSizes):
        return {"kind": "fixed_gammas", "gammas": [float(v) for v in rule.gammas]}
    return {"kind": str(rule)}


def _as_pair(pair) -> LogDensityPair:
    if isinstance(pair, GaussianPair):
        return pair.to_pair()
    return pair


def _logmeanexp(values):
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - np.log(values.size))


def _ess_from_logw(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not np.any(finite):
        raise DegenerateError("all log-weights are -inf; the cloud carries no mass")
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def ess(cloud: ParticleCloud) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2`` of the cloud, in ``[1, N]``."""
    return _ess_from_logw(cloud.log_weights)


def incremental_log_weights(pair, cloud: ParticleCloud, lambda_new) -> np.ndarray:
    """Log-weights of the jump from the cloud's temperature to ``lambda_new``.

    Equals ``(lambda_new - lam) * s(x_i)`` per particle: the exponential
    reweighting that moves the cloud one tempering step closer to the
    target.
    """
    pair = _as_pair(pair)
    lambda_new = float(lambda_new)
    if lambda_new < cloud.lam:
        raise ValueError(
            f"new temperature {lambda_new} below current {cloud.lam}"
        )
    return (lambda_new - cloud.lam) * score(pair, cloud.positions)


def _kl_estimate_from_logw(log_w):
    """Jensen-gap estimator ``-mean(log w) + log mean(w)``; non-negative."""
    return _logmeanexp(log_w) - float(np.mean(log_w))


def _score_variance(s_values):
    return float(np.var(s_values))


def next_lambda(pair, cloud: ParticleCloud, rule: AdaptiveRule) -> float:
    """Next temperature chosen by ``rule``; always in ``(cloud.lam, 1]``.

    The bisection rules assume the jump's effective sample size (resp. KL
    estimate) is monotone in the temperature, which holds in exact
    arithmetic; a numerically broken bracket falls back to 1 with a
    warning.
    """
    pair = _as_pair(pair)
    lam0 = cloud.lam
    if lam0 >= 1.0:
        raise ValueError("cloud already sits at the target temperature")

    if isinstance(rule, Fixed):
        lams = rule.schedule.lambdas
        idx = int(np.searchsorted(lams, lam0, side="right"))
        if idx >= lams.size:
            raise ValueError("fixed schedule exhausted below the target")
        return float(lams[idx])

    s_values = score(pair, cloud.positions)

    if isinstance(rule, FisherStep):
        info = _score_variance(s_values)
        if info <= 0.0:
            raise DegenerateError("score variance is zero; cannot size a step")
        return min(1.0, lam0 + np.sqrt(rule.beta / info))

    if isinstance(rule, ConstantRateAis):
        info = _score_variance(s_values)
        if info <= 0.0:
            raise DegenerateError("score variance is zero; cannot size a step")
        return min(1.0, lam0 + rule.delta / ((1.0 - lam0) * info))

    if isinstance(rule, EssBisection):
        n = cloud.n_particles
        target = n / (rule.beta + 1.0)

        def deficit(lam):
            # positive while the jump keeps more effective particles than asked
            return _ess_from_logw((lam - lam0) * s_values) - target

        if deficit(1.0) >= 0.0:
            return 1.0
        if deficit(lam0) < 0.0:
            warnings.warn("ESS bisection bracket failed; jumping to lambda = 1")
            return 1.0
        return _bisect(deficit, lam0, 1.0)

    if isinstance(rule, KlConstant):

        def deficit(lam):
            return rule.kappa - _kl_estimate_from_logw((lam - lam0) * s_values)

        if deficit(1.0) >= 0.0:
            return 1.0
        if deficit(lam0) < 0.0:
            warnings.warn("KL bisection bracket failed; jumping to lambda = 1")
            return 1.0
        return _bisect(deficit, lam0, 1.0)

    raise TypeError(f"unknown adaptive rule {rule!r}")


def _bisect(deficit, lo, hi):
    """Crossing of a decreasing ``deficit`` with 0 on [lo, hi]."""
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo <= _BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if deficit(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def resample(cloud: ParticleCloud, rng, method="systematic") -> ParticleCloud:
    """Draw ``N`` equally-weighted particles from the weighted cloud.

    ``multinomial`` draws i.i.d. from the weighted empirical measure;
    ``systematic`` spends a single uniform on the cumulative-weight
    partition (lower variance, the default everywhere in this package).
    """
    lw = cloud.log_weights
    if not np.any(np.isfinite(lw)):
        raise DegenerateError("cannot resample a cloud whose weights all vanished")
    w = np.exp(lw - logsumexp(lw))
    n = cloud.n_particles
    cum = np.cumsum(w)
    cum[-1] = 1.0
    if method == "multinomial":
        points = rng.random(n)
    elif method == "systematic":
        points = (np.arange(n) + rng.random()) / n
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    idx = np.searchsorted(cum, points, side="right")
    idx = np.minimum(idx, n - 1)
    return ParticleCloud.uniform(cloud.positions[idx], cloud.lam)


def rwm_move(pair, cloud: ParticleCloud, lam, config: KernelConfig, rng):
    """Apply ``n_mh_steps`` random-walk Metropolis steps at temperature ``lam``.

    The Gaussian proposal uses per-coordinate standard deviation
    ``scale_factor * (2.38 / sqrt(d))`` times the cloud's empirical
    standard deviation, calibrated once from the input cloud.  Weights
    are untouched.  Returns the moved cloud and the mean acceptance rate
    over all proposals.
    """
    pair = _as_pair(pair)
    lam = float(lam)
    x = cloud.positions.copy()
    n, d = x.shape
    std = x.std(axis=0)
    if np.any(std < _STD_FLOOR):
        warnings.warn("degenerate particle spread; flooring proposal scale at 1e-8")
        std = np.maximum(std, _STD_FLOOR)
    prop_std = config.scale_factor * (2.38 / np.sqrt(d)) * std

    logp = tempered_logpdf(pair, lam, x)
    accepted = 0
    for _ in range(config.n_mh_steps):
        proposal = x + prop_std * rng.standard_normal((n, d))
        logp_prop = tempered_logpdf(pair, lam, proposal)
        accept = np.log(rng.random(n)) < (logp_prop - logp)
        x[accept] = proposal[accept]
        logp[accept] = logp_prop[accept]
        accepted += int(np.count_nonzero(accept))
    rate = accepted / (n * config.n_mh_steps)
    return ParticleCloud(x, cloud.log_weights.copy(), lam), rate


def run_smc(
    pair,
    rule: AdaptiveRule,
    n_particles,
    config: KernelConfig | None = None,
    seed=0,
    max_steps=1000,
    resampling="systematic",
) -> RunResult:
    """Run the tempered SMC sampler from the proposal to the target.

    Parameters
    ----------
    pair : LogDensityPair or GaussianPair
        Sampling problem.
    rule : AdaptiveRule
        Temperature rule.
    n_particles : int
        Cloud size, at least 2.
    config : KernelConfig, optional
        Metropolis kernel settings (default: 5 steps, unit scale factor).
    seed : int
        Run seed; fixes every random draw (see module docstring).
    max_steps : int
        Temperature-step budget; exceeding it raises
        :class:`~tempersmc.errors.BudgetExceededError` with the partial
        :class:`RunResult` attached.
    resampling : str
        ``"systematic"`` or ``"multinomial"``.

    Returns
    -------
    RunResult
    """
    pair = _as_pair(pair)
    n_particles = int(n_particles)
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if config is None:
        config = KernelConfig()

    streams = RunStreams(seed)
    positions = pair.sampler_mu0(streams.generator(0, TAG_INIT), n_particles)
    cloud = ParticleCloud.uniform(positions, 0.0)

    temps = [0.0]
    ess_trace = []
    acc_trace = []
    log_z = 0.0
    weight_ops = 0

    for iteration in range(1, int(max_steps) + 1):
        lam_new = next_lambda(pair, cloud, rule)
        dlw = incremental_log_weights(pair, cloud, lam_new)
        weight_ops += n_particles
        ess_trace.append(_ess_from_logw(dlw))
        log_z += _logmeanexp(dlw)
        cloud = ParticleCloud(cloud.positions, dlw - logsumexp(dlw), lam_new)
        cloud = resample(cloud, streams.generator(iteration, TAG_RESAMPLE), resampling)
        cloud, rate = rwm_move(
            pair, cloud, lam_new, config, streams.generator(iteration, TAG_MOVE)
        )
        acc_trace.append(rate)
        temps.append(lam_new)
        if lam_new >= 1.0:
            break
    result = RunResult(
        schedule=np.asarray(temps),
        ess_trace=np.asarray(ess_trace),
        acceptance_trace=np.asarray(acc_trace),
        log_z_estimate=log_z,
        final_cloud=cloud,
        n_steps=len(temps) - 1,
        rule_used=rule,
        n_particles=n_particles,
        weight_eval_ops=weight_ops,
    )
    if temps[-1] < 1.0:
        raise BudgetExceededError(
            f"sampler did not reach the target within {max_steps} temperature steps",
            partial=result,
        )
    return result


def write_result_json(result: RunResult, path):
    """Serialize a run record to JSON (deterministic byte layout per seed)."""
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(result: RunResult, path):
    """Write the per-step trace (temperature, ESS, acceptance) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lambda", "ess", "acceptance"])
        for i in range(result.n_steps):
            writer.writerow(
                [
                    i + 1,
                    repr(float(result.schedule[i + 1])),
                    repr(float(result.ess_trace[i])),
                    repr(float(result.acceptance_trace[i])),
                ]
            )
