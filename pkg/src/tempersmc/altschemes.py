"""KDE-based mirror-descent samplers: particle mirror descent and
safe/regularized adaptive importance sampling.

Both schemes approximate the multiplicative update
``mu_next \\propto q * (pi / q)^gamma`` with a kernel density estimate in
the role of ``q``:

- :func:`run_pmd` keeps a fixed-size cloud; each iteration resamples,
  jitters through the smoothing kernel, and reweights against the
  previous iteration's KDE.  Every weight costs one pass over all ``N``
  centers, so a run is O(N^2 T) against O(N T) for the SMC sampler.
- :func:`run_srais` grows the particle set: each iteration draws a fresh
  batch from the KDE over *all* past particles, so iteration ``n`` costs
  O(n).  Its step size can follow a fixed sequence or the entropy-based
  rule ``gamma = 1 - KL(weighted batch | uniform batch) / log(batch)``
  (:func:`renyi_gamma`), which is 1 for flat weights and 0 when a single
  particle carries all the mass.

The kernel is an isotropic Gaussian with per-center bandwidth; the
default bandwidth is Silverman's rule on the current particle set.  Both
runners honor the same seed-keyed determinism contract as
:func:`tempersmc.smc.run_smc` and accept ``fast_weights=True`` to swap
the O(N) KDE weight for the O(1) tempering weight of the SMC sampler.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateError
from .model import score
from .schedule import StepSizes
from .smc import ParticleCloud, RunResult, _as_pair, _ess_from_logw, _logmeanexp, resample
from .streams import RunStreams, TAG_BATCH, TAG_INIT, TAG_JITTER, TAG_RESAMPLE

__all__ = [
    "KdeMixture",
    "kde_logpdf",
    "silverman_bandwidth",
    "renyi_gamma",
    "run_pmd",
    "run_srais",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_CHUNK_CELLS = 1 << 23


@dataclass(frozen=True, eq=False)
class KdeMixture:
    """Gaussian mixture with isotropic per-center bandwidths."""

    centers: np.ndarray
    weights: np.ndarray
    bandwidths: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        m = centers.shape[0]
        weights = np.asarray(self.weights, dtype=float)
        bandwidths = np.broadcast_to(
            np.asarray(self.bandwidths, dtype=float), (m,)
        ).copy()
        if weights.shape != (m,):
            raise ValueError("one weight per center required")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if not np.all(bandwidths > 0.0):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bandwidths", bandwidths)

    @property
    def n_centers(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def sample(self, rng, n):
        """Draw ``n`` points: pick centers by weight, add kernel noise."""
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(int(n)), side="right")
        idx = np.minimum(idx, self.n_centers - 1)
        noise = rng.standard_normal((int(n), self.dim))
        return self.centers[idx] + self.bandwidths[idx, None] * noise


def kde_logpdf(kde: KdeMixture, x):
    """Log-density of the mixture at ``x`` (``(d,)`` or ``(n, d)``), via
    log-sum-exp over centers."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != kde.dim:
        raise ValueError(f"expected points of dimension {kde.dim}, got {pts.shape}")

    c = kde.centers
    h2 = kde.bandwidths**2
    log_coef = np.log(kde.weights) - 0.5 * kde.dim * (_LOG_2PI + np.log(h2))
    c_sq = np.sum(c * c, axis=1)

    out = np.empty(pts.shape[0])
    chunk = max(1, _CHUNK_CELLS // max(1, kde.n_centers))
    for a in range(0, pts.shape[0], chunk):
        b = min(a + chunk, pts.shape[0])
        block = pts[a:b]
        sq_dist = np.sum(block * block, axis=1)[:, None] + c_sq[None, :]
        sq_dist -= 2.0 * block @ c.T
        np.maximum(sq_dist, 0.0, out=sq_dist)
        out[a:b] = logsumexp(-0.5 * sq_dist / h2[None, :] + log_coef[None, :], axis=1)
    return float(out[0]) if single else out


def silverman_bandwidth(positions) -> float:
    """Silverman's rule ``sigma_hat * (4 / ((d + 2) N))^(1 / (d + 4))``
    with ``sigma_hat`` the mean per-coordinate standard deviation."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n, d = positions.shape
    sigma = float(np.mean(positions.std(axis=0)))
    if sigma <= 0.0:
        raise DegenerateError("zero spread; cannot set a bandwidth")
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def renyi_gamma(batch_log_ratios) -> float:
    """Entropy-based step size from one batch of raw log importance ratios.

    With normalized batch weights ``w`` and batch size ``m``, returns
    ``1 - sum_l w_l log(m w_l) / log(m)`` clamped into ``[0, 1]``: exactly
    1 for flat weights, exactly 0 when one particle holds all the mass.
    """
    r = np.asarray(batch_log_ratios, dtype=float)
    m = r.size
    if m < 2:
        raise ValueError("need a batch of at least 2 to measure weight entropy")
    if np.ptp(r) == 0.0:
        # flat weights have zero divergence from uniform, exactly
        return 1.0
    log_w = r - logsumexp(r)
    w = np.exp(log_w)
    terms = np.where(w > 0.0, w * log_w, 0.0)
    kl_to_uniform = float(np.log(m) + terms.sum())
    gamma = 1.0 - kl_to_uniform / np.log(m)
    if gamma < -1e-9 or gamma > 1.0 + 1e-9:
        warnings.warn(f"step size {gamma} outside [0, 1] before clamping")
    return float(np.clip(gamma, 0.0, 1.0))


def _check_kde_values(log_q):
    if not np.all(np.isfinite(log_q)):
        raise DegenerateError("KDE proposal vanished at a particle")


def run_pmd(
    pair,
    n_particles,
    gammas: StepSizes,
    seed=0,
    bandwidth=None,
    fast_weights=False,
    resampling="systematic",
) -> RunResult:
    """Particle mirror descent: resample, jitter through the kernel,
    reweight against the previous iteration's KDE.

    Parameters
    ----------
    pair : LogDensityPair or GaussianPair
        Sampling problem.
    n_particles : int
        Cloud size.
    gammas : StepSizes
        Step sizes; the realized temperatures are
        ``lam_n = 1 - prod(1 - gam_k)``.
    seed : int
        Run seed.
    bandwidth : float, optional
        Fixed kernel bandwidth; default is Silverman's rule per iteration.
    fast_weights : bool
        Use the O(1) tempering weight at the pre-jitter particles instead
        of the O(N) KDE weight.
    resampling : str
        Passed to :func:`tempersmc.smc.resample`.

    Returns
    -------
    RunResult
        With the final mixture attached as ``kde``.  The recorded
        schedule follows the step sizes and ends at 1 only if the last
        step size is 1.
    """
    pair = _as_pair(pair)
    n = int(n_particles)
    if n < 2:
        raise ValueError("need at least 2 particles")
    gam = gammas.gammas

    streams = RunStreams(seed)
    positions = pair.sampler_mu0(streams.generator(0, TAG_INIT), n)
    h_prev = float(bandwidth) if bandwidth is not None else silverman_bandwidth(positions)
    mixture = KdeMixture(positions, np.full(n, 1.0 / n), h_prev)
    cloud = ParticleCloud.uniform(positions, 0.0)

    temps = [0.0]
    ess_trace = []
    log_z = 0.0
    weight_ops = 0
    lam = 0.0

    for it, gamma in enumerate(gam, start=1):
        lam_new = 1.0 - (1.0 - lam) * (1.0 - gamma)
        if it > 1:
            cloud = resample(cloud, streams.generator(it, TAG_RESAMPLE), resampling)
        seeds = cloud.positions
        h = float(bandwidth) if bandwidth is not None else silverman_bandwidth(seeds)
        noise = streams.generator(it, TAG_JITTER).standard_normal(seeds.shape)
        moved = seeds + h * noise

        if fast_weights:
            log_v = (lam_new - lam) * score(pair, seeds)
            weight_ops += n
        else:
            log_q = kde_logpdf(mixture, moved)
            weight_ops += n * mixture.n_centers
            _check_kde_values(log_q)
            log_v = gamma * (np.asarray(pair.log_pi_unnorm(moved)) - log_q)

        ess_trace.append(_ess_from_logw(log_v))
        log_z += _logmeanexp(log_v)
        log_v = log_v - logsumexp(log_v)
        mixture = KdeMixture(moved, np.exp(log_v), h)
        cloud = ParticleCloud(moved, log_v, lam_new)
        temps.append(lam_new)
        lam = lam_new

    return RunResult(
        schedule=np.asarray(temps),
        ess_trace=np.asarray(ess_trace),
        acceptance_trace=np.full(len(ess_trace), np.nan),
        log_z_estimate=log_z,
        final_cloud=cloud,
        n_steps=len(temps) - 1,
        rule_used=gammas,
        n_particles=n,
        weight_eval_ops=weight_ops,
        kde=mixture,
    )


def run_srais(
    pair,
    batch_sizes,
    seed=0,
    gamma_rule="renyi",
    bandwidth=None,
    fast_weights=False,
) -> RunResult:
    """Adaptive importance sampling with a KDE proposal over all past
    particles.

    Iteration ``n`` draws ``batch_sizes[n-1]`` points from the mixture
    built on the full accumulated history, weights them with
    ``(pi / q)^gamma_n``, and appends them.  The step size comes either
    from a fixed :class:`~tempersmc.schedule.StepSizes` or from the batch
    entropy rule (``gamma_rule="renyi"``, see :func:`renyi_gamma`, which
    is computed on the current batch while mixture weights are normalized
    over the whole history).

    Returns
    -------
    RunResult
        ``final_cloud`` holds every particle ever drawn with its history
        weight; the proposal mixture is attached as ``kde``.
    """
    pair = _as_pair(pair)
    batch_sizes = [int(m) for m in np.atleast_1d(batch_sizes)]
    if not batch_sizes:
        raise ValueError("need at least one batch")
    use_renyi = isinstance(gamma_rule, str)
    if use_renyi:
        if gamma_rule != "renyi":
            raise ValueError(f"unknown gamma rule {gamma_rule!r}")
        if min(batch_sizes) < 2:
            raise ValueError("entropy rule needs batches of at least 2")
    else:
        fixed = gamma_rule.gammas
        if fixed.size != len(batch_sizes):
            raise ValueError("one step size per batch required")

    streams = RunStreams(seed)
    all_points = []
    all_log_u = []
    all_bands = []
    mixture = None

    temps = [0.0]
    ess_trace = []
    log_z = 0.0
    weight_ops = 0
    lam = 0.0

    for it, m in enumerate(batch_sizes, start=1):
        gen = streams.generator(it, TAG_BATCH)
        if mixture is None:
            batch = pair.sampler_mu0(gen, m)
            log_q = np.asarray(pair.log_mu0(batch))
            weight_ops += m
        else:
            batch = mixture.sample(gen, m)
            log_q = kde_logpdf(mixture, batch)
            weight_ops += m * mixture.n_centers
            _check_kde_values(log_q)
        raw = np.asarray(pair.log_pi_unnorm(batch)) - log_q

        if use_renyi:
            gamma = renyi_gamma(raw)
        else:
            gamma = float(fixed[it - 1])
        log_u = gamma * raw

        ess_trace.append(_ess_from_logw(log_u))
        log_z += _logmeanexp(log_u)
        lam = 1.0 - (1.0 - lam) * (1.0 - gamma)
        temps.append(lam)

        all_points.append(batch)
        all_log_u.append(log_u)
        history = np.concatenate(all_points)
        h = float(bandwidth) if bandwidth is not None else silverman_bandwidth(history)
        all_bands.append(np.full(m, h))

        log_hist = np.concatenate(all_log_u)
        mix_w = np.exp(log_hist - logsumexp(log_hist))
        mixture = KdeMixture(history, mix_w, np.concatenate(all_bands))

    log_hist = np.concatenate(all_log_u)
    final_cloud = ParticleCloud(
        np.concatenate(all_points), log_hist - logsumexp(log_hist), min(lam, 1.0)
    )
    return RunResult(
        schedule=np.asarray(temps),
        ess_trace=np.asarray(ess_trace),
        acceptance_trace=np.full(len(ess_trace), np.nan),
        log_z_estimate=log_z,
        final_cloud=final_cloud,
        n_steps=len(temps) - 1,
        rule_used="renyi" if use_renyi else gamma_rule,
        n_particles=sum(batch_sizes),
        weight_eval_ops=weight_ops,
        kde=mixture,
    )
