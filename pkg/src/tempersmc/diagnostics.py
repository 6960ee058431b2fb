"""Divergence estimators and numerical checks of the tempering theory.

The quadratic expansion at the heart of every adaptive rule says that for
any twice-differentiable ``f``, the f-divergence between two nearby
tempered marginals is ``f''(1) I(lam) / 2 * (lam' - lam)^2`` up to third
order, with ``I`` the score variance along the path.  This module
evaluates the exact divergences by quadrature for 1-d Gaussian pairs
(:func:`f_divergence_1d`), packages the expansion comparison
(:func:`prop2_check`), and provides the particle-side estimators of the
information and of the KL between consecutive iterates that the adaptive
rules consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import NumericError
from .model import GaussianPair, GaussianState, fisher_info, gaussian_state, score
from .smc import ParticleCloud, _as_pair

__all__ = [
    "DivergenceReport",
    "f_divergence_1d",
    "prop2_check",
    "empirical_fisher",
    "empirical_kl_between_iterates",
    "moment_error",
]

_QUAD_SPAN = 12.0

# second derivative of f at 1, the only trace f leaves at second order
_FPP1 = {"kl": 1.0, "reverse-kl": 1.0, "chi2": 2.0}


@dataclass(frozen=True)
class DivergenceReport:
    """Exact divergence vs. quadratic expansion for one temperature gap."""

    lam: float
    delta: float
    exact_divergence: float
    expansion_value: float
    ratio: float


def f_divergence_1d(pair: GaussianPair, lam, lam2, f="kl") -> float:
    """f-divergence of the marginal at ``lam2`` relative to the one at ``lam``.

    Computes ``\\int mu_lam(x) f(mu_lam2(x) / mu_lam(x)) dx`` by adaptive
    quadrature over the two marginals' combined 12-sigma support, for
    ``f`` one of ``"kl"`` (which equals ``KL(mu_lam2 | mu_lam)``),
    ``"reverse-kl"`` (``KL(mu_lam | mu_lam2)``) or ``"chi2"``.
    """
    if pair.dim != 1:
        raise ValueError("quadrature divergences are implemented for dim = 1")
    if f not in _FPP1:
        raise ValueError(f"f must be one of {sorted(_FPP1)}, got {f!r}")
    base = gaussian_state(pair, lam)
    other = gaussian_state(pair, lam2)

    std = float(np.sqrt(max(base.var[0], other.var[0])))
    lo = float(min(base.mean[0], other.mean[0])) - _QUAD_SPAN * std
    hi = float(max(base.mean[0], other.mean[0])) + _QUAD_SPAN * std

    def integrand(x):
        point = np.array([x])
        lp = base.logpdf(point)
        lq = other.logpdf(point)
        r = lq - lp
        if f == "kl":
            return np.exp(lq) * r
        if f == "reverse-kl":
            return -np.exp(lp) * r
        return np.exp(lp) * np.expm1(r) ** 2

    value, abserr, info, *rest = integrate.quad(
        integrand, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=200, full_output=1
    )
    if rest:  # quadpack attached an error message
        raise NumericError(f"divergence quadrature failed: {rest[0]}")
    return float(value)


def prop2_check(pair: GaussianPair, lam, deltas, f="kl"):
    """Compare exact divergences against the quadratic expansion.

    For each gap ``delta`` the expansion value is
    ``f''(1) I(lam) delta^2 / 2``; the returned ratios tend to 1 as the
    gap shrinks (the remainder is third order).
    """
    lam = float(lam)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(deltas <= 0.0):
        raise ValueError("gaps must be positive")
    if lam + deltas.max() > 1.0:
        raise ValueError("lam + max(delta) must stay at or below 1")
    info = fisher_info(pair, lam)
    reports = []
    for delta in deltas:
        exact = f_divergence_1d(pair, lam, lam + delta, f)
        expansion = 0.5 * _FPP1[f] * info * delta**2
        reports.append(
            DivergenceReport(
                lam=lam,
                delta=float(delta),
                exact_divergence=exact,
                expansion_value=expansion,
                ratio=exact / expansion,
            )
        )
    return reports


def empirical_fisher(cloud: ParticleCloud, pair) -> float:
    """Population variance of the score over an equally-weighted cloud.

    Invariant to rescaling the unnormalized target by a constant.
    """
    if cloud.n_particles < 2:
        raise ValueError("need at least 2 particles to estimate a variance")
    values = score(_as_pair(pair), cloud.positions)
    return float(np.var(values))


def empirical_kl_between_iterates(cloud: ParticleCloud, pair, lambda_new) -> float:
    """Estimate ``KL(mu_lam | mu_lam_new)`` from the jump's log-weights.

    Evaluates ``-mean(log w) + log mean(w)`` on the incremental
    log-weights ``(lambda_new - lam) s(x_i)``, entirely in log space.
    Non-negative by concavity of the logarithm; exactly zero when the
    jump is empty.
    """
    lambda_new = float(lambda_new)
    if lambda_new < cloud.lam:
        raise ValueError(f"new temperature {lambda_new} below current {cloud.lam}")
    log_w = (lambda_new - cloud.lam) * score(_as_pair(pair), cloud.positions)
    return float(logsumexp(log_w) - np.log(log_w.size) - np.mean(log_w))


def moment_error(cloud: ParticleCloud, reference: GaussianState):
    """Sup-norm errors of the cloud's weighted moments against a reference.

    Returns ``(mean_err, var_err)``: the largest per-coordinate deviation
    of the weighted empirical mean and variance from the reference's.
    """
    if cloud.dim != reference.dim:
        raise ValueError(f"dimension mismatch: {cloud.dim} vs {reference.dim}")
    w = cloud.weights
    x = cloud.positions
    mean = w @ x
    var = w @ (x - mean) ** 2
    mean_err = float(np.max(np.abs(mean - reference.mean)))
    var_err = float(np.max(np.abs(var - reference.var)))
    return mean_err, var_err
