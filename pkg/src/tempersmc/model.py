"""Target/proposal pairs, tempered densities, and the diagonal-Gaussian oracle.

A sampling problem is described by a :class:`LogDensityPair`: a normalized
proposal ``mu0``, an unnormalized target ``pi``, and the log-ratio
``s(x) = log pi(x) - log mu0(x)``.  The tempered family interpolating the
two is ``mu_lam \\propto mu0^(1-lam) * pi^lam`` for ``lam`` in ``[0, 1]``.

:class:`GaussianPair` is the special case ``mu0 = N(0, Id)``,
``pi = N(m, diag(tau^2))`` for which every quantity of interest (the
tempered marginals, the Fisher information of the path, KL divergences)
has a closed form.  It is used as the exact reference throughout the test
suite and the experiment runner.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "LogDensityPair",
    "GaussianPair",
    "GaussianState",
    "score",
    "tempered_logpdf",
    "gaussian_state",
    "fisher_info",
    "kl_gaussian",
    "load_model_config",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class LogDensityPair:
    """Proposal and unnormalized target for a tempering problem.

    Density callables accept a single point of shape ``(d,)`` or a batch
    of shape ``(n, d)`` and return a scalar or an ``(n,)`` array.  The
    target may omit its normalizing constant; nothing in this package
    ever consumes more than log-ratios and log-weight averages.

    Parameters
    ----------
    dim : int
        Dimension of the state space.
    log_mu0 : callable
        Normalized log-density of the proposal.
    log_pi_unnorm : callable
        Possibly unnormalized log-density of the target.
    sampler_mu0 : callable
        ``sampler_mu0(rng)`` returns one draw of shape ``(d,)``;
        ``sampler_mu0(rng, n)`` returns ``n`` draws of shape ``(n, d)``.
    """

    dim: int
    log_mu0: Callable
    log_pi_unnorm: Callable
    sampler_mu0: Callable

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


class GaussianPair:
    """Diagonal-Gaussian target against a standard-normal proposal.

    The proposal is fixed to ``N(0, Id)`` so the score is the simple
    quadratic ``s(x) = sum_i a_i x_i^2 + b_i x_i + const`` with
    ``a_i = (1 - 1/tau_i^2)/2`` and ``b_i = m_i/tau_i^2``.  Scalars for
    ``mean`` and ``var`` broadcast to all coordinates.

    Parameters
    ----------
    dim : int
        Dimension.
    mean : float or array_like
        Target mean ``m``.
    var : float or array_like
        Target variance diagonal ``tau^2``; entries must be positive.
    """

    def __init__(self, dim, mean=0.0, var=1.0):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        self.dim = dim
        self.mean_pi = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
        self.var_pi = np.broadcast_to(np.asarray(var, dtype=float), (dim,)).copy()
        if not np.all(self.var_pi > 0.0):
            raise ValueError("target variances must be strictly positive")

    def __repr__(self):
        return (
            f"GaussianPair(dim={self.dim}, mean={self.mean_pi!r}, "
            f"var={self.var_pi!r})"
        )

    def log_mu0(self, x):
        x = _check_points(x, self.dim)
        return -0.5 * np.sum(x * x, axis=-1) - 0.5 * self.dim * _LOG_2PI

    def log_pi(self, x):
        """Normalized target log-density (so the true log-Z of the pair is 0)."""
        x = _check_points(x, self.dim)
        z = (x - self.mean_pi) ** 2 / self.var_pi
        return -0.5 * np.sum(z, axis=-1) - 0.5 * (
            self.dim * _LOG_2PI + np.sum(np.log(self.var_pi))
        )

    def sample_mu0(self, rng, n=None):
        if n is None:
            return rng.standard_normal(self.dim)
        return rng.standard_normal((int(n), self.dim))

    def sample_pi(self, rng, n):
        std = np.sqrt(self.var_pi)
        return self.mean_pi + std * rng.standard_normal((int(n), self.dim))

    def to_pair(self) -> LogDensityPair:
        """View this pair through the generic :class:`LogDensityPair` interface."""
        return LogDensityPair(
            dim=self.dim,
            log_mu0=self.log_mu0,
            log_pi_unnorm=self.log_pi,
            sampler_mu0=self.sample_mu0,
        )


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Diagonal Gaussian ``N(mean, diag(var))``, one tempered marginal."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if mean.shape != var.shape:
            raise ValueError("mean and var must have matching shapes")
        if not np.all(var > 0.0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self):
        return self.mean.shape[0]

    def logpdf(self, x):
        x = _check_points(x, self.dim)
        z = (x - self.mean) ** 2 / self.var
        return -0.5 * np.sum(z, axis=-1) - 0.5 * (
            self.dim * _LOG_2PI + np.sum(np.log(self.var))
        )

    def sample(self, rng, n):
        return self.mean + np.sqrt(self.var) * rng.standard_normal((int(n), self.dim))


def _check_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise ValueError(f"expected points with last dimension {dim}, got shape {x.shape}")
    return x


def _check_lambda(lam):
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"temperature must lie in [0, 1], got {lam}")
    return lam


def score(pair: LogDensityPair, x):
    """Log-ratio ``s(x) = log pi(x) - log mu0(x)``.

    Adding a constant to the unnormalized target shifts all scores by the
    same constant, which cancels in every downstream use.
    """
    x = _check_points(x, pair.dim)
    return np.asarray(pair.log_pi_unnorm(x)) - np.asarray(pair.log_mu0(x))


def tempered_logpdf(pair: LogDensityPair, lam, x):
    """Unnormalized log-density of the tempered interpolation at ``lam``.

    Returns ``(1 - lam) * log_mu0(x) + lam * log_pi(x)``; the endpoints
    ``lam = 0`` and ``lam = 1`` reproduce the proposal and the target
    exactly.
    """
    lam = _check_lambda(lam)
    x = _check_points(x, pair.dim)
    return (1.0 - lam) * np.asarray(pair.log_mu0(x)) + lam * np.asarray(
        pair.log_pi_unnorm(x)
    )


def gaussian_state(pair: GaussianPair, lam) -> GaussianState:
    """Exact tempered marginal of a :class:`GaussianPair`.

    Per coordinate the tempered density is Gaussian with precision
    ``p = (1 - lam) + lam / tau^2`` and mean ``lam * m / tau^2 / p``;
    for ``tau = 1`` this reduces to mean ``lam * m`` and unit variance.
    """
    lam = _check_lambda(lam)
    precision = (1.0 - lam) + lam / pair.var_pi
    var = 1.0 / precision
    mean = lam * pair.mean_pi / pair.var_pi * var
    return GaussianState(mean=mean, var=var)


def fisher_info(pair: GaussianPair, lam) -> float:
    """Variance of the score under the tempered marginal at ``lam``.

    With ``s(x) = sum_i a_i x_i^2 + b_i x_i + const`` and the tempered
    marginal ``N(nu_i, sigma_i^2)`` per coordinate, each coordinate
    contributes ``2 a_i^2 sigma_i^4 + (2 a_i nu_i + b_i)^2 sigma_i^2``
    and coordinates add (they are independent under the whole path).
    """
    lam = _check_lambda(lam)
    a = 0.5 * (1.0 - 1.0 / pair.var_pi)
    b = pair.mean_pi / pair.var_pi
    state = gaussian_state(pair, lam)
    per_coord = 2.0 * a**2 * state.var**2 + (2.0 * a * state.mean + b) ** 2 * state.var
    return float(np.sum(per_coord))


def kl_gaussian(p: GaussianState, q: GaussianState) -> float:
    """KL divergence ``KL(p | q)`` between diagonal Gaussians."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    ratio = p.var / q.var
    per_coord = 0.5 * (ratio + (p.mean - q.mean) ** 2 / q.var - 1.0 - np.log(ratio))
    return float(np.sum(per_coord))


def load_model_config(source) -> GaussianPair:
    """Build a :class:`GaussianPair` from a key-value configuration file.

    The ``[model]`` section must set ``family = gaussian`` and ``dim``,
    and may set ``mean`` and ``var`` either as scalars (broadcast to all
    coordinates) or as comma-separated per-coordinate lists.

    Parameters
    ----------
    source : str | pathlib.Path | configparser.SectionProxy
        Path to a config file, or an already-parsed ``[model]`` section.
    """
    if isinstance(source, (configparser.SectionProxy, dict)):
        section = source
    else:
        parser = configparser.ConfigParser()
        read = parser.read(str(source))
        if not read:
            raise ValueError(f"cannot read model config {source!r}")
        if "model" not in parser:
            raise ValueError(f"model config {source!r} lacks a [model] section")
        section = parser["model"]

    family = str(section.get("family", "gaussian")).strip().lower()
    if family != "gaussian":
        raise ValueError(f"unsupported model family {family!r}")
    if "dim" not in section:
        raise ValueError("model config must set dim")
    dim = int(section["dim"])
    mean = _parse_vector(section.get("mean", "0.0"))
    var = _parse_vector(section.get("var", "1.0"))
    return GaussianPair(dim=dim, mean=mean, var=var)


def _parse_vector(text):
    if isinstance(text, (int, float)):
        return float(text)
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    values = [float(p) for p in parts]
    return values[0] if len(values) == 1 else np.asarray(values)
