"""Temperature schedules, step sizes, convergence rates, and the schedule ODE.

A tempering run is described either by its temperatures
``0 = lam_0 < lam_1 < ... < lam_T = 1`` or by the equivalent
multiplicative step sizes ``gam_n = (lam_n - lam_{n-1}) / (1 - lam_{n-1})``
(inverse map ``lam_n = 1 - prod_{k<=n}(1 - gam_k)``).  The first ``T - 1``
steps are genuine descent steps with ``gam < 1``; the final step bridges
to the target with ``gam_T = 1``.

The descent iterates admit an explicit convergence certificate
(:func:`rate_cn`, bounded above by :func:`rate_bound`), and a constant
per-step divergence budget turns the temperature path into the ODE
``dlam/dt = c / sqrt(I(lam))`` with ``I`` the score variance along the
path (:func:`solve_schedule_ode`).  For diagonal-Gaussian pairs the
qualitative shape of that path is known in closed form
(:func:`analytic_shape`).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, NumericError
from .model import GaussianPair

__all__ = [
    "Schedule",
    "StepSizes",
    "OdePath",
    "lambdas_to_gammas",
    "gammas_to_lambdas",
    "rate_cn",
    "rate_bound",
    "solve_schedule_ode",
    "analytic_shape",
    "schedule_to_csv",
    "schedule_from_csv",
    "schedule_to_json",
    "schedule_from_json",
]

_ENDPOINT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Schedule:
    """Ordered temperatures ``0 = lam_0 < ... < lam_T = 1`` with ``T >= 1``."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise ValueError("a schedule needs at least the two endpoints 0 and 1")
        if abs(lam[0]) > _ENDPOINT_TOL or abs(lam[-1] - 1.0) > _ENDPOINT_TOL:
            raise ValueError("schedule must start at 0 and end at 1")
        if not np.all(np.diff(lam) > 0.0):
            raise ValueError("schedule temperatures must be strictly increasing")
        object.__setattr__(self, "lambdas", lam)

    @property
    def n_steps(self):
        """Number of temperature moves ``T``."""
        return self.lambdas.size - 1


@dataclass(frozen=True, eq=False)
class StepSizes:
    """Multiplicative step sizes, each in ``(0, 1]``."""

    gammas: np.ndarray

    def __post_init__(self):
        gam = np.asarray(self.gammas, dtype=float)
        if gam.ndim != 1 or gam.size < 1:
            raise ValueError("need at least one step size")
        if not np.all((gam > 0.0) & (gam <= 1.0)):
            raise ValueError("step sizes must lie in (0, 1]")
        object.__setattr__(self, "gammas", gam)


@dataclass(frozen=True, eq=False)
class OdePath:
    """Discrete temperature path: ``lambdas[k]`` at time ``times[k]``."""

    times: np.ndarray
    lambdas: np.ndarray


def lambdas_to_gammas(s: Schedule) -> StepSizes:
    """Step sizes of a schedule: ``gam_n = (lam_n - lam_{n-1}) / (1 - lam_{n-1})``.

    The last entry is exactly 1 (the bridging step).
    """
    lam = s.lambdas
    gam = (lam[1:] - lam[:-1]) / (1.0 - lam[:-1])
    gam[-1] = 1.0
    return StepSizes(gammas=gam)


def gammas_to_lambdas(g: StepSizes) -> Schedule:
    """Schedule of a step-size sequence: ``lam_n = 1 - prod_{k<=n}(1 - gam_k)``.

    Requires the terminal step to be exactly 1 (so the schedule ends at
    the target) and every earlier step to be strictly below 1.  Round
    trip with :func:`lambdas_to_gammas` is the identity to 1e-12.
    """
    gam = g.gammas
    if gam[-1] != 1.0:
        raise ValueError("the final step size must be exactly 1 to reach the target")
    if gam.size > 1 and np.any(gam[:-1] >= 1.0):
        raise ValueError("only the final step size may equal 1")
    lam = np.empty(gam.size + 1)
    lam[0] = 0.0
    lam[1:] = 1.0 - np.cumprod(1.0 - gam)
    return Schedule(lambdas=lam)


def rate_cn(g: StepSizes) -> np.ndarray:
    """Convergence certificate ``C_n`` of the descent prefix of ``g``.

    ``C_n^{-1} = sum_{k<=n} (gam_k / gam_1) prod_{i<=k} 1/(1 - gam_i)``.
    A terminal step of exactly 1 is excluded (the certificate describes
    the descent steps; the formula has a pole at 1).  Any other step
    ``>= 1`` is an error.
    """
    gam = g.gammas
    if gam[-1] == 1.0:
        gam = gam[:-1]
    if gam.size == 0:
        raise ValueError("no descent steps before the bridging step")
    if np.any(gam >= 1.0):
        raise ValueError("rate requires all evaluated step sizes below 1")
    growth = np.cumprod(1.0 / (1.0 - gam))
    inv_c = np.cumsum(gam / gam[0] * growth)
    return 1.0 / inv_c


def rate_bound(s: Schedule) -> np.ndarray:
    """Upper bound ``1 - lam_n = prod_{k<=n}(1 - gam_k)`` on :func:`rate_cn`.

    Returned for ``n = 1..T-1``, the descent steps.  The caller scales by
    ``(lam_1)^{-1} KL(pi | mu0)`` to bound the KL of the n-th iterate.
    """
    return 1.0 - s.lambdas[1:-1]


def solve_schedule_ode(info, c, lambda0=0.0, max_steps=100_000, step=1e-3) -> OdePath:
    """Integrate ``dlam/dt = c / sqrt(info(lam))`` by explicit Euler.

    Fixed step size (default 1e-3); the path is clamped to 1 on the step
    that crosses it.  Only the qualitative shape of the path is needed
    downstream, so no adaptive stepping is attempted.

    Parameters
    ----------
    info : callable
        Positive information function of the temperature.
    c : float
        Speed constant, positive.
    lambda0 : float
        Starting temperature in ``[0, 1)``.
    max_steps : int
        Euler-step budget; exceeding it raises
        :class:`~tempersmc.errors.BudgetExceededError` with the partial
        path attached.
    step : float
        Euler step size ``h``.

    Returns
    -------
    OdePath
    """
    c = float(c)
    if c <= 0.0:
        raise ValueError("speed constant c must be positive")
    if step <= 0.0:
        raise ValueError("step size must be positive")
    lam = float(lambda0)
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda0 must lie in [0, 1)")

    times = [0.0]
    path = [lam]
    for k in range(int(max_steps)):
        value = float(info(lam))
        if not np.isfinite(value) or value <= 0.0:
            raise NumericError(f"information must be positive, got {value} at lam={lam}")
        lam_next = lam + step * c / np.sqrt(value)
        t_next = (k + 1) * step
        if lam_next >= 1.0:
            times.append(t_next)
            path.append(1.0)
            return OdePath(times=np.asarray(times), lambdas=np.asarray(path))
        times.append(t_next)
        path.append(lam_next)
        lam = lam_next
    raise BudgetExceededError(
        f"temperature path did not reach 1 within {max_steps} Euler steps",
        partial=OdePath(times=np.asarray(times), lambdas=np.asarray(path)),
    )


def analytic_shape(pair: GaussianPair) -> str:
    """Qualitative shape of the constant-divergence temperature path.

    Classified by the signs of ``tau^2 - 1`` per coordinate (tolerance
    1e-12; exact ties count as the linear class):

    - all above 1: ``"negative-exponential"`` (fast start, slow finish)
    - all below 1: ``"exponential-growth"`` (slow start, fast finish)
    - all equal 1 with a mean shift: ``"linear"``
    - variances on both sides of 1: ``"mixed"`` (slow at both ends)
    """
    dev = pair.var_pi - 1.0
    wider = dev > _ENDPOINT_TOL
    narrower = dev < -_ENDPOINT_TOL
    if np.any(wider) and np.any(narrower):
        return "mixed"
    if np.any(wider):
        return "negative-exponential"
    if np.any(narrower):
        return "exponential-growth"
    if np.all(pair.mean_pi == 0.0):
        raise ValueError("proposal and target coincide; no tempering path exists")
    return "linear"


def schedule_to_csv(s: Schedule, path):
    """Write one temperature per row under a ``lambda`` header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda"])
        for lam in s.lambdas:
            writer.writerow([repr(float(lam))])


def schedule_from_csv(path) -> Schedule:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["lambda"]:
        raise ValueError(f"{path!r} is not a schedule CSV (missing 'lambda' header)")
    return Schedule(lambdas=np.asarray([float(r[0]) for r in rows[1:]]))


def schedule_to_json(s: Schedule, path):
    """Write the temperatures as a bare JSON array."""
    with open(path, "w") as fh:
        json.dump([float(lam) for lam in s.lambdas], fh)


def schedule_from_json(path) -> Schedule:
    with open(path) as fh:
        values = json.load(fh)
    return Schedule(lambdas=np.asarray(values, dtype=float))
