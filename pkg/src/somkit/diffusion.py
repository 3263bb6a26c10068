"""Variance schedules, the forward noising chain and its one-step posterior.

A :class:`Schedule` holds ``beta[t]`` for steps ``t = 1..T`` together with
the derived ``alpha`` and cumulative ``alpha_bar`` arrays, with the
convention ``alpha_bar[0] == 1`` so the step-1 posterior is deterministic.
All closed forms below are the standard Gaussian-chain identities:

    q(x_t | x_{t-1}) = N(sqrt(1-beta_t) x_{t-1}, beta_t I)
    q(x_t | x_0)     = N(sqrt(abar_t) x_0, (1-abar_t) I)
    q(x_{t-1} | x_t, x_0):
        mean = [sqrt(abar_{t-1}) beta_t x_0
                + sqrt(alpha_t) (1-abar_{t-1}) x_t] / (1-abar_t)
        var  = beta_t (1-abar_{t-1}) / (1-abar_t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream

__all__ = [
    "Schedule",
    "ScheduleTooWeakError",
    "make_schedule",
    "q_step",
    "q_step_from_noise",
    "q_marginal",
    "q_marginal_from_noise",
    "q_posterior",
]

# a schedule must nearly destroy the signal by its last step
ALPHA_BAR_MAX_FINAL = 0.05


class ScheduleTooWeakError(ValueError):
    """The schedule leaves too much signal at the last step."""


@dataclass(frozen=True)
class Schedule:
    """Diffusion variance schedule for ``T = len(betas)`` steps.

    ``alpha_bar`` has length ``T + 1`` and is indexed directly by the step
    number, ``alpha_bar[0] == 1``.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        alphas = 1.0 - betas
        abar = np.concatenate([[1.0], np.cumprod(alphas)])
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bar", abar)

    @property
    def steps(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def _check_t(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.steps:
            raise ValueError(f"step {t} out of range [{lo}, {self.steps}]")


def make_schedule(steps: int, kind: str = "linear-beta",
                  lo: float = 0.3, hi: float = 0.9) -> Schedule:
    """Build a schedule; raises :class:`ScheduleTooWeakError` when the final
    ``alpha_bar`` stays above 0.05.

    ``linear-beta`` spaces beta linearly from ``lo`` to ``hi``;
    ``geometric-alpha`` makes ``alpha_bar`` geometric from ``1-lo`` down to
    ``1-hi``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 < lo <= hi < 1:
        raise ValueError("need 0 < lo <= hi < 1")
    if kind == "linear-beta":
        betas = np.linspace(lo, hi, steps)
    elif kind == "geometric-alpha":
        if steps == 1:
            abar = np.array([1.0 - hi])
        else:
            ratio = ((1.0 - hi) / (1.0 - lo)) ** (1.0 / (steps - 1))
            abar = (1.0 - lo) * ratio ** np.arange(steps)
        prev = np.concatenate([[1.0], abar[:-1]])
        betas = 1.0 - abar / prev
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    sched = Schedule(betas)
    if sched.alpha_bar[-1] > ALPHA_BAR_MAX_FINAL:
        raise ScheduleTooWeakError(
            f"alpha_bar at step {steps} is {sched.alpha_bar[-1]:.4g} "
            f"> {ALPHA_BAR_MAX_FINAL}; increase betas or step count"
        )
    return sched


def q_step_from_noise(x_prev, t: int, sched: Schedule, eps):
    """One forward step given pre-drawn standard normal noise."""
    b = sched.beta(t)
    return math.sqrt(1.0 - b) * x_prev + math.sqrt(b) * eps


def q_step(x_prev: np.ndarray, t: int, sched: Schedule, rng: RngStream) -> np.ndarray:
    """Sample ``q(x_t | x_{t-1})``."""
    eps = rng.normal(np.shape(x_prev))
    return q_step_from_noise(x_prev, t, sched, eps)


def q_marginal_from_noise(x0, t: int, sched: Schedule, eps):
    """Closed-form ``x_t`` sample for pre-drawn noise; ``t = 0`` returns x0."""
    sched._check_t(t, allow_zero=True)
    a = float(sched.alpha_bar[t])
    if t == 0:
        return x0
    return math.sqrt(a) * x0 + math.sqrt(1.0 - a) * eps


def q_marginal(x0: np.ndarray, t: int, sched: Schedule, rng: RngStream) -> np.ndarray:
    """Sample ``q(x_t | x_0)`` in one shot."""
    sched._check_t(t, allow_zero=True)
    if t == 0:
        return np.array(x0, copy=True)
    eps = rng.normal(np.shape(x0))
    return q_marginal_from_noise(x0, t, sched, eps)


def q_posterior(x0_hat, x_t, t: int, sched: Schedule):
    """Gaussian parameters of ``q(x_{t-1} | x_t, x0_hat)``.

    Returns ``(mean, var)`` with a scalar variance.  At ``t == 1`` the
    posterior collapses: ``(x0_hat, 0.0)``.
    """
    sched._check_t(t)
    if t == 1:
        return x0_hat, 0.0
    b = sched.beta(t)
    a = float(sched.alphas[t - 1])
    abar_prev = float(sched.alpha_bar[t - 1])
    abar = float(sched.alpha_bar[t])
    mean = (
        math.sqrt(abar_prev) * b * x0_hat
        + math.sqrt(a) * (1.0 - abar_prev) * x_t
    ) / (1.0 - abar)
    var = b * (1.0 - abar_prev) / (1.0 - abar)
    return mean, var
