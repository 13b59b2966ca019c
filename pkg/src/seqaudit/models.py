"""Observation processes and black-box Wald decision devices.

A device accumulates the log-likelihood ratio prescribed by its world model
(which may disagree with the process actually generating observations) and
stops when the sum exits the threshold interval.  The same dataclasses serve
as observation models and as world models; a matched device simply reuses
the observation model instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import Decision, Hypothesis, Thresholds, TrialRecord, ValidationError


@dataclass(frozen=True)
class GaussianIIDModel:
    """i.i.d. Gaussian observations: X_k ~ N(mu_h, sigma_h^2) under hypothesis h."""

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValidationError("standard deviations must be positive")

    def sample(self, h, rng: np.random.Generator, size=None, x_prev=None):
        mu = np.where(np.asarray(h) == 1, self.mu1, self.mu2)
        sigma = np.where(np.asarray(h) == 1, self.sigma1, self.sigma2)
        return rng.normal(mu, sigma, size=size)

    def llr_increment(self, x, x_prev=None):
        x = np.asarray(x, dtype=np.float64)
        return (
            math.log(self.sigma2 / self.sigma1)
            + (x - self.mu2) ** 2 / (2.0 * self.sigma2**2)
            - (x - self.mu1) ** 2 / (2.0 * self.sigma1**2)
        )

    @property
    def is_markov(self) -> bool:
        return False


@dataclass(frozen=True)
class MarkovGaussianModel:
    """Gaussian AR observations: X_k | X_{k-1}=x ~ N(v_h + (w_h+1) x, sigma_h^2), X_0 = 0."""

    v1: float
    v2: float
    w1: float
    w2: float
    sigma1: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValidationError("standard deviations must be positive")

    def sample(self, h, rng: np.random.Generator, size=None, x_prev=0.0):
        h = np.asarray(h)
        v = np.where(h == 1, self.v1, self.v2)
        w = np.where(h == 1, self.w1, self.w2)
        sigma = np.where(h == 1, self.sigma1, self.sigma2)
        mean = v + (w + 1.0) * np.asarray(x_prev)
        return rng.normal(mean, sigma, size=size)

    def llr_increment(self, x, x_prev=0.0):
        x = np.asarray(x, dtype=np.float64)
        x_prev = np.asarray(x_prev, dtype=np.float64)
        r2 = x - x_prev - self.v2 - self.w2 * x_prev
        r1 = x - x_prev - self.v1 - self.w1 * x_prev
        return (
            math.log(self.sigma2 / self.sigma1)
            + r2**2 / (2.0 * self.sigma2**2)
            - r1**2 / (2.0 * self.sigma1**2)
        )

    @property
    def is_markov(self) -> bool:
        return True


@dataclass(frozen=True)
class DriftDiffusionModel:
    """Ito observation process dX_t = mu_h dt + sigma dW_t, X_0 = 0."""

    mu1: float
    mu2: float
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValidationError("noise amplitude must be positive")


DiscreteModel = Union[GaussianIIDModel, MarkovGaussianModel]
WorldModel = Union[GaussianIIDModel, MarkovGaussianModel, DriftDiffusionModel]


def llr_increment_iid(x: float, wm: GaussianIIDModel) -> float:
    """Per-observation log-likelihood-ratio increment believed by an i.i.d. device."""
    return float(wm.llr_increment(x))


def llr_increment_markov(x_prev: float, x_cur: float, wm: MarkovGaussianModel) -> float:
    """Per-observation increment believed by a Markov-Gaussian device."""
    return float(wm.llr_increment(x_cur, x_prev))


def sample_observation(
    model, h: Hypothesis, rng: np.random.Generator, x_prev: float = 0.0
) -> float:
    """Draw one observation from the h-conditioned law of ``model``."""
    return float(model.sample(int(h), rng, x_prev=x_prev))


@dataclass(frozen=True)
class WaldOutcome:
    """Result of one device run.

    Truncated runs (the observation window elapsed with the walk still
    inside the thresholds) carry no record and are excluded from all
    statistics downstream.
    """

    record: Optional[TrialRecord]
    time: float
    truncated: bool


def run_wald_discrete(
    model,
    wm,
    th: Thresholds,
    h: Hypothesis,
    max_steps: int,
    rng: np.random.Generator,
) -> WaldOutcome:
    """Run one discrete-time Wald trial.

    Observations come from ``model`` under hypothesis ``h``; the device
    accumulates ``wm``'s increments until the sum leaves (l2, l1) or
    ``max_steps`` elapses.
    """
    if max_steps < 1:
        raise ValidationError("max_steps must be >= 1")
    s = 0.0
    x_prev = 0.0
    for k in range(1, max_steps + 1):
        x = float(model.sample(int(h), rng, x_prev=x_prev))
        s += float(wm.llr_increment(x, x_prev))
        x_prev = x
        if s >= th.l1 or s <= th.l2:
            d = Decision.D1 if s >= th.l1 else Decision.D2
            rec = TrialRecord(Hypothesis(int(h)), d, float(k), terminal_llr=s)
            return WaldOutcome(record=rec, time=float(k), truncated=False)
    return WaldOutcome(record=None, time=float(max_steps), truncated=True)


def run_wald_continuous(
    model: DriftDiffusionModel,
    wm: DriftDiffusionModel,
    th: Thresholds,
    h: Hypothesis,
    dt: float,
    t_max: float,
    rng: np.random.Generator,
) -> WaldOutcome:
    """Run one continuous-time Wald trial by Euler-Maruyama integration.

    The device's log-likelihood ratio is itself a drift-diffusion, so it is
    integrated directly; the terminal value is clamped to the crossed
    threshold, which is exact in the continuum limit.
    """
    from .analytic import continuous_llr_params

    if dt <= 0 or t_max <= dt:
        raise ValidationError("need dt > 0 and t_max > dt")
    p = continuous_llr_params(model, wm)
    a = p.a1 if int(h) == 1 else p.a2
    taus, ds, terms, decided = _wald_continuous_block(
        np.full(1, a), p.b, th, dt, t_max, rng
    )
    if not decided[0]:
        return WaldOutcome(record=None, time=t_max, truncated=True)
    rec = TrialRecord(
        Hypothesis(int(h)),
        Decision(int(ds[0])),
        float(taus[0]),
        terminal_llr=float(terms[0]),
    )
    return WaldOutcome(record=rec, time=float(taus[0]), truncated=False)


def _wald_discrete_block(model, wm, th, h: np.ndarray, max_steps: int, rng):
    """Vectorized discrete trials; one stream drives the whole block.

    Returns (times, decisions, terminal_llrs, decided) arrays over the block.
    """
    n = len(h)
    s = np.zeros(n)
    x_prev = np.zeros(n)
    times = np.zeros(n)
    decisions = np.zeros(n, dtype=np.int8)
    terminal = np.full(n, np.nan)
    alive = np.arange(n)
    h = np.asarray(h)
    for k in range(1, max_steps + 1):
        x = model.sample(h[alive], rng, size=alive.size, x_prev=x_prev[alive])
        s[alive] += wm.llr_increment(x, x_prev[alive])
        x_prev[alive] = x
        s_alive = s[alive]
        done = (s_alive >= th.l1) | (s_alive <= th.l2)
        if done.any():
            idx = alive[done]
            times[idx] = k
            decisions[idx] = np.where(s[idx] >= th.l1, 1, 2)
            terminal[idx] = s[idx]
            alive = alive[~done]
            if alive.size == 0:
                break
    decided = decisions != 0
    return times, decisions, terminal, decided


def _wald_continuous_block(a: np.ndarray, b: float, th, dt: float, t_max: float, rng):
    """Vectorized Euler-Maruyama runs of dS = a dt + sqrt(2b) dW per trial."""
    n = len(a)
    s = np.zeros(n)
    times = np.zeros(n)
    decisions = np.zeros(n, dtype=np.int8)
    terminal = np.full(n, np.nan)
    alive = np.arange(n)
    drift = a * dt
    diff = math.sqrt(2.0 * b * dt)
    n_steps = int(math.ceil(t_max / dt))
    for k in range(1, n_steps + 1):
        s[alive] += drift[alive] + diff * rng.standard_normal(alive.size)
        s_alive = s[alive]
        done = (s_alive >= th.l1) | (s_alive <= th.l2)
        if done.any():
            idx = alive[done]
            times[idx] = k * dt
            up = s[idx] >= th.l1
            decisions[idx] = np.where(up, 1, 2)
            terminal[idx] = np.where(up, th.l1, th.l2)
            alive = alive[~done]
            if alive.size == 0:
                break
    decided = decisions != 0
    return times, decisions, terminal, decided
