"""Bounded normal mean minimax problem and the estimators built on it.

``bnm_solve`` computes the minimax rule and risk for estimating a normal
mean known to lie in ``[-tau, tau]`` from one unit-variance observation.
``BnmCurve`` tabulates the minimax risk over a tau grid; the curve feeds
both the oracle risk formula and the adaptive solver's scalings.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import priorsolve
from .model import PolicyTable

__all__ = ["BnmCurve", "bnm_solve", "bnm_risk_curve", "b_minimax_estimate", "b_minimax_risk"]

TAU_GRID_MAX = 9.0
BIAS_STEP = 0.05
OBS_STEP = 0.1
OBS_PAD = 3.0


def _span_grid(lo, hi, step):
    n = max(1, round((hi - lo) / step))
    return np.linspace(lo, hi, n + 1)


def bnm_problem(tau):
    """Discretization of the bounded normal mean game at bound ``tau``."""
    bias = _span_grid(-tau, tau, BIAS_STEP) if tau > 0 else np.array([0.0])
    obs = _span_grid(-tau - OBS_PAD, tau + OBS_PAD, OBS_STEP)
    return priorsolve.DiscreteProblem(bias_grid=bias, obs_grid=obs, weights=1.0)


def bnm_solve(tau, cfg=None):
    """Minimax policy and risk for the bounded normal mean problem.

    Returns
    -------
    (PolicyTable, float)
        The minimax rule tabulated on the observation grid and its risk.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0:
        obs = _span_grid(-OBS_PAD, OBS_PAD, OBS_STEP)
        return PolicyTable(obs, np.zeros_like(obs)), 0.0
    dp = bnm_problem(tau)
    res = priorsolve.solve_least_favorable(dp, cfg)
    return PolicyTable(dp.obs_grid, res.policy), res.value


@dataclass(frozen=True)
class BnmCurve:
    """Minimax risk of the bounded normal mean problem as a function of tau.

    Evaluation is linear on [0, 0.1] (anchored at risk 0 at tau 0, where the
    risk is quadratic and a spline cell would overshoot), a shape-preserving
    monotone spline on [0.1, 9], and flat beyond 9.
    """

    tau_grid: np.ndarray
    risks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau_grid", np.asarray(self.tau_grid, dtype=float))
        object.__setattr__(self, "risks", np.asarray(self.risks, dtype=float))
        object.__setattr__(self, "_spline", PchipInterpolator(self.tau_grid, self.risks, extrapolate=False))

    def __call__(self, tau):
        tau = np.abs(np.asarray(tau, dtype=float))
        first_tau, first_risk = self.tau_grid[0], self.risks[0]
        out = np.where(
            tau <= first_tau,
            first_risk * tau / first_tau,
            self._spline(np.clip(tau, first_tau, self.tau_grid[-1])),
        )
        return out if out.ndim else float(out)


@lru_cache(maxsize=4)
def bnm_risk_curve(step=0.1, cfg=None):
    """Tabulate the minimax risk over tau in {step, 2*step, ..., 9}."""
    taus = _span_grid(step, TAU_GRID_MAX, step)
    risks = np.array([priorsolve.solve_least_favorable(bnm_problem(t), cfg).value for t in taus])
    return BnmCurve(taus, risks)


def b_minimax_estimate(p, bound, curve=None):
    """Assembled estimate that is minimax when the restricted bias is in [-bound, bound].

    ``bound`` is in outcome units; ``bound=0`` recovers the efficient
    pooled estimate and ``bound=inf`` returns the unrestricted estimate
    exactly.
    """
    from .model import assemble_estimate, gmm_estimate

    if bound < 0:
        raise ValueError("bound must be nonnegative")
    if bound == 0:
        return gmm_estimate(p)
    if math.isinf(bound):
        return p.y_u
    policy, _ = bnm_solve(bound / math.sqrt(p.sigma_o))
    return assemble_estimate(p, policy)


def b_minimax_risk(sigma_u, rho, bound, curve=None):
    """Oracle worst-case mean squared error under a known bias bound.

    ``bound`` is the scaled bias bound (bias magnitude divided by the
    standard error of the estimator difference); the result is in outcome
    units squared.
    """
    rho2 = rho * rho
    if bound == 0:
        return sigma_u * (1.0 - rho2)
    if math.isinf(bound):
        return sigma_u
    curve = curve or bnm_risk_curve()
    return rho2 * sigma_u * curve(bound) + sigma_u * (1.0 - rho2)
