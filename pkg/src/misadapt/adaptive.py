"""Optimally adaptive shrinkage policies and their regret diagnostics.

An adaptive policy minimizes the worst case, over the unknown scaled bias,
of the ratio of its risk to the oracle risk achievable with a known bias
bound.  That is a weighted minimax problem with bias-point scalings
``1 / (bnm_risk(|b|) + rho^-2 - 1)``, solved on the standard discretization
(bias grid [-9, 9] step 0.025, observation grid [-12, 12] step 0.05).

Risk-constrained variants cap the worst-case risk at a multiple of the
unrestricted estimator's variance by flattening the scaling denominators at
an internal threshold ``t`` and root-finding ``t`` against the cap.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import bnm, model, priorsolve
from .errors import InfeasibleCap, RhoTooExtreme

__all__ = [
    "AdaptiveSolution",
    "RiskCap",
    "RHO2_MAX",
    "solve_adaptive",
    "adaptation_regret",
    "worst_case_regret",
    "solve_constrained",
]

RHO2_MAX = math.tanh(3.0) ** 2

BIAS_SPAN = 9.0
BIAS_STEP = 0.025
OBS_SPAN = 12.0
OBS_STEP = 0.05

# The additive variance-ratio constant enters each bias point's scaled risk
# (numerator and denominator of the regret ratio share it), so it is folded
# into the per-point offsets rather than the prior-independent offset.
_bias_grid = lambda: np.linspace(-BIAS_SPAN, BIAS_SPAN, int(round(2 * BIAS_SPAN / BIAS_STEP)) + 1)
_obs_grid = lambda: np.linspace(-OBS_SPAN, OBS_SPAN, int(round(2 * OBS_SPAN / OBS_STEP)) + 1)


@dataclass(frozen=True)
class AdaptiveSolution:
    """Solved adaptive policy for one squared correlation."""

    rho2: float
    policy: model.PolicyTable
    prior: priorsolve.PriorWeights
    max_regret: float


@dataclass(frozen=True)
class RiskCap:
    """Worst-case risk cap (multiple of the unrestricted variance) and the
    internal threshold solving cap = t * regret(t)."""

    r_bar: float
    t_star: float


def _check_rho2(rho2):
    if rho2 > RHO2_MAX + 1e-12:
        raise RhoTooExtreme(
            f"rho^2={rho2:.6f} exceeds tanh(3)^2={RHO2_MAX:.6f}; clamp explicitly to proceed"
        )


def _identity_solution(rho2):
    obs = _obs_grid()
    prior = priorsolve.PriorWeights(np.array([0.0]), np.array([1.0]))
    return AdaptiveSolution(rho2, model.PolicyTable.identity(obs), prior, 1.0)


def adaptive_problem(rho, curve=None, cap_threshold=None):
    """Discrete problem whose value is the worst-case adaptation regret.

    ``cap_threshold`` (same scale as the regret denominators, i.e. oracle
    risk in units of rho^2 * sigma_u) flattens the denominators from below
    for the risk-constrained variant.
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    _check_rho2(rho2)
    curve = curve or bnm.bnm_risk_curve()
    c = 1.0 / rho2 - 1.0
    bias = _bias_grid()
    denom = curve(np.abs(bias)) + c
    if cap_threshold is not None:
        denom = np.minimum(denom, cap_threshold)
    return priorsolve.DiscreteProblem(
        bias_grid=bias,
        obs_grid=_obs_grid(),
        weights=1.0 / denom,
        point_offsets=np.full_like(bias, c),
    )


def solve_adaptive(rho, cfg=None, curve=None):
    """Optimally adaptive policy and its worst-case adaptation regret.

    ``rho = 0`` is defined to return the identity policy with regret one:
    the difference then carries no information about the needed adjustment.
    """
    rho2 = rho * rho
    if rho2 == 0.0:
        return _identity_solution(0.0)
    _check_rho2(rho2)
    dp = adaptive_problem(rho, curve=curve)
    res = priorsolve.solve_least_favorable(dp, cfg)
    policy = model.PolicyTable(dp.obs_grid, res.policy)
    return AdaptiveSolution(rho2, policy, res.prior, res.value)


def _risk_fn(policy):
    """Unit-normal risk evaluator and large-bias risk limit for a policy."""
    if hasattr(policy, "risk"):  # threshold rules carry closed forms
        return policy.risk, policy.tail_risk_limit
    if isinstance(policy, model.PolicyTable):
        return (lambda b: model.policy_risk(policy, b)), 1.0
    raise TypeError(f"cannot evaluate risk of {type(policy).__name__}")


def adaptation_regret(policy, rho, bound, curve=None, tail=None):
    """Worst-case risk of a policy over scaled biases up to ``bound``,
    relative to the oracle risk at that bound.

    ``bound`` is in scaled-bias units (bias over the standard error of the
    difference); ``bound=inf`` takes the worst case over the whole grid plus
    the large-bias limit.  ``tail='flat'`` marks policies that do not track
    the identity for large arguments (their large-bias risk diverges).
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    curve = curve or bnm.bnm_risk_curve()
    c = 1.0 / rho2 - 1.0
    risk, tail_limit = _risk_fn(policy)
    if tail == "flat":
        tail_limit = math.inf

    grid = _bias_grid()
    if math.isinf(bound):
        num = float(np.max(risk(grid))) + c
        num = max(num, (tail_limit + c) if math.isfinite(tail_limit) else math.inf)
        return num / (1.0 + c)
    sel = grid[np.abs(grid) <= bound + 1e-12]
    if sel.size == 0:
        sel = np.array([0.0])
    num = float(np.max(risk(sel))) + c
    return num / (float(curve(bound)) + c)


def worst_case_regret(policy, rho, curve=None, tail=None):
    """Supremum of the adaptation regret over all bias bounds.

    Evaluated exactly on the solver's bias grid augmented with the
    unbounded case: running-maximum numerators against the oracle
    denominator at each bound.
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    curve = curve or bnm.bnm_risk_curve()
    c = 1.0 / rho2 - 1.0
    risk, tail_limit = _risk_fn(policy)
    if tail == "flat":
        tail_limit = math.inf

    grid = _bias_grid()
    half = grid[grid >= 0.0]
    risks = np.maximum(risk(half), risk(-half))
    running = np.maximum.accumulate(risks)
    ratios = (running + c) / (curve(half) + c)
    best = float(np.max(ratios))
    if math.isinf(tail_limit):
        return math.inf
    return max(best, (max(float(running[-1]), tail_limit) + c) / (1.0 + c))


def scaled_risk(policy, rho, b_tilde):
    """Risk of the assembled estimator in units of the unrestricted variance."""
    risk, _ = _risk_fn(policy)
    rho2 = rho * rho
    return rho2 * np.asarray(risk(np.asarray(b_tilde, dtype=float))) + (1.0 - rho2)


def worst_scaled_risk(policy, rho):
    grid = _bias_grid()
    return float(np.max(scaled_risk(policy, rho, grid)))


def solve_constrained(rho, cap, cfg=None, curve=None, rel_tol=1e-3):
    """Adaptive policy whose worst-case scaled risk is capped at ``cap``.

    ``cap`` is a multiple of the unrestricted estimator's variance and must
    exceed one (no rule can beat the unrestricted estimator's worst-case
    risk while still adapting).  Root-finds the internal threshold ``t``
    with ``t * regret(t) = cap`` by bisection, re-solving the reweighted
    minimax problem at each trial ``t``.
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    _check_rho2(rho2)
    if math.isinf(cap):
        return solve_adaptive(rho, cfg, curve), RiskCap(math.inf, math.inf)
    if cap <= 1.0:
        raise InfeasibleCap(f"cap={cap} must exceed 1 (worst-case risk of the unrestricted estimate)")
    curve = curve or bnm.bnm_risk_curve()

    def solve_at(t):
        # t is in unrestricted-variance units; the regret denominators work
        # in oracle-over-(rho^2 sigma_u) units.
        dp = adaptive_problem(rho, curve=curve, cap_threshold=t / rho2)
        return priorsolve.solve_least_favorable(dp, cfg)

    lo = 1.0 - rho2
    hi = cap
    res_hi = solve_at(hi)
    val_hi = hi * res_hi.value
    if val_hi < cap * (1.0 - rel_tol):
        raise InfeasibleCap(f"cap={cap} violates the constrained-adaptation hypothesis")
    t, res = hi, res_hi
    for _ in range(60):
        if abs(t * res.value - cap) <= rel_tol * cap:
            break
        mid = 0.5 * (lo + hi)
        res_mid = solve_at(mid)
        if mid * res_mid.value > cap:
            hi = mid
        else:
            lo = mid
        t, res = mid, res_mid
    else:
        warnings.warn("cap root-find exhausted its iteration budget", stacklevel=2)

    dp = adaptive_problem(rho, curve=curve, cap_threshold=t / rho2)
    policy = model.PolicyTable(dp.obs_grid, res.policy)
    solution = AdaptiveSolution(rho2, policy, res.prior, res.value)
    return solution, RiskCap(cap, t)
