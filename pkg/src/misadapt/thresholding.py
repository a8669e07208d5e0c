"""Soft and hard thresholding rules with closed-form risks.

Risk functions follow from truncated-normal second moments,
    int_a^b x^2 phi(x) dx = Phi(b) - Phi(a) - (b phi(b) - a phi(a)),
so they evaluate with the normal cdf/pdf only.  The thresholds that best
track the oracle come from a two-dimensional minimax in (lambda, scaled
bias): an inner grid supremum over the scaled bias plus the unbounded
limit, and an outer bracketed scan with golden-section refinement (the
regret profile in lambda can be locally flat, so a deterministic bracketed
search is preferred over derivative methods).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import adaptive, bnm
from .errors import InfeasibleCap

__all__ = [
    "ThresholdRule",
    "soft_policy",
    "hard_policy",
    "soft_risk",
    "hard_risk",
    "optimal_threshold",
    "pretest_policy",
    "constrained_soft",
]

PRETEST_LAMBDA = 1.96

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT2PI


def soft_policy(t, lam):
    """Shrink toward zero by ``lam``, zeroing anything within the threshold."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.maximum(np.abs(t) - lam, 0.0)
    return float(out) if out.ndim == 0 else out


def hard_policy(t, lam):
    """Keep values at or beyond the threshold, zero the rest."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    t = np.asarray(t, dtype=float)
    out = np.where(np.abs(t) >= lam, t, 0.0)
    return float(out) if out.ndim == 0 else out


def soft_risk(lam, b_tilde):
    """Mean squared error of the soft rule at scaled bias ``b_tilde``."""
    b = np.asarray(b_tilde, dtype=float)
    hi = lam - b
    lo = -lam - b
    p_in = ndtr(hi) - ndtr(lo)
    p_out = 1.0 - p_in
    out = b * b * p_in + (1.0 + lam * lam) * p_out - (lam + b) * _phi(hi) - (lam - b) * _phi(lo)
    return float(out) if out.ndim == 0 else out


def hard_risk(lam, b_tilde):
    """Mean squared error of the hard rule at scaled bias ``b_tilde``."""
    b = np.asarray(b_tilde, dtype=float)
    hi = lam - b
    lo = -lam - b
    p_in = ndtr(hi) - ndtr(lo)
    trunc_m2 = p_in - (hi * _phi(hi) - lo * _phi(lo))
    out = b * b * p_in + 1.0 - trunc_m2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ThresholdRule:
    """A soft or hard thresholding rule with threshold ``lam``."""

    kind: str
    lam: float

    def __post_init__(self):
        if self.kind not in ("soft", "hard"):
            raise ValueError("kind must be 'soft' or 'hard'")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lambda must be finite and nonnegative")

    def __call__(self, t):
        return soft_policy(t, self.lam) if self.kind == "soft" else hard_policy(t, self.lam)

    def risk(self, b_tilde):
        return soft_risk(self.lam, b_tilde) if self.kind == "soft" else hard_risk(self.lam, b_tilde)

    @property
    def tail_risk_limit(self):
        # Far beyond the threshold the soft rule keeps a fixed offset of
        # lam; the hard rule tracks the identity exactly.
        return 1.0 + self.lam * self.lam if self.kind == "soft" else 1.0


def pretest_policy():
    """The conventional pre-test: hard thresholding at the 5% critical value."""
    return ThresholdRule("hard", PRETEST_LAMBDA)


@dataclass(frozen=True)
class PretestSwitchRule:
    """Pre-test that keeps the restricted estimate on non-rejection.

    In policy space the restricted estimate corresponds to a linear rule
    with slope ``1 + se_o / (rho * se_u)`` (zero when the restricted
    estimator is fully efficient, recovering plain hard thresholding), so
    the switch rule is that line inside the threshold and the identity
    outside.  Its regret depends on the variance ratio as well as rho.
    """

    lam: float = PRETEST_LAMBDA
    slope: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(np.abs(t) >= self.lam, t, self.slope * t)
        return float(out) if out.ndim == 0 else out

    def risk(self, b_tilde):
        b = np.asarray(b_tilde, dtype=float)
        hi = self.lam - b
        lo = -self.lam - b
        p_in = ndtr(hi) - ndtr(lo)
        dphi = _phi(lo) - _phi(hi)
        trunc_m2 = p_in - (hi * _phi(hi) - lo * _phi(lo))
        a1 = self.slope - 1.0
        out = 1.0 + 2.0 * a1 * (trunc_m2 + b * dphi) + a1 * a1 * (trunc_m2 + 2.0 * b * dphi + b * b * p_in)
        return float(out) if out.ndim == 0 else out

    @property
    def tail_risk_limit(self):
        return 1.0


def pretest_switch_rule(p, lam=PRETEST_LAMBDA):
    """Pre-test switch rule for a scaled problem (restricted on non-rejection)."""
    slope = 1.0 + math.sqrt(p.sigma_o / p.sigma_u) / p.rho
    return PretestSwitchRule(lam, slope)


def _golden_min(f, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    x = 0.5 * (a + b)
    return x, f(x)


def _minimize_lambda(profile, scan_hi=5.0, scan_step=0.01, refine_tol=1e-4):
    lams = np.arange(0.0, scan_hi + scan_step / 2, scan_step)
    vals = np.array([profile(l) for l in lams])
    k = int(np.argmin(vals))
    lo = lams[max(k - 1, 0)]
    hi = lams[min(k + 1, lams.size - 1)]
    lam, val = _golden_min(profile, lo, hi, refine_tol)
    if vals[k] < val:
        lam, val = float(lams[k]), float(vals[k])
    return float(lam), float(val)


def _threshold_search(kind, rho, curve, cap_threshold=None):
    rho2 = rho * rho
    c = 1.0 / rho2 - 1.0
    bias = adaptive._bias_grid()
    denom = curve(np.abs(bias)) + c
    denom_inf = 1.0 + c
    if cap_threshold is not None:
        denom = np.minimum(denom, cap_threshold)
        denom_inf = min(denom_inf, cap_threshold)
    risk_fn = soft_risk if kind == "soft" else hard_risk

    def profile(lam):
        ratios = (risk_fn(lam, bias) + c) / denom
        tail = ((1.0 + lam * lam if kind == "soft" else 1.0) + c) / denom_inf
        return max(float(np.max(ratios)), tail)

    return _minimize_lambda(profile)


def optimal_threshold(kind, rho, curve=None):
    """Threshold minimizing worst-case adaptation regret within a rule class.

    Returns ``(lambda, regret)``.  The inner supremum runs over the standard
    scaled-bias grid plus the unbounded limit; the outer minimization scans
    lambda in steps of 0.01 on [0, 5] and refines by golden section.
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    adaptive._check_rho2(rho2)
    curve = curve or bnm.bnm_risk_curve()
    return _threshold_search(kind, rho, curve)


def limiting_threshold(kind, curve=None):
    """Vanishing-correlation limit of the optimal threshold.

    As the squared correlation goes to zero the regret ratio tends to one
    for every rule; the surviving criterion is the excess of the rule's
    risk over the oracle risk, uniformly in the scaled bias.
    """
    curve = curve or bnm.bnm_risk_curve()
    bias = adaptive._bias_grid()
    oracle = curve(np.abs(bias))
    risk_fn = soft_risk if kind == "soft" else hard_risk

    def profile(lam):
        excess = risk_fn(lam, bias) - oracle
        tail = (lam * lam if kind == "soft" else 0.0)  # large-bias excess over oracle risk 1
        return max(float(np.max(excess)), tail)

    lam, _ = _minimize_lambda(profile)
    return lam


def constrained_soft(rho, cap, curve=None, rel_tol=1e-3):
    """Soft threshold with worst-case scaled risk capped at ``cap``.

    Same reweighted objective as the constrained adaptive solve, restricted
    to the soft class; root-finds the internal threshold ``t`` against
    ``cap = t * regret(t)``.  Returns ``(lambda, regret, t_star)``.
    """
    rho2 = rho * rho
    if rho2 <= 0:
        raise ValueError("rho must be nonzero")
    adaptive._check_rho2(rho2)
    if math.isinf(cap):
        lam, regret = optimal_threshold("soft", rho, curve)
        return lam, regret, math.inf
    if cap <= 1.0:
        raise InfeasibleCap(f"cap={cap} must exceed 1")
    curve = curve or bnm.bnm_risk_curve()

    def value_at(t):
        return _threshold_search("soft", rho, curve, cap_threshold=t / rho2)

    lo = 1.0 - rho2
    hi = cap
    lam, val = value_at(hi)
    if hi * val < cap * (1.0 - rel_tol):
        raise InfeasibleCap(f"cap={cap} violates the constrained-adaptation hypothesis")
    t = hi
    for _ in range(60):
        if abs(t * val - cap) <= rel_tol * cap:
            break
        mid = 0.5 * (lo + hi)
        lam_mid, val_mid = value_at(mid)
        if mid * val_mid > cap:
            hi = mid
        else:
            lo = mid
        t, lam, val = mid, lam_mid, val_mid
    return float(lam), float(val), float(t)
