"""Joint normal model of a restricted/unrestricted estimator pair.

The observed pair ``(y_u, y_r)`` with known covariance is reduced to the
scaled problem ``(y_u, t_o)`` where ``t_o`` is the t-statistic of the
difference ``y_o = y_r - y_u``.  Every downstream estimator is assembled
from a policy ``delta`` acting on ``t_o``:

    estimate = rho * sqrt(sigma_u) * delta(t_o) + y_u - rho * sqrt(sigma_u) * t_o

The identity policy recovers ``y_u`` exactly; the zero policy recovers the
efficient pooled (GMM) estimate.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import priorsolve
from .errors import (
    HausmanOrderViolated,
    NonPositiveSigmaO,
    OutOfGridRange,
    RhoOutOfRange,
    UndefinedWeight,
)

__all__ = [
    "EstimatePair",
    "ScaledProblem",
    "PolicyTable",
    "from_estimates",
    "infer_covariance_hausman",
    "gmm_estimate",
    "assemble_estimate",
    "weight_on_unrestricted",
    "risk_at_bias",
]


@dataclass(frozen=True)
class EstimatePair:
    """Point estimates and covariance of an unrestricted/restricted pair.

    ``cov_ur`` may be omitted by setting ``assume_efficient_restricted``,
    in which case the variance of the difference is inferred by subtracting
    the squared standard errors (valid when the restricted estimator is
    efficient).  An explicit ``cov_ur`` always wins over the flag.
    """

    y_u: float
    y_r: float
    sigma_u: float
    sigma_r: float
    cov_ur: float | None = None
    assume_efficient_restricted: bool = False

    def __post_init__(self):
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be positive")
        if self.sigma_r < 0:
            raise ValueError("sigma_r must be nonnegative")
        if self.cov_ur is None and not self.assume_efficient_restricted:
            raise ValueError("supply cov_ur or set assume_efficient_restricted")

    @classmethod
    def from_standard_errors(cls, y_u, se_u, y_r, se_r, cov_ur=None, assume_efficient_restricted=False):
        return cls(y_u, y_r, se_u**2, se_r**2, cov_ur, assume_efficient_restricted)


@dataclass(frozen=True)
class ScaledProblem:
    """Transformed data: unrestricted estimate plus the scaled difference."""

    y_u: float
    y_o: float
    sigma_u: float
    sigma_o: float
    rho: float

    def __post_init__(self):
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be positive")
        if self.sigma_o <= 0:
            raise NonPositiveSigmaO("sigma_o must be strictly positive")
        if not -1.0 < self.rho < 1.0:
            raise RhoOutOfRange(f"rho={self.rho} outside (-1, 1)")

    @property
    def t_o(self):
        return self.y_o / math.sqrt(self.sigma_o)


def infer_covariance_hausman(pair):
    """Scaled problem under the efficient-restricted covariance structure.

    The variance of the difference is the excess variance of the
    unrestricted estimator, and the difference is (perfectly negatively)
    proportional in covariance to it.
    """
    if pair.sigma_r >= pair.sigma_u:
        raise HausmanOrderViolated(
            "restricted estimator must be strictly more precise than the "
            "unrestricted one to infer the covariance; supply cov_ur explicitly"
        )
    sigma_o = pair.sigma_u - pair.sigma_r
    rho = -math.sqrt(sigma_o / pair.sigma_u)
    return ScaledProblem(pair.y_u, pair.y_r - pair.y_u, pair.sigma_u, sigma_o, rho)


def from_estimates(pair):
    """Reduce an estimate pair to the scaled problem.

    Raises
    ------
    NonPositiveSigmaO
        If the implied variance of the difference is not strictly positive
        (estimators too collinear, or invalid covariance).
    RhoOutOfRange
        If the implied correlation has magnitude one or more.
    """
    if pair.cov_ur is None:
        return infer_covariance_hausman(pair)
    sigma_o = pair.sigma_u + pair.sigma_r - 2.0 * pair.cov_ur
    if sigma_o <= 0:
        raise NonPositiveSigmaO(f"implied sigma_o={sigma_o} is not positive")
    cov_uo = pair.cov_ur - pair.sigma_u
    rho = cov_uo / math.sqrt(pair.sigma_u * sigma_o)
    if not -1.0 < rho < 1.0:
        raise RhoOutOfRange(f"implied rho={rho} outside (-1, 1)")
    return ScaledProblem(pair.y_u, pair.y_r - pair.y_u, pair.sigma_u, sigma_o, rho)


def scaled_problem_from_rho(y_u, sigma_u, y_r, sigma_r, rho):
    """Scaled problem from standard errors plus a known correlation.

    The correlation pins the variance of the difference up to a quadratic
    with two admissible roots when the restriction improves precision; the
    smaller root (restricted estimator closer to efficient) is chosen.
    """
    if not -1.0 < rho < 1.0:
        raise RhoOutOfRange(f"rho={rho} outside (-1, 1)")
    disc = rho * rho * sigma_u - sigma_u + sigma_r
    if disc < 0:
        raise NonPositiveSigmaO(
            "no variance of the difference is consistent with the supplied rho"
        )
    roots = [r for r in (-rho * math.sqrt(sigma_u) - math.sqrt(disc), -rho * math.sqrt(sigma_u) + math.sqrt(disc)) if r > 0]
    if not roots:
        raise NonPositiveSigmaO(
            "no positive variance of the difference is consistent with the supplied rho"
        )
    se_o = min(roots)
    return ScaledProblem(y_u, y_r - y_u, sigma_u, se_o * se_o, rho)


def gmm_estimate(p):
    """Efficient pooled estimate imposing a zero bias on the restricted estimator."""
    return p.y_u - p.rho * math.sqrt(p.sigma_u) * p.t_o


def gmm_variance(p):
    return p.sigma_u * (1.0 - p.rho * p.rho)


@dataclass(frozen=True)
class PolicyTable:
    """Tabulated policy: strictly increasing grid and values, spline-evaluated.

    Between grid points the policy is a natural cubic spline; beyond the
    grid span it clamps to the identity (solved policies approach the
    identity for large arguments, and the assembled estimator then degrades
    gracefully to the unrestricted estimate).
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ValueError("grid and values must be 1-D with equal length")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        spline = CubicSpline(grid, values, bc_type="natural") if grid.size > 3 else None
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def identity(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, grid.copy())

    @classmethod
    def zero(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.zeros_like(grid))

    def __call__(self, t, out_of_range="clamp"):
        """Evaluate at ``t``; out-of-span behavior is 'clamp' (identity) or 'error'."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        outside = (t < lo) | (t > hi)
        if np.any(outside):
            if out_of_range == "error":
                raise OutOfGridRange(f"policy queried outside grid span [{lo}, {hi}]")
            warnings.warn("policy queried beyond grid span; clamping to identity", stacklevel=2)
        inside = np.clip(t, lo, hi)
        if self._spline is not None:
            vals = self._spline(inside)
        else:
            vals = np.interp(inside, self.grid, self.values)
        out = np.where(outside, t, vals)
        return float(out) if out.ndim == 0 else out


def assemble_estimate(p, delta, out_of_range="clamp"):
    """Estimate of the target from a policy applied to the scaled difference."""
    adj = delta(p.t_o, out_of_range=out_of_range) if isinstance(delta, PolicyTable) else delta(p.t_o)
    root = p.rho * math.sqrt(p.sigma_u)
    return root * float(adj) + p.y_u - root * p.t_o


def weight_on_unrestricted(delta, t_o):
    """Weight on the unrestricted estimate in the weighted-average form.

    The assembled estimate equals ``w * y_u + (1 - w) * gmm`` with
    ``w = delta(t_o) / t_o``.
    """
    if t_o == 0:
        raise UndefinedWeight("weight representation degenerate at t_o = 0")
    return float(delta(t_o)) / t_o


def risk_at_bias(sigma_u, rho, delta, b_tilde):
    """Mean squared error (outcome units^2) of an assembled policy at a scaled bias.

    The policy's unit-normal risk is evaluated by quadrature against its own
    tabulation grid cells; dividing the result by ``sigma_u`` gives the
    scaled risk used in the figures.
    """
    r = policy_risk(delta, b_tilde)
    rho2 = rho * rho
    return rho2 * sigma_u * r + sigma_u * (1.0 - rho2)


def policy_risk(delta, b_tilde):
    """Unit-normal mean squared error of a tabulated policy at scaled bias points."""
    b = np.atleast_1d(np.asarray(b_tilde, dtype=float))
    pi = priorsolve.transition_probabilities(b, delta.grid)
    psi = delta.values
    r = (psi * psi) @ pi - 2.0 * b * (psi @ pi) + b * b
    return float(r[0]) if np.isscalar(b_tilde) or np.asarray(b_tilde).ndim == 0 else r
