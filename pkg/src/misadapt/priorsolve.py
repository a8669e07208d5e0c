"""Weighted minimax estimation over a discretized bias grid.

The engine solves games of the form

    max_{mu in simplex}  min_{psi}  sum_l mu_l * w_l * (risk_l(psi) + v_l) + offset

where ``risk_l(psi) = sum_k (psi_k - g_l)^2 pi_{kl}`` is the discretized
mean-squared error of a policy ``psi`` evaluated on an observation grid,
``pi_{kl}`` are normal cell probabilities, ``w_l`` are per-bias-point
scalings and ``v_l`` per-point additive constants.  The inner minimum has a
closed form (a scaled posterior mean), leaving a concave outer problem on
the probability simplex.  Least favorable priors are discrete with few
atoms, so the outer problem is solved by a fully-corrective exchange scheme:
grow a small candidate support, re-solve the restricted problem to high
accuracy, and add the bias points whose first-order regret most violates the
current value, until the stationarity certificate holds.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .errors import DegenerateCell, NoConvergence

__all__ = [
    "DiscreteProblem",
    "PriorWeights",
    "SolverConfig",
    "SolveResult",
    "transition_probabilities",
    "posterior_policy",
    "weighted_bayes_risk",
    "solve_least_favorable",
]

# Weights below this are zeroed and renormalized before the certificate check;
# least favorable priors carry few atoms and pruning stabilizes the
# equality-on-support test.
SUPPORT_PRUNE_TOL = 1e-10


def transition_probabilities(bias_grid, obs_grid):
    """Cell probabilities of a unit-variance normal over an observation grid.

    Cell k, centered at ``obs_grid[k]``, collects the normal mass between the
    midpoints with its neighbors; the first and last cells extend to -inf and
    +inf so each column sums to one.

    Parameters
    ----------
    bias_grid : array-like, shape (J,)
        Means of the normal distribution.
    obs_grid : array-like, shape (K,)
        Observation grid points, strictly increasing.

    Returns
    -------
    ndarray, shape (K, J)
        ``pi[k, l] = P(T in cell k | T ~ N(bias_grid[l], 1))``.
    """
    bias_grid = np.atleast_1d(np.asarray(bias_grid, dtype=float))
    obs_grid = np.atleast_1d(np.asarray(obs_grid, dtype=float))
    _require_increasing(obs_grid, "obs_grid")
    edges = np.empty(obs_grid.size + 1)
    edges[0] = -np.inf
    edges[-1] = np.inf
    edges[1:-1] = 0.5 * (obs_grid[:-1] + obs_grid[1:])
    upper = ndtr(edges[1:, None] - bias_grid[None, :])
    lower = ndtr(edges[:-1, None] - bias_grid[None, :])
    return upper - lower


@dataclass(frozen=True)
class PriorWeights:
    """Discrete prior: grid points and simplex weights."""

    bias_grid: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bias_grid", np.asarray(self.bias_grid, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        if self.bias_grid.shape != self.mu.shape:
            raise ValueError("bias_grid and mu must have matching shapes")
        if np.any(self.mu < -1e-12) or abs(self.mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu must lie on the probability simplex (tol 1e-12)")

    def support(self, tol=SUPPORT_PRUNE_TOL):
        return np.flatnonzero(self.mu > tol)


@dataclass(frozen=True)
class SolverConfig:
    objective_tol: float = 1e-8
    max_iter: int = 500
    stationarity_tol: float = 1e-6

    def __post_init__(self):
        if self.objective_tol <= 0 or self.stationarity_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class DiscreteProblem:
    """Discretized weighted minimax problem.

    ``weights`` scale each bias point's risk, ``offset`` is an additive
    constant on the final value.  ``point_offsets`` (optional) add a
    per-bias-point constant inside the scaled risk, and ``targets``
    (optional) let the policy estimate a linear functional of the bias
    rather than the bias itself; both default to the plain setup where the
    policy tracks each bias point directly.
    """

    bias_grid: np.ndarray
    obs_grid: np.ndarray
    weights: np.ndarray
    offset: float = 0.0
    point_offsets: np.ndarray | None = None
    targets: np.ndarray | None = None
    transition: np.ndarray = field(repr=False, default=None)
    symmetric: bool = None

    def __post_init__(self):
        bias = np.atleast_1d(np.asarray(self.bias_grid, dtype=float))
        obs = np.atleast_1d(np.asarray(self.obs_grid, dtype=float))
        w = np.broadcast_to(np.asarray(self.weights, dtype=float), bias.shape).copy()
        _require_increasing(bias, "bias_grid")
        _require_increasing(obs, "obs_grid")
        if obs.size < 2 and bias.size > 1:
            raise ValueError("obs_grid needs at least two points")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and positive")
        if self.offset < 0:
            raise ValueError("offset must be nonnegative")
        object.__setattr__(self, "bias_grid", bias)
        object.__setattr__(self, "obs_grid", obs)
        object.__setattr__(self, "weights", w)
        v = self.point_offsets
        v = np.zeros_like(bias) if v is None else np.broadcast_to(np.asarray(v, dtype=float), bias.shape).copy()
        object.__setattr__(self, "point_offsets", v)
        g = self.targets
        g = bias.copy() if g is None else np.asarray(g, dtype=float)
        if g.shape != bias.shape:
            raise ValueError("targets must match bias_grid shape")
        object.__setattr__(self, "targets", g)
        if self.transition is None:
            object.__setattr__(self, "transition", transition_probabilities(bias, obs))
        if self.symmetric is None:
            object.__setattr__(self, "symmetric", self._detect_symmetry())

    def _detect_symmetry(self):
        bias, obs = self.bias_grid, self.obs_grid
        return (
            np.allclose(bias, -bias[::-1], atol=1e-12)
            and np.allclose(obs, -obs[::-1], atol=1e-12)
            and np.allclose(self.weights, self.weights[::-1], atol=1e-12)
            and np.allclose(self.point_offsets, self.point_offsets[::-1], atol=1e-12)
            and np.allclose(self.targets, -self.targets[::-1], atol=1e-12)
        )


def posterior_policy(dp, prior):
    """Inner solution for a fixed prior: the weight-scaled posterior mean.

    Raises
    ------
    DegenerateCell
        If some observation cell carries zero posterior mass (observation
        grid far wider than the prior support; widen the bias grid or
        shrink the observation grid).
    """
    mu = prior.mu if isinstance(prior, PriorWeights) else np.asarray(prior, dtype=float)
    tilted = mu * dp.weights
    denom = dp.transition @ tilted
    if np.any(denom <= 0.0):
        raise DegenerateCell(
            "posterior mass underflowed in %d observation cells" % int(np.sum(denom <= 0.0))
        )
    numer = dp.transition @ (tilted * dp.targets)
    return numer / denom


def weighted_bayes_risk(dp, prior, policy):
    """Prior-weighted scaled risk of a policy, plus the problem offset."""
    mu = prior.mu if isinstance(prior, PriorWeights) else np.asarray(prior, dtype=float)
    psi = np.asarray(policy, dtype=float)
    risks = _pointwise_risks(dp, psi)
    return float(mu @ (dp.weights * (risks + dp.point_offsets))) + dp.offset


@dataclass(frozen=True)
class SolveResult:
    prior: PriorWeights
    policy: np.ndarray
    value: float
    pointwise: np.ndarray
    iterations: int


def solve_least_favorable(dp, cfg=None):
    """Solve the outer concave maximization for the least favorable prior.

    Returns
    -------
    SolveResult
        Prior, minimax policy on ``dp.obs_grid``, attained value, and the
        per-bias-point scaled risks of the returned policy.  On return the
        first-order certificate holds: every bias point's scaled risk is at
        most ``value + stationarity_tol``, with equality on the support.

    Raises
    ------
    NoConvergence
        If ``cfg.max_iter`` outer iterations pass without meeting both the
        objective-change and stationarity tolerances.
    """
    cfg = cfg or SolverConfig()
    j = dp.bias_grid.size

    if j == 1:
        mu = np.array([1.0])
        psi = _policy_values(dp, mu)
        point = _pointwise_objective(dp, psi)
        return SolveResult(PriorWeights(dp.bias_grid, mu), psi, float(point[0]), point, 0)

    support = _seed_support(dp)
    mu_s = np.full(support.size, 1.0 / support.size)
    prev_value = None

    for it in range(1, cfg.max_iter + 1):
        mu_s = _solve_restricted(dp, support, mu_s, 0.25 * cfg.stationarity_tol)
        mu = np.zeros(j)
        mu[support] = mu_s
        mu, psi, point, value, gap = _evaluate(dp, mu)

        small_step = prev_value is not None and abs(value - prev_value) <= cfg.objective_tol * max(
            1.0, abs(value)
        )
        if gap <= cfg.stationarity_tol and (prev_value is None or small_step or gap <= 0.0):
            return _certify(dp, mu, cfg, it)
        prev_value = value

        # Exchange step: bring in a batch of violating bias points (local
        # peaks of the regret profile, plus mirrors for symmetric problems)
        # and drop atoms that pruned to zero.  Least favorable priors on
        # wide grids are lattices of many small atoms, so single-point
        # exchanges would thrash.
        new = _violating_peaks(point, value + 0.1 * cfg.stationarity_tol, limit=12)
        if dp.symmetric:
            new = np.union1d(new, j - 1 - new)
        keep = mu > SUPPORT_PRUNE_TOL
        keep[new] = True
        new_support = np.flatnonzero(keep)
        if np.array_equal(new_support, support):
            # No direction left to add at this accuracy; accept if close.
            return _certify(dp, mu, cfg, it)
        support = new_support
        mu_s = np.maximum(mu[support], 1e-8)
        mu_s /= mu_s.sum()

    raise NoConvergence(
        "no convergence after %d iterations (gap %.3e)" % (cfg.max_iter, gap),
        best_prior=PriorWeights(dp.bias_grid, mu),
        gap=gap,
    )


# -- internals ---------------------------------------------------------------


def _policy_values(dp, mu):
    # Like posterior_policy but tolerant: cells with zero posterior mass get
    # a zero estimate; they carry no objective weight under the prior.
    tilted = mu * dp.weights
    denom = dp.transition @ tilted
    numer = dp.transition @ (tilted * dp.targets)
    dead = denom <= 0.0
    if np.any(dead):
        denom = np.where(dead, 1.0, denom)
        numer = np.where(dead, 0.0, numer)
    return numer / denom


def _pointwise_risks(dp, psi):
    m2 = (psi * psi) @ dp.transition
    m1 = psi @ dp.transition
    return m2 - 2.0 * dp.targets * m1 + dp.targets * dp.targets


def _pointwise_objective(dp, psi):
    return dp.weights * (_pointwise_risks(dp, psi) + dp.point_offsets) + dp.offset


def _evaluate(dp, mu):
    if dp.symmetric:
        mu = 0.5 * (mu + mu[::-1])
    psi = _policy_values(dp, mu)
    if dp.symmetric:
        psi = 0.5 * (psi - psi[::-1])
    point = _pointwise_objective(dp, psi)
    value = float(mu @ point)
    gap = float(point.max() - value)
    return mu, psi, point, value, gap


def _certify(dp, mu, cfg, iterations):
    """Prune, re-polish if needed, and enforce the first-order certificate."""
    for _ in range(4):
        mu = np.where(mu > SUPPORT_PRUNE_TOL, mu, 0.0)
        mu /= mu.sum()
        mu, psi, point, value, gap = _evaluate(dp, mu)
        on_support = mu > SUPPORT_PRUNE_TOL
        slack = float(value - point[on_support].min())
        if gap <= cfg.stationarity_tol and slack <= cfg.stationarity_tol:
            return SolveResult(PriorWeights(dp.bias_grid, mu), psi, value, point, iterations)
        # Drop straggler atoms whose regret sits below the value, then
        # re-solve on the cleaned support.
        drop = on_support & (point < value - cfg.stationarity_tol) & (mu < 1e-5)
        mu[drop] = 0.0
        support = np.flatnonzero(mu > 0)
        mu_s = _solve_restricted(
            dp, support, mu[support] / mu[support].sum(), 0.25 * cfg.stationarity_tol
        )
        mu = np.zeros(dp.bias_grid.size)
        mu[support] = mu_s
    mu, psi, point, value, gap = _evaluate(dp, mu)
    slack = float(value - point[mu > SUPPORT_PRUNE_TOL].min())
    raise NoConvergence(
        "stationarity certificate failed (gap %.3e, support slack %.3e)" % (gap, slack),
        best_prior=PriorWeights(dp.bias_grid, mu),
        gap=gap,
    )


class _Restricted:
    """Objective/gradient of the outer problem confined to a support.

    Works on the support's transition columns only, so one evaluation costs
    O(K * |support|) rather than O(K * J).
    """

    def __init__(self, dp, support):
        self.dp = dp
        self.pi = dp.transition[:, support]
        self.w = dp.weights[support]
        self.g = dp.targets[support]
        self.v = dp.point_offsets[support]
        self.offset = dp.offset

    def value_grad(self, mu_s):
        tilted = mu_s * self.w
        denom = self.pi @ tilted
        numer = self.pi @ (tilted * self.g)
        dead = denom <= 0.0
        if np.any(dead):
            denom = np.where(dead, 1.0, denom)
            numer = np.where(dead, 0.0, numer)
        psi = numer / denom
        m2 = (psi * psi) @ self.pi
        m1 = psi @ self.pi
        risks = m2 - 2.0 * self.g * m1 + self.g * self.g
        # Gradient by the envelope theorem: the per-point scaled risks.
        grad = self.w * (risks + self.v) + self.offset
        value = float(mu_s @ grad) - self.offset * (mu_s.sum() - 1.0)
        return value, grad


def _support_kkt_gap(g, x, value):
    """Max violation of the simplex KKT conditions on the given support."""
    hi = float(g.max() - value)
    active = x > 1e-12
    lo = float(value - g[active].min()) if np.any(active) else np.inf
    return max(hi, lo)


def _solve_restricted(dp, support, start, tol):
    """Maximize the outer objective over priors confined to ``support``.

    SLSQP with analytic gradients does the heavy lifting; an entropic
    ascent polish cleans up whenever SLSQP leaves the within-support
    first-order conditions unmet (which happens on long flat ridges).
    """
    n = support.size
    if n == 1:
        return np.array([1.0])
    problem = _Restricted(dp, support)

    def neg(x):
        v, g = problem.value_grad(x)
        return -v, -g

    res = minimize(
        neg,
        start,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(n)}],
        options={"maxiter": 200, "ftol": 1e-14},
    )
    x = np.clip(res.x, 0.0, None)
    s = x.sum()
    x = x / s if s > 0 else np.full(n, 1.0 / n)
    v, g = problem.value_grad(x)
    if _support_kkt_gap(g, x, v) > tol:
        x = _entropic_polish(problem, x, tol)
    return x


def _entropic_polish(problem, x, tol, max_iter=2000):
    """Backtracking exponentiated-gradient ascent on the restricted simplex."""
    x = np.maximum(x, 1e-16)
    x /= x.sum()
    v, g = problem.value_grad(x)
    step = 1.0 / max(np.max(np.abs(g)), 1e-12)
    for _ in range(max_iter):
        if _support_kkt_gap(g, x, v) <= tol:
            break
        for _ in range(50):
            z = x * np.exp(step * (g - g.max()))
            z /= z.sum()
            v2, g2 = problem.value_grad(z)
            if v2 >= v - 1e-15:
                break
            step *= 0.5
        if v2 > v:
            step *= 1.25
        x, v, g = z, v2, g2
    return x


def _violating_peaks(point, threshold, limit):
    """Indices of local maxima of the regret profile above the threshold."""
    over = point > threshold
    if not np.any(over):
        return np.empty(0, dtype=int)
    left = np.empty_like(point)
    right = np.empty_like(point)
    left[0], left[1:] = -np.inf, point[:-1]
    right[-1], right[:-1] = -np.inf, point[1:]
    peaks = np.flatnonzero(over & (point >= left) & (point >= right))
    if peaks.size > limit:
        peaks = peaks[np.argsort(point[peaks])[::-1][:limit]]
    return np.sort(peaks)


def _seed_support(dp):
    """Small spread-out initial support: endpoints, center, and quantiles."""
    j = dp.bias_grid.size
    idx = set(np.linspace(0, j - 1, num=min(j, 13)).round().astype(int).tolist())
    idx.add(int(np.argmin(np.abs(dp.bias_grid))))
    if dp.symmetric:
        idx |= {j - 1 - i for i in idx}
    return np.array(sorted(idx))


def _require_increasing(x, name):
    if x.size > 1 and not np.all(np.diff(x) > 0):
        raise ValueError(f"{name} must be strictly increasing")
