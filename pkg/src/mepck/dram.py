"""Adaptive Metropolis MCMC with one delayed-rejection stage.

Stage-1 proposals are Gaussian random walks whose covariance adapts to the
chain history (scaled empirical covariance plus a diagonal regularizer);
after a stage-1 rejection a second, shrunken proposal is tried and accepted
with the full delayed-rejection ratio. Priors are uniform boxes, so the
prior density cancels everywhere and out-of-support proposals simply carry
zero posterior mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import gaussian_kde

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class InferenceProblem:
    """Observations, prediction-error scale and a uniform-box prior around a
    surrogate response function theta -> response vector."""

    surrogate: object
    observations: np.ndarray
    sigma_eps: float
    prior_lower: np.ndarray
    prior_upper: np.ndarray

    def __init__(self, surrogate, observations, sigma_eps, prior_lower, prior_upper):
        observations = np.atleast_1d(np.asarray(observations, dtype=float))
        lo = np.atleast_1d(np.asarray(prior_lower, dtype=float))
        hi = np.atleast_1d(np.asarray(prior_upper, dtype=float))
        if sigma_eps <= 0.0:
            raise ValueError("sigma_eps must be positive")
        if lo.shape != hi.shape or np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise ValueError("prior bounds must be finite arrays of equal shape")
        if np.any(hi <= lo):
            raise ValueError("prior bounds need lower < upper")
        object.__setattr__(self, "surrogate", surrogate)
        object.__setattr__(self, "observations", observations)
        object.__setattr__(self, "sigma_eps", float(sigma_eps))
        object.__setattr__(self, "prior_lower", lo)
        object.__setattr__(self, "prior_upper", hi)

    @property
    def ndim(self) -> int:
        return self.prior_lower.size

    def in_support(self, theta) -> bool:
        return bool(
            np.all(theta >= self.prior_lower) and np.all(theta <= self.prior_upper)
        )


def log_likelihood(problem: InferenceProblem, theta) -> float:
    """Gaussian misfit: -(1/2 sigma^2) sum residual^2 - ln(sqrt(2 pi) sigma)."""
    theta = np.asarray(theta, dtype=float)
    if not problem.in_support(theta):
        raise ValueError("theta outside prior support")
    pred = np.asarray(problem.surrogate(theta), dtype=float)
    resid = problem.observations - pred
    return float(
        -0.5 * resid @ resid / problem.sigma_eps**2
        - LOG_SQRT_2PI
        - np.log(problem.sigma_eps)
    )


@dataclass(frozen=True)
class DramConfig:
    T: int
    theta0: np.ndarray
    burn_in: int = 0
    Sigma0: np.ndarray | None = None
    n0: int = 500
    s_d: float | None = None          # defaults to 2.4^2 / d
    dr_gamma: float = 0.2
    adapt_epsilon: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "theta0", np.atleast_1d(np.asarray(self.theta0, dtype=float))
        )
        if not self.T > self.burn_in >= 0:
            raise ValueError("need T > burn_in >= 0")
        if not 0.0 < self.dr_gamma < 1.0:
            raise ValueError("dr_gamma must lie in (0, 1)")


STAGE_REJECT = 0
STAGE_FIRST = 1
STAGE_SECOND = 2


@dataclass(frozen=True)
class Chain:
    """Ordered posterior samples with stage flags (0 reject, 1, 2)."""

    states: np.ndarray
    log_posts: np.ndarray
    stages: np.ndarray
    burn_in: int = 0

    @property
    def ndim(self) -> int:
        return self.states.shape[1]

    def post_burn(self) -> np.ndarray:
        return self.states[self.burn_in:]

    def acceptance_rates(self) -> dict:
        t = self.stages.size
        return {
            "stage1": float(np.count_nonzero(self.stages == STAGE_FIRST)) / t,
            "stage2": float(np.count_nonzero(self.stages == STAGE_SECOND)) / t,
            "rejected": float(np.count_nonzero(self.stages == STAGE_REJECT)) / t,
        }


def default_sigma0(theta0, prior_lower, prior_upper, rel=0.05):
    """Diagonal (rel*theta0)^2 with prior-width fallback for zero entries."""
    theta0 = np.asarray(theta0, dtype=float)
    width = np.asarray(prior_upper, dtype=float) - np.asarray(prior_lower, dtype=float)
    scale = np.where(theta0 != 0.0, rel * np.abs(theta0), rel * width)
    return np.diag(scale**2)


def _chol_with_escalation(sigma, epsilon):
    eye = np.eye(sigma.shape[0])
    eps = epsilon
    while True:
        try:
            return cholesky(sigma + eps * eye, lower=True), eps
        except np.linalg.LinAlgError:
            eps = max(eps, 1e-12) * 10.0
            if eps > 1e6 * max(1.0, float(np.abs(sigma).max())):
                raise


def dram_sample(problem: InferenceProblem, config: DramConfig) -> Chain:
    """Delayed-rejection adaptive Metropolis chain of length ``config.T``."""
    rng = np.random.default_rng(config.seed)
    d = problem.ndim
    theta_c = np.atleast_1d(np.asarray(config.theta0, dtype=float)).copy()
    if theta_c.size != d:
        raise ValueError("theta0 dimension does not match the prior")
    if not problem.in_support(theta_c):
        raise ValueError("theta0 outside prior support")
    s_d = config.s_d if config.s_d is not None else 2.4**2 / d
    sigma_p = (
        np.array(config.Sigma0, dtype=float)
        if config.Sigma0 is not None
        else default_sigma0(theta_c, problem.prior_lower, problem.prior_upper)
    )
    chol_p, _ = _chol_with_escalation(sigma_p, 0.0 if config.Sigma0 is not None else 0.0)

    def log_post(theta):
        # flat prior: constant inside the box, cancels in every ratio
        if not problem.in_support(theta):
            return -np.inf
        return log_likelihood(problem, theta)

    def stage1_logq(frm, to):
        z = solve_triangular(chol_p, to - frm, lower=True)
        return -0.5 * float(z @ z)  # normalization cancels in the ratio

    lp_c = log_post(theta_c)
    if not np.isfinite(lp_c):
        raise ValueError("theta0 has zero posterior density")

    states = np.empty((config.T, d))
    log_posts = np.empty(config.T)
    stages = np.zeros(config.T, dtype=np.int8)

    # recursive mean / scatter for the adaptation covariance
    run_mean = np.zeros(d)
    run_m2 = np.zeros((d, d))
    n_hist = 0

    for i in range(config.T):
        z = rng.standard_normal(d)
        theta_1 = theta_c + chol_p @ z
        lp_1 = log_post(theta_1)
        log_a1 = min(0.0, lp_1 - lp_c)
        accepted = False
        if np.log(rng.random()) < log_a1:
            theta_c, lp_c = theta_1, lp_1
            stages[i] = STAGE_FIRST
            accepted = True
        else:
            # second stage at shrunken scale; S2 kernels cancel (symmetric)
            z2 = rng.standard_normal(d)
            theta_2 = theta_c + config.dr_gamma * (chol_p @ z2)
            lp_2 = log_post(theta_2)
            log_a1_rev = lp_1 - lp_2 if np.isfinite(lp_2) else 0.0
            if np.isfinite(lp_2) and log_a1_rev < 0.0:
                # alpha_1(theta_2, theta_1) < 1; otherwise alpha_2 = 0
                num = lp_2 + stage1_logq(theta_2, theta_1) + np.log1p(
                    -np.exp(log_a1_rev)
                )
                den = lp_c + stage1_logq(theta_c, theta_1) + np.log1p(
                    -np.exp(log_a1)
                )
                if np.log(rng.random()) < min(0.0, num - den):
                    theta_c, lp_c = theta_2, lp_2
                    stages[i] = STAGE_SECOND
                    accepted = True
        if not accepted:
            stages[i] = STAGE_REJECT
        states[i] = theta_c
        log_posts[i] = lp_c

        n_hist += 1
        delta = theta_c - run_mean
        run_mean += delta / n_hist
        run_m2 += np.outer(delta, theta_c - run_mean)
        if i + 1 > config.n0 and n_hist > 1:
            cov = run_m2 / (n_hist - 1)
            chol_p, _ = _chol_with_escalation(s_d * cov, config.adapt_epsilon)

    return Chain(states, log_posts, stages, burn_in=config.burn_in)


def hdr(samples, level: float, grid_size: int = 512):
    """Highest-density intervals from a Gaussian KDE on a uniform grid.

    Returns a list of (lo, hi) pairs covering the requested probability mass.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if samples.size < 1000:
        raise ValueError("need at least 1000 samples for a stable estimate")
    if np.ptp(samples) <= 0.0:
        raise ValueError("degenerate (zero-variance) sample")
    kde = gaussian_kde(samples, bw_method="silverman")
    grid = np.linspace(samples.min(), samples.max(), grid_size)
    dens = kde(grid)
    mass = dens / dens.sum()
    order = np.argsort(dens)[::-1]
    cum = np.cumsum(mass[order])
    cutoff_idx = int(np.searchsorted(cum, level))
    threshold = dens[order[min(cutoff_idx, grid_size - 1)]]
    keep = dens >= threshold
    intervals = []
    start = None
    for k in range(grid_size):
        if keep[k] and start is None:
            start = k
        elif not keep[k] and start is not None:
            intervals.append((float(grid[start]), float(grid[k - 1])))
            start = None
    if start is not None:
        intervals.append((float(grid[start]), float(grid[-1])))
    return intervals


def kde_mode(samples, grid_size: int = 512) -> float:
    samples = np.asarray(samples, dtype=float).ravel()
    if np.ptp(samples) <= 0.0:
        return float(samples[0])
    kde = gaussian_kde(samples, bw_method="silverman")
    grid = np.linspace(samples.min(), samples.max(), grid_size)
    dens = kde(grid)
    return float(grid[int(np.argmax(dens))])


def chain_diagnostics(chain: Chain) -> dict:
    """Per-dimension mode/mean/sd plus stage-wise acceptance rates."""
    post = chain.post_burn()
    if post.shape[0] == 0:
        raise ValueError("empty post-burn-in chain")
    out = {
        "n_post": int(post.shape[0]),
        "acceptance": chain.acceptance_rates(),
        "mode": [kde_mode(post[:, j]) for j in range(chain.ndim)],
        "mean": [float(post[:, j].mean()) for j in range(chain.ndim)],
        "sd": [float(post[:, j].std(ddof=1)) if post.shape[0] > 1 else 0.0
               for j in range(chain.ndim)],
    }
    return out
