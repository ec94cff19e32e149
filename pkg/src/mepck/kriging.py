"""Universal Kriging with a sparse polynomial-chaos trend.

The correlation kernel is the anisotropic Gaussian; its length-scale vector
is fitted by a genetic algorithm on the reduced maximum-likelihood objective,
after which the trend coefficients and process variance come from the best
linear unbiased estimator. All linear algebra runs through one cached
Cholesky factor of the (nugget-regularized) correlation matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .pce import SparsePce, basis_matrix, fit_sparse_pce

logger = logging.getLogger(__name__)

DEFAULT_NUGGET = 1e-10
NUGGET_CAP = 1e-6
#: log10(theta) search interval per dimension, standardized coordinates
DEFAULT_LOG10_BOUNDS = (-3.0, 3.0)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    """Anisotropic correlation rates and process variance."""

    theta: np.ndarray
    sigma2: float

    def __init__(self, theta, sigma2):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta <= 0.0):
            raise ValueError("correlation rates must be positive")
        if sigma2 < 0.0:
            raise ValueError("process variance must be non-negative")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma2", float(sigma2))


def gaussian_corr(u, v, theta) -> float:
    """prod_l exp(-theta_l (u_l - v_l)^2)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if u.shape != v.shape or u.shape != theta.shape:
        raise ValueError("u, v and theta must share one dimension")
    return float(np.exp(-np.sum(theta * (u - v) ** 2)))


def corr_cross(U, V, theta) -> np.ndarray:
    """Correlation block between two point sets, shape (len(U), len(V))."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    theta = np.asarray(theta, dtype=float)
    sq = np.zeros((U.shape[0], V.shape[0]))
    for d in range(U.shape[1]):
        diff = U[:, d, None] - V[None, :, d]
        sq += theta[d] * diff * diff
    return np.exp(-sq)


def corr_matrix(U, theta, nugget=DEFAULT_NUGGET):
    """Lower Cholesky factor of R + nugget*I, escalating the nugget x10 on
    factorization failure up to a hard cap."""
    if nugget < 0.0:
        raise ValueError("nugget must be >= 0")
    R = corr_cross(U, U, theta)
    nug = nugget
    while True:
        try:
            L = cholesky(R + nug * np.eye(R.shape[0]), lower=True)
            return L, nug
        except np.linalg.LinAlgError:
            pass
        nug = max(nug, 1e-14) * 10.0
        if nug > NUGGET_CAP:
            raise FitError(
                f"correlation matrix not positive definite even with nugget "
                f"{NUGGET_CAP:g}; design points may coincide"
            )


def _blue_from_chol(L, y, Theta):
    """BLUE coefficients and process variance given the Cholesky factor."""
    z_theta = solve_triangular(L, Theta, lower=True)
    z_y = solve_triangular(L, y, lower=True)
    q_mat, r_mat = np.linalg.qr(z_theta)
    rdiag = np.abs(np.diag(r_mat))
    if rdiag.size and rdiag.min() <= 1e-12 * max(rdiag.max(), 1.0):
        cond = np.linalg.cond(z_theta)
        raise FitError(
            f"whitened information matrix is rank deficient (cond={cond:.3e})"
        )
    a = solve_triangular(r_mat, q_mat.T @ z_y, lower=False)
    resid = z_y - z_theta @ a
    sigma2 = float(resid @ resid) / y.size
    return a, sigma2


def blue(theta, U, y, Theta, nugget=DEFAULT_NUGGET):
    """Generalized least-squares trend coefficients and process variance."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y = np.asarray(y, dtype=float)
    L, _ = corr_matrix(U, theta, nugget)
    return _blue_from_chol(L, y, Theta)


def ml_objective(theta, U, y, Theta, nugget=DEFAULT_NUGGET) -> float:
    """Reduced likelihood: sigma^2(theta) * det(R)^(1/N), det via Cholesky."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y = np.asarray(y, dtype=float)
    L, _ = corr_matrix(U, theta, nugget)
    _, sigma2 = _blue_from_chol(L, y, Theta)
    n = y.size
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    return sigma2 * float(np.exp(log_det / n))


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 60
    tournament: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    mutation_scale: float = 0.1  # fraction of the per-gene range
    elitism: int = 2


@dataclass(frozen=True)
class GaResult:
    x: np.ndarray
    fun: float
    n_evals: int


def ga_optimize(objective, bounds, config: GaConfig = GaConfig(), rng=None) -> GaResult:
    """Global minimization over a box by tournament-selection GA.

    ``bounds`` is a sequence of (lo, hi) pairs. The budget is exactly
    population * (generations + 1) objective evaluations, and the best-ever
    individual is returned.
    """
    rng = np.random.default_rng(rng)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(hi <= lo):
        raise ValueError("bounds must be finite with hi > lo")
    if config.population % 2 != 0:
        raise ValueError("population must be even")
    span = hi - lo
    d = lo.size
    n_pop = config.population
    pop = lo + rng.random((n_pop, d)) * span
    fit = np.array([float(objective(x)) for x in pop])
    n_evals = n_pop
    best_i = int(np.argmin(fit))
    best_x, best_f = pop[best_i].copy(), float(fit[best_i])

    def tournament():
        idx = rng.integers(0, n_pop, config.tournament)
        return pop[idx[np.argmin(fit[idx])]]

    for _ in range(config.generations):
        children = np.empty_like(pop)
        for k in range(0, n_pop, 2):
            p1, p2 = tournament(), tournament()
            if rng.random() < config.crossover_rate:
                mask = rng.random(d) < 0.5
                c1 = np.where(mask, p1, p2)
                c2 = np.where(mask, p2, p1)
            else:
                c1, c2 = p1.copy(), p2.copy()
            children[k] = c1
            children[k + 1] = c2
        mutate = rng.random(children.shape) < config.mutation_rate
        noise = rng.normal(0.0, config.mutation_scale * span, children.shape)
        children = np.clip(children + mutate * noise, lo, hi)

        child_fit = np.array([float(objective(x)) for x in children])
        n_evals += n_pop
        elite_idx = np.argsort(fit, kind="stable")[: config.elitism]
        child_order = np.argsort(child_fit, kind="stable")[: n_pop - config.elitism]
        pop = np.vstack([pop[elite_idx], children[child_order]])
        fit = np.concatenate([fit[elite_idx], child_fit[child_order]])
        gen_best = int(np.argmin(fit))
        if fit[gen_best] < best_f:
            best_x, best_f = pop[gen_best].copy(), float(fit[gen_best])
    return GaResult(best_x, best_f, n_evals)


@dataclass(frozen=True)
class PckModel:
    """Fitted local surrogate: PCE trend plus Gaussian-kernel residual.

    ``design_u`` and the cached factor live in standardized coordinates of
    ``box``; predictions take physical points and standardize internally.
    """

    box: object
    trend: SparsePce
    hyper: Hyperparams
    nugget: float
    design_u: np.ndarray
    design_y: np.ndarray
    chol: np.ndarray
    resid_weights: np.ndarray

    @property
    def n_design(self) -> int:
        return self.design_u.shape[0]

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = self.box.standardize(X)
        r = corr_cross(U, self.design_u, self.hyper.theta)
        return self.trend.predict_many(U) + r @ self.resid_weights

    def predict(self, x) -> float:
        return float(self.predict_many(np.atleast_2d(x))[0])

    def power_function(self, x) -> float:
        """Pointwise predictive-uncertainty diagnostic, zero at design sites."""
        u = self.box.standardize(np.asarray(x, dtype=float))
        r = corr_cross(u[None, :], self.design_u, self.hyper.theta)[0]
        w = solve_triangular(self.chol, r, lower=True)
        return float(np.sqrt(max(0.0, 1.0 - w @ w)))


def pck_predict(model: PckModel, x) -> float:
    return model.predict(x)


def power_function(model: PckModel, x) -> float:
    return model.power_function(x)


def assemble_pck(box, trend_basis, U, y, theta, nugget=DEFAULT_NUGGET) -> PckModel:
    """Build the cached model for a fixed kernel: BLUE trend, residual weights."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y = np.asarray(y, dtype=float)
    L, nug = corr_matrix(U, theta, nugget)
    Theta = basis_matrix(U, trend_basis)
    a, sigma2 = _blue_from_chol(L, y, Theta)
    resid = y - Theta @ a
    weights = cho_solve((L, True), resid)
    return PckModel(
        box=box,
        trend=SparsePce(trend_basis, a, box=box),
        hyper=Hyperparams(theta, sigma2),
        nugget=nug,
        design_u=U,
        design_y=y,
        chol=L,
        resid_weights=weights,
    )


def fit_pck(
    inputs,
    outputs,
    box,
    degrees=None,
    q=None,
    ga_config: GaConfig = GaConfig(),
    log10_bounds=DEFAULT_LOG10_BOUNDS,
    nugget=DEFAULT_NUGGET,
    rng=None,
) -> PckModel:
    """Fit trend basis by LAR+BIC, then kernel rates by GA on the ML objective."""
    from . import pce as _pce

    rng = np.random.default_rng(rng)
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(outputs, dtype=float)
    U = box.standardize(X)
    kwargs = {}
    if degrees is not None:
        kwargs["degrees"] = degrees
    if q is not None:
        kwargs["q"] = q
    sparse = fit_sparse_pce(U, y, box=box, **kwargs)
    Theta = basis_matrix(U, sparse.indices)
    m = U.shape[1]

    def objective(log10_theta):
        return ml_objective(10.0**log10_theta, U, y, Theta, nugget)

    result = ga_optimize(objective, [log10_bounds] * m, ga_config, rng)
    theta_hat = 10.0**result.x
    model = assemble_pck(box, sparse.indices, U, y, theta_hat, nugget)
    logger.debug(
        "fit_pck: N=%d P=%d theta=%s sigma2=%.3e nugget=%.1e",
        len(y), sparse.n_terms, theta_hat, model.hyper.sigma2, model.nugget,
    )
    return model
