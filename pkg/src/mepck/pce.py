"""Sparse orthonormal Legendre expansions on standardized coordinates.

The basis is truncated by a hyperbolic q-norm rule, ordered by least-angle
regression, and pruned by the Bayesian information criterion with an ordinary
least-squares refit of every candidate subset (hybrid LAR). Sensitivity
indices come for free from the squared coefficients of the orthonormal basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import solve_triangular

#: degree range scanned by the default builder
DEFAULT_DEGREES = (2, 3, 4, 5, 6)
DEFAULT_QNORM = 0.95

RSS_FLOOR = 1e-300


class EdSizeWarning(UserWarning):
    """Design smaller than the 2P heuristic for a well-posed least squares."""


class RankDeficiencyError(RuntimeError):
    pass


def legendre_table(u, max_order: int) -> np.ndarray:
    """Orthonormal Legendre values, shape (len(u), max_order + 1).

    Column j holds sqrt(2j+1) * P_j(u), orthonormal against the uniform
    density 1/2 on [-1, 1], built by the three-term recurrence.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(np.abs(u) > 1.0 + 1e-12):
        raise ValueError("points must lie in [-1, 1]")
    out = np.empty((u.size, max_order + 1))
    out[:, 0] = 1.0
    if max_order >= 1:
        out[:, 1] = u
    for j in range(1, max_order):
        out[:, j + 1] = ((2 * j + 1) * u * out[:, j] - j * out[:, j - 1]) / (j + 1)
    norms = np.sqrt(2.0 * np.arange(max_order + 1) + 1.0)
    return out * norms


def legendre_eval(order: int, u):
    """Single orthonormal Legendre polynomial; scalar in, scalar out."""
    if order < 0:
        raise ValueError("order must be >= 0")
    table = legendre_table(np.atleast_1d(u), order)
    vals = table[:, order]
    return float(vals[0]) if np.isscalar(u) or np.ndim(u) == 0 else vals


def qnorm(alpha, q: float) -> float:
    alpha = np.asarray(alpha, dtype=float)
    s = np.sum(alpha**q)
    return float(s ** (1.0 / q))


def generate_hyperbolic(M: int, p: int, q: float = 1.0) -> np.ndarray:
    """All multi-indices with q-norm <= p, graded-lexicographic, shape (P, M)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if p < 0:
        raise ValueError("p must be >= 0")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    kept = []
    for alpha in product(range(p + 1), repeat=M):
        if sum(alpha) > p:
            continue
        if qnorm(alpha, q) <= p + 1e-9:
            kept.append(alpha)
    kept.sort(key=lambda a: (sum(a), a))
    return np.asarray(kept, dtype=int)


def basis_matrix(U, indices) -> np.ndarray:
    """Information matrix Theta_ij = prod_k psi_{alpha_jk}(U_ik)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    indices = np.atleast_2d(np.asarray(indices, dtype=int))
    if U.shape[1] != indices.shape[1]:
        raise ValueError(
            f"points have dimension {U.shape[1]}, indices have {indices.shape[1]}"
        )
    theta = np.ones((U.shape[0], indices.shape[0]))
    for d in range(U.shape[1]):
        orders = indices[:, d]
        pmax = int(orders.max()) if orders.size else 0
        if pmax == 0 and np.all(orders == 0):
            continue
        table = legendre_table(U[:, d], pmax)
        theta *= table[:, orders]
    return theta


def ols_fit(theta, y) -> np.ndarray:
    """Least-squares coefficients via QR; rejects rank-deficient designs."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = theta.shape
    if n < p:
        raise RankDeficiencyError(f"need N >= P, got N={n}, P={p}")
    q_mat, r_mat = np.linalg.qr(theta)
    diag = np.abs(np.diag(r_mat))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        cond = np.linalg.cond(theta)
        raise RankDeficiencyError(
            f"information matrix is numerically rank deficient (cond={cond:.3e})"
        )
    return solve_triangular(r_mat, q_mat.T @ y, lower=False)


def _chol_append(L, d2_col, cross):
    """Grow a Cholesky factor by one row/column; None if not positive."""
    k = L.shape[0]
    if k == 0:
        if d2_col <= 1e-14:
            return None
        return np.array([[np.sqrt(d2_col)]])
    w = solve_triangular(L, cross, lower=True)
    d2 = d2_col - w @ w
    if d2 <= 1e-12:
        return None
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = L
    out[k, :k] = w
    out[k, k] = np.sqrt(d2)
    return out


def _lar_entry_order(X, y, limit, tie_eps=1e-10):
    """Column entry order of least-angle regression on normalized columns."""
    n, p = X.shape
    limit = min(limit, p)
    G = X.T @ X
    mu = np.zeros(n)
    active: list[int] = []
    signs: list[float] = []
    dropped: set[int] = set()
    L = np.empty((0, 0))
    while len(active) < limit:
        c = X.T @ (y - mu)
        inactive = [j for j in range(p) if j not in active and j not in dropped]
        if not inactive:
            break
        C = np.abs(c[inactive]).max()
        if C < 1e-13:
            break
        joiners = [j for j in inactive if abs(c[j]) >= C - tie_eps * max(C, 1.0)]
        for j in joiners:
            s = 1.0 if c[j] >= 0 else -1.0
            cross = G[active, j] * np.asarray(signs) * s if active else np.empty(0)
            newL = _chol_append(L, G[j, j], cross)
            if newL is None:
                dropped.add(j)
                continue
            L = newL
            active.append(j)
            signs.append(s)
            if len(active) >= limit:
                return active
        if not active:
            break
        sg = np.asarray(signs)
        ones = np.ones(len(active))
        w = solve_triangular(L, ones, lower=True)
        w = solve_triangular(L.T, w, lower=False)
        denom = float(ones @ w)
        if denom <= 0:
            break
        A = 1.0 / np.sqrt(denom)
        u = (X[:, active] * sg) @ (A * w)
        a = X.T @ u
        rest = [j for j in range(p) if j not in active and j not in dropped]
        if not rest:
            break
        gamma_full = C / A
        gammas = [gamma_full]
        for j in rest:
            for val in ((C - c[j]) / (A - a[j]), (C + c[j]) / (A + a[j])):
                if np.isfinite(val) and val > 1e-14:
                    gammas.append(val)
        mu = mu + min(gammas) * u
    return active


def lar_path(theta, y):
    """Nested column subsets in least-angle entry order.

    The constant (intercept) column, when present, seeds every subset; the
    remaining columns are centered and normalized before the LAR walk. Subset
    sizes run from 1 to min(N - 1, P), and each subset is meant to be refit
    by ordinary least squares (hybrid LAR).
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = theta.shape
    cap = min(n - 1, p)
    if cap < 1:
        raise ValueError("need at least two rows to build a path")

    spans = theta.max(axis=0) - theta.min(axis=0)
    scale = np.maximum(np.abs(theta).max(axis=0), 1.0)
    const_mask = spans <= 1e-12 * scale
    icpt = int(np.argmax(const_mask)) if const_mask.any() else None

    subsets: list[tuple[int, ...]] = []
    acc: list[int] = []
    if icpt is not None:
        acc.append(icpt)
        subsets.append(tuple(acc))

    work = [j for j in range(p) if j != icpt and not const_mask[j]]
    if work and len(subsets) < cap:
        X = theta[:, work] - theta[:, work].mean(axis=0)
        norms = np.linalg.norm(X, axis=0)
        keep = norms > 1e-13
        cols = [work[j] for j in range(len(work)) if keep[j]]
        X = X[:, keep] / norms[keep]
        order = _lar_entry_order(X, y - y.mean(), cap - len(subsets))
        for j in order:
            acc.append(cols[j])
            subsets.append(tuple(acc))
            if len(subsets) >= cap:
                break
    if not subsets:
        raise ValueError("no usable columns for the regression path")
    return subsets


@dataclass(frozen=True)
class BicSelection:
    subset: tuple
    coeffs: np.ndarray
    bics: np.ndarray


def bic_values(rss, k, n) -> float:
    return float(n * np.log(max(rss, RSS_FLOOR) / n) + k * np.log(n))


def bic_select(subsets, theta, y) -> BicSelection:
    """Subset minimizing N ln(RSS/N) + k ln N, with its OLS refit.

    Nested subset lists (as produced by :func:`lar_path`) are scored with a
    single QR factorization; arbitrary subset lists fall back to per-subset
    least squares.
    """
    if not subsets:
        raise ValueError("need at least one candidate subset")
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    y = np.asarray(y, dtype=float)
    n = theta.shape[0]

    nested = all(
        subsets[i][: len(subsets[i - 1])] == subsets[i - 1]
        for i in range(1, len(subsets))
    ) and all(len(s) == i + len(subsets[0]) for i, s in enumerate(subsets))

    if nested:
        cols = list(subsets[-1])
        q_mat, r_mat = np.linalg.qr(theta[:, cols])
        qty = q_mat.T @ y
        rdiag = np.abs(np.diag(r_mat))
        rank_ok = rdiag > 1e-12 * max(rdiag[0], 1.0)
        total = float(y @ y)
        rss_prefix = total - np.cumsum(qty**2)
        bics = np.full(len(subsets), np.inf)
        for i, s in enumerate(subsets):
            k = len(s)
            if not np.all(rank_ok[:k]):
                continue
            bics[i] = bic_values(max(rss_prefix[k - 1], 0.0), k, n)
        best = int(np.argmin(bics))
        k = len(subsets[best])
        coeffs = solve_triangular(r_mat[:k, :k], qty[:k], lower=False)
        return BicSelection(tuple(subsets[best]), coeffs, bics)

    bics = np.full(len(subsets), np.inf)
    fits = []
    for i, s in enumerate(subsets):
        cols = list(s)
        coeffs, res, rank, _ = np.linalg.lstsq(theta[:, cols], y, rcond=None)
        if rank < len(cols):
            fits.append(None)
            continue
        r = y - theta[:, cols] @ coeffs
        bics[i] = bic_values(float(r @ r), len(cols), n)
        fits.append(coeffs)
    best = int(np.argmin(bics))
    if fits[best] is None:
        raise RankDeficiencyError("all candidate subsets are rank deficient")
    return BicSelection(tuple(subsets[best]), fits[best], bics)


@dataclass(frozen=True)
class SparsePce:
    """Retained multi-indices and coefficients of a Legendre expansion.

    Lives entirely in standardized coordinates; ``box`` records where those
    coordinates came from, when known.
    """

    indices: np.ndarray
    coeffs: np.ndarray
    box: object = None

    def __init__(self, indices, coeffs, box=None):
        indices = np.atleast_2d(np.asarray(indices, dtype=int))
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if indices.shape[0] != coeffs.shape[0]:
            raise ValueError("one coefficient per multi-index required")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "box", box)

    @property
    def ndim(self) -> int:
        return self.indices.shape[1]

    @property
    def n_terms(self) -> int:
        return self.indices.shape[0]

    def predict_many(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return basis_matrix(U, self.indices) @ self.coeffs

    def predict(self, u) -> float:
        return float(self.predict_many(np.atleast_2d(u))[0])


def pce_predict(pce: SparsePce, u):
    return pce.predict(u)


def fit_sparse_pce(
    U,
    y,
    degrees=DEFAULT_DEGREES,
    q=DEFAULT_QNORM,
    box=None,
) -> SparsePce:
    """LAR + BIC expansion selected across the given degree range."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y = np.asarray(y, dtype=float)
    n, m = U.shape
    best = None
    max_p = 0
    for p in degrees:
        indices = generate_hyperbolic(m, p, q)
        max_p = max(max_p, indices.shape[0])
        theta = basis_matrix(U, indices)
        try:
            subsets = lar_path(theta, y)
            sel = bic_select(subsets, theta, y)
        except (ValueError, RankDeficiencyError):
            continue
        score = float(np.min(sel.bics))
        if best is None or score < best[0]:
            best = (score, indices[list(sel.subset)], sel.coeffs)
    if best is None:
        raise RankDeficiencyError("no degree produced a usable expansion")
    if n < 2 * max_p:
        warnings.warn(
            f"design size N={n} is below the 2P heuristic for the largest "
            f"candidate basis (P={max_p})",
            EdSizeWarning,
            stacklevel=2,
        )
    return SparsePce(best[1], best[2], box=box)


def sobol_indices(pce: SparsePce) -> tuple[np.ndarray, np.ndarray]:
    """First-order and total variance shares per input dimension."""
    nz = np.any(pce.indices != 0, axis=1)
    total_var = float(np.sum(pce.coeffs[nz] ** 2))
    if total_var <= 0.0:
        raise ValueError("constant surrogate: variance decomposition undefined")
    m = pce.ndim
    first = np.zeros(m)
    total = np.zeros(m)
    for i in range(m):
        involves = pce.indices[:, i] != 0
        others = [j for j in range(m) if j != i]
        only = involves & np.all(pce.indices[:, others] == 0, axis=1)
        first[i] = np.sum(pce.coeffs[only] ** 2) / total_var
        total[i] = np.sum(pce.coeffs[involves] ** 2) / total_var
    return first, total
