"""Built-in forward models: the Drop-Wave benchmark and the thermal
desorption diffusion problem with equilibrium trapping.

The desorption solver works entirely in nondimensional variables: space is
scaled by the specimen thickness, time by the diffusive scale L^2/D_o, and
temperature by its initial value, with the heating schedule T_bar = 1 +
phi_bar * t_bar. Trap kinetics follow the local-equilibrium law
theta_T = K * theta_L / (1 + K * theta_L), which folds into a nonlinear
capacity bracket plus a temperature-driven release term in the lattice
transport equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _tds_core

R_GAS = 8.314  # J/(mol K)

#: flux magnitudes below this are solver noise and clamped to zero
FLUX_FLOOR = 1e-14


class SolverError(RuntimeError):
    pass


def dropwave(x1, x2):
    """1 - cos(2*pi*r) + 0.1*r with r = sqrt(x1^2 + x2^2)."""
    r = np.sqrt(np.asarray(x1, dtype=float) ** 2 + np.asarray(x2, dtype=float) ** 2)
    out = 1.0 - np.cos(2.0 * np.pi * r) + 0.1 * r
    return float(out) if np.ndim(out) == 0 else out


def dropwave_rows(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return dropwave(X[:, 0], X[:, 1])


@dataclass(frozen=True)
class TdsConfig:
    """Physical test parameters; defaults model a ferritic steel specimen."""

    Q: float = 6700.0          # lattice activation energy, J/mol
    D_o: float = 2e-7          # pre-exponential diffusivity, m^2/s
    T_o: float = 293.0         # initial temperature, K
    L: float = 5e-3            # specimen thickness, m
    theta_L0: float = 1e-6     # initial lattice occupancy
    N_L: float = 8.46e28       # lattice site density, atoms/m^3
    alpha: float = 1.0         # atom sites per trap
    beta: float = 1.0          # interstitial sites per lattice atom
    phi: float | None = None   # heating rate, K/s
    phi_bar: float | None = 0.1  # nondimensional heating rate, wins if set

    def __post_init__(self):
        for name in ("Q", "D_o", "T_o", "L", "N_L", "alpha", "beta"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.theta_L0 < 1.0:
            raise ValueError("theta_L0 must lie in (0, 1)")
        if self.phi is None and self.phi_bar is None:
            raise ValueError("either phi or phi_bar must be given")
        if self.phi is not None and self.phi <= 0.0:
            raise ValueError("phi must be positive")
        if self.phi_bar is not None and self.phi_bar <= 0.0:
            raise ValueError("phi_bar must be positive")


@dataclass(frozen=True)
class NondimParams:
    """Dimensionless groups driving the governing equation."""

    Q_bar: float
    phi_bar: float
    theta_L0: float

    def D_L(self, T_bar):
        return np.exp(-self.Q_bar / np.asarray(T_bar, dtype=float))

    def K_eq(self, T_bar, dH_bar):
        return np.exp(-np.asarray(dH_bar, dtype=float) / np.asarray(T_bar, dtype=float))

    def T_bar(self, t_bar):
        return 1.0 + self.phi_bar * np.asarray(t_bar, dtype=float)

    def t_bar_of_T(self, T_bar):
        return (np.asarray(T_bar, dtype=float) - 1.0) / self.phi_bar


def nondimensionalize(config: TdsConfig) -> NondimParams:
    q_bar = config.Q / (R_GAS * config.T_o)
    if config.phi_bar is not None:
        phi_bar = config.phi_bar
    else:
        phi_bar = config.phi * config.L**2 / (config.T_o * config.D_o)
    return NondimParams(Q_bar=q_bar, phi_bar=phi_bar, theta_L0=config.theta_L0)


@dataclass(frozen=True)
class TrapSet:
    """Trap binding energies (nondimensional, negative) and log10 densities."""

    dH_bar: np.ndarray
    logN_bar: np.ndarray

    def __init__(self, dH_bar=(), logN_bar=(), validate=True):
        dh = np.atleast_1d(np.asarray(dH_bar, dtype=float))
        ln = np.atleast_1d(np.asarray(logN_bar, dtype=float))
        if dh.shape != ln.shape:
            raise ValueError("dH_bar and logN_bar must have the same length")
        if validate and dh.size:
            if np.any(dh < -40.0) or np.any(dh > -10.0):
                raise ValueError("trap binding energies must lie in [-40, -10]")
            if np.any(ln < -7.0) or np.any(ln > -2.0):
                raise ValueError("log10 trap densities must lie in [-7, -2]")
        object.__setattr__(self, "dH_bar", dh)
        object.__setattr__(self, "logN_bar", ln)

    @property
    def n_traps(self) -> int:
        return self.dH_bar.size

    @property
    def N_bar(self) -> np.ndarray:
        return 10.0**self.logN_bar


def trap_occupancy(theta_L, K):
    """Equilibrium trap filling K*theta_L / (1 + K*theta_L)."""
    theta_L = np.asarray(theta_L, dtype=float)
    if np.any(theta_L < 0.0):
        raise ValueError("lattice occupancy must be non-negative")
    x = np.asarray(K, dtype=float) * theta_L
    out = x / (1.0 + x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FluxCurve:
    """Desorption flux versus temperature plus mass bookkeeping.

    ``J_bar`` is the right-face flux of the (symmetric) problem; the mass
    fields account for both faces: desorbed + inventory should equal
    ``initial_inventory`` at every time up to discretization error.
    """

    T_bar: np.ndarray
    J_bar: np.ndarray
    J_left: np.ndarray
    desorbed: np.ndarray
    inventory: np.ndarray
    initial_inventory: float
    grid_nodes: int = 0
    n_steps: int = 0

    def mass_defect(self) -> np.ndarray:
        """Relative conservation error at each output time."""
        return (self.desorbed + self.inventory - self.initial_inventory) / (
            self.initial_inventory
        )


def _clamp_flux(j):
    j = np.where(np.abs(j) < FLUX_FLOOR, 0.0, j)
    return np.maximum(j, 0.0)


def tds_solve(
    config: TdsConfig,
    traps: TrapSet,
    grid_nodes: int = 201,
    T_bar_max: float = 3.0,
    n_out: int = 200,
    rtol: float = 1e-5,
    atol: float = 1e-8,
    max_steps: int = 500_000,
) -> FluxCurve:
    """Integrate the desorption problem and report flux on a uniform
    temperature grid of ``n_out`` points over [1, T_bar_max]."""
    if grid_nodes < 51 or grid_nodes % 2 == 0:
        raise ValueError("grid_nodes must be odd and >= 51")
    if T_bar_max <= 1.0:
        raise ValueError("T_bar_max must exceed 1")
    nd = nondimensionalize(config)
    t_end = nd.t_bar_of_T(T_bar_max)

    (
        rec_t, rec_jl, rec_jr, rec_inv, rec_des, nrec,
        trace_t, trace_dt, trace_code, trace_k, status,
    ) = _tds_core.integrate_tds(
        grid_nodes,
        nd.Q_bar,
        nd.phi_bar,
        nd.theta_L0,
        np.asarray(traps.dH_bar, dtype=float),
        np.asarray(traps.N_bar, dtype=float),
        float(t_end),
        rtol,
        atol,
        1e-9,
        1e-13,
        max_steps,
    )
    if status != _tds_core.STATUS_OK:
        k0 = max(0, trace_k - _tds_core.TRACE_LEN)
        lines = []
        for j in range(k0, trace_k):
            i = j % _tds_core.TRACE_LEN
            kind = "newton" if trace_code[i] == 1 else "error-test"
            lines.append(f"  t={trace_t[i]:.6e} dt={trace_dt[i]:.3e} ({kind})")
        reason = (
            "Newton iteration failed below the minimum step"
            if status == _tds_core.STATUS_NEWTON_FAIL
            else "step budget exhausted"
        )
        raise SolverError(reason + "; recent step attempts:\n" + "\n".join(lines))

    t_rec = rec_t[:nrec]
    T_grid = np.linspace(1.0, T_bar_max, n_out)
    t_grid = nd.t_bar_of_T(T_grid)
    j_right = PchipInterpolator(t_rec, rec_jr[:nrec])(t_grid)
    j_left = PchipInterpolator(t_rec, rec_jl[:nrec])(t_grid)
    inventory = PchipInterpolator(t_rec, rec_inv[:nrec])(t_grid)
    desorbed = PchipInterpolator(t_rec, rec_des[:nrec])(t_grid)
    return FluxCurve(
        T_bar=T_grid,
        J_bar=_clamp_flux(j_right),
        J_left=_clamp_flux(j_left),
        desorbed=desorbed,
        inventory=inventory,
        initial_inventory=float(rec_inv[0]),
        grid_nodes=grid_nodes,
        n_steps=int(nrec - 1),
    )


def synthetic_experiment(curve: FluxCurve, rng, noise_factor: float = 0.4):
    """Flux polluted by zero-mean Gaussian noise with sd = factor * mean flux."""
    rng = np.random.default_rng(rng)
    sd = noise_factor * float(np.mean(curve.J_bar))
    return curve.J_bar + rng.normal(0.0, sd, curve.J_bar.size), sd


def count_flux_peaks(J, rel_floor: float = 1e-3) -> int:
    """Local maxima after clamping sub-noise values to zero."""
    j = np.asarray(J, dtype=float).copy()
    peak = j.max()
    if peak <= 0.0:
        return 0
    j[j < rel_floor * peak] = 0.0
    count = 0
    for k in range(1, j.size - 1):
        if j[k] > 0.0 and j[k] > j[k - 1] and j[k] >= j[k + 1]:
            # skip plateau duplicates: only count the first sample of a flat top
            if j[k] == j[k + 1]:
                right = k + 1
                while right < j.size - 1 and j[right] == j[k]:
                    right += 1
                if j[right] >= j[k]:
                    continue
            count += 1
    return count


class TdsForward:
    """Pointwise forward model for surrogate construction.

    Input rows are ``[T_bar, dH_1..dH_k, logN_1..logN_k]``; each distinct trap
    configuration costs one PDE solve, memoized so temperature sweeps over a
    fixed configuration are cheap.
    """

    def __init__(
        self,
        config: TdsConfig,
        n_traps: int,
        grid_nodes: int = 201,
        T_bar_max: float = 3.0,
        n_out: int = 200,
        rtol: float = 1e-5,
        atol: float = 1e-8,
        cache_size: int = 64,
    ):
        self.config = config
        self.n_traps = n_traps
        self.grid_nodes = grid_nodes
        self.T_bar_max = T_bar_max
        self.n_out = n_out
        self.rtol = rtol
        self.atol = atol
        self.cache_size = cache_size
        self._cache: dict[tuple, FluxCurve] = {}
        self.n_solves = 0

    def curve(self, dH_bar, logN_bar) -> FluxCurve:
        key = tuple(np.asarray(dH_bar, dtype=float)) + tuple(
            np.asarray(logN_bar, dtype=float)
        )
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = tds_solve(
            self.config,
            TrapSet(dH_bar, logN_bar),
            grid_nodes=self.grid_nodes,
            T_bar_max=self.T_bar_max,
            n_out=self.n_out,
            rtol=self.rtol,
            atol=self.atol,
        )
        self.n_solves += 1
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = out
        return out

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        k = self.n_traps
        if x.size != 1 + 2 * k:
            raise ValueError(f"expected 1 + 2*{k} inputs, got {x.size}")
        curve = self.curve(x[1 : 1 + k], x[1 + k :])
        return float(np.interp(x[0], curve.T_bar, curve.J_bar))
