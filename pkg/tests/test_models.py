import numpy as np
import pytest

from mepck.models import (
    FLUX_FLOOR,
    SolverError,
    TdsConfig,
    TdsForward,
    TrapSet,
    count_flux_peaks,
    dropwave,
    dropwave_rows,
    nondimensionalize,
    synthetic_experiment,
    tds_solve,
    trap_occupancy,
)

CFG = TdsConfig()

EI_TRAPS = TrapSet((-25.0, -35.0), (-3.0, -2.5))
EII_TRAPS = TrapSet((-15.0, -30.0), (-6.0, -3.0))


# -------------------------------------------------------------- dropwave
def test_dropwave_origin():
    assert dropwave(0.0, 0.0) == 0.0


def test_dropwave_values():
    assert dropwave(10.0, 0.0) == pytest.approx(1.0 - np.cos(20 * np.pi) + 1.0)
    assert dropwave(10.0, 0.0) == pytest.approx(1.0)
    assert dropwave(0.5, 0.0) == pytest.approx(1.0 - np.cos(np.pi) + 0.05)
    assert dropwave(0.5, 0.0) == pytest.approx(2.05)


def test_dropwave_radial_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(25):
        a, b = rng.uniform(-10, 10, 2)
        assert dropwave(a, b) == dropwave(b, a)
        assert dropwave(a, b) == dropwave(-a, -b)


def test_dropwave_rows_vectorized():
    X = np.array([[0.0, 0.0], [0.5, 0.0]])
    assert np.allclose(dropwave_rows(X), [0.0, 2.05])


# -------------------------------------------------------- nondimensional
def test_nondimensional_activation_energy():
    nd = nondimensionalize(CFG)
    assert nd.Q_bar == pytest.approx(6700.0 / (8.314 * 293.0), rel=1e-12)
    assert nd.Q_bar == pytest.approx(2.7506, abs=2e-4)


def test_nondimensional_diffusivity_at_reference():
    nd = nondimensionalize(CFG)
    assert nd.D_L(1.0) == pytest.approx(np.exp(-nd.Q_bar), rel=1e-12)
    assert nd.D_L(1.0) == pytest.approx(0.0639, abs=5e-4)


def test_phi_bar_passthrough():
    nd = nondimensionalize(TdsConfig(phi_bar=0.1))
    assert nd.phi_bar == 0.1
    # dimensional route: phi L^2 / (T_o D_o)
    cfg = TdsConfig(phi=0.2344, phi_bar=None)
    nd2 = nondimensionalize(cfg)
    assert nd2.phi_bar == pytest.approx(0.2344 * (5e-3) ** 2 / (293.0 * 2e-7))


def test_config_validation():
    with pytest.raises(ValueError):
        TdsConfig(theta_L0=0.0)
    with pytest.raises(ValueError):
        TdsConfig(Q=-1.0)
    with pytest.raises(ValueError):
        TdsConfig(phi=None, phi_bar=None)


# -------------------------------------------------------- trap occupancy
def test_trap_occupancy_limits():
    assert trap_occupancy(0.0, 1e10) == 0.0
    assert trap_occupancy(1.0, 1.0) == pytest.approx(0.5)
    assert trap_occupancy(1.0, 1e3) == pytest.approx(0.999001, abs=1e-6)


def test_trap_occupancy_negative_rejected():
    with pytest.raises(ValueError):
        trap_occupancy(-0.1, 1.0)


def test_trapset_validation():
    with pytest.raises(ValueError):
        TrapSet((-5.0,), (-3.0,))  # binding energy out of range
    with pytest.raises(ValueError):
        TrapSet((-25.0,), (-8.0,))  # density out of range
    empty = TrapSet()
    assert empty.n_traps == 0
    assert TrapSet((-25.0,), (-3.0,)).N_bar[0] == pytest.approx(1e-3)


# ----------------------------------------------------------------- solve
@pytest.fixture(scope="module")
def fickian_curve():
    return tds_solve(CFG, TrapSet(), grid_nodes=101, T_bar_max=5.0)


@pytest.fixture(scope="module")
def eii_curve():
    return tds_solve(CFG, EII_TRAPS, grid_nodes=101, T_bar_max=5.0)


def test_fickian_conservation(fickian_curve):
    c = fickian_curve
    nd = nondimensionalize(CFG)
    assert abs(c.desorbed[-1] - nd.theta_L0) / nd.theta_L0 < 0.01
    assert np.max(np.abs(c.mass_defect())) < 0.01


def test_conservation_with_traps():
    # trap release steepens the boundary layer, so the one-sided flux
    # bookkeeping carries an O(h) defect; at the production grid it sits
    # well inside the 1% budget
    c = tds_solve(CFG, EII_TRAPS, grid_nodes=201, T_bar_max=5.0)
    assert np.max(np.abs(c.mass_defect())) < 0.01


def test_flux_symmetry(eii_curve):
    c = eii_curve
    scale = np.maximum(np.abs(c.J_bar), FLUX_FLOOR)
    assert np.max(np.abs(c.J_bar - c.J_left) / scale) < 1e-8


def test_flux_nonnegative(eii_curve):
    assert np.all(eii_curve.J_bar >= 0.0)
    assert np.all(eii_curve.J_left >= 0.0)


def test_terminal_flux_decays():
    c = tds_solve(CFG, EII_TRAPS, grid_nodes=101, T_bar_max=6.0)
    assert c.J_bar[-1] < 1e-3 * c.J_bar.max()


def test_eii_single_peak(eii_curve):
    assert count_flux_peaks(eii_curve.J_bar) == 1


def test_grid_preconditions():
    with pytest.raises(ValueError):
        tds_solve(CFG, TrapSet(), grid_nodes=100)  # even
    with pytest.raises(ValueError):
        tds_solve(CFG, TrapSet(), grid_nodes=49)  # too few
    with pytest.raises(ValueError):
        tds_solve(CFG, TrapSet(), T_bar_max=1.0)


def test_solver_error_carries_step_trace():
    with pytest.raises(SolverError, match="step"):
        tds_solve(CFG, EII_TRAPS, grid_nodes=101, T_bar_max=5.0, max_steps=40)


def test_peak_counter_clamps_noise():
    j = np.zeros(100)
    j[50] = 1.0
    j[51] = 0.5
    j[10] = 1e-5  # sub-floor wiggle must not count
    j[11] = 0.5e-5
    assert count_flux_peaks(j) == 1
    j[20] = 0.3
    assert count_flux_peaks(j) == 2


# ------------------------------------------------------------- synthetic
def test_synthetic_noise_scale(eii_curve):
    noisy, sd = synthetic_experiment(eii_curve, rng=0, noise_factor=0.4)
    assert sd == pytest.approx(0.4 * eii_curve.J_bar.mean())
    resid = noisy - eii_curve.J_bar
    assert np.std(resid) == pytest.approx(sd, rel=0.15)
    again, _ = synthetic_experiment(eii_curve, rng=0, noise_factor=0.4)
    assert np.array_equal(noisy, again)


# ---------------------------------------------------------------- forward
def test_tds_forward_pointwise_matches_curve(eii_curve):
    fwd = TdsForward(CFG, n_traps=2, grid_nodes=101, T_bar_max=5.0)
    x = np.array([2.5, -15.0, -30.0, -6.0, -3.0])
    val = fwd(x)
    ref = float(np.interp(2.5, eii_curve.T_bar, eii_curve.J_bar))
    assert val == pytest.approx(ref, rel=1e-12)
    # a second call at another temperature reuses the cached solve
    fwd(np.array([3.0, -15.0, -30.0, -6.0, -3.0]))
    assert fwd.n_solves == 1


def test_tds_forward_input_length_checked():
    fwd = TdsForward(CFG, n_traps=1, grid_nodes=101)
    with pytest.raises(ValueError):
        fwd(np.array([2.0, -25.0]))
