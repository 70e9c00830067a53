import numpy as np
import pytest

from wpsim import (
    BoundaryConditionSpec, Coefficient, CoefficientSet, Grid, Model, Operators, PhysicalParams, SourceModel, State,
    StepperConfig, eigen_decompose, integrate,
)
from wpsim.analysis import (
    DataShape, compute_equilibrium, fit_exponential, linearized_spectrum, mms_convergence, smallness_sweep,
    smoothing_probe, static_critical_amplitude,
)
from wpsim.analysis.decay import decay_signal, fit_decay, slow_mode_data
from wpsim.analysis.equilibrium import EquilibriumResult, steady_residuals
from wpsim.analysis.mms import affine_static_solution, mms_error, observed_order, sine_cosine_solution
from wpsim.analysis.smoothing import difference_surrogate, growth_exponent, hat
from wpsim.analysis.sweep import Attempt, SweepReport
from wpsim.errors import BracketInvalid, NonDecayingSignal, SingularSteadyProblem
from wpsim.linear_solvers import oscillator_roots


def ops_for(n=33, j=0, ell=0, length=np.pi):
    grid = Grid(((0.0, length),), (n,))
    bc = BoundaryConditionSpec(j, ell)
    return grid, Operators.build(grid, bc), bc


def model(C=1.0, W=1.0, theta_a=1.0, k=0.3, source=None):
    co = CoefficientSet(c=Coefficient.affine(0.8, 0.2), b=Coefficient.affine(0.5, 0.5), k=Coefficient.constant(k))
    return Model(PhysicalParams(W=W, theta_a=theta_a, kappa_a=0.6), co, source or SourceModel(C=C))


# equilibrium ---------------------------------------------------------------

@pytest.mark.parametrize("j,ell", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_equilibrium_examples(j, ell):
    grid, ops, _ = ops_for(j=j, ell=ell)
    m = model(theta_a=1.7)
    eq = compute_equilibrium(m, ops, r=0.3)
    np.testing.assert_allclose(eq.u_star, 0.3 if j == 1 else 0.0, rtol=0, atol=0)
    np.testing.assert_allclose(eq.theta_star, 1.7, rtol=1e-13)
    assert eq.residual_u < 1e-12 and eq.residual_theta < 1e-12
    # re-evaluated through the model's residual operators
    ru, rt = steady_residuals(eq.u_star, eq.theta_star, m, ops)
    assert max(ru, rt) < 1e-10


def test_equilibrium_with_positive_source_at_zero():
    grid, ops, _ = ops_for(ell=1)
    q0 = 0.35
    src = SourceModel("custom-table", table=((-1.0, 1.0), (q0, q0)))
    m = model(W=0.7, source=src)
    eq = compute_equilibrium(m, ops)
    np.testing.assert_allclose(eq.theta_star, 1.0 + q0 / m.params.perfusion, rtol=1e-12)


def test_equilibrium_singular_without_perfusion():
    _, ops, _ = ops_for(ell=1)
    with pytest.raises(SingularSteadyProblem):
        compute_equilibrium(model(W=0.0), ops)


# spectrum ------------------------------------------------------------------

def test_spectrum_is_union_of_blocks():
    grid, ops, _ = ops_for(n=41)
    m = model()
    eq = compute_equilibrium(m, ops)
    lin = linearized_spectrum(eq, m, ops, modes=4)
    lams = [lam for lam, _ in eigen_decompose(ops.lap_u, 4)]
    for lam, (mu1, mu2) in zip(lams, lin.wave_rates):
        ref = oscillator_roots(lam, 1.0, 1.0)
        np.testing.assert_allclose(sorted([mu1, mu2], key=lambda z: z.real), sorted(ref, key=lambda z: z.real))
    np.testing.assert_allclose(lin.heat_rates, -(0.6 * np.array(lams) + 1.0))
    assert lin.omega0 == pytest.approx(-max(lin.rates().real))


def test_spectrum_first_mode_oracle():
    # b = c = 1 at theta_a on (0, pi): continuum lambda_1 = 1, roots of mu^2 + mu + 1
    co = CoefficientSet(c=Coefficient.constant(1.0), b=Coefficient.constant(1.0))
    m = Model(PhysicalParams(), co, SourceModel())
    errs = []
    for n in (33, 65, 129):
        grid, ops, _ = ops_for(n=n)
        lin = linearized_spectrum(compute_equilibrium(m, ops), m, ops, modes=1)
        errs.append(abs(lin.wave_rates[0, 0].real + 0.5))
    assert errs[-1] < 1e-4
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_spectrum_invariant_under_source_amplitude():
    _, ops, _ = ops_for()
    specs = []
    for C in (0.0, 1.0, 7.0):
        m = model(C=C)
        specs.append(linearized_spectrum(compute_equilibrium(m, ops), m, ops, modes=3, method="jacobian").rates())
    np.testing.assert_allclose(specs[0], specs[1], atol=1e-9)
    np.testing.assert_allclose(specs[0], specs[2], atol=1e-9)


def test_spectrum_jacobian_cross_check():
    _, ops, _ = ops_for(n=21)
    m = model()
    eq = compute_equilibrium(m, ops)
    modes = linearized_spectrum(eq, m, ops, modes=19)
    jac = linearized_spectrum(eq, m, ops, method="jacobian")
    a = np.sort_complex(modes.rates())
    b = np.sort_complex(jac.rates())
    np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-7)
    assert modes.omega0 == pytest.approx(jac.omega0, rel=1e-9)


def test_spectrum_degenerates_as_perfusion_vanishes():
    _, ops, _ = ops_for(j=1, ell=1)
    omegas = []
    for W in (1.0, 1e-2, 1e-4):
        m = model(W=W)
        omegas.append(linearized_spectrum(compute_equilibrium(m, ops), m, ops, modes=3).omega0_normal)
    assert omegas[0] > omegas[1] > omegas[2] > 0
    assert omegas[2] == pytest.approx(1e-4, rel=1e-9)


# decay ---------------------------------------------------------------------

def test_fit_exponential_synthetic():
    t = np.linspace(0, 20, 201)
    fit = fit_exponential(t, 5 * np.exp(-0.3 * t))
    assert fit.omega == pytest.approx(0.3, abs=1e-8)
    assert fit.C == pytest.approx(5.0, rel=1e-8)
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(NonDecayingSignal):
        fit_exponential(t, np.exp(0.1 * t))
    with pytest.raises(ValueError):
        fit_exponential(t[:5], np.exp(-t[:5]))


def test_heat_decay_matches_eigenvalue():
    grid, ops, bc = ops_for(n=65)
    co = CoefficientSet(c=Coefficient.constant(1.0), b=Coefficient.constant(1.0))
    par = PhysicalParams(kappa_a=0.5, W=0.4, rho_a=1.2)
    m = Model(par, co, SourceModel("zero"))
    eq = compute_equilibrium(m, ops)
    lam, phi = eigen_decompose(ops.lap_theta, 1)[0]
    s0 = State(np.zeros(grid.size), np.zeros(grid.size), 1.0 + 0.01 * phi, 0.0)
    traj = integrate(s0, 8.0, StepperConfig(dt=0.02), m, ops, bc)
    fit = fit_decay(traj, eq, ops, norms=("L2",))
    expected = (par.kappa_a * lam + par.perfusion) / par.heat_capacity
    assert fit.omega == pytest.approx(expected, rel=0.02)


def test_slow_mode_data_and_signal():
    grid, ops, bc = ops_for(n=33)
    m = model()
    eq = compute_equilibrium(m, ops)
    s0 = slow_mode_data(eq, m, ops, 1e-2)
    phi = eigen_decompose(ops.lap_u, 1)[0][1]
    np.testing.assert_allclose(s0.u, 1e-2 * phi)
    traj = integrate(s0, 1.0, StepperConfig(dt=0.1), m, ops, bc)
    times, vals = decay_signal(traj, eq, ops)
    assert times.size == vals.size == 11 and np.all(vals > 0)


# smoothing -----------------------------------------------------------------

def test_surrogates_on_polynomial_samples():
    grid = Grid(((0.0, 1.0),), (5,))
    dt = 0.1
    samples = [np.full(grid.size, (i * dt) ** 3) for i in range(5)]
    assert difference_surrogate(samples, 0, 3, dt, grid) == pytest.approx(6.0, rel=1e-9)
    assert growth_exponent([0.1, 0.05, 0.025], [1.0, 2.0, 4.0]) == pytest.approx(1.0)


def test_smoothing_heat_hat():
    grid, ops, bc = ops_for(n=101, length=1.0)
    co = CoefficientSet()
    m = Model(PhysicalParams(W=0.0, kappa_a=1.0), co, SourceModel("zero"))
    x = grid.axis(0)
    s0 = State(np.zeros(grid.size), np.zeros(grid.size), 1.0 + hat(x, 0.25, 0.75), 0.0)
    cfg = StepperConfig(scheme="backward-euler", startup_steps=0)
    rep = smoothing_probe(m, ops, bc, s0, cfg, [0.004, 0.002, 0.001, 0.0005], tau=0.1, field_name="theta",
                          orders=(1, 2))
    assert rep.exponents_early[2] > 0.5
    assert rep.exponents_late[2] < 0.2
    assert rep.exponents_late[1] < 0.2


def test_smoothing_smooth_data_bounded():
    grid, ops, bc = ops_for(n=65)
    m = model(k=0.2)
    x = grid.axis(0)
    s0 = State(0.05 * np.sin(x), np.zeros(grid.size), np.ones(grid.size), 0.0)
    cfg = StepperConfig(scheme="backward-euler", startup_steps=0)
    rep = smoothing_probe(m, ops, bc, s0, cfg, [0.01, 0.005, 0.0025], tau=0.05, orders=(1, 2, 3))
    for k in (1, 2, 3):
        # no growth under refinement (order 1 even shrinks: u_t(0) = 0)
        assert rep.exponents_early[k] < 0.2
        assert rep.exponents_late[k] < 0.2
    with pytest.raises(ValueError):
        smoothing_probe(m, ops, bc, s0, cfg, [0.03], tau=0.05)


# sweep ---------------------------------------------------------------------

def sweep_shape(grid):
    x = grid.axis(0)
    z = np.zeros(grid.size)
    return DataShape(z, np.sin(x), z, np.ones(grid.size))


def test_sweep_linear_no_threshold():
    grid, ops, bc = ops_for(n=33)
    m = model(k=0.0)
    rep = smallness_sweep(m, ops, bc, sweep_shape(grid), StepperConfig(dt=0.05), 1.0, 0.1, 50.0)
    assert rep.status == "no finite threshold detected" and rep.threshold is None
    assert rep.to_dict()["monotonicity_violations"] == []


def test_static_critical_amplitude():
    grid = Grid(((0.0, np.pi),), (33,))
    co = CoefficientSet(k=Coefficient.constant(1.0))
    shape = np.sin(grid.axis(0))
    assert static_critical_amplitude(shape, np.ones(grid.size), co) == pytest.approx(0.5)
    assert static_critical_amplitude(-shape, np.ones(grid.size), co) == float("inf")


def test_sweep_synthetic_predicate_and_invalid_bracket():
    def pred(a):
        return Attempt(a, a < 2.5, None if a < 2.5 else "ParabolicityLost", None)

    rep = smallness_sweep(None, None, None, None, None, 1.0, 0.0, 10.0, predicate=pred)
    assert rep.bracket[0] < 2.5 <= rep.bracket[1]
    assert rep.relative_width < 0.01
    assert rep.failure_mode == "ParabolicityLost"
    with pytest.raises(BracketInvalid):
        smallness_sweep(None, None, None, None, None, 1.0, 3.0, 10.0, predicate=pred)


def test_monotonicity_violations_reported():
    rep = SweepReport(1.0, 1.0, (1.0, 1.1), "x", [Attempt(1.0, False), Attempt(2.0, True)])
    assert rep.monotonicity_violations() == [(1.0, 2.0)]


def test_sweep_dynamic_threshold_beyond_static():
    grid, ops, bc = ops_for(n=33)
    m = Model(PhysicalParams(), CoefficientSet(k=Coefficient.constant(1.0)), SourceModel())
    rep = smallness_sweep(m, ops, bc, sweep_shape(grid), StepperConfig(dt=0.05), 1.0, 0.1, 5.0, rel_width=0.05)
    assert rep.status == "threshold"
    assert rep.failure_mode in ("ParabolicityLost", "NewtonDivergence")
    assert rep.monotonicity_violations() == []


# mms -----------------------------------------------------------------------

def test_mms_affine_neumann_is_exact():
    co = CoefficientSet(c=Coefficient.constant(1.0), b=Coefficient.constant(0.5), k=Coefficient.constant(0.1))
    m = Model(PhysicalParams(theta_a=1.0), co, SourceModel(C=0.5))
    sol = affine_static_solution(1.0)
    for n in (9, 17, 33):
        grid = Grid(((0.0, np.pi),), (n,))
        err = mms_error(sol, m, grid, StepperConfig(dt=0.1, startup_steps=0), 1.0, j=1, ell=1)
        assert err["total"] < 1e-11


def test_mms_quick_orders():
    co = CoefficientSet(c=Coefficient.constant(1.0), b=Coefficient.constant(0.5), k=Coefficient.constant(0.1))
    m = Model(PhysicalParams(theta_a=1.0), co, SourceModel(C=0.5))
    sol = sine_cosine_solution(1.0)
    rep = mms_convergence(m, sol, space_nodes=(9, 17, 33), space_dt=5e-3, time_nodes=129,
                          time_dts=(), t_end=0.5, workers=2)
    assert 1.8 <= rep.space_order <= 2.2 and rep.time_order is None
    rep = mms_convergence(m, sol, space_nodes=(), time_nodes=129, time_dts=(0.1, 0.05, 0.025), t_end=0.5,
                          scheme="backward-euler")
    assert 0.8 <= rep.time_order <= 1.2
    assert observed_order([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)


def test_equilibrium_result_state():
    eq = EquilibriumResult(np.zeros(3), np.ones(3), 0.0, 0.0, 0, 0)
    s = eq.state(2.0)
    assert s.t == 2.0 and np.all(s.v == 0) and eq.theta_uniform
