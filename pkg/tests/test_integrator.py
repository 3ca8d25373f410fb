import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netheat.analysis import e1_vector
from netheat.coefficients import CoefficientSet, Constant, ExpApproach, PiecewiseLinear
from netheat.fem import AssembledSystem, build_mesh
from netheat.graph import build_graph
from netheat.integrator import IntegrationError, SolverConfig, convergence_study, simulate, step
from netheat.spectral import generalized_eigs

from conftest import TRIANGLE, generic_initial, smooth_initial, unit_system


def test_config_validation():
    with pytest.raises(IntegrationError):
        SolverConfig(dt=0)
    with pytest.raises(IntegrationError):
        SolverConfig(theta=0.3)
    with pytest.raises(IntegrationError):
        SolverConfig(dt=1.0, t_end=0.5)


def test_time_grid_hits_t_end():
    ts = SolverConfig(dt=0.3, t_end=1.0).time_grid()
    assert ts[-1] == 1.0
    np.testing.assert_allclose(np.diff(ts)[:-1], 0.3)
    assert SolverConfig(dt=0.1, t_end=1.0).time_grid().size == 11


@pytest.mark.parametrize("theta", [0.5, 0.75, 1.0])
def test_constant_is_fixed_point(triangle, theta):
    coeffs = CoefficientSet.uniform(3, ExpApproach(1, 1, 2), PiecewiseLinear((0, 1, 2), (1, 1.5, 0.8)))
    s = AssembledSystem(build_mesh(triangle, 9), coeffs)
    u = np.full(s.n_dofs, 2.5)
    u1, _ = step(u, 0.2, 0.05, s, theta=theta)
    assert np.max(np.abs(u1 - 2.5)) <= 4 * np.finfo(float).eps * 2.5


def test_backward_euler_eigenmode(single_edge):
    s = unit_system(single_edge, 31)
    dec = generalized_eigs(s.K(0), s.M, 2)
    x2, lam2 = dec.eigenvectors[:, 1], dec.eigenvalues[1]
    dt = 0.01
    u1, info = step(x2, 0.0, dt, s)
    np.testing.assert_allclose(u1, x2 / (1 + dt * lam2), rtol=1e-10, atol=1e-13)
    assert info.method == "lu" and info.residual <= 1e-12


def test_zero_stiffness_is_identity(single_edge):
    s = AssembledSystem(build_mesh(single_edge, 5), CoefficientSet((Constant(1.0),), (Constant(1.0),)))
    s.K = lambda t: 0 * s.M  # hypothetical K = 0
    s.apply_K = lambda t, u: 0 * u
    u = np.linspace(0, 1, s.n_dofs)
    u1, _ = step(u, 0, 0.1, s)
    np.testing.assert_allclose(u1, u, rtol=1e-13, atol=1e-15)


def test_ones_stay_ones(triangle):
    coeffs = CoefficientSet.uniform(3, ExpApproach(1, 1, 1), Constant(1.0))
    s = AssembledSystem(build_mesh(triangle, 7), coeffs)
    traj = simulate(np.ones(s.n_dofs), s, SolverConfig(dt=0.05, t_end=1.0))
    assert np.max(np.abs(traj.states - 1)) <= 1e-14


def test_relaxes_to_mean(triangle):
    s = unit_system(triangle, 15)
    u0 = generic_initial(s.mesh)
    traj = simulate(u0, s, SolverConfig(dt=0.05, t_end=8.0))
    e1 = e1_vector(s.M)
    mean = u0 @ (s.M @ e1)
    np.testing.assert_allclose(traj.final, mean * e1, atol=1e-12)


def test_simulate_shape_error(triangle):
    s = unit_system(triangle, 3)
    with pytest.raises(IntegrationError):
        simulate(np.ones(4), s, SolverConfig())


def test_lumped_flag_switches_operator(triangle):
    s = unit_system(triangle, 7)
    u0 = generic_initial(s.mesh)
    a = simulate(u0, s, SolverConfig(dt=0.1, t_end=0.5, lumped=True)).final
    b = simulate(u0, unit_system(triangle, 7, lumped=True), SolverConfig(dt=0.1, t_end=0.5, lumped=True)).final
    c = simulate(u0, s, SolverConfig(dt=0.1, t_end=0.5)).final
    np.testing.assert_array_equal(a, b)
    assert np.max(np.abs(a - c)) > 1e-6


def test_decay_envelope(triangle):
    s = unit_system(triangle, 15)
    dec = generalized_eigs(s.K(0), s.M, 2)
    lam2 = dec.eigenvalues[1]
    u0 = 0.7 * dec.eigenvectors[:, 0] + 1.3 * dec.eigenvectors[:, 1]
    dt = 0.02
    traj = simulate(u0, s, SolverConfig(dt=dt, t_end=1.0))
    e1 = e1_vector(s.M)
    for n, u in enumerate(traj.states):
        ut = u - (u @ (s.M @ e1)) * e1
        assert math.sqrt(ut @ (s.M @ ut)) <= 1.3 * (1 + dt * lam2) ** (-n) * (1 + 1e-10)


@pytest.mark.parametrize("theta, lo, hi", [(1.0, 0.8, 1.2), (0.5, 1.8, 2.2)])
def test_temporal_order(triangle, theta, lo, hi):
    s = unit_system(triangle, 15)
    # data with vertex kinks excites stiff modes that Crank-Nicolson barely damps
    res = convergence_study(smooth_initial(s.mesh), s, [0.1, 0.05, 0.025], 1.0, theta=theta)
    assert lo <= res.order <= hi


def test_convergence_requires_halving(triangle):
    s = unit_system(triangle, 3)
    with pytest.raises(IntegrationError):
        convergence_study(np.ones(s.n_dofs), s, [0.1, 0.05], 1.0)
    with pytest.raises(IntegrationError):
        convergence_study(np.ones(s.n_dofs), s, [0.1, 0.06, 0.03], 1.0)


def test_manufactured_time_dependent_weight(single_edge):
    # b(t) u_t - u_xx = F with u = exp(-t) cos(pi x), b = 1 / c(t), c = 1 + 0.5 exp(-t)
    c = ExpApproach(1.0, 0.5, 1.0)
    s = AssembledSystem(build_mesh(single_edge, 63), CoefficientSet((Constant(1.0),), (c,)))

    def F(t, x):
        return (math.pi**2 - 1.0 / c(t)) * math.exp(-t) * np.cos(math.pi * x)

    u0 = s.mesh.interpolate([lambda x: np.cos(math.pi * x)])
    res = convergence_study(u0, s, [0.04, 0.02, 0.01, 0.005], 1.0, F=[F], theta=1.0)
    assert 0.8 <= res.order <= 1.2
    exact = math.exp(-1.0) * u0
    final = simulate(u0, s, SolverConfig(dt=0.005, t_end=1.0), [F]).final
    err = math.sqrt((final - exact) @ (s.M @ (final - exact)))
    assert err < 1e-2 * math.sqrt(exact @ (s.M @ exact))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=24, max_size=24), st.floats(0.001, 0.5))
def test_energy_dissipation(values, dt):
    g = build_graph(TRIANGLE)
    s = unit_system(g, 7)
    u = np.array(values)
    K = s.K(0).toarray()
    traj = simulate(u, s, SolverConfig(dt=dt, t_end=5 * dt))
    energy = np.einsum("ij,jk,ik->i", traj.states, K, traj.states)
    assert np.all(np.diff(energy) <= 1e-12 * max(1.0, energy[0]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=24, max_size=24), st.floats(0.001, 0.5), st.floats(0.2, 3))
def test_lumped_positivity(values, dt, amp):
    g = build_graph(TRIANGLE)
    coeffs = CoefficientSet.uniform(3, ExpApproach(1, amp, 1), Constant(1.0))
    s = AssembledSystem(build_mesh(g, 7), coeffs, lumped=True)
    F = [lambda t, x: 1 + x, None, lambda t, x: np.exp(-t) + 0 * x]
    traj = simulate(np.array(values), s, SolverConfig(dt=dt, t_end=10 * dt, lumped=True), F)
    assert traj.states.min() >= 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=24, max_size=24), st.sampled_from([0.5, 1.0]))
def test_mass_conserved(values, theta):
    g = build_graph(TRIANGLE)
    coeffs = CoefficientSet.uniform(3, ExpApproach(1, 1, 1))  # mu == c, so b == 1
    s = AssembledSystem(build_mesh(g, 7), coeffs)
    F = [lambda t, x: np.sin(t) * (x - 0.5), lambda t, x: 1.0 + 0 * x, lambda t, x: -1.0 + 0 * x]
    traj = simulate(np.array(values), s, SolverConfig(dt=0.05, theta=theta, t_end=1.0), F)
    mass = traj.states @ (s.M @ np.ones(s.n_dofs))
    scale = max(1.0, np.abs(values).sum())
    assert np.max(np.abs(mass - mass[0])) <= 1e-12 * scale
