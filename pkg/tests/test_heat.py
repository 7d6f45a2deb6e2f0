import math

import numpy as np
import pytest

from specflow import (
    Connection,
    HeatError,
    HeatProbe,
    TrigPolyForm,
    contact_connection,
    contact_form,
    count_bound,
    count_eigs,
    diag_kernel,
    form_mass,
    heat_trace,
    kernel_growth_constant,
    log_slope,
    min_admissible_t,
    p_lambda,
    pointwise_density_check,
    r_of_A,
    residual_bound_constant,
    residual_envelope,
    separable_heat_trace,
    solve,
    weyl_ratio,
)

TOL = 1e-10
TOL_ORACLE = 1e-6


def poisson_trace(t):
    m = np.arange(-50, 51)
    return float(np.sum(np.exp(-(m**2) / (4 * t)))) / math.sqrt(4 * math.pi * t)


@pytest.fixture
def free_circle():
    conn = Connection.flat(1)
    return conn, solve(conn, 64)


def test_min_admissible_t():
    assert min_admissible_t(10.0) == pytest.approx(16 * math.log(10) / 100)


def test_circle_heat_trace_matches_poisson_sum(free_circle):
    _, system = free_circle
    for t in (0.01, 0.05, 0.2):
        assert heat_trace(system, t) == pytest.approx(poisson_trace(t), rel=TOL_ORACLE)


def test_heat_trace_rejects_uncertified_t(free_circle):
    _, system = free_circle
    with pytest.raises(HeatError):
        heat_trace(system, 1e-4)
    with pytest.raises(HeatError):
        heat_trace(system, -1.0)


def test_counts_on_the_circle(free_circle):
    _, system = free_circle
    # |2 pi k| < lambda
    assert count_eigs(system, 10.0) == 3
    assert count_eigs(system, 1.0) == 1
    assert count_bound(system, 10.0, 0.01) >= 3
    assert weyl_ratio(system, 10.0, 1.0) == pytest.approx(3 / 11)
    with pytest.raises(HeatError):
        count_eigs(system, 1e4)


def test_diagonal_kernel_of_free_three_torus():
    conn = Connection.flat(3)
    system = solve(conn, 8)
    t = 0.25
    trace = heat_trace(system, t)
    kernel = diag_kernel(conn, system, t, [0.1, 0.2, 0.3])
    np.testing.assert_allclose(kernel, trace / 2 * np.eye(2), atol=TOL * trace)
    points = np.array([[0.0, 0.0, 0.0], [0.5, 0.25, 0.75]])
    assert diag_kernel(conn, system, t, points).shape == (2, 2, 2)


def test_diagonal_kernel_checks_connection(free_circle):
    _, system = free_circle
    with pytest.raises(HeatError):
        diag_kernel(Connection.flat(1, (0.5,)), system, 0.1, [0.0])


def test_p_lambda_closed_form_on_the_circle(free_circle):
    conn, system = free_circle
    a = TrigPolyForm.dx(1, 0, coefficient=1j)
    t = 0.01
    result = p_lambda(conn, system, a, t, system.window, r=1.0)
    assert result.p == pytest.approx(heat_trace(system, t), rel=TOL)
    assert result.density == pytest.approx(1 / (2 * math.sqrt(math.pi * t)), rel=TOL)
    assert abs(result.residual) <= 1e-9
    assert result.count == len(system.values)


def test_p_lambda_requires_small_rt(free_circle):
    conn, system = free_circle
    a = TrigPolyForm.dx(1, 0, coefficient=1j)
    with pytest.raises(HeatError):
        p_lambda(conn, system, a, 0.5, 1.0, r=4.0)
    with pytest.raises(HeatError):
        p_lambda(conn, system, a, 0.1, 1e4, r=1.0)


def test_pointwise_density_on_the_circle(free_circle):
    conn, system = free_circle
    a = TrigPolyForm.dx(1, 0, coefficient=1j)
    left, right = pointwise_density_check(conn, system, a, 0.01, [0.3])
    assert left == pytest.approx(heat_trace(system, 0.01), rel=TOL)
    assert right == pytest.approx(1 / (2 * math.sqrt(math.pi * 0.01)), rel=TOL)


def test_log_slope():
    assert log_slope([1.0, 2.0, 4.0], [1.0, -4.0, 16.0]) == pytest.approx(2.0)
    with pytest.raises(HeatError):
        log_slope([1.0, 2.0], [0.0, 1.0])


def test_uniform_heat_grid_rejects_small_t():
    with pytest.raises(HeatError):
        HeatProbe.uniform(3, [1e-3], 10.0)
    with pytest.raises(HeatError):
        HeatProbe.uniform(3, [], 10.0)
    probe = HeatProbe.uniform(3, [0.5, 0.3], 20.0, per_axis=4)
    assert probe.t_grid == (0.3, 0.5)
    assert probe.points.shape == (64, 3)


def test_kernel_growth_constant_on_free_torus():
    conn = Connection.flat(3)
    system = solve(conn, 8)
    probe = HeatProbe.uniform(3, [0.25, 0.3], system.window, per_axis=3)
    c, worst = kernel_growth_constant(conn, system, probe, 1.0)
    expected = max(heat_trace(system, t) / 2 * (4 * math.pi * t) ** 1.5 for t in probe.t_grid)
    assert worst == pytest.approx(expected, rel=1e-8)
    assert c >= 0.0


def test_separable_trace_matches_direct_solve():
    conn = Connection.flat(3, (0.3, 0.7, 0.5))
    direct = solve(conn, 8)
    assert separable_heat_trace(conn, 8, 0.25) == pytest.approx(heat_trace(direct, 0.25), rel=1e-9)


def test_separable_trace_reaches_small_t():
    # t = 1e-3 needs a circle cutoff of at least 123
    value = separable_heat_trace(Connection.flat(3), 128, 1e-3)
    assert value == pytest.approx(2 * poisson_trace(1e-3) ** 3, rel=TOL_ORACLE)
    assert value * (4 * math.pi * 1e-3) ** 1.5 / 2 == pytest.approx(1.0, rel=TOL_ORACLE)
    with pytest.raises(HeatError):
        separable_heat_trace(Connection.flat(3), 40, 1e-3)
    with pytest.raises(HeatError):
        separable_heat_trace(contact_connection(1.0), 128, 0.1)


def test_form_mass():
    assert form_mass(TrigPolyForm.dx(1, 0, coefficient=1j)) == pytest.approx(1.0)
    assert form_mass(contact_form(3, 0.5)) == pytest.approx(0.5)


def test_residual_bound_holds_with_fitted_constant():
    conn = contact_connection(1.0, (0.3, 0.7, 0.5))
    system = solve(conn, 8)
    velocity = contact_form(3, 0.5)
    r, mass = r_of_A(conn), form_mass(velocity)
    results = [
        p_lambda(conn, system, velocity, t, lam, r=r)
        for t in (0.3, 0.5, 0.8)
        for lam in (5.0, 10.0, system.window)
        if r * t <= 1
    ]
    assert results
    constant = residual_bound_constant(results, 3, r, mass)
    assert 0.0 <= constant < math.inf
    for res in results:
        assert abs(res.residual) <= constant * residual_envelope(3, res.t, res.lam, r, mass) * (1 + 1e-12)
    # on the circle the residual is the Poisson tail exp(-1/4t)
    circle = Connection.flat(1)
    eig = solve(circle, 64)
    a = TrigPolyForm.dx(1, 0, coefficient=1j)
    flat = [p_lambda(circle, eig, a, t, eig.window, r=1.0) for t in (0.01, 0.012)]
    assert residual_bound_constant(flat, 1, 1.0, 1.0) <= 1e-6
