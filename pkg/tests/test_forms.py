import math

import numpy as np
import pytest
from pydantic import ValidationError

from specflow import (
    Connection,
    CurvatureInput,
    FormDocument,
    FormError,
    MixedForm,
    TrigPolyForm,
    ahat_form,
    chs,
    contact_connection,
    contact_form,
    curvature_of,
    exp_form,
    ext_d,
    integrate_top,
    leading_order,
    prediction,
    wedge,
)
from specflow.experiments import random_connection, random_curvature, random_form

TOL = 1e-12
TOL_ALGEBRA = 1e-10


def max_coefficient(form):
    if form.overflow or form.is_zero:
        return 0.0
    return max(float(np.max(np.abs(c))) for _, c in form.items())


# Exterior algebra


def test_dx_orders_directions_with_sign():
    form = TrigPolyForm.dx(3, 1, 0)
    assert form.coefficient((0, 0, 0), (0, 1))[0, 0] == -1
    assert TrigPolyForm.dx(3, 0, 0).is_zero


def test_wedge_graded_commutativity(rng):
    for p, q in ((1, 1), (1, 2), (0, 2)):
        a, b = random_form(rng, 3, p), random_form(rng, 3, q)
        diff = wedge(a, b) - wedge(b, a).scale((-1) ** (p * q))
        assert max_coefficient(diff) <= TOL_ALGEBRA


def test_d_squared_vanishes(rng):
    for n in (3, 5):
        for p in range(n - 1):
            assert max_coefficient(ext_d(ext_d(random_form(rng, n, p, radius=2)))) <= TOL_ALGEBRA


def test_leibniz_rule(rng):
    a, b = random_form(rng, 5, 1), random_form(rng, 5, 2)
    lhs = ext_d(wedge(a, b))
    rhs = wedge(ext_d(a), b) - wedge(a, ext_d(b))
    assert max_coefficient(lhs - rhs) <= TOL_ALGEBRA * max(1.0, max_coefficient(lhs))


def test_stokes_on_closed_torus(rng):
    for n in (1, 3, 5):
        b = random_form(rng, n, n - 1, count=6)
        assert integrate_top(ext_d(b)) == 0


def test_products_above_top_degree_overflow():
    x = TrigPolyForm.dx(1, 0)
    product = wedge(x, x)
    assert product.overflow
    assert product.is_zero
    assert ext_d(x).overflow


def test_ext_d_of_plane_wave():
    wave = TrigPolyForm.plane_wave(2, (1, 0), ())
    d = ext_d(wave)
    assert d.degree == 1
    np.testing.assert_allclose(d.coefficient((1, 0), (0,))[0, 0], 2j * math.pi, rtol=0, atol=TOL)
    assert d.coefficient((1, 0), (1,))[0, 0] == 0


def test_integrate_top_needs_top_degree():
    with pytest.raises(FormError):
        integrate_top(TrigPolyForm.dx(3, 0))


def test_document_round_trip():
    form = TrigPolyForm.plane_wave(3, (1, 0, -1), (0, 2), coefficient=0.5 + 0.25j)
    doc = form.to_document()
    assert doc.terms[0].I == [1, 3]
    again = TrigPolyForm.from_document(doc.model_dump())
    assert again.fingerprint() == form.fingerprint()


def test_document_rejects_unsorted_indices():
    with pytest.raises(ValidationError):
        FormDocument(
            n=3, degree=2, terms=[{"k": [0, 0, 0], "I": [2, 1], "re": [[1.0]], "im": [[0.0]]}]
        )


def test_anti_hermitian_flag_is_checked():
    with pytest.raises(FormError):
        TrigPolyForm(1, 1, {((1,), (0,)): 1.0}, anti_hermitian=True)
    # i (e^{2 pi i x} + e^{-2 pi i x}) dx = 2i cos(2 pi x) dx
    ok = TrigPolyForm(1, 1, {((1,), (0,)): 1j, ((-1,), (0,)): 1j}, anti_hermitian=True)
    assert ok.is_anti_hermitian()
    assert not ok.is_real()


def test_fiber_mismatch_is_rejected():
    a = TrigPolyForm.dx(3, 0, coefficient=np.eye(2))
    b = TrigPolyForm.dx(3, 1, coefficient=np.eye(3))
    with pytest.raises(FormError):
        wedge(a, b)


# Exponential and A-hat


def test_exp_form_truncates_by_nilpotency():
    F3 = TrigPolyForm.dx(3, 0, 1)
    series = exp_form(F3)
    assert series.degrees() == [0, 2]

    F5 = TrigPolyForm.dx(5, 0, 1) + TrigPolyForm.dx(5, 2, 3)
    series = exp_form(F5)
    assert series.degrees() == [0, 2, 4]
    np.testing.assert_allclose(series.component(4).coefficient((0,) * 5, (0, 1, 2, 3))[0, 0], 1.0, atol=TOL)


def test_exp_form_rejects_odd_degree():
    with pytest.raises(FormError):
        exp_form(TrigPolyForm.dx(3, 0))


def test_ahat_degree_four_for_block_curvature():
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    R = TrigPolyForm.dx(4, 0, 1, coefficient=J) + TrigPolyForm.dx(4, 2, 3, coefficient=J)
    omega = ahat_form(CurvatureInput(R))
    assert omega.component(0).coefficient((0,) * 4, ())[0, 0] == 1
    assert omega.component(2).is_zero
    # -tr(R ^ R) / 48 with R ^ R = 2 J^2 dx_0123
    np.testing.assert_allclose(omega.component(4).coefficient((0,) * 4, (0, 1, 2, 3))[0, 0], 1 / 12, atol=TOL)


def test_ahat_matches_trace_formula_for_random_curvature(rng):
    curvature = random_curvature(rng, 5, 4)
    omega = ahat_form(curvature)
    oracle = wedge(curvature.R2, curvature.R2).trace().scale(-1.0 / 48)
    assert max_coefficient(omega.component(4) - oracle) <= TOL_ALGEBRA * max(1.0, max_coefficient(oracle))


def test_ahat_without_curvature_is_one():
    omega = ahat_form(None, 3)
    assert omega.degrees() == [0]
    assert ahat_form(CurvatureInput.flat(3)).degrees() == [0]


def test_curvature_must_be_antisymmetric():
    with pytest.raises(FormError):
        CurvatureInput(TrigPolyForm.dx(3, 0, 1, coefficient=np.eye(2)))


# Connections, Chern-Simons and the prediction


def test_connection_validation():
    with pytest.raises(FormError):
        Connection.flat(2)
    with pytest.raises(FormError):
        Connection(1, (0.0, 0.0), TrigPolyForm.zero(1, 1))
    with pytest.raises(FormError):
        Connection(1, (0.0,), TrigPolyForm.dx(1, 0, coefficient=1j))
    with pytest.raises(FormError):
        Connection(1, (0.0,), TrigPolyForm(1, 1, {((1,), (0,)): 1.0}))


def test_gauge_shifts_holonomy():
    A = Connection.flat(3, (0.5, 0.0, -0.25))
    g = A.gauge((1, 0, -2))
    np.testing.assert_allclose(g.hol, (0.5 - 2 * math.pi, 0.0, -0.25 + 4 * math.pi), atol=TOL)
    assert g.osc is A.osc


def test_curvature_on_the_circle_overflows():
    assert curvature_of(TrigPolyForm.dx(1, 0, coefficient=1j)).overflow


def test_contact_connection_carries_half_amplitude():
    conn = contact_connection(4.0)
    assert conn.osc.fingerprint() == contact_form(3, 2.0).fingerprint()
    assert conn.osc.is_anti_hermitian()


@pytest.mark.parametrize("m", [-3, -1, 0, 2])
def test_chs_and_prediction_on_the_circle(m):
    A0 = Connection.flat(1, (0.5,))
    A1 = A0.gauge((-m,))
    value = integrate_top(chs(A0, A1).component(1))
    np.testing.assert_allclose(value, 2j * math.pi * m, atol=1e-12)
    assert prediction(A0, A1) == pytest.approx(m, abs=1e-12)


def test_prediction_is_antisymmetric_and_gauge_invariant(rng):
    A0, A1 = random_connection(rng, 3), random_connection(rng, 3)
    forward = prediction(A0, A1)
    assert prediction(A1, A0) == pytest.approx(-forward, abs=TOL_ALGEBRA)
    assert prediction(A0.gauge((1, -1, 2)), A1.gauge((1, -1, 2))) == pytest.approx(forward, abs=TOL_ALGEBRA)


def test_chs_is_additive_in_top_degree(rng):
    A0, A1, A2 = (random_connection(rng, 3, fiber=2) for _ in range(3))
    direct = integrate_top(chs(A0, A2).component(3))
    routed = integrate_top((chs(A0, A1) + chs(A1, A2)).component(3))
    np.testing.assert_allclose(routed, direct, atol=TOL_ALGEBRA * max(1.0, abs(direct)))


@pytest.mark.parametrize("r", [1.0, 4.0, 10.0])
def test_contact_prediction_closed_form(r):
    theta = (0.3, 0.7, 0.5)
    value = prediction(Connection.flat(3, theta), contact_connection(r, theta))
    assert value == pytest.approx(-(r**2) / (16 * math.pi), rel=1e-10)
    assert leading_order(contact_form(3, 1.0), r) == pytest.approx(value, rel=1e-10)


def test_leading_order_needs_imaginary_one_form():
    with pytest.raises(FormError):
        leading_order(TrigPolyForm.dx(3, 0), 1.0)


def test_mixed_form_rejects_misplaced_component():
    with pytest.raises(FormError):
        MixedForm(3, 1, {1: TrigPolyForm.dx(3, 0, 1)})
