import math

import numpy as np
import pytest

from specflow import (
    CliffordRep,
    Connection,
    DiracError,
    TrigPolyForm,
    assemble,
    cl_pairing,
    cl_pairings,
    check_cutoff_stability,
    conserved_mask,
    contact_connection,
    contact_form,
    curvature_scale,
    curvature_sup_norms,
    eig,
    r_of_A,
    solve,
    trusted_window,
    weitzenbock_residual,
)
from specflow.dirac import window_match

TOL = 1e-9
THETA = (0.3, 0.7, 0.5)


def test_trusted_window():
    assert trusted_window(8) == pytest.approx(4 * math.pi)


# Clifford representations


def test_standard_representations_are_valid():
    for n in (1, 3):
        rep = CliffordRep.standard(n)
        gamma = rep.stack()
        for j in range(n):
            np.testing.assert_allclose(gamma[j] @ gamma[j], -np.eye(rep.rank), atol=1e-15)
    assert CliffordRep.standard(3).rank == 2


def test_invalid_representations_are_rejected():
    pauli_x = np.array([[0, 1], [1, 0]], dtype=complex)
    with pytest.raises(DiracError):
        CliffordRep(1, (pauli_x,))  # hermitian, not anti-hermitian
    with pytest.raises(DiracError):
        CliffordRep(2, (1j * pauli_x, 1j * pauli_x))
    with pytest.raises(DiracError):
        CliffordRep.standard(5)


def test_flipped_representation_is_still_clifford():
    rep = CliffordRep.standard(3).flipped(0)
    np.testing.assert_allclose(rep.gamma[0], -CliffordRep.standard(3).gamma[0])


# Spectra


def test_circle_spectrum():
    system = solve(Connection.flat(1, (0.5,)), 4)
    np.testing.assert_allclose(system.values, [0.5 - 2 * math.pi, 0.5], atol=TOL)


def test_flat_three_torus_spectrum():
    K = 3
    system = solve(Connection.flat(3, THETA), K)
    k = np.stack(np.meshgrid(*([np.arange(-K, K + 1)] * 3), indexing="ij"), axis=-1).reshape(-1, 3)
    norms = np.linalg.norm(2 * math.pi * k + np.asarray(THETA), axis=1)
    expected = np.concatenate([norms, -norms])
    expected = np.sort(expected[np.abs(expected) <= trusted_window(K)])
    np.testing.assert_allclose(system.values, expected, atol=TOL)


def test_contact_blocks_are_hermitian_and_certified():
    conn = contact_connection(2.0, THETA)
    blocks = assemble(conn, 3)
    assert blocks.mask == (True, True, False)
    for b in (0, blocks.num_blocks // 2, blocks.num_blocks - 1):
        H = blocks.matrix(b)
        np.testing.assert_allclose(H, H.conj().T, atol=1e-14)
    system = eig(blocks)
    assert system.max_residual() <= TOL
    assert np.all(system.orthogonality <= TOL)


def test_block_split_matches_full_operator():
    conn = contact_connection(1.0, THETA)
    split = solve(conn, 3, vectors=False)
    full = solve(conn, 3, mask=(False, False, False), vectors=False)
    assert len(full.solved) == 1
    np.testing.assert_allclose(np.sort(split.values), np.sort(full.values), atol=TOL)


def test_negative_counts_cover_whole_block():
    conn = Connection.flat(1, (0.5,))
    system = solve(conn, 4, window=1.0)
    # one block per momentum; eigenvalues 2 pi k + 0.5 for |k| <= 4, four negative
    assert len(system.solved) == 9
    assert int(system.negative_counts.sum()) == 4
    zero_block = assemble(conn, 4).block_index((0,))
    assert system.negative_count(zero_block) == 0
    assert list(system.values) == pytest.approx([0.5])
    assert list(system.block) == [zero_block]


def test_conserved_mask_of_contact_form():
    assert conserved_mask(3, contact_form()) == (True, True, False)
    assert conserved_mask(3) == (True, True, True)


def test_aliasing_and_dimension_are_rejected():
    osc = TrigPolyForm(3, 1, {((0, 0, 2), (0,)): 0.1j, ((0, 0, -2), (0,)): 0.1j}, anti_hermitian=True)
    with pytest.raises(DiracError):
        assemble(Connection(3, THETA, osc), 1)
    with pytest.raises(DiracError):
        assemble(Connection.flat(5), 2)
    with pytest.raises(DiracError):
        assemble(Connection.flat(3, fiber=2), 2)


# Pairings


def test_circle_pairing_sign():
    blocks = assemble(Connection.flat(1, (0.5,)), 4)
    v = np.array([1.0 + 0j])
    assert cl_pairing(v, TrigPolyForm.dx(1, 0, coefficient=2.5j), blocks) == pytest.approx(2.5)


def test_pairings_follow_eigenvalue_derivatives():
    conn = Connection.flat(3, THETA)
    blocks = assemble(conn, 2)
    system = solve(conn, 2)
    for j in range(3):
        pairings = cl_pairings(system.vectors, TrigPolyForm.dx(3, j, coefficient=1j), blocks)
        v = 2 * math.pi * system.labels[system.block] + np.asarray(THETA)
        expected = np.sign(system.values) * v[:, j] / np.linalg.norm(v, axis=1)
        np.testing.assert_allclose(pairings, expected, atol=TOL)


def test_solve_reuses_cached_systems():
    conn = contact_connection(1.0, THETA)
    first = solve(conn, 2)
    assert solve(conn, 2) is first
    assert solve(conn, 2, use_cache=False) is not first


# Weitzenboeck check


def test_weitzenbock_identity_and_negative_control():
    conn = contact_connection(1.0, THETA)
    assert weitzenbock_residual(conn, 6) <= 1e-8
    flipped = CliffordRep.standard(3).flipped(0)
    assert weitzenbock_residual(conn, 6, curvature_rep=flipped) > 1e-3


def test_weitzenbock_on_flat_connection():
    assert weitzenbock_residual(Connection.flat(3, THETA), 4) <= 1e-8


# Curvature scale


def test_flat_connection_has_unit_scale():
    assert curvature_sup_norms(Connection.flat(3, THETA)) == [0.0, 0.0]
    assert r_of_A(Connection.flat(3, THETA)) == 1.0


def test_contact_sup_norms():
    norms = curvature_sup_norms(contact_connection(1.0, THETA))
    np.testing.assert_allclose(norms, [2 * math.pi, 4 * math.pi**2], rtol=1e-10)
    assert r_of_A(contact_connection(1.0, THETA)) == pytest.approx(curvature_scale(norms))


def test_curvature_scale_solves_budget():
    assert curvature_scale([4.0]) == pytest.approx(4.0, rel=1e-9)
    assert curvature_scale([0.5, 0.25]) == 1.0
    rho = curvature_scale([2 * math.pi, 4 * math.pi**2])
    assert 2 * math.pi / rho + 4 * math.pi**2 / rho**1.5 == pytest.approx(1.0, rel=1e-8)


def test_coarse_sup_norm_grid_is_rejected():
    with pytest.raises(DiracError):
        curvature_sup_norms(contact_connection(1.0), grid=4)


def test_contact_spectrum_is_cutoff_stable():
    assert check_cutoff_stability(contact_connection(1.0, THETA), 6) <= 1e-8


# Gauge covariance, reconstruction and trace oracles


def random_circle_osc(rng, modes=(1, 2), scale=0.5):
    terms = {}
    for q in modes:
        z = scale * complex(*rng.normal(size=2))
        terms[((q,), (0,))] = z
        terms[((-q,), (0,))] = -np.conj(z)
    return TrigPolyForm(1, 1, terms, anti_hermitian=True)


@pytest.mark.parametrize("m", [(1, -1, 0), (0, 0, 1)])
def test_spectrum_is_gauge_covariant(m):
    conn = contact_connection(1.0, THETA)
    K = 6
    before = solve(conn, K, vectors=False)
    after = solve(conn.gauge(m), K, vectors=False)
    # conserved shifts relabel blocks, the x_3 shift moves the truncation edge
    assert window_match(before.values, after.values, trusted_window(K) - 0.5) <= 1e-6


def test_random_block_is_reconstructed(rng):
    conn = Connection(1, (0.37,), random_circle_osc(rng))
    blocks = assemble(conn, 6)
    assert blocks.num_blocks == 1
    system = eig(blocks, window=math.inf)
    H = blocks.matrix(0)
    V = system.vectors
    rebuilt = V.T @ np.diag(system.values) @ np.conj(V)
    assert np.linalg.norm(rebuilt - H) / np.linalg.norm(H) <= 1e-10


def test_pairings_sum_to_clifford_trace(rng):
    conn = Connection(1, (0.2,), random_circle_osc(rng))
    blocks = assemble(conn, 5)
    system = eig(blocks, window=math.inf)
    b = TrigPolyForm.dx(1, 0, coefficient=0.7j) + random_circle_osc(rng, modes=(1, 3))
    total = cl_pairings(system.vectors, b, blocks).sum()
    assert total == pytest.approx(np.trace(blocks.clifford_matrix(b)).real, abs=1e-9)
    assert total == pytest.approx(0.7 * blocks.size, abs=1e-9)


def test_pairings_sum_over_contact_block():
    conn = contact_connection(2.0, THETA)
    blocks = assemble(conn, 3)
    system = eig(blocks, window=math.inf, block_indices=[blocks.num_blocks // 2])
    b = contact_form(3, 0.3) + TrigPolyForm.dx(3, 2, coefficient=1j)
    total = cl_pairings(system.vectors, b, blocks).sum()
    assert total == pytest.approx(np.trace(blocks.clifford_matrix(b)).real, abs=1e-9)


def test_circle_clifford_convention():
    rep = CliffordRep.standard(1)
    np.testing.assert_array_equal(rep.gamma[0], np.array([[-1j]]))
    conn = Connection.flat(1, (0.5,))
    v = np.array([0.6 + 0.8j])
    b = TrigPolyForm.dx(1, 0, coefficient=1.5j)
    # cl(i c dx) = c here; the opposite orientation gives the -c of the other convention
    assert cl_pairing(v, b, assemble(conn, 4)) == pytest.approx(1.5)
    assert cl_pairing(v, b, assemble(conn, 4, clifford=rep.flipped(0))) == pytest.approx(-1.5)


@pytest.mark.parametrize("amplitude", [0.5, 1.0, 2.0])
def test_curvature_scale_is_grid_converged(amplitude):
    conn = contact_connection(amplitude, THETA)
    coarse = r_of_A(conn)
    fine = r_of_A(conn, grid=2 * 16)
    assert coarse == pytest.approx(fine, rel=1e-6)
    doubled = curvature_sup_norms(contact_connection(2 * amplitude, THETA))
    assert doubled[0] == pytest.approx(2 * curvature_sup_norms(conn)[0], rel=1e-10)
