import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

import oracles
from surfstefan import assembly
from surfstefan.geometry import icosphere


def test_stiffness_matches_cotangent_oracle(sphere2):
    S = assembly.stiffness_matrix(sphere2).toarray()
    ref = oracles.cotangent_stiffness(sphere2.vertices, sphere2.triangles)
    assert np.allclose(S, ref, atol=1e-13)


def test_mass_totals_and_lumping(sphere2):
    M = assembly.mass_matrix(sphere2)
    ml = assembly.lumped_mass_vector(sphere2)
    one = np.ones(sphere2.n_vertices)
    assert one @ (M @ one) == pytest.approx(sphere2.total_area(), rel=1e-14)
    assert np.allclose(np.asarray(M.sum(axis=1)).ravel(), ml, rtol=1e-14)
    assert np.allclose(assembly.lumped_mass(sphere2).diagonal(), ml)


def test_operators_symmetric_and_constants_in_kernel(sphere2):
    M, S = assembly.mass_matrix(sphere2), assembly.stiffness_matrix(sphere2)
    assert assembly.is_symmetric(M) and assembly.is_symmetric(S)
    assert np.abs(S @ np.ones(sphere2.n_vertices)).max() < 1e-13


def test_rayleigh_quotient_of_z_tends_to_eigenvalue():
    errs = []
    for level in (2, 3, 4):
        m = icosphere(level)
        z = m.vertices[:, 2]
        q = z @ (assembly.stiffness_matrix(m) @ z) / (z @ (assembly.mass_matrix(m) @ z))
        errs.append(abs(q - oracles.EIG_Z))
    assert errs[-1] < 5e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_stiffness_is_m_matrix_on_icosphere(sphere2):
    S = assembly.stiffness_matrix(sphere2).tocoo()
    off = S.data[S.row != S.col]
    assert np.all(off <= 1e-15)


def test_nodal_dual_form_is_row_scaled_stiffness(sphere2):
    rng = np.random.default_rng(1)
    alpha = rng.uniform(0.1, 1.0, sphere2.n_vertices)
    A = assembly.weighted_dual_form(sphere2, alpha, kind="nodal")
    S = assembly.stiffness_matrix(sphere2)
    assert abs(A - sp.diags(alpha) @ S).max() < 1e-14
    assert np.abs(A @ np.ones(sphere2.n_vertices)).max() < 1e-13


@pytest.mark.parametrize("kind", ["galerkin", "nodal"])
def test_dual_form_with_constant_weight_is_scaled_stiffness(sphere2, kind):
    A = assembly.weighted_dual_form(sphere2, np.full(sphere2.n_vertices, 0.3), kind=kind)
    assert abs(A - 0.3 * assembly.stiffness_matrix(sphere2)).max() < 1e-13


def test_galerkin_dual_form_matches_definition_on_linear_weight(sphere2):
    # alpha = 1 + x is linear, so both terms are integrated exactly by the rules used
    alpha = 1.0 + sphere2.vertices[:, 0]
    A = assembly.weighted_dual_form(sphere2, alpha)
    phi, eta = sphere2.vertices[:, 1], sphere2.vertices[:, 2]
    area, grads, _ = sphere2.element_data()
    tri = sphere2.triangles
    g = lambda v: np.einsum("fi,fik->fk", v[tri], grads)  # noqa: E731
    first = np.sum(area * alpha[tri].mean(axis=1) * np.einsum("fk,fk->f", g(phi), g(eta)))
    second = np.sum(area * np.einsum("fk,fk->f", g(alpha), g(phi)) * eta[tri].mean(axis=1))
    assert eta @ (A @ phi) == pytest.approx(first + second, rel=1e-12)


def test_dual_form_rejects_negative_weight(sphere2):
    with pytest.raises(ValueError):
        assembly.weighted_dual_form(sphere2, -np.ones(sphere2.n_vertices))
    with pytest.raises(ValueError):
        assembly.weighted_dual_form(sphere2, np.ones(3))


def test_load_vector_of_constant_is_lumped_mass(sphere2):
    assert np.allclose(assembly.load_vector(sphere2, np.ones(sphere2.n_vertices)),
                       assembly.lumped_mass_vector(sphere2))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 10.0))
def test_cg_and_direct_agree(seed, tau):
    m = icosphere(2)
    A = assembly.mass_matrix(m) + tau * assembly.stiffness_matrix(m)
    b = np.random.default_rng(seed).normal(size=m.n_vertices)
    x1 = assembly.solve_spd(A, b, method="direct")
    x2 = assembly.solve_spd(A, b, method="cg", rtol=1e-12)
    assert np.allclose(x1, x2, rtol=1e-8, atol=1e-10)
    B = A + tau * assembly.weighted_dual_form(m, np.linspace(0.1, 1, m.n_vertices), kind="nodal")
    assert np.allclose(assembly.solve_general(B, b), assembly.solve_general(B, b, method="cg",
                                                                             rtol=1e-12), atol=1e-8)


def test_singular_system_raises(sphere2):
    S = assembly.stiffness_matrix(sphere2)
    with pytest.raises(assembly.LinearSolverError):
        assembly.solve_spd(S, np.ones(sphere2.n_vertices), method="cg", rtol=1e-14)
    with pytest.raises(ValueError):
        assembly.solve_spd(S, np.ones(sphere2.n_vertices), method="gmres")


def test_matrix_market_roundtrip(tmp_path, sphere2):
    S = assembly.stiffness_matrix(sphere2)
    assembly.write_matrix_market(S, tmp_path / "S.mtx")
    back = scipy.io.mmread(str(tmp_path / "S.mtx"))
    assert abs(sp.csr_matrix(back) - S).max() < 1e-15
