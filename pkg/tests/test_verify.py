import csv

import numpy as np
import pytest

import oracles
from conftest import freezing_spec
from surfstefan import geometry, solver, verify
from surfstefan.enthalpy import EnthalpyRegularization
from surfstefan.spaces import SpaceTimeField


@pytest.fixture(scope="module")
def one_phase_solution():
    m = geometry.icosphere(3)
    traj = geometry.FlowTrajectory.stationary(m, geometry.uniform_time_grid(0.5, 32))
    spec = solver.StefanProblemSpec(traj, SpaceTimeField.constant(traj, 0.0),
                                    3.0 + m.vertices[:, 2], EnthalpyRegularization(0.05))
    return solver.solve_stefan(spec)


def test_report_pass_semantics():
    r = verify.EstimateReport("x", 1.0, 0.9, tolerance=0.2)
    assert r.passed and r.slack == pytest.approx(-0.1)
    r.conditions["monotone"] = False
    assert not r.passed
    assert "violated" in r.summary()
    assert verify.any_asserted_failure([r])
    r.asserted = False
    assert not verify.any_asserted_failure([r])


def test_linfty_bound_with_zero_data(freezing_traj):
    spec = solver.StefanProblemSpec(freezing_traj, SpaceTimeField.constant(freezing_traj, 0.0),
                                    np.zeros(freezing_traj.n_vertices), EnthalpyRegularization(0.1))
    rep = verify.check_linfty_bound(solver.solve_stefan(spec), spec)
    assert rep.lhs == 0.0 and rep.rhs == 3.0 and rep.passed


def test_linfty_bound_on_expanding_sphere_uses_divergence_two():
    m = geometry.icosphere(2)
    traj = geometry.advect_mesh(m, geometry.RadialVelocity(1.0), geometry.uniform_time_grid(0.5, 8))
    spec = freezing_spec(traj)
    rep = verify.check_linfty_bound(solver.solve_stefan(spec), spec)
    assert rep.details["divergence"] == pytest.approx(2.0, abs=1e-10)
    assert rep.rhs == pytest.approx(2 * np.e * (0 + 1.5 + 1) + 1)
    assert rep.passed


def test_energy_matches_closed_form(one_phase_solution):
    got = verify.gradient_l2l2_sq(one_phase_solution)
    assert got == pytest.approx(oracles.ONE_PHASE_GRAD_SQ_T05, rel=0.1)
    rep = verify.check_energy_bound([one_phase_solution, one_phase_solution])
    assert rep.lhs == 1.0 and rep.passed
    assert rep.details["h_minus_one_proxy"][0] > 0


def test_l1_contraction_identical_and_symmetric(freezing_traj, freezing_solution):
    rep = verify.check_l1_contraction(freezing_solution, freezing_solution)
    assert rep.lhs == 0.0 and rep.passed
    f = SpaceTimeField.from_function(freezing_traj, lambda t, p: 0.3 * p[:, 0])
    other = solver.solve_stefan(freezing_spec(freezing_traj, f=f))
    l1, r1 = verify.l1_contraction_profile(freezing_solution, other)
    l2, r2 = verify.l1_contraction_profile(other, freezing_solution)
    assert np.array_equal(l1, l2) and np.array_equal(r1, r2)
    assert verify.check_l1_contraction(freezing_solution, other).passed


def test_shifted_pair_is_equality_case(freezing_traj, freezing_solution):
    shifted = solver.solve_stefan(freezing_spec(freezing_traj, shift=0.1))
    rep = verify.check_shifted_contraction(freezing_solution, shifted)
    assert rep.passed
    area = freezing_traj.reference.total_area()
    assert np.allclose(rep.history, 0.1 * area, rtol=1e-9)


def test_contraction_refinement_over_two_levels():
    pairs = []
    for level, steps in ((2, 8), (3, 16)):
        traj = geometry.FlowTrajectory.stationary(geometry.icosphere(level),
                                                  geometry.uniform_time_grid(0.5, steps))
        f = SpaceTimeField.from_function(traj, lambda t, p: 0.5 * np.cos(np.pi * t) * p[:, 0])
        pairs.append((solver.solve_stefan(freezing_spec(traj)),
                      solver.solve_stefan(freezing_spec(traj, f=f, shift=0.05))))
    rep = verify.check_l1_contraction_refinement(pairs)
    assert rep.passed
    assert len(rep.history) == 2 and min(rep.history) >= 0.0


def test_contraction_rejects_foreign_trajectories(freezing_solution, one_phase_solution):
    with pytest.raises(ValueError):
        verify.check_l1_contraction(freezing_solution, one_phase_solution)


def test_dual_estimates_constant_and_spike(freezing_traj):
    a = SpaceTimeField.constant(freezing_traj, 0.5)
    n = freezing_traj.n_nodes - 1
    const = solver.solve_dual_backward(solver.DualProblemSpec(
        freezing_traj, n, np.ones(freezing_traj.n_vertices), a, 0.05))
    rep = verify.check_dual_estimates(const)
    assert rep.passed and rep.lhs == pytest.approx(0.0, abs=1e-12)
    spike = np.zeros(freezing_traj.n_vertices)
    spike[7] = 5.0
    out = solver.solve_dual_backward(solver.DualProblemSpec(freezing_traj, n, spike, a, 0.05))
    rep = verify.check_dual_estimates(out)
    assert rep.conditions["maximum_principle"]
    assert out.phi.min() >= -1e-12


def test_eps_convergence_on_one_phase_is_trivial(one_phase_solution):
    spec = one_phase_solution.spec
    rep = verify.check_eps_convergence(
        lambda e: solver.StefanProblemSpec(spec.trajectory, spec.f, spec.e0, EnthalpyRegularization(e)),
        [0.05, 0.025, 0.0125])
    assert max(rep.history) < 1e-12 and rep.passed
    with pytest.raises(ValueError):
        verify.check_eps_convergence(lambda e: spec, [0.1, 0.05])


def test_time_translate(one_phase_solution, freezing_traj):
    const = solver.SolutionTrajectory(SpaceTimeField.constant(freezing_traj, 1.0),
                                      SpaceTimeField.constant(freezing_traj, 2.0), [])
    assert verify.time_translate(const, 2) == 0.0
    rep = verify.check_time_translate(one_phase_solution, [8, 4, 2, 1])
    assert rep.passed
    # Lipschitz in time: I(h) / h levels off as h -> 0
    small = verify.check_time_translate(one_phase_solution, [2, 1])
    assert small.details["exponent"] == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        verify.time_translate(one_phase_solution, 0.3)


def test_interface_empty_for_one_phase(one_phase_solution):
    assert verify.extract_interface(one_phase_solution, 10).empty
    rep = verify.check_stefan_condition(one_phase_solution, 3)
    assert not rep.asserted and "skipped" in rep.details


def test_equator_length_converges():
    errs = []
    for level in (2, 3, 4):
        m = geometry.icosphere(level)
        traj = geometry.FlowTrajectory.stationary(m, [0.0, 1.0])
        z = np.tile(m.vertices[:, 2], (2, 1))
        errs.append(abs(verify.extract_interface(z, 0, traj).total_length - 2 * np.pi))
    assert errs[-1] < 5e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_interface_segments_lie_on_sign_changing_edges(freezing_solution):
    k = 10
    curve = verify.extract_interface(freezing_solution, k)
    mesh = freezing_solution.trajectory.meshes[k]
    u = freezing_solution.u.values[k]
    assert not curve.empty
    for seg, f in zip(curve.segments, curve.triangles):
        tri = mesh.triangles[f]
        p = mesh.vertices[tri]
        for q in seg:
            # q is a convex combination of two vertices of the triangle with opposite signs
            found = False
            for a, b in ((0, 1), (1, 2), (2, 0)):
                d = p[b] - p[a]
                lam = (q - p[a]) @ d / (d @ d)
                if -1e-12 <= lam <= 1 + 1e-12 and np.allclose(p[a] + lam * d, q, atol=1e-12):
                    if u[tri[a]] * u[tri[b]] <= 0:
                        found = True
            assert found


def test_stefan_diagnostic_improves_under_refinement():
    meds = []
    for level, steps in ((3, 32), (4, 128)):
        traj = geometry.FlowTrajectory.stationary(geometry.icosphere(level),
                                                  geometry.uniform_time_grid(0.5, steps))
        sol = solver.solve_stefan(freezing_spec(traj))
        meds.append(verify.check_stefan_condition(sol, steps // 2).lhs)
    assert meds[1] < meds[0]


def test_report_and_interface_csv(tmp_path, freezing_solution):
    reps = [verify.check_conservation(freezing_solution),
            verify.check_linfty_bound(freezing_solution, freezing_solution.spec)]
    verify.write_reports(reps, tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["check", "lhs", "rhs", "slack", "pass"]
    assert [r[0] for r in rows[1:]] == ["conservation", "linfty_bound"]
    again = verify.check_conservation(freezing_solution)
    assert again.lhs == reps[0].lhs and again.rhs == reps[0].rhs
    verify.write_interface([verify.extract_interface(freezing_solution, 3)], tmp_path / "i.csv")
    head = open(tmp_path / "i.csv").readline().strip()
    assert head == "t,x1,y1,z1,x2,y2,z2"
