"""Implicit Euler solver for the regularized enthalpy problem and the backward dual solve.

One time step on the moving mesh solves, for the nodal temperature u,

    ML_{k+1} E_eps(u) + tau S_{k+1} u = ML_k e_k + tau M_{k+1} f_{k+1}

and sets e_{k+1} = E_eps(u).  ML is the lumped mass, S the stiffness and M the
consistent mass on the indicated time slice.  The change of lumped mass
between slices accounts for the e div(w) term.  The system is the gradient of
a strictly convex potential, which the Newton line search uses.
"""

from dataclasses import dataclass, field
import csv
import logging

import numpy as np
import scipy.sparse as sp

from . import assembly
from .enthalpy import (EnthalpyRegularization, e_eps, e_eps_antiderivative,
                       e_eps_prime, u_eps)
from .spaces import SpaceTimeField, lpx_norm, operators

logger = logging.getLogger(__name__)


class InnerIterationError(RuntimeError):
    def __init__(self, step, history):
        super().__init__(f"inner iteration did not converge at step {step}; "
                         f"last residuals {[f'{r:.3e}' for r in history[-5:]]}")
        self.step = step
        self.history = history


@dataclass
class StefanProblemSpec:
    trajectory: object
    f: SpaceTimeField
    e0: np.ndarray
    reg: EnthalpyRegularization

    def __post_init__(self):
        self.e0 = np.asarray(self.e0, dtype=float)
        if self.e0.shape != (self.trajectory.n_vertices,):
            raise ValueError("e0 must be a nodal field on the reference mesh")
        if self.f.trajectory is not self.trajectory:
            raise ValueError("source field must live on the problem trajectory")
        if not np.all(np.isfinite(self.e0)):
            raise ValueError("e0 must be finite")


@dataclass
class SolverOptions:
    inner_scheme: str = "newton"
    newton_tol: float = 1e-10
    max_inner: int = 100
    linear_tol: float = 1e-11
    linear_method: str = "direct"

    def __post_init__(self):
        if self.inner_scheme not in ("newton", "frozen_fixed_point"):
            raise ValueError(f"unknown inner scheme {self.inner_scheme!r}")
        if not (self.newton_tol > 0 and self.linear_tol > 0 and self.max_inner >= 1):
            raise ValueError("solver tolerances must be positive")


@dataclass
class StepDiagnostics:
    step: int
    time: float
    inner_iters: int
    residual: float
    enthalpy_total: float
    umin: float
    umax: float
    history: list = field(default_factory=list)


@dataclass
class SolutionTrajectory:
    u: SpaceTimeField
    e: SpaceTimeField
    diagnostics: list
    spec: StefanProblemSpec = None
    options: SolverOptions = None

    @property
    def trajectory(self):
        return self.u.trajectory

    def enthalpy_totals(self):
        ops = operators(self.trajectory)
        return np.array([ops.lumped(k) @ self.e.values[k]
                         for k in range(self.trajectory.n_nodes)])

    def write_ledger(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "time", "inner_iters", "residual",
                        "enthalpy_total", "umin", "umax"])
            for d in self.diagnostics:
                w.writerow([d.step, repr(d.time), d.inner_iters, repr(d.residual),
                            repr(d.enthalpy_total), repr(d.umin), repr(d.umax)])


# --- one step ------------------------------------------------------------------

class _StepSystem:
    """Residual, potential and Jacobian of one implicit step."""

    def __init__(self, ml, S, b, tau, reg):
        self.ml, self.S, self.b, self.tau, self.reg = ml, S, b, tau, reg
        self.scale = float(np.abs(b).max()) or float(ml.max())

    def residual(self, u):
        return self.ml * e_eps(self.reg, u) + self.tau * (self.S @ u) - self.b

    def potential(self, u):
        return float(self.ml @ e_eps_antiderivative(self.reg, u)
                     + 0.5 * self.tau * (u @ (self.S @ u)) - self.b @ u)

    def jacobian(self, u):
        return sp.diags(self.ml * e_eps_prime(self.reg, u)) + self.tau * self.S


def _line_search(system, u, du, r):
    """Step length along du minimizing the convex potential.

    g(lam) = F(u + lam du) . du is nondecreasing; the full step is taken when
    g(1) <= 0, otherwise its root in (0, 1) is bracketed by Illinois regula
    falsi until |g| drops below a tenth of |g(0)|.
    """
    g0 = float(r @ du)
    r1 = system.residual(u + du)
    g1 = float(r1 @ du)
    if g1 <= 0.0 or g0 >= 0.0:
        return 1.0, r1
    lo, glo, hi, ghi = 0.0, g0, 1.0, g1
    side = 0
    for _ in range(60):
        lam = (lo * ghi - hi * glo) / (ghi - glo)
        r_lam = system.residual(u + lam * du)
        g = float(r_lam @ du)
        if abs(g) <= 0.1 * abs(g0) or hi - lo < 1e-12:
            break
        if g < 0.0:
            lo, glo = lam, g
            if side == -1:
                ghi *= 0.5
            side = -1
        else:
            hi, ghi = lam, g
            if side == 1:
                glo *= 0.5
            side = 1
    return lam, r_lam


def _newton(system, u, opts, step_index):
    history = []
    r = system.residual(u)
    rnorm = float(np.abs(r).max())
    history.append(rnorm)
    tol = opts.newton_tol * system.scale
    iters = 0
    while rnorm > tol:
        if iters >= opts.max_inner:
            raise InnerIterationError(step_index, history)
        J = system.jacobian(u)
        du = -assembly.solve_spd(J, r, method=opts.linear_method, rtol=opts.linear_tol)
        iters += 1
        lam, r = _line_search(system, u, du, r)
        u = u + lam * du
        rnorm = float(np.abs(r).max())
        history.append(rnorm)
    return u, iters, history


def _frozen_fixed_point(system, w, opts, step_index):
    """Iterate w -> Sw, where Sw solves the step with E'_eps frozen at w."""
    history = []
    tol = opts.newton_tol * system.scale
    r = system.residual(w)
    history.append(float(np.abs(r).max()))
    if history[-1] <= tol:
        return w, 0, history
    for it in range(1, opts.max_inner + 1):
        coef = e_eps_prime(system.reg, w)          # in [1, 1 + L_eps]
        A = sp.diags(system.ml * coef) + system.tau * system.S
        rhs = system.b - system.ml * (e_eps(system.reg, w) - coef * w)
        u = assembly.solve_spd(A, rhs, x0=w, method=opts.linear_method, rtol=opts.linear_tol)
        change = float(np.abs(u - w).max())
        rnorm = float(np.abs(system.residual(u)).max())
        history.append(rnorm)
        w = u
        if rnorm <= tol or change <= opts.newton_tol * max(1.0, float(np.abs(u).max())):
            return u, it, history
    raise InnerIterationError(step_index, history)


def step(e_k, k, spec, opts, u_guess=None):
    """Advance the enthalpy from node k to k+1; returns (u, e, diagnostics)."""
    traj = spec.trajectory
    ops = operators(traj)
    tau = traj.time_grid[k + 1] - traj.time_grid[k]
    if not tau > 0:
        raise ValueError("time step must be positive")
    b = ops.lumped(k) * e_k + tau * (ops.mass(k + 1) @ spec.f.values[k + 1])
    system = _StepSystem(ops.lumped(k + 1), ops.stiffness(k + 1), b, tau, spec.reg)
    guess = u_eps(spec.reg, e_k) if u_guess is None else u_guess
    if opts.inner_scheme == "newton":
        u, iters, hist = _newton(system, np.array(guess, dtype=float), opts, k + 1)
    else:
        u, iters, hist = _frozen_fixed_point(system, np.array(guess, dtype=float), opts, k + 1)
    e = e_eps(spec.reg, u)
    diag = StepDiagnostics(step=k + 1, time=float(traj.time_grid[k + 1]), inner_iters=iters,
                           residual=hist[-1], enthalpy_total=float(ops.lumped(k + 1) @ e),
                           umin=float(u.min()), umax=float(u.max()), history=hist)
    return u, e, diag


def solve_stefan(spec, opts=None):
    opts = opts or SolverOptions()
    traj = spec.trajectory
    ops = operators(traj)
    U = np.empty((traj.n_nodes, traj.n_vertices))
    E = np.empty_like(U)
    E[0] = spec.e0
    U[0] = u_eps(spec.reg, spec.e0)
    diags = [StepDiagnostics(0, float(traj.time_grid[0]), 0, 0.0,
                             float(ops.lumped(0) @ E[0]), float(U[0].min()), float(U[0].max()))]
    for k in range(traj.n_nodes - 1):
        U[k + 1], E[k + 1], d = step(E[k], k, spec, opts, u_guess=U[k])
        diags.append(d)
    logger.info("solved %d steps, max inner iterations %d", traj.n_nodes - 1,
                max(d.inner_iters for d in diags))
    return SolutionTrajectory(SpaceTimeField(U, traj), SpaceTimeField(E, traj), diags, spec, opts)


def conservation_defect(sol):
    """|sum ML_N e_N - sum ML_0 e_0 - sum_k tau 1^T M_{k+1} f_{k+1}| and its scale."""
    traj = sol.trajectory
    ops = operators(traj)
    f = sol.spec.f.values
    dt = np.diff(traj.time_grid)
    source = sum(dt[k] * np.sum(ops.mass(k + 1) @ f[k + 1]) for k in range(traj.n_nodes - 1))
    totals = sol.enthalpy_totals()
    defect = abs(totals[-1] - totals[0] - source)
    area = max(m.total_area() for m in traj.meshes)
    scale = area * np.abs(sol.e.values).max() + traj.final_time * area * np.abs(f).max()
    return float(defect), float(scale)


def weak_form_defect(u, e, spec, eta):
    """Discrete weak-form defect of (u, e) against a test field eta.

    int e(T) eta(T) - int int eta' e + int int grad u . grad eta
        - int int f eta - int e0 eta(0)

    with the quadrature the implicit scheme is consistent with: lumped mass
    for the enthalpy terms, forward differences of eta weighted at the left
    node, and right-endpoint sums for the gradient and source terms.  With
    eta(T) = 0 this is the form with vanishing terminal test values.
    """
    traj = spec.trajectory
    ops = operators(traj)
    u, e, eta = (np.asarray(getattr(x, "values", x)) for x in (u, e, eta))
    f = spec.f.values
    N = traj.n_nodes - 1
    total = ops.lumped(N) @ (e[N] * eta[N]) - ops.lumped(0) @ (spec.e0 * eta[0])
    for k in range(N):
        tau = traj.time_grid[k + 1] - traj.time_grid[k]
        total -= ops.lumped(k) @ ((eta[k + 1] - eta[k]) * e[k])
        total += tau * (eta[k + 1] @ (ops.stiffness(k + 1) @ u[k + 1]))
        total -= tau * (eta[k + 1] @ (ops.mass(k + 1) @ f[k + 1]))
    return float(total)


def weak_residual(sol, spec, tests):
    return max(abs(weak_form_defect(sol.u, sol.e, spec, eta)) for eta in tests)


# --- dual problem ----------------------------------------------------------------

@dataclass
class DualProblemSpec:
    trajectory: object
    terminal_index: int
    xi: np.ndarray
    a: SpaceTimeField
    epsilon: float

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if not 0 < self.terminal_index < self.trajectory.n_nodes:
            raise ValueError("terminal index must lie in 1..N")
        if self.xi.shape != (self.trajectory.n_vertices,) or not np.all(np.isfinite(self.xi)):
            raise ValueError("terminal data must be a finite nodal field")
        if self.a.values.min() < 0.0 or self.a.values.max() > 1.0:
            raise ValueError("dual coefficient must satisfy 0 <= a <= 1")
        if not self.epsilon > 0:
            raise ValueError("dual shift epsilon must be positive")


@dataclass
class DualSolution:
    """Backward solution phi on nodes 0..terminal_index and its energy quadratures."""
    phi: np.ndarray
    time_grid: np.ndarray
    spec: DualProblemSpec
    dot_sq: float
    alpha_lap_sq: float
    grad_sq_end: float
    grad_sq_terminal: float
    alpha_max: float


def solve_dual_backward(dual, form="nodal", opts=None):
    """Backward implicit steps of phi' + (a + eps) Lap phi = 0 from the terminal node.

    Step k+1 -> k solves (ML_k + tau A_k) phi_k = ML_k phi_{k+1}, where A_k is
    the weighted dual form with coefficient a_k + eps.  With the default
    ``form="nodal"`` the matrix is an M-matrix with zero row sums of A_k, so
    the nodal maximum principle holds exactly.
    """
    opts = opts or SolverOptions()
    traj = dual.trajectory
    ops = operators(traj)
    t = dual.terminal_index
    alpha = dual.a.values + dual.epsilon
    phi = np.empty((t + 1, traj.n_vertices))
    phi[t] = dual.xi
    dot_sq = alpha_lap_sq = 0.0
    for k in range(t - 1, -1, -1):
        tau = traj.time_grid[k + 1] - traj.time_grid[k]
        ml = ops.lumped(k)
        A = assembly.weighted_dual_form(traj.meshes[k], alpha[k], kind=form)
        phi[k] = assembly.solve_general(sp.diags(ml) + tau * A, ml * phi[k + 1],
                                        x0=phi[k + 1], method=opts.linear_method,
                                        rtol=opts.linear_tol)
        dphi = (phi[k + 1] - phi[k]) / tau
        lap = -(ops.stiffness(k) @ phi[k]) / ml
        dot_sq += tau * float(ml @ dphi**2)
        alpha_lap_sq += tau * float(ml @ (alpha[k] * lap**2))
    # S is positive semidefinite; negative values are roundoff
    grad_end = max(float(phi[0] @ (ops.stiffness(0) @ phi[0])), 0.0)
    grad_terminal = max(float(dual.xi @ (ops.stiffness(t) @ dual.xi)), 0.0)
    return DualSolution(phi, traj.time_grid[:t + 1].copy(), dual, dot_sq, alpha_lap_sq,
                        grad_end, grad_terminal, float(alpha[:t + 1].max()))


def contraction_coefficient(sol1, sol2):
    """a = (u1 - u2) / (e1 - e2) where e1 != e2 and 0 elsewhere; values lie in [0, 1]."""
    du = sol1.u.values - sol2.u.values
    de = sol1.e.values - sol2.e.values
    a = np.zeros_like(de)
    nz = de != 0.0
    a[nz] = du[nz] / de[nz]
    return sol1.u.like(np.clip(a, 0.0, 1.0))


def _spatial_average(mesh, ml, values):
    """One-ring average weighted by lumped mass (self included)."""
    edges = mesh.vertex_adjacency()
    n = mesh.n_vertices
    W = sp.coo_matrix((np.ones(2 * len(edges)),
                       (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
                      shape=(n, n)).tocsr() + sp.identity(n, format="csr")
    W = W @ sp.diags(ml)
    return (W @ values) / np.asarray(W.sum(axis=1)).ravel()


def mollify_coefficient(a, eps, max_halvings=60):
    """Space-time stencil smoothing of a with blend weight halved until ||a_eps - a|| <= eps.

    Returns (a_eps, achieved L2 space-time distance).
    """
    traj = a.trajectory
    ops = operators(traj)
    vals = a.values
    if vals.min() < 0.0 or vals.max() > 1.0:
        raise ValueError("coefficient must satisfy 0 <= a <= 1")
    if traj.n_nodes > 1:
        padded = np.concatenate([vals[:1], vals, vals[-1:]])
        timeavg = 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]
    else:
        timeavg = vals
    smooth = np.array([_spatial_average(traj.meshes[k], ops.lumped(k), timeavg[k])
                       for k in range(traj.n_nodes)])
    theta = 1.0
    for _ in range(max_halvings):
        out = np.clip((1.0 - theta) * vals + theta * smooth, 0.0, 1.0)
        dist = lpx_norm(a.like(out - vals), 2, 2)
        if dist <= eps:
            return a.like(out), dist
        theta *= 0.5
    logger.warning("mollifier could not reach distance %.3e (achieved %.3e)", eps, dist)
    return a.like(out), dist
