"""P1 finite-element operators on one time slice of the surface.

Operators are returned as ``scipy.sparse.csr_matrix``.  Row ``i`` of every
operator corresponds to the test hat function of vertex ``i``, column ``j`` to
the trial hat function of vertex ``j``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

LINEAR_RTOL = 1e-11

_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class LinearSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights on the reference triangle (weights sum to 1)."""
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0.0) or abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must be positive and sum to 1")


# interior 3-point rule, exact for quadratics
THREE_POINT = QuadratureRule(
    points=np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    weights=np.full(3, 1 / 3),
)


def _scatter(mesh, local):
    """Assemble per-element (F, 3, 3) blocks into a V x V CSR matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def mass_matrix(mesh):
    area, _, _ = mesh.element_data()
    return _scatter(mesh, area[:, None, None] * _P1_MASS[None])


def lumped_mass(mesh):
    """Row-sum lumped mass as a diagonal CSR matrix."""
    return sp.diags(lumped_mass_vector(mesh)).tocsr()


def lumped_mass_vector(mesh):
    area = mesh.areas()
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return out


def _local_stiffness(mesh):
    area, grads, _ = mesh.element_data()
    return area, grads, area[:, None, None] * np.einsum("fik,fjk->fij", grads, grads)


def stiffness_matrix(mesh):
    _, _, local = _local_stiffness(mesh)
    return _scatter(mesh, local)


def weighted_dual_form(mesh, alpha, kind="galerkin", quadrature=THREE_POINT):
    """Matrix of a(phi, eta) = int alpha grad phi . grad eta + int (grad alpha . grad phi) eta.

    ``kind="galerkin"`` integrates both terms with alpha interpolated in P1
    (the quadrature rule for the first term, its gradient constant per
    triangle for the second).  ``kind="nodal"`` uses a(phi, eta) =
    int grad phi . grad I_h(alpha eta), i.e. diag(alpha) S: it agrees with
    the Galerkin form for constant alpha, has identical row and column sums,
    and keeps the M-matrix sign pattern of S that the discrete maximum
    principle of the backward dual solve relies on.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (mesh.n_vertices,):
        raise ValueError("alpha must be a nodal field")
    if np.any(alpha < 0.0):
        raise ValueError("weighted_dual_form requires alpha >= 0")
    area, grads, kloc = _local_stiffness(mesh)
    if kind == "nodal":
        return sp.diags(alpha) @ _scatter(mesh, kloc)
    if kind != "galerkin":
        raise ValueError(f"unknown weighted form kind {kind!r}")
    a_loc = alpha[mesh.triangles]                      # (F, 3)
    a_mean = (a_loc @ quadrature.points.T) @ quadrature.weights
    first = a_mean[:, None, None] * kloc
    grad_alpha = np.einsum("fm,fmk->fk", a_loc, grads)   # constant per triangle
    # second[f, i, j] = (grad alpha . grad lambda_j) * int lambda_i = ... * area / 3
    gdot = np.einsum("fk,fjk->fj", grad_alpha, grads)
    second = (area / 3.0)[:, None, None] * np.broadcast_to(gdot[:, None, :], kloc.shape)
    return _scatter(mesh, first + second)


def load_vector(mesh, f):
    return mass_matrix(mesh) @ np.asarray(f, dtype=float)


def is_symmetric(A, tol=1e-14):
    d = A - A.T
    return (abs(d).max() if d.nnz else 0.0) <= tol * max(abs(A).max(), 1.0)


def write_matrix_market(A, path):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


# --- linear solvers ------------------------------------------------------------

def _jacobi(A):
    d = A.diagonal()
    if np.any(d == 0.0):
        raise LinearSolverError("zero diagonal entry, Jacobi preconditioner undefined")
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x)


def solve_spd(A, b, x0=None, method="direct", rtol=LINEAR_RTOL):
    """Solve a symmetric positive definite system.

    ``method="cg"`` runs Jacobi-preconditioned conjugate gradients to the
    relative residual ``rtol``; ``"direct"`` uses a sparse LU factorization.
    """
    if method == "direct":
        return _direct(A, b)
    if method != "cg":
        raise ValueError(f"unknown linear method {method!r}")
    if not np.any(b):
        return np.zeros_like(b)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, M=_jacobi(A),
                      maxiter=10 * A.shape[0])
    if info != 0:
        raise LinearSolverError(f"conjugate gradients did not converge (info={info})")
    return x


def solve_general(A, b, x0=None, method="direct", rtol=LINEAR_RTOL):
    """Solve a nonsymmetric system (BiCGSTAB with Jacobi, or sparse LU)."""
    if method == "direct":
        return _direct(A, b)
    if method != "cg":
        raise ValueError(f"unknown linear method {method!r}")
    if not np.any(b):
        return np.zeros_like(b)
    x, info = spla.bicgstab(A, b, x0=x0, rtol=rtol, atol=0.0, M=_jacobi(A),
                            maxiter=10 * A.shape[0])
    if info != 0:
        raise LinearSolverError(f"BiCGSTAB did not converge (info={info})")
    return x


def _direct(A, b):
    try:
        x = spla.spsolve(sp.csc_matrix(A), b)
    except RuntimeError as exc:  # singular factor
        raise LinearSolverError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("sparse LU produced non-finite values")
    return x
