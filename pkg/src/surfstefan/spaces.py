"""Evolving function spaces on a discrete flow.

A :class:`SpaceTimeField` stores one nodal vector per time node.  Because the
mesh moves with the flow and keeps its vertex numbering, pulling a field back
to the reference surface leaves the nodal numbers untouched and only swaps
the carrier mesh at each node.
"""

from dataclasses import dataclass

import numpy as np

from . import assembly
from .geometry import tangential_divergence


@dataclass
class SpaceTimeField:
    """Nodal values (n_nodes, V) on a :class:`FlowTrajectory`.

    ``on_reference`` marks the pulled-back representation, where every time
    slice is read as a function on the reference surface.
    """
    values: np.ndarray
    trajectory: object
    on_reference: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.trajectory.n_nodes, self.trajectory.n_vertices)
        if self.values.shape != shape:
            raise ValueError(f"field shape {self.values.shape} does not match trajectory {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def __getitem__(self, k):
        return self.values[k]

    def carrier(self, k):
        """Mesh carrying time slice ``k``."""
        return self.trajectory.meshes[0 if self.on_reference else k]

    def like(self, values):
        return SpaceTimeField(values, self.trajectory, self.on_reference)

    @classmethod
    def from_function(cls, traj, fn):
        """Sample fn(t, points) at every node on the current meshes."""
        vals = np.array([fn(t, m.vertices) for t, m in zip(traj.time_grid, traj.meshes)])
        return cls(vals, traj)

    @classmethod
    def constant(cls, traj, c):
        return cls(np.full((traj.n_nodes, traj.n_vertices), float(c)), traj)


def pullback(f):
    if f.on_reference:
        return f
    return SpaceTimeField(f.values, f.trajectory, on_reference=True)


def pushforward(f):
    if not f.on_reference:
        return f
    return SpaceTimeField(f.values, f.trajectory, on_reference=False)


# --- operator cache ----------------------------------------------------------

class SliceOperators:
    """Lazily assembled mass / lumped mass / stiffness for each node of a trajectory.

    Matrices are cached per mesh object, so a stationary trajectory (one mesh
    repeated) assembles each operator once.
    """

    def __init__(self, traj):
        self.traj = traj
        self._cache = {}

    def _get(self, kind, k):
        mesh = self.traj.meshes[k]
        key = (kind, k) if kind == "div" else (kind, id(mesh))
        if key not in self._cache:
            if kind == "M":
                val = assembly.mass_matrix(mesh)
            elif kind == "ML":
                val = assembly.lumped_mass_vector(mesh)
            elif kind == "S":
                val = assembly.stiffness_matrix(mesh)
            else:
                val = tangential_divergence(self.traj.velocity, mesh, self.traj.time_grid[k])
            self._cache[key] = val
        return self._cache[key]

    def mass(self, k):
        return self._get("M", k)

    def lumped(self, k):
        return self._get("ML", k)

    def stiffness(self, k):
        return self._get("S", k)

    def divergence(self, k):
        return self._get("div", k)


def operators(traj):
    """The :class:`SliceOperators` attached to a trajectory."""
    ops = getattr(traj, "_slice_ops", None)
    if ops is None:
        ops = SliceOperators(traj)
        traj._slice_ops = ops
    return ops


# --- norms ---------------------------------------------------------------------

def trapezoid(values, time_grid):
    values = np.asarray(values, dtype=float)
    if time_grid.size == 1:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(time_grid)))


def spatial_norm(f, k, q):
    """L^q norm of slice ``k`` on its carrier mesh (lumped quadrature for q=1)."""
    ops = operators(f.trajectory)
    v = f.values[k]
    kk = 0 if f.on_reference else k
    if q == np.inf:
        return float(np.abs(v).max())
    if q == 1:
        return float(ops.lumped(kk) @ np.abs(v))
    if q == 2:
        return float(np.sqrt(max(v @ (ops.mass(kk) @ v), 0.0)))
    raise ValueError(f"unsupported spatial exponent {q}")


def lpx_norm(f, p, q):
    """Norm of L^p in time with values in L^q(Omega(t)); p, q in {1, 2, inf}."""
    for e in (p, q):
        if e not in (1, 2, np.inf):
            raise ValueError(f"unsupported exponent {e}; use 1, 2 or inf")
    per_node = np.array([spatial_norm(f, k, q) for k in range(f.trajectory.n_nodes)])
    if p == np.inf:
        return float(per_node.max())
    return trapezoid(per_node**p, f.trajectory.time_grid) ** (1.0 / p)


def norm_equivalence_constant(traj, samples):
    """Empirical (min, max) of ||u(t)||_{L2(Omega(t))} / ||u~(t)||_{L2(Omega_0)}."""
    ops = operators(traj)
    M0 = ops.mass(0)
    ratios = []
    for s in samples:
        vals = s.values if isinstance(s, SpaceTimeField) else np.asarray(s, dtype=float)
        if vals.ndim == 1:
            vals = np.broadcast_to(vals, (traj.n_nodes, vals.size))
        for k in range(traj.n_nodes):
            ref = vals[k] @ (M0 @ vals[k])
            if ref <= 0.0:
                continue
            cur = vals[k] @ (ops.mass(k) @ vals[k])
            ratios.append(np.sqrt(cur / ref))
    if not ratios:
        raise ValueError("all sample fields have zero norm")
    return float(min(ratios)), float(max(ratios))


# --- material derivative and transport identities -----------------------------

def material_derivative(f):
    """Difference the pulled-back nodal arrays in time (centered inside, one-sided at ends)."""
    traj = f.trajectory
    if traj.n_nodes < 2:
        raise ValueError("material derivative needs at least two time nodes")
    return f.like(np.gradient(f.values, traj.time_grid, axis=0))


def _weighted_product(mesh, weight, u, v):
    """int_T weight_T u v summed over triangles, exact for P1 u, v."""
    area = mesh.areas()
    ul, vl = u[mesh.triangles], v[mesh.triangles]
    local = (np.einsum("fi,ij,fj->f", ul, assembly._P1_MASS, vl))
    return float(np.sum(weight * area * local))


def transport_identity_residual(u, v, udot=None, vdot=None):
    """Per-interval defect of d/dt int u v = <u', v> + <v', u> + int u v div w.

    Returns (max defect, per-interval array).  Material derivatives default to
    :func:`material_derivative`; the right-hand side uses the trapezoidal rule.
    """
    traj = u.trajectory
    ops = operators(traj)
    udot = material_derivative(u) if udot is None else udot
    vdot = material_derivative(v) if vdot is None else vdot
    lhs_nodes = np.empty(traj.n_nodes)
    rhs_nodes = np.empty(traj.n_nodes)
    for k in range(traj.n_nodes):
        M = ops.mass(k)
        uk, vk = u.values[k], v.values[k]
        lhs_nodes[k] = uk @ (M @ vk)
        rhs_nodes[k] = (udot.values[k] @ (M @ vk) + vdot.values[k] @ (M @ uk)
                        + _weighted_product(traj.meshes[k], ops.divergence(k), uk, vk))
    dt = np.diff(traj.time_grid)
    per = np.abs(np.diff(lhs_nodes) - 0.5 * dt * (rhs_nodes[1:] + rhs_nodes[:-1]))
    return float(per.max()), per


def plus_part_identity_residual(u, udot=None):
    """|LHS - RHS| of 2 int <u', u+> = |u+(T)|^2 - |u+(0)|^2 - int int (u+)^2 div w."""
    traj = u.trajectory
    ops = operators(traj)
    udot = material_derivative(u) if udot is None else udot
    up = np.maximum(u.values, 0.0)
    pair = np.empty(traj.n_nodes)
    div_term = np.empty(traj.n_nodes)
    for k in range(traj.n_nodes):
        M = ops.mass(k)
        pair[k] = udot.values[k] @ (M @ up[k])
        div_term[k] = _weighted_product(traj.meshes[k], ops.divergence(k), up[k], up[k])
    lhs = 2.0 * trapezoid(pair, traj.time_grid)
    sq_end = up[-1] @ (ops.mass(traj.n_nodes - 1) @ up[-1])
    sq_start = up[0] @ (ops.mass(0) @ up[0])
    rhs = sq_end - sq_start - trapezoid(div_term, traj.time_grid)
    return float(abs(lhs - rhs))


# --- file format ---------------------------------------------------------------

def write_stfield(f, path):
    N, V = f.values.shape
    with open(path, "w") as fh:
        fh.write(f"STFIELD {V} {N}\n")
        for row in f.values:
            fh.write(" ".join(f"{x:.17g}" for x in row))
            fh.write("\n")


def read_stfield(path, traj):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "STFIELD":
            raise ValueError(f"{path}: missing STFIELD header")
        V, N = int(header[1]), int(header[2])
        vals = np.array([[float(x) for x in fh.readline().split()] for _ in range(N)])
    if vals.shape != (N, V):
        raise ValueError(f"{path}: expected {N} rows of {V} values")
    return SpaceTimeField(vals, traj)
