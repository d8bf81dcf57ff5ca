"""Closed triangulated surfaces, prescribed velocity fields and mesh advection.

The evolving surface is realized by moving the vertices of a fixed
triangulation along the flow of the velocity field.  The discrete flow map
is therefore the identity on vertex indices, which is what makes the
pullback in :mod:`surfstefan.spaces` a no-op on nodal arrays.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .expressions import Expression

logger = logging.getLogger(__name__)

ODE_STEP_FACTOR = 1e-2
MIN_JACOBIAN = 1e-8


class DegenerateElementError(ValueError):
    pass


class AdvectionError(RuntimeError):
    def __init__(self, step, triangle, area):
        super().__init__(
            f"advection produced a degenerate triangle {triangle} "
            f"(area {area:.3e}) at time step {step}")
        self.step = step
        self.triangle = triangle


class SurfaceMesh:
    """Triangulated closed surface in R^3.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
    triangles : array_like of int, shape (F, 3)
        Consistently oriented vertex triples.
    validate : bool
        Check closedness, orientation and non-degeneracy.
    """

    def __init__(self, vertices, triangles, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if isinstance(triangles, np.ndarray) and triangles.dtype == np.int64 \
                and not triangles.flags.writeable:
            self.triangles = triangles
        else:
            self.triangles = np.array(triangles, dtype=np.int64)
            self.triangles.setflags(write=False)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must have shape (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (F, 3)")
        if validate:
            self.validate()

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def with_vertices(self, vertices):
        """Same connectivity, new positions (no re-validation of topology)."""
        return SurfaceMesh(vertices, self.triangles, validate=False)

    def validate(self):
        tri = self.triangles
        if tri.min() < 0 or tri.max() >= self.n_vertices:
            raise ValueError("triangle index out of range")
        directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        keys = directed[:, 0] * self.n_vertices + directed[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("inconsistent orientation or non-manifold edge")
        rev = directed[:, 1] * self.n_vertices + directed[:, 0]
        if not np.isin(rev, keys).all():
            raise ValueError("surface is not closed: boundary edge found")
        areas = self.areas()
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise DegenerateElementError(f"triangle {bad[0]} has zero area")

    def _edges(self):
        p = self.vertices[self.triangles]
        return p, p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]

    def areas(self):
        _, e1, e2 = self._edges()
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def normals(self):
        _, e1, e2 = self._edges()
        n = np.cross(e1, e2)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def total_area(self):
        return float(self.areas().sum())

    def element_data(self):
        """Areas, hat-function gradients (F, 3, 3) and unit normals, vectorized."""
        p, e1, e2 = self._edges()
        n = np.cross(e1, e2)
        twice = np.linalg.norm(n, axis=1)
        if np.any(twice <= 0.0):
            bad = int(np.flatnonzero(twice <= 0.0)[0])
            raise DegenerateElementError(f"triangle {bad} has zero area")
        n = n / twice[:, None]
        # grad of the hat function of local vertex i: n x (opposite edge) / (2A)
        opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        grads = np.cross(n[:, None, :], opp) / twice[:, None, None]
        return 0.5 * twice, grads, n

    def edge_lengths(self):
        p = self.vertices[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)

    def mesh_size(self):
        return float(self.edge_lengths().max())

    def vertex_adjacency(self):
        """Sorted unique undirected edges, shape (E, 2)."""
        tri = self.triangles
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def element_geometry(mesh, tri_index):
    """Area, hat-function surface gradients (3 x 3) and unit normal of one triangle."""
    p = mesh.vertices[mesh.triangles[tri_index]]
    n = np.cross(p[1] - p[0], p[2] - p[0])
    twice = np.linalg.norm(n)
    if twice <= 0.0:
        raise DegenerateElementError(f"triangle {tri_index} has zero area")
    n = n / twice
    opp = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
    grads = np.cross(n, opp) / twice
    return 0.5 * twice, grads, n


# --- presets -----------------------------------------------------------------

def icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v / np.linalg.norm(v, axis=1)[:, None], f


def icosphere(level, radius=1.0):
    """Unit icosahedron refined ``level`` times by midpoint subdivision and projection."""
    if not 0 <= level <= 6:
        raise ValueError("icosphere level must be in 0..6")
    v, f = icosahedron()
    verts = list(v)
    for _ in range(level):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(new)
    return SurfaceMesh(radius * np.array(verts), f)


def torus(n_u, n_v, major=1.0, minor=0.4):
    """Torus about the z-axis on an (n_u, n_v) parameter grid, outward oriented."""
    if n_u < 3 or n_v < 3:
        raise ValueError("torus grid needs at least 3 x 3 cells")
    u = 2 * np.pi * np.arange(n_u) / n_u
    v = 2 * np.pi * np.arange(n_v) / n_v
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([(major + minor * np.cos(V)) * np.cos(U),
                    (major + minor * np.cos(V)) * np.sin(U),
                    minor * np.sin(V)], axis=-1).reshape(-1, 3)
    idx = np.arange(n_u * n_v).reshape(n_u, n_v)
    a = idx
    b = np.roll(idx, -1, axis=0)
    c = np.roll(np.roll(idx, -1, axis=0), -1, axis=1)
    d = np.roll(idx, -1, axis=1)
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                           np.stack([a, c, d], -1).reshape(-1, 3)])
    return SurfaceMesh(pts, tris)


def read_off(path):
    with open(path) as fh:
        tokens = [ln.split("#")[0].strip() for ln in fh]
    lines = [ln for ln in tokens if ln]
    if lines[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = (int(x) for x in lines[1].split()[:2])
    verts = np.array([[float(x) for x in ln.split()[:3]] for ln in lines[2:2 + nv]])
    faces = []
    for ln in lines[2 + nv:2 + nv + nf]:
        parts = [int(x) for x in ln.split()]
        if parts[0] != 3:
            raise ValueError(f"{path}: only triangles are supported")
        faces.append(parts[1:4])
    return SurfaceMesh(verts, faces)


def write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")


# --- velocity fields -----------------------------------------------------------

class VelocityField:
    """Analytic velocity w(t, x) with spatial Jacobian.

    ``value(t, pts)`` returns shape (..., 3); ``jacobian(t, pts)`` returns
    (..., 3, 3) with entry [i, j] = d w_i / d x_j.
    """

    name = "custom"

    def value(self, t, pts):
        raise NotImplementedError

    def jacobian(self, t, pts):
        raise NotImplementedError

    def describe(self):
        return {"preset": self.name}


class ZeroVelocity(VelocityField):
    name = "zero"

    def value(self, t, pts):
        return np.zeros_like(np.asarray(pts, dtype=float))

    def jacobian(self, t, pts):
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape + (3,))


@dataclass
class RadialVelocity(VelocityField):
    """w(t, x) = rate * x; rate = 1 is the expanding sphere."""
    rate: float = 1.0
    name = "radial"

    def value(self, t, pts):
        return self.rate * np.asarray(pts, dtype=float)

    def jacobian(self, t, pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(self.rate * np.eye(3), pts.shape + (3,)).copy()

    def describe(self):
        return {"preset": self.name, "rate": self.rate}


@dataclass
class RotationVelocity(VelocityField):
    """Rigid rotation w = omega * axis x x about an axis through the origin."""
    omega: float = 1.0
    axis: tuple = (0.0, 0.0, 1.0)
    name = "rotation"

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        self._axis = a / np.linalg.norm(a)
        ax = self._axis
        self._cross = self.omega * np.array([[0, -ax[2], ax[1]],
                                             [ax[2], 0, -ax[0]],
                                             [-ax[1], ax[0], 0]])

    def value(self, t, pts):
        return np.asarray(pts, dtype=float) @ self._cross.T

    def jacobian(self, t, pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(self._cross, pts.shape + (3,)).copy()

    def describe(self):
        return {"preset": self.name, "omega": self.omega, "axis": list(self.axis)}


class ExpressionVelocity(VelocityField):
    """User velocity from three expression strings; Jacobian by symbolic differentiation."""
    name = "expression"

    def __init__(self, wx, wy, wz):
        self.components = [Expression(s) for s in (wx, wy, wz)]
        self._jac = [[c.diff(v) for v in ("x", "y", "z")] for c in self.components]

    def value(self, t, pts):
        return np.stack([c(t, pts) for c in self.components], axis=-1)

    def jacobian(self, t, pts):
        return np.stack([np.stack([d(t, pts) for d in row], axis=-1)
                         for row in self._jac], axis=-2)

    def describe(self):
        return {"preset": self.name, "w": [c.text for c in self.components]}


VELOCITY_PRESETS = {
    "zero": ZeroVelocity,
    "radial": RadialVelocity,
    "rotation": RotationVelocity,
    "expression": ExpressionVelocity,
}


def make_velocity(preset, **params):
    try:
        cls = VELOCITY_PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown velocity preset {preset!r}; "
                         f"choose from {sorted(VELOCITY_PRESETS)}") from None
    return cls(**params)


def tangential_divergence(w, mesh, t):
    """Per-triangle surface divergence tr(Dw) - n.Dw.n at the centroids."""
    jac = w.jacobian(t, mesh.centroids())
    n = mesh.normals()
    return np.trace(jac, axis1=1, axis2=2) - np.einsum("fi,fij,fj->f", n, jac, n)


def tangential_deformation_norm(w, mesh, t):
    """Per-triangle spectral norm of P sym(Dw) P, P the tangential projector."""
    jac = w.jacobian(t, mesh.centroids())
    n = mesh.normals()
    P = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    sym = 0.5 * (jac + np.transpose(jac, (0, 2, 1)))
    return np.linalg.norm(P @ sym @ P, ord=2, axis=(1, 2))


# --- trajectories --------------------------------------------------------------

@dataclass
class FlowTrajectory:
    """Vertex positions of Omega(t) on a time grid, shared connectivity."""
    time_grid: np.ndarray
    meshes: list
    jacobians: np.ndarray
    velocity: VelocityField = field(default_factory=ZeroVelocity)

    def __post_init__(self):
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        if len(self.meshes) != self.time_grid.size:
            raise ValueError("one mesh per time node required")
        tri = self.meshes[0].triangles
        for m in self.meshes[1:]:
            if m.triangles is not tri and not np.array_equal(m.triangles, tri):
                raise ValueError("connectivity must be identical across time nodes")
        if self.jacobians.min() <= MIN_JACOBIAN:
            raise ValueError(f"jacobian {self.jacobians.min():.3e} not bounded away from zero")

    @property
    def n_nodes(self):
        return self.time_grid.size

    @property
    def n_vertices(self):
        return self.meshes[0].n_vertices

    @property
    def final_time(self):
        return float(self.time_grid[-1])

    @property
    def steps(self):
        return np.diff(self.time_grid)

    @property
    def reference(self):
        return self.meshes[0]

    @classmethod
    def stationary(cls, mesh, time_grid):
        time_grid = np.asarray(time_grid, dtype=float)
        _check_grid(time_grid)
        return cls(time_grid, [mesh] * time_grid.size,
                   np.ones((time_grid.size, mesh.n_triangles)), ZeroVelocity())

    def jacobian_bounds(self):
        return float(self.jacobians.min()), float(self.jacobians.max())

    def max_divergence(self):
        """max over nodes and triangles of |surface divergence of w|."""
        return max(float(np.abs(tangential_divergence(self.velocity, m, t)).max())
                   for m, t in zip(self.meshes, self.time_grid))


def jacobian(traj, t_index, tri_index):
    return float(traj.jacobians[t_index, tri_index])


def _check_grid(time_grid):
    if time_grid.ndim != 1 or time_grid.size < 1:
        raise ValueError("time grid must be a nonempty 1D array")
    if np.any(np.diff(time_grid) <= 0.0):
        raise ValueError("time grid must be strictly increasing")


def uniform_time_grid(T, steps):
    if not T > 0 or steps < 1:
        raise ValueError("need T > 0 and steps >= 1")
    return np.linspace(0.0, T, steps + 1)


def _rk4_step(w, t, x, h):
    k1 = w.value(t, x)
    k2 = w.value(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = w.value(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = w.value(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _substeps(w, t0, t1, x):
    jac = w.jacobian(0.5 * (t0 + t1), x)
    gmax = float(np.linalg.norm(jac, ord=2, axis=(-2, -1)).max()) if x.size else 0.0
    if gmax == 0.0:
        return 1
    return max(1, int(np.ceil((t1 - t0) * gmax / ODE_STEP_FACTOR)))


def advect_mesh(mesh0, w, time_grid):
    """Move the vertices of ``mesh0`` along dx/dt = w(t, x) with classical RK4.

    The substep length on each interval is at most 1e-2 / max|Dw|, where the
    Jacobian norm is sampled at the vertices at the interval midpoint time.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    _check_grid(time_grid)
    area0 = mesh0.areas()
    meshes = [mesh0]
    jac = [np.ones(mesh0.n_triangles)]
    x = mesh0.vertices.copy()
    for k in range(time_grid.size - 1):
        t0, t1 = time_grid[k], time_grid[k + 1]
        n_sub = _substeps(w, t0, t1, x)
        h = (t1 - t0) / n_sub
        for s in range(n_sub):
            x = _rk4_step(w, t0 + s * h, x, h)
        m = mesh0.with_vertices(x.copy())
        ratio = m.areas() / area0
        bad = np.flatnonzero(ratio <= MIN_JACOBIAN)
        if bad.size:
            raise AdvectionError(k + 1, int(bad[0]), float(ratio[bad[0]] * area0[bad[0]]))
        meshes.append(m)
        jac.append(ratio)
    traj = FlowTrajectory(time_grid, meshes, np.array(jac), w)
    lo, hi = traj.jacobian_bounds()
    logger.debug("advected %d nodes, J in [%.4g, %.4g]", time_grid.size, lo, hi)
    return traj
