"""Energy graph E and its bi-Lipschitz regularization E_eps.

The graph is

    E(r) = r        for r < 0
           [0, 1]   for r = 0
           r + 1    for r > 0

and E_eps(r) = r + H_eps(r) where H_eps is a cubic smoothstep ramping from
0 at r = 0 to 1 at r = eps.  Everything here is vectorized over numpy arrays
and also accepts plain floats.
"""

from dataclasses import dataclass

import numpy as np

NEWTON_RTOL = 1e-13
NEWTON_MAXITER = 60


@dataclass(frozen=True)
class EnthalpyRegularization:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def lipschitz(self):
        return lipschitz_constant(self)


def lipschitz_constant(reg):
    """Lipschitz constant of the smoothed Heaviside, max H'_eps = 3 / (2 eps)."""
    return 1.5 / reg.epsilon


def _heaviside(reg, r):
    s = np.clip(np.asarray(r, dtype=float) / reg.epsilon, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _heaviside_prime(reg, r):
    s = np.clip(np.asarray(r, dtype=float) / reg.epsilon, 0.0, 1.0)
    return 6.0 * s * (1.0 - s) / reg.epsilon


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def e_eps(reg, r):
    r = np.asarray(r, dtype=float)
    return _scalar_or_array(r + _heaviside(reg, r))


def e_eps_prime(reg, r):
    r = np.asarray(r, dtype=float)
    return _scalar_or_array(1.0 + _heaviside_prime(reg, r))


def e_eps_antiderivative(reg, r):
    """Primitive of E_eps vanishing at 0.

    Used as the convex potential for line searches in the nonlinear solver.
    """
    r = np.asarray(r, dtype=float)
    eps = reg.epsilon
    s = np.clip(r / eps, 0.0, 1.0)
    inner = eps * (s**3 - 0.5 * s**4)
    outer = np.where(r > eps, 0.5 * eps + (r - eps), inner)
    return _scalar_or_array(0.5 * r * r + np.where(r > 0.0, outer, 0.0))


def u_eps(reg, s):
    """Inverse U_eps = E_eps^{-1}.

    Closed form on the two linear branches; on [0, 1 + eps] a Newton
    iteration safeguarded by the bracket [0, eps] (bisection on failure).
    """
    s = np.asarray(s, dtype=float)
    eps = reg.epsilon
    out = np.where(s < 0.0, s, s - 1.0)
    mid = (s >= 0.0) & (s <= 1.0 + eps)
    if np.any(mid):
        out = np.array(out, dtype=float, copy=True)
        out[mid] = _invert_ramp(reg, s[mid] if s.ndim else s)
    return _scalar_or_array(out)


def _invert_ramp(reg, target):
    eps = reg.epsilon
    target = np.atleast_1d(np.asarray(target, dtype=float))
    lo = np.zeros_like(target)
    hi = np.full_like(target, eps)
    # initial guess: linear interpolation across the ramp
    r = np.clip(target / (1.0 + eps) * eps, 0.0, eps)
    tol = NEWTON_RTOL * np.maximum(1.0, np.abs(target))
    done = np.zeros(target.shape, dtype=bool)
    for _ in range(NEWTON_MAXITER):
        g = e_eps(reg, r) - target
        done = np.abs(g) <= tol
        if done.all():
            return r
        lo = np.where(g < 0.0, r, lo)
        hi = np.where(g > 0.0, r, hi)
        step = r - g / e_eps_prime(reg, r)
        inside = (step > lo) & (step < hi)
        r = np.where(done, r, np.where(inside, step, 0.5 * (lo + hi)))
    # bisection fallback for whatever did not settle
    for _ in range(200):
        g = e_eps(reg, r) - target
        done = np.abs(g) <= tol
        if done.all():
            break
        lo = np.where(g < 0.0, r, lo)
        hi = np.where(g > 0.0, r, hi)
        r = np.where(done, r, 0.5 * (lo + hi))
    return r


def u_graph(s):
    """Single-valued inverse U of the limit graph E."""
    s = np.asarray(s, dtype=float)
    return _scalar_or_array(np.where(s < 0.0, s, np.maximum(s - 1.0, 0.0)))


def graph_distance(u, e):
    """Euclidean distance of the point(s) (u, e) to the graph of E."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    # branch r < 0, e = r: project onto the line, clamp to r <= 0
    r1 = np.minimum(0.5 * (u + e), 0.0)
    d1 = np.hypot(u - r1, e - r1)
    # vertical segment {0} x [0, 1]
    d2 = np.hypot(u, e - np.clip(e, 0.0, 1.0))
    # branch r > 0, e = r + 1
    r3 = np.maximum(0.5 * (u + e - 1.0), 0.0)
    d3 = np.hypot(u - r3, e - r3 - 1.0)
    return _scalar_or_array(np.minimum(np.minimum(d1, d2), d3))


def e_graph_contains(u, e, tol=0.0):
    """True iff e lies in E(u), up to a distance ``tol`` from the graph."""
    d = np.asarray(graph_distance(u, e))
    return bool(d <= tol) if d.ndim == 0 else d <= tol


def enthalpy_from_temperature(u0):
    """Graph section used for temperature presets: e = u for u <= 0, u + 1 otherwise."""
    u0 = np.asarray(u0, dtype=float)
    return np.where(u0 > 0.0, u0 + 1.0, u0)
