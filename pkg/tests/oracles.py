"""Reference values computed independently of the package.

Closed forms on the unit sphere, a cotangent-weight Laplacian that never
touches barycentric gradients, and numbers frozen from one-off high-precision
evaluations (mpmath, 50 digits) before the solver existed.
"""

import numpy as np

SPHERE_AREA = 4.0 * np.pi
# int_{S^2} z^2 and int_{S^2} |grad z|^2; z is a degree-1 spherical harmonic, eigenvalue 2
Z_SQ = 4.0 * np.pi / 3.0
GRAD_Z_SQ = 8.0 * np.pi / 3.0
EIG_Z = 2.0

# mpmath: (1 + 2*(0.5/64))**(-64) and exp(-1)
EULER_FACTOR_64 = 0.37073493290097295
EXP_MINUS_ONE = 0.36787944117144232

# int_0^T int |grad(2 + exp(-2t) z)|^2 = (8 pi / 3) (1 - exp(-4T)) / 4 with T = 0.5
ONE_PHASE_GRAD_SQ_T05 = 1.8109495480014379


def cotangent_stiffness(vertices, triangles):
    """Dense cotangent Laplacian: S_ij = -(cot a_ij + cot b_ij) / 2, rows summing to zero."""
    n = len(vertices)
    S = np.zeros((n, n))
    for tri in triangles:
        for k in range(3):
            i, j, o = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            u = vertices[i] - vertices[o]
            v = vertices[j] - vertices[o]
            cot = u @ v / np.linalg.norm(np.cross(u, v))
            S[i, j] -= 0.5 * cot
            S[j, i] -= 0.5 * cot
            S[i, i] += 0.5 * cot
            S[j, j] += 0.5 * cot
    return S


def triangle_area(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a))
