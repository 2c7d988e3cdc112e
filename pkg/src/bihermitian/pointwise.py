"""Linear algebra of bi-Hermitian structures at a single tangent space.

Every tensor is a real 4x4 matrix acting on column vectors, with leading
batch axes allowed (``(..., 4, 4)``), so the same functions evaluate a whole
grid at once.

Conventions (basis ``e_a`` of T, dual basis ``e^a`` of T*):

* endomorphism ``J``: ``J[b, a] = e^b(J e_a)``;
* 2-form ``omega`` as the map ``X -> omega(X, .)``: ``omega[b, a] = omega(e_a, e_b)``
  (so the matrix is minus the usual component matrix);
* bivector ``Q`` as the map ``alpha -> Q(alpha, .)``: ``Q[b, a] = Q(e^a, e^b)``;
* metric ``g`` as the map ``X -> g(X, .)`` (symmetric);
* ``J*`` on covectors, ``J* alpha = -alpha(J .)``, is the matrix ``-J.T``.

Worked example with the standard ``J`` on (x1, y1, x2, y2) and the flat
metric: ``F = dx1^dy1 + dx2^dy2`` is stored as ``J`` itself, because
``F(X, Y) = g(JX, Y)`` and the map of ``g`` is the identity.
"""
from __future__ import annotations

import enum

import numpy as np

EYE4 = np.eye(4)

STANDARD_J = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)


class AlgebraError(ValueError):
    """An algebraic precondition failed at one or more points."""


class PointClass(enum.Enum):
    J_PLUS_EQ_J_MINUS = "J_PLUS_EQ_J_MINUS"
    J_PLUS_EQ_NEG_J_MINUS = "J_PLUS_EQ_NEG_J_MINUS"
    GENERIC = "GENERIC"


def T(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def norm(a: np.ndarray) -> np.ndarray:
    """Frobenius norm over the last two axes."""
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def jstar(J: np.ndarray) -> np.ndarray:
    return -T(J)


# ---------------------------------------------------------------- validation


def check_complex_structure(J, tol=1e-12):
    err = norm(J @ J + EYE4)
    if np.any(err > tol):
        raise AlgebraError(f"J^2 + 1 has norm {np.max(err):.3e} > {tol}")
    # orientation: the pair (v, Jv, w, Jw) must be positively oriented
    rng = np.random.default_rng(0)
    v = rng.standard_normal(4)
    w = rng.standard_normal(4)
    basis = np.stack(
        [np.broadcast_to(v, J.shape[:-1]), J @ v, np.broadcast_to(w, J.shape[:-1]), J @ w],
        axis=-1,
    )
    if np.any(np.linalg.det(basis) <= 0):
        raise AlgebraError("J does not induce the reference orientation")


def check_antisymmetric(a, tol=1e-14, what="2-form"):
    err = norm(a + T(a))
    if np.any(err > tol * np.maximum(1.0, norm(a))):
        raise AlgebraError(f"{what} is not antisymmetric (defect {np.max(err):.3e})")


# ---------------------------------------------------------------- splitting


def type_split(omega, J):
    """Split a 2-form into its J-invariant and J-anti-invariant parts.

    ``inv(X, Y) = (omega(X, Y) + omega(JX, JY)) / 2``, ``anti = omega - inv``.
    """
    inv = 0.5 * (omega + T(J) @ omega @ J)
    return inv, omega - inv


def anti_project(omega, J):
    return type_split(omega, J)[1]


def invariant_project(omega, J):
    return type_split(omega, J)[0]


# ---------------------------------------------------------------- Gualtieri condition


def gualtieri_residual(omega, Q, J):
    """Return ``omega J - J* omega + omega Q omega`` as a map T -> T*."""
    return omega @ J - jstar(J) @ omega + omega @ Q @ omega


def build_jminus(omega, Q, J, tol=1e-8):
    """``J_- = -J - Q omega``; refuses points where the Gualtieri residual exceeds ``tol``.

    ``tol`` is relative to ``1 + |omega|^2 |Q|``.
    """
    res = norm(gualtieri_residual(omega, Q, J))
    scale = 1.0 + norm(omega) ** 2 * norm(Q)
    if np.any(res > tol * scale):
        raise AlgebraError(
            f"Gualtieri residual {np.max(res / scale):.3e} exceeds {tol:.1e}; J_- would not be almost complex"
        )
    return -J - Q @ omega


def build_metric(omega, J, Jm):
    """``g = -1/2 omega (J - J_-)``, symmetrised.

    Returns ``(g, positive)`` where ``positive`` flags points whose metric is
    positive definite.  The symmetry defect is available via
    :func:`metric_symmetry_defect`.
    """
    g = -0.5 * omega @ (J - Jm)
    g = 0.5 * (g + T(g))
    positive = np.all(np.linalg.eigvalsh(g) > 0, axis=-1)
    return g, positive


def metric_symmetry_defect(omega, J, Jm):
    g = -0.5 * omega @ (J - Jm)
    return norm(g - T(g))


def orthogonality_defect(g, J):
    """``|J^T g J - g|``: zero iff J is g-orthogonal."""
    return norm(T(J) @ g @ J - g)


# ---------------------------------------------------------------- inverse direction


def commutator_endo(Jp, Jm):
    return 0.5 * (Jp @ Jm - Jm @ Jp)


def commutator_bivector(Jp, Jm, g):
    """Bivector obtained from ``Phi = [J+, J-]/2`` by raising an index with g."""
    if np.any(np.linalg.det(g) <= 0):
        raise AlgebraError("metric is singular or not positive")
    return commutator_endo(Jp, Jm) @ np.linalg.inv(g)


def angle_p(Jp, Jm):
    """Angle function ``-trace(J+ J-)/4``, in [-1, 1]."""
    return -0.25 * np.trace(Jp @ Jm, axis1=-2, axis2=-1)


def extract_omega(g, Jp, Jm, eps=1e-10):
    """Rebuild the taming 2-form ``F+ - g(Phi J ., .) / (1 - p)`` from ``(g, J+, J-)``."""
    p = angle_p(Jp, Jm)
    if np.any(p >= 1.0 - eps):
        raise AlgebraError(f"p reaches {np.max(p):.6f}; J+ and J- (almost) agree")
    Fp = g @ Jp
    phi = commutator_endo(Jp, Jm)
    return Fp - (g @ phi @ Jp) / (1.0 - p)[..., None, None]


# ---------------------------------------------------------------- fixed point oracle


def fixed_point_solve(F, Q, J, tol=1e-13, max_iter=200):
    """Solve the Gualtieri condition for omega with prescribed J-invariant part F.

    The anti-invariant part solves ``A = P_anti(J^T (F+A) Q (F+A) / 2)``
    (``(J*)^-1 = J^T``); iterated until the Gualtieri residual is below
    ``tol * (1 + |F|^2 |Q|)``.  Returns ``(omega, iterations)``.
    """
    F = np.asarray(F, dtype=float)
    A = np.zeros_like(F)
    scale = 1.0 + norm(F) ** 2 * norm(Q)
    res_prev = np.inf
    for it in range(1, max_iter + 1):
        omega = F + A
        res = np.max(norm(gualtieri_residual(omega, Q, J)) / scale)
        if res < tol:
            return omega, it
        if it > 5 and res > 10 * res_prev:
            break
        res_prev = res
        A = anti_project(0.5 * T(J) @ omega @ Q @ omega, J)
    raise AlgebraError(f"fixed point iteration did not converge (residual {res:.3e}); Q too large")


# ---------------------------------------------------------------- classification


def classify_point(p, tol=1e-8):
    p = float(p)
    if p > 1.0 + tol or p < -1.0 - tol:
        raise AlgebraError(f"p = {p} outside [-1, 1]; upstream numerical failure")
    if abs(p - 1.0) < tol:
        return PointClass.J_PLUS_EQ_J_MINUS
    if abs(p + 1.0) < tol:
        return PointClass.J_PLUS_EQ_NEG_J_MINUS
    return PointClass.GENERIC


def classify_labels(labels) -> str:
    """Map a collection of point labels to the global class "i", "ii" or "iii"."""
    labels = set(labels)
    plus = PointClass.J_PLUS_EQ_J_MINUS in labels
    minus = PointClass.J_PLUS_EQ_NEG_J_MINUS in labels
    if plus and minus:
        return "iii"
    if plus or minus:
        return "ii"
    return "i"


# ---------------------------------------------------------------- holomorphic bivectors


def dz_vectors():
    """Complex vectors d/dz1, d/dz2 in the real basis (x1, y1, x2, y2)."""
    v1 = np.array([0.5, -0.5j, 0.0, 0.0])
    v2 = np.array([0.0, 0.0, 0.5, -0.5j])
    return v1, v2


def holomorphic_bivector(phi):
    """Real and imaginary maps of ``phi d/dz1 ^ d/dz2`` for complex ``phi`` (any shape).

    Returned as ``(re, im)``, each ``(..., 4, 4)`` in the map convention.
    """
    v1, v2 = dz_vectors()
    comp = np.outer(v1, v2) - np.outer(v2, v1)  # comp[a, b] = sigma(e^a, e^b) for phi = 1
    phi = np.asarray(phi)[..., None, None]
    sig = phi * comp.T
    return sig.real.copy(), sig.imag.copy()


def anticommutes(Q, J):
    """Defect of ``J Q + Q J*`` (zero for bivectors of type (2,0)+(0,2))."""
    return norm(J @ Q + Q @ jstar(J))
