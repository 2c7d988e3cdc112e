"""Exterior calculus on grid fields stored as full antisymmetric component arrays.

A k-form has trailing shape ``(4,)*k`` holding ``alpha(e_a1, ..., e_ak)``.
2-forms elsewhere in the package are stored as maps (see ``pointwise``),
which are the negative of the component matrix; use :func:`comp_from_map`
and :func:`map_from_comp` at the boundary.
"""
from __future__ import annotations

import itertools

import numpy as np

from .grid import FundamentalGrid


def comp_from_map(m):
    return -m


def map_from_comp(w):
    return -w


def _alternate(D, k):
    """``out[a0..ak] = sum_j (-1)^j D[a0..^aj..ak ; aj]`` for D antisymmetric in its first k slots."""
    out = np.zeros(D.shape, dtype=D.dtype)
    base = D.ndim - (k + 1)
    for j in range(k + 1):
        out = out + (-1) ** j * np.moveaxis(D, -1, base + j)
    return out


def exterior_d(grid: FundamentalGrid, alpha, k: int, kappa=1.0, stencil="centered"):
    """Exterior derivative of a k-form; a 4-form maps to zero."""
    if k >= 4:
        return np.zeros(alpha.shape[:4], dtype=alpha.dtype)
    D = grid.ambient_partials(alpha, kappa, stencil)
    return _alternate(D, k)


def wedge1(theta, alpha, k: int):
    """``theta ^ alpha`` for a 1-form theta and a k-form alpha."""
    D = alpha[..., None] * theta.reshape(theta.shape[:-1] + (1,) * k + (4,))
    return _alternate(D, k)


def wedge2(a, b):
    """Wedge of two 2-forms: the 4-form coefficient on e^1234 (volume of the ambient frame)."""
    eps = levi_civita4()
    return 0.25 * np.einsum("abcd,...ab,...cd->...", eps, a, b)


def levi_civita4():
    eps = np.zeros((4,) * 4)
    for perm in itertools.permutations(range(4)):
        eps[perm] = np.linalg.det(np.eye(4)[list(perm)])
    return eps


def sup_norm(a) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


# ---------------------------------------------------------------- type projectors


def type_projectors(J):
    """Projectors of complex covectors onto types (1,0) and (0,1) for a field of J's."""
    Jt = np.swapaxes(J, -1, -2)
    eye = np.eye(4)
    # (J* alpha) = -J^T alpha; alpha^{1,0} = (alpha + i J* alpha) / 2
    P10 = 0.5 * (eye - 1j * Jt)
    P01 = 0.5 * (eye + 1j * Jt)
    return P10, P01


def type_component(alpha, J, p: int, q: int):
    """(p, q) component of a complex (p+q)-form given as a full component array."""
    k = p + q
    if alpha.ndim < k:
        raise ValueError("form degree mismatch")
    P = type_projectors(J)
    out = np.zeros(alpha.shape, dtype=complex)
    for assign in itertools.product((0, 1), repeat=k):
        if sum(1 for a in assign if a == 0) != p:
            continue
        term = alpha.astype(complex)
        base = term.ndim - k
        for slot, kind in enumerate(assign):
            proj = P[kind]
            # contract slot with proj[..., new, old]
            term = np.moveaxis(term, base + slot, -1)
            term = np.einsum("...ij,...j->...i", _bcast(proj, term.ndim), term)
            term = np.moveaxis(term, -1, base + slot)
        out += term
    return out


def _bcast(P, ndim):
    # P has shape (..grid.., 4, 4) or (4, 4); insert singleton component axes
    if P.ndim == 2:
        return P
    extra = ndim - (P.ndim - 1)
    return P.reshape(P.shape[:-2] + (1,) * extra + P.shape[-2:])
