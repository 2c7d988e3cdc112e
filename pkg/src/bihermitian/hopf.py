"""Geometry of the diagonal Hopf surface with a1 = a2 = lam.

Conventions fixed here and used throughout the package:

* Vaisman base metric ``g0 = sum |dz_i|^2 / |z|^2`` with Lee form
  ``theta0 = -d log |z|^2``.
* A flat bundle with multiplier ``mu`` has sections ``T`` on C^2 \\ 0 with
  ``gamma^* T = mu T``.  A closed 1-form theta corresponds to the bundle whose
  multiplier is ``exp(-period of theta along s)``, where the period is taken
  along the loop from z to gamma(z).  With this normalisation the class of
  theta0 gives ``c0 = |a1||a2|`` and ``t theta0`` gives ``c0**t``.
* A d_theta-closed form F is identified with the closed L*-valued form
  ``exp(-h) F`` (``dh = theta``), whose multiplier is that of theta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import forms
from .grid import ConfigError, EquivariantField, FlatBundle, FundamentalGrid, HopfParams
from .pointwise import STANDARD_J, holomorphic_bivector


@dataclass
class LeeData:
    theta: EquivariantField
    t_parameter: float
    primitive: np.ndarray | None = None  # h with dh = theta on the universal cover

    @property
    def grid(self):
        return self.theta.grid


def standard_complex_structure(grid: FundamentalGrid) -> EquivariantField:
    """Multiplication by i on C^2, which every chart node sees as the same ambient matrix."""
    J = np.broadcast_to(STANDARD_J, grid.shape + (4, 4)).copy()
    return EquivariantField(grid, J, "endo")


def grid_frame_complex_structure(grid: FundamentalGrid) -> np.ndarray:
    """J in grid coordinates (s, eta, xi1, xi2): ``jac^-1 J jac``."""
    return grid.invjac @ STANDARD_J @ grid.jac


# ---------------------------------------------------------------- Vaisman family


def vaisman_lee(grid: FundamentalGrid, t: float) -> LeeData:
    x, rho2 = grid.x, grid.rho**2
    theta = -2.0 * t * x / rho2[..., None]
    return LeeData(EquivariantField(grid, theta, "form1"), t, primitive=-t * np.log(rho2))


def vaisman_family(grid: FundamentalGrid, t: float):
    """0-type deformation ``g_t`` of the Hopf-Vaisman metric.

    Returns ``(g_t, F_t, lee_t)`` with ``F_t(X, Y) = g_t(JX, Y)`` (map form
    ``g_t J``) and Lee form ``t theta0``.
    """
    if t <= 0:
        raise ConfigError("t must be positive")
    rho2 = grid.rho**2
    theta0 = -2.0 * grid.x / rho2[..., None]
    g0 = np.eye(4) / rho2[..., None, None]
    jtheta = theta0 @ STANDARD_J  # (J* theta)_a up to sign; only the square enters
    norm2 = np.einsum("...a,...ab,...b->...", theta0, rho2[..., None, None] * np.eye(4), theta0)
    outer = theta0[..., :, None] * theta0[..., None, :] + jtheta[..., :, None] * jtheta[..., None, :]
    g = g0 + ((t - 1.0) / norm2)[..., None, None] * outer
    F = g @ STANDARD_J
    lee = vaisman_lee(grid, t)
    return (
        EquivariantField(grid, g, "metric"),
        EquivariantField(grid, F, "form2"),
        lee,
    )


def twisted_representative(field: EquivariantField, lee: LeeData) -> EquivariantField:
    """``exp(-h) * field`` with ``dh = theta``: the L*-valued form attached to a d_theta-closed form."""
    if lee.primitive is None:
        raise ValueError("Lee data carries no primitive")
    w = np.exp(-lee.primitive)
    mult = lee_multiplier(lee)
    vals = field.values * w.reshape(w.shape + (1,) * (field.values.ndim - 4))
    return field.with_values(vals, factor=field.factor * mult)


def lee_multiplier(lee: LeeData) -> float:
    """Multiplier of the flat bundle attached to theta (see module docstring)."""
    return float(np.exp(-np.mean(lee_period(lee))))


def lee_period(lee: LeeData) -> np.ndarray:
    """Period of theta along s at every angular node (periodic trapezoid in s)."""
    grid = lee.grid
    ds = np.einsum("...a,...a->...", lee.theta.values, grid.jac[..., :, 0])
    return ds.mean(axis=0)


def lck_residual(F: EquivariantField, lee: LeeData, stencil="centered") -> float:
    """Sup norm of ``dF - theta ^ F``."""
    res = novikov_d(F, lee, stencil=stencil)
    return forms.sup_norm(res.values)


# ---------------------------------------------------------------- bundles and sigma


def select_t_for_bundle(params: HopfParams, bundle: FlatBundle) -> float:
    """Vaisman parameter whose Lee class gives the dual bundle: ``c0**t = 1/mu``."""
    mu = bundle.real_factor(params)
    if mu <= 1.0:
        raise ConfigError(f"bundle multiplier mu = {mu} must exceed 1 for the Vaisman family to reach L*")
    c0 = params.c0
    return math.log(1.0 / mu) / math.log(c0)


def sigma_exponents(bundle: FlatBundle):
    if bundle.power != 1:
        raise ConfigError("sigma is defined for the bundle itself (power 1)")
    m = (bundle.p1 + 1, bundle.p2 + 1)
    if min(m) < 0:
        raise ConfigError(f"K* x L_({bundle.p1},{bundle.p2}) has no monomial section")
    return m


def sigma_coefficient(z1, z2, bundle: FlatBundle):
    m1, m2 = sigma_exponents(bundle)
    return z1**m1 * z2**m2


def sigma_section(grid: FundamentalGrid, bundle: FlatBundle) -> EquivariantField:
    """``z1^m1 z2^m2 d/dz1 ^ d/dz2`` with ``(m1, m2) = (p1 + 1, p2 + 1)``.

    The returned field is ``Q = Re(sigma)`` (map form); the imaginary part and
    the complex coefficient are kept in ``meta``.
    """
    mu = bundle.real_factor(grid.params)
    phi = sigma_coefficient(*grid.z, bundle)
    re, im = holomorphic_bivector(phi)
    return EquivariantField(
        grid, re, "bivector", factor=mu, bundle=bundle,
        meta={"im": im, "phi": phi, "exponents": sigma_exponents(bundle)},
    )


def sigma_zero_curves(bundle: FlatBundle):
    m1, m2 = sigma_exponents(bundle)
    curves = []
    if m2 > 0:
        curves.append("E2")
    if m1 > 0:
        curves.append("E1")
    return curves


def measured_seam_factor(grid: FundamentalGrid, bundle: FlatBundle) -> float:
    """Multiplier of sigma recomputed from samples at s = 0 and s = 1 (nodes mapped by gamma)."""
    s, eta, xi1, xi2 = grid.mesh
    lam = grid.lam
    z0 = grid.chart(lam, grid.r0, s[0], eta[0], xi1[0], xi2[0])
    z1 = grid.chart(lam, grid.r0, s[0] + 1.0, eta[0], xi1[0], xi2[0])
    phi0 = sigma_coefficient(*z0, bundle)
    phi1 = sigma_coefficient(*z1, bundle)
    # sigma(gamma z) = mu * gamma_* sigma(z), gamma_* (d1 ^ d2) = lam^2 d1 ^ d2
    mask = np.abs(phi0) > 1e-12 * np.max(np.abs(phi0))
    ratio = phi1[mask] / (lam**2 * phi0[mask])
    if np.ptp(ratio.real) > 1e-12 * abs(ratio.real.mean()) or np.max(np.abs(ratio.imag)) > 1e-12:
        raise ConfigError("sigma is not equivariant with a constant multiplier")
    return float(ratio.real.mean())


# ---------------------------------------------------------------- Novikov complex


def _as_components(field: EquivariantField):
    k = {"scalar": 0, "form1": 1, "form2": 2, "form3": 3, "form4": 4}[field.kind]
    vals = forms.comp_from_map(field.values) if field.kind == "form2" else field.values
    return vals, k


def _from_components(vals, k, like: EquivariantField):
    kind = ["scalar", "form1", "form2", "form3", "form4"][k]
    if k == 2:
        vals = forms.map_from_comp(vals)
    return EquivariantField(like.grid, vals, kind, factor=like.factor, bundle=like.bundle)


def novikov_d(alpha: EquivariantField, lee: LeeData, stencil="centered") -> EquivariantField:
    """``d_theta alpha = d alpha - theta ^ alpha``."""
    vals, k = _as_components(alpha)
    if k >= 4:
        return EquivariantField(alpha.grid, np.zeros(alpha.grid.shape), "scalar")
    d = forms.exterior_d(alpha.grid, vals, k, alpha.kappa, stencil)
    th = lee.theta.values
    if np.iscomplexobj(vals):
        th = th.astype(complex)
    d = d - forms.wedge1(th, vals, k)
    return _from_components(d, k + 1, alpha)


def dolbeault_split_theta(alpha: EquivariantField, lee: LeeData, J: EquivariantField, stencil="centered"):
    """Split ``d_theta alpha`` into ``(del_theta alpha, delbar_theta alpha)``."""
    vals, k = _as_components(alpha)
    Jv = J.values
    vals = vals.astype(complex)
    d_part = np.zeros(vals.shape[:4] + (4,) * (k + 1), dtype=complex)
    db_part = np.zeros_like(d_part)
    for p in range(k + 1):
        q = k - p
        piece = forms.type_component(vals, Jv, p, q) if k > 0 else vals
        dpiece = novikov_d(_from_components(piece, k, alpha), lee, stencil)
        dvals, _ = _as_components(dpiece)
        d_part += forms.type_component(dvals, Jv, p + 1, q)
        db_part += forms.type_component(dvals, Jv, p, q + 1)
    return _from_components(d_part, k + 1, alpha), _from_components(db_part, k + 1, alpha)


# ---------------------------------------------------------------- global checks


def degree_check(g: EquivariantField, lee: LeeData) -> float:
    """``-(1/2 pi) * integral of |theta|_g^2 dv_g`` over the fundamental domain."""
    G = g.values
    det = np.linalg.det(G)
    if np.any(det <= 0):
        raise ConfigError("degenerate volume element")
    th = lee.theta.values
    norm2 = np.einsum("...a,...a->...", th, np.linalg.solve(G, th[..., None])[..., 0])
    return -g.grid.integrate(norm2 * np.sqrt(det)) / (2 * np.pi)


def holonomy_check(lee: LeeData, bundle: FlatBundle, closed_tol=1e-6) -> float:
    """Ratio of ``exp(-period of theta)`` to the dual multiplier ``1/mu(L)``."""
    grid = lee.grid
    dth = forms.exterior_d(grid, lee.theta.values, 1, lee.theta.kappa)
    scale = max(np.max(np.abs(lee.theta.values)), 1e-300)
    if np.max(np.abs(dth)) > closed_tol * scale:
        raise ConfigError(f"theta is not closed (|d theta| = {np.max(np.abs(dth)):.2e})")
    mu_star = 1.0 / bundle.real_factor(grid.params)
    return float(np.exp(-np.mean(lee_period(lee))) / mu_star)
