"""Fundamental-domain grid of a diagonal Hopf surface and equivariant fields on it.

Points of C^2 \\ 0 are parametrised by

    z1 = r0 lam**s cos(eta) exp(i xi1),   z2 = r0 lam**s sin(eta) exp(i xi2)

with s in [0, 1), eta staggered in (0, pi/2) and xi1, xi2 periodic.  The
contraction multiplies z by lam and shifts s by one, so a field that
transforms by a constant under the contraction is stored on s in [0, 1)
and continued across the seam by that constant.

All tensor components are stored in the ambient real frame
(x1, y1, x2, y2) of C^2, so the complex structure is the constant standard
matrix and the chart only enters through derivatives and quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

CENTERED4 = ((-2, -1, 1, 2), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)
# forward-biased 4th order; its symbol vanishes only at zero frequency
BIASED4 = ((-1, 0, 1, 2, 3), np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0)
STENCILS = {"centered": CENTERED4, "biased": BIASED4}

# number of lower (form) and upper (vector) indices per field kind
KIND_INDICES = {
    "scalar": (0, 0),
    "form1": (1, 0),
    "form2": (2, 0),
    "form3": (3, 0),
    "form4": (4, 0),
    "metric": (2, 0),
    "vector": (0, 1),
    "bivector": (0, 2),
    "endo": (1, 1),
}
KIND_RANK = {"scalar": 0, "form1": 1, "vector": 1, "form2": 2, "metric": 2,
             "bivector": 2, "endo": 2, "form3": 3, "form4": 4}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HopfParams:
    """Contraction ``(z1, z2) -> (a1 z1, a2 z2)``."""

    a1: complex
    a2: complex
    numeric_backend_real: bool = True

    def __post_init__(self):
        if not 0 < abs(self.a1) <= abs(self.a2) < 1:
            raise ConfigError("need 0 < |a1| <= |a2| < 1")
        if self.numeric_backend_real:
            if self.a1 != self.a2 or complex(self.a1).imag != 0 or not 0 < complex(self.a1).real < 1:
                raise ConfigError(
                    "the grid backend only supports a1 = a2 = lambda in (0, 1); "
                    "no closed-form lcK metric is available for a1 != a2"
                )

    @classmethod
    def from_lambda(cls, lam: float) -> "HopfParams":
        return cls(lam, lam)

    @property
    def lam(self) -> float:
        return float(complex(self.a1).real)

    @property
    def c0(self) -> float:
        """Number attached to the Lee class of the Vaisman metric g0."""
        return abs(self.a1) * abs(self.a2)


@dataclass(frozen=True)
class FlatBundle:
    """Flat bundle with multiplier ``(a1**p1 * a2**p2) ** power``."""

    p1: int
    p2: int
    power: int = 1

    def factor(self, params: HopfParams) -> complex:
        return (complex(params.a1) ** self.p1 * complex(params.a2) ** self.p2) ** self.power

    def real_factor(self, params: HopfParams) -> float:
        mu = self.factor(params)
        if abs(mu.imag) > 1e-14 * abs(mu):
            raise ConfigError(f"bundle ({self.p1},{self.p2}) is not of real type: mu = {mu}")
        return mu.real

    def dual(self) -> "FlatBundle":
        return FlatBundle(self.p1, self.p2, -self.power)

    def to_dict(self):
        return {"p1": self.p1, "p2": self.p2, "power": self.power}


class FundamentalGrid:
    def __init__(self, params: HopfParams, n_s: int, n_eta: int, n_xi1: int, n_xi2: int, r0: float = 1.0):
        if not params.numeric_backend_real:
            raise ConfigError("grid requires the real backend (a1 = a2 = lambda)")
        if n_xi1 % 2 or n_xi2 % 2:
            raise ConfigError("n_xi1 and n_xi2 must be even (pole reflection uses a shift by pi)")
        if min(n_s, n_xi1, n_xi2) < 6 or n_eta < 3:
            raise ConfigError("grid too coarse for the 4th-order stencils")
        self.params = params
        self.lam = params.lam
        self.r0 = r0
        self.shape = (n_s, n_eta, n_xi1, n_xi2)
        self.N = n_s * n_eta * n_xi1 * n_xi2
        self.s = np.arange(n_s) / n_s
        self.eta = (np.arange(n_eta) + 0.5) * (np.pi / 2) / n_eta
        self.xi1 = np.arange(n_xi1) * 2 * np.pi / n_xi1
        self.xi2 = np.arange(n_xi2) * 2 * np.pi / n_xi2
        self.h = np.array([1.0 / n_s, np.pi / 2 / n_eta, 2 * np.pi / n_xi1, 2 * np.pi / n_xi2])

    # ------------------------------------------------------------ geometry

    def __repr__(self):
        return f"FundamentalGrid(lam={self.lam}, shape={self.shape})"

    @cached_property
    def mesh(self):
        return np.meshgrid(self.s, self.eta, self.xi1, self.xi2, indexing="ij")

    @staticmethod
    def chart(lam, r0, s, eta, xi1, xi2):
        rho = r0 * lam**s
        z1 = rho * np.cos(eta) * np.exp(1j * xi1)
        z2 = rho * np.sin(eta) * np.exp(1j * xi2)
        return z1, z2

    @cached_property
    def z(self):
        return self.chart(self.lam, self.r0, *self.mesh)

    @cached_property
    def x(self):
        z1, z2 = self.z
        return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)

    @cached_property
    def rho(self):
        return self.r0 * self.lam ** self.mesh[0]

    @cached_property
    def jac(self):
        """``jac[..., a, i] = d x^a / d q^i`` for grid coordinates q = (s, eta, xi1, xi2)."""
        s, eta, xi1, xi2 = self.mesh
        rho = self.rho
        ll = np.log(self.lam)
        c, sn = np.cos(eta), np.sin(eta)
        J = np.zeros(self.shape + (4, 4))
        x = self.x
        J[..., :, 0] = ll * x
        J[..., 0, 1] = -rho * sn * np.cos(xi1)
        J[..., 1, 1] = -rho * sn * np.sin(xi1)
        J[..., 2, 1] = rho * c * np.cos(xi2)
        J[..., 3, 1] = rho * c * np.sin(xi2)
        J[..., 0, 2] = -x[..., 1]
        J[..., 1, 2] = x[..., 0]
        J[..., 2, 3] = -x[..., 3]
        J[..., 3, 3] = x[..., 2]
        return J

    @cached_property
    def invjac(self):
        """``invjac[..., i, a] = d q^i / d x^a``."""
        return np.linalg.inv(self.jac)

    @cached_property
    def fejer_eta(self):
        """Weights for integrals of f(eta) sin(eta) cos(eta) d eta over (0, pi/2).

        The staggered nodes are Chebyshev points in u = sin(eta)^2, so this is
        Fejer's first rule in u.
        """
        n = self.shape[1]
        theta = np.pi - (2 * np.arange(n) + 1) * np.pi / (2 * n)
        k = np.arange(1, n // 2 + 1)
        w = (2.0 / n) * (1 - 2 * np.sum(np.cos(2 * np.outer(theta, k)) / (4 * k**2 - 1), axis=1))
        return 0.25 * w

    @cached_property
    def weights(self):
        """Quadrature weights for integrals over the fundamental domain (flat volume)."""
        ns, ne, n1, n2 = self.shape
        ll = abs(np.log(self.lam))
        w_eta = self.fejer_eta[None, :, None, None]
        return (ll * self.rho**4) * w_eta * (self.h[0] * self.h[2] * self.h[3]) * np.ones(self.shape)

    @cached_property
    def smooth_weights(self):
        """Midpoint weights in eta; smooth across nodes, used for discrete adjoints."""
        ll = abs(np.log(self.lam))
        w_eta = (np.sin(self.eta) * np.cos(self.eta) * self.h[1])[None, :, None, None]
        return (ll * self.rho**4) * w_eta * (self.h[0] * self.h[2] * self.h[3])

    def integrate(self, f):
        """Integral over the fundamental domain of a scalar density (flat volume)."""
        return float(np.sum(self.weights * f))

    # ------------------------------------------------------------ neighbours

    def neighbor(self, axis: int, offset: int):
        """Flat source index and seam-crossing count for the node at ``q + offset*e_axis``.

        Returns ``(src, wraps)``; a field with component factor ``kappa`` has
        value ``kappa**wraps * f[src]`` there.
        """
        key = (axis, offset)
        cache = self.__dict__.setdefault("_nbr", {})
        if key in cache:
            return cache[key]
        ns, ne, n1, n2 = self.shape
        idx = np.indices(self.shape)
        i_s, i_e, i_1, i_2 = (a.copy() for a in idx)
        wraps = np.zeros(self.shape, dtype=np.int64)
        if axis == 0:
            j = i_s + offset
            wraps = np.floor_divide(j, ns)
            i_s = np.mod(j, ns)
        elif axis == 1:
            j = i_e + offset
            low = j < 0
            high = j >= ne
            # reflection through z2 = 0: eta -> -eta, xi2 -> xi2 + pi
            j = np.where(low, -1 - j, j)
            i_2 = np.where(low, (i_2 + n2 // 2) % n2, i_2)
            # reflection through z1 = 0: eta -> pi - eta, xi1 -> xi1 + pi
            j = np.where(high, 2 * ne - 1 - j, j)
            i_1 = np.where(high, (i_1 + n1 // 2) % n1, i_1)
            if np.any((j < 0) | (j >= ne)):
                raise ConfigError("stencil wider than the eta grid")
            i_e = j
        elif axis == 2:
            i_1 = np.mod(i_1 + offset, n1)
        else:
            i_2 = np.mod(i_2 + offset, n2)
        src = np.ravel_multi_index((i_s, i_e, i_1, i_2), self.shape).ravel()
        cache[key] = (src, wraps.ravel())
        return cache[key]

    def shifted(self, values, axis, offset, kappa=1.0):
        src, wraps = self.neighbor(axis, offset)
        flat = values.reshape((self.N,) + values.shape[4:])
        out = flat[src]
        if axis == 0 and kappa != 1.0:
            mult = float(kappa) ** wraps
            out = out * mult.reshape((-1,) + (1,) * (values.ndim - 4))
        return out.reshape(values.shape)

    def grid_partial(self, values, axis, kappa=1.0, stencil="centered"):
        offsets, coef = STENCILS[stencil]
        out = np.zeros(values.shape, dtype=np.result_type(values, float))
        for o, c in zip(offsets, coef):
            out += c * self.shifted(values, axis, o, kappa)
        return out / self.h[axis]

    def ambient_partials(self, values, kappa=1.0, stencil="centered"):
        """Ambient partial derivatives; the derivative index is appended last."""
        comp = values.shape[4:]
        out = np.zeros(values.shape + (4,), dtype=np.result_type(values, float))
        ij = self.invjac.reshape(self.shape + (1,) * len(comp) + (4, 4))
        for i in range(4):
            gp = self.grid_partial(values, i, kappa, stencil)
            out += gp[..., None] * ij[..., i, :]
        return out

    # ------------------------------------------------------------ overlays

    def overlay(self, curve: str):
        """Exact samples of the elliptic curves: E2 = {z2 = 0}, E1 = {z1 = 0}.

        Returns a dict with complex coordinates ``z1, z2`` of shape (n_s, n_xi).
        """
        s = self.s[:, None]
        rho = self.r0 * self.lam**s
        if curve == "E2":
            z1 = rho * np.exp(1j * self.xi1[None, :])
            z2 = np.zeros_like(z1)
        elif curve == "E1":
            z2 = rho * np.exp(1j * self.xi2[None, :])
            z1 = np.zeros_like(z2)
        else:
            raise ValueError(f"unknown curve {curve!r}")
        return {"z1": z1, "z2": z2, "x": np.stack([z1.real, z1.imag, z2.real, z2.imag], -1)}

    def to_overlay(self, values, curve: str):
        """Interpolate a grid field onto a curve overlay (cubic, through the pole reflection)."""
        w = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
        if curve == "E2":
            # eta = -3h/2, -h/2 (xi2 + pi), +h/2, +3h/2 (xi2) -> eta = 0; average over xi2
            v0, v1 = values[:, 0], values[:, 1]
            est = w[1] * v0 + w[2] * np.roll(v0, -self.shape[3] // 2, axis=2)
            est = est + w[0] * np.roll(v1, -self.shape[3] // 2, axis=2) + w[3] * v1
            return est.mean(axis=2)
        if curve == "E1":
            v0, v1 = values[:, -1], values[:, -2]
            est = w[1] * v0 + w[2] * np.roll(v0, -self.shape[2] // 2, axis=1)
            est = est + w[0] * np.roll(v1, -self.shape[2] // 2, axis=1) + w[3] * v1
            return est.mean(axis=1)
        raise ValueError(f"unknown curve {curve!r}")

    def refined(self, factor=2):
        ns, ne, n1, n2 = self.shape
        return FundamentalGrid(self.params, ns * factor, ne * factor - 1, n1 * factor, n2 * factor, self.r0)

    def to_dict(self):
        ns, ne, n1, n2 = self.shape
        return {"n_s": ns, "n_eta": ne, "n_xi1": n1, "n_xi2": n2}


def component_factor(kind: str, factor: float, lam: float) -> float:
    """Multiplier of the ambient components of a tensor with automorphy ``factor``."""
    k, l = KIND_INDICES[kind]
    return factor * lam ** (l - k)


@dataclass
class EquivariantField:
    """Grid-sampled tensor field ``T`` with ``gamma^* T = factor * T``."""

    grid: FundamentalGrid
    values: np.ndarray
    kind: str
    factor: float = 1.0
    bundle: FlatBundle | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape[:4] != self.grid.shape:
            raise ConfigError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.kind not in KIND_INDICES:
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def kappa(self) -> float:
        return component_factor(self.kind, self.factor, self.grid.lam)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def with_values(self, values, **kw):
        args = dict(grid=self.grid, values=values, kind=self.kind, factor=self.factor, bundle=self.bundle)
        args.update(kw)
        return EquivariantField(**args)

    def seam_residual(self) -> float:
        """Relative mismatch between the field continued past s = 1 and ``kappa * f(s = 0)``.

        The continuation is 4th-order polynomial extrapolation from the last
        four s-layers, so a smooth equivariant field gives O(h^4).
        """
        v = self.values
        # Lagrange extrapolation to s = 1 from s = 1 - k/n, k = 1..4
        w = np.array([4.0, -6.0, 4.0, -1.0])
        est = w[0] * v[-1] + w[1] * v[-2] + w[2] * v[-3] + w[3] * v[-4]
        ref = self.kappa * v[0]
        scale = max(np.max(np.abs(v)), 1e-300)
        return float(np.max(np.abs(est - ref)) / scale)
