"""Bi-Hermitian deformations from the Hamiltonian flow of an lcK potential.

For an L*-valued potential ``f`` with ``F = dd^c f`` and ``X = Q(df)``, the
flow ``phi_s`` of X gives ``omega(t) = int_0^t (phi_s)_* F ds`` and
``J_- = -(phi_t)_* J``.  With the conventions of :mod:`bihermitian.pointwise`
one has ``L_X J = -Q F``; pushforwards (equivalently, pullbacks along the
flow of ``-X``) are what satisfy ``J_- = -J - Q omega`` to all orders.

Everything here is evaluated in closed form at arbitrary points of
C^2 \\ 0: the potential, its derivatives, sigma and its derivative.  The flow
commutes with the contraction, so characteristics are traced in ambient
coordinates without re-wrapping, and the flow Jacobian solves the variational
equation alongside each characteristic.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import hopf
from . import pointwise as pw
from .grid import ConfigError, EquivariantField, FlatBundle, FundamentalGrid, HopfParams

J0 = pw.STANDARD_J


class FlowError(RuntimeError):
    """A characteristic left every compact region of C^2 \\ 0."""


@dataclass
class Potential:
    """``f = scale * |z|^(2 r)``; a section of the bundle with multiplier ``lam^(2 r)``."""

    r: float
    scale: float
    params: HopfParams

    @property
    def factor(self) -> float:
        return self.params.lam ** (2 * self.r)

    def values(self, x):
        return self.scale * np.sum(x * x, axis=-1) ** self.r

    def grad(self, x):
        p = np.sum(x * x, axis=-1)[..., None]
        return self.scale * 2 * self.r * p ** (self.r - 1) * x

    def hess(self, x):
        p = np.sum(x * x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return self.scale * 2 * self.r * (p ** (self.r - 1) * np.eye(4) + (2 * self.r - 2) * p ** (self.r - 2) * outer)

    def ddc(self, x):
        """``dd^c f`` as a map form, with ``d^c f = J* df``."""
        dalpha = -(self.hess(x) @ J0)  # dalpha[c, b] = d_c (d^c f)_b
        comp = dalpha - pw.T(dalpha)
        return pw.T(comp)


def calibrated_potential(params: HopfParams, bundle: FlatBundle) -> Potential:
    """Radial potential of the lcK form attached to the dual of ``bundle``.

    The exponent is fixed by equivariance (``lam^(2r) = 1/mu``); the scale
    ``1/(4r)`` makes ``dd^c f`` equal the twisted Vaisman form at ``t = r``.
    """
    mu = bundle.real_factor(params)
    if mu <= 1.0:
        raise ConfigError(f"bundle multiplier mu = {mu} must exceed 1")
    r = math.log(1.0 / mu) / (2 * math.log(params.lam))
    return Potential(r, 1.0 / (4 * r), params)


def seam_check(pot: Potential, bundle: FlatBundle, x=None) -> float:
    """Relative mismatch of ``f(gamma x) = mu* f(x)`` at sample points."""
    params = pot.params
    mu_star = 1.0 / bundle.real_factor(params)
    if x is None:
        x = np.random.default_rng(0).standard_normal((32, 4))
    ratio = pot.values(params.lam * x) / pot.values(x)
    return float(np.max(np.abs(ratio / mu_star - 1.0)))


def lck_from_potential(grid: FundamentalGrid, pot: Potential, bundle: FlatBundle, tol=1e-12) -> EquivariantField:
    if seam_check(pot, bundle) > tol:
        raise ConfigError("potential does not transform with the dual multiplier of the bundle")
    if pot.scale == 0:
        raise ConfigError("zero potential")
    F = pot.ddc(grid.x)
    g = -F @ J0
    if not np.all(np.linalg.eigvalsh(0.5 * (g + pw.T(g)))[..., 0] > 0):
        raise ConfigError("dd^c f is not positive; not an lcK potential")
    return EquivariantField(grid, F, "form2", factor=pot.factor)


# ---------------------------------------------------------------- sigma in closed form


def _basis_bivectors():
    re1, _ = pw.holomorphic_bivector(np.array(1.0 + 0j))
    rei, _ = pw.holomorphic_bivector(np.array(1j))
    return re1, rei


def bivector_at(x, bundle: FlatBundle, with_derivative=True):
    """``Q = Re(phi sigma_0)`` and ``dQ[..., a, c, b] = d_b Q[a, c]`` at ambient points."""
    m1, m2 = hopf.sigma_exponents(bundle)
    z1 = x[..., 0] + 1j * x[..., 1]
    z2 = x[..., 2] + 1j * x[..., 3]
    phi = z1**m1 * z2**m2
    Qr, Qi = _basis_bivectors()
    Q = phi.real[..., None, None] * Qr + phi.imag[..., None, None] * Qi
    if not with_derivative:
        return Q, None
    d1 = m1 * z1 ** max(m1 - 1, 0) * z2**m2 if m1 else np.zeros_like(z1)
    d2 = m2 * z1**m1 * z2 ** max(m2 - 1, 0) if m2 else np.zeros_like(z2)
    dphi = np.stack([d1, 1j * d1, d2, 1j * d2], axis=-1)  # d phi / d x_b
    dQ = dphi.real[..., None, None, :] * Qr[..., None] + dphi.imag[..., None, None, :] * Qi[..., None]
    return Q, dQ


def hamiltonian_vector(x, pot: Potential, bundle: FlatBundle, with_jacobian=True):
    """``X = Q(df)`` and its Jacobian ``DX[a, b] = d_b X^a``."""
    Q, dQ = bivector_at(x, bundle, with_jacobian)
    gf = pot.grad(x)
    X = np.einsum("...ac,...c->...a", Q, gf)
    if not with_jacobian:
        return X, None
    DX = np.einsum("...acb,...c->...ab", dQ, gf) + Q @ pot.hess(x)
    return X, DX


def hamiltonian_field(grid: FundamentalGrid, pot: Potential, bundle: FlatBundle, tol=1e-12) -> EquivariantField:
    """X at the nodes; rejects configurations whose twists do not cancel."""
    mu = bundle.real_factor(grid.params)
    if abs(pot.factor * mu - 1.0) > tol:
        raise ConfigError("twist of the potential does not cancel the twist of sigma")
    X, _ = hamiltonian_vector(grid.x, pot, bundle, with_jacobian=False)
    # honest vector field: X(gamma x) = lam X(x)
    Xg, _ = hamiltonian_vector(grid.lam * grid.x, pot, bundle, with_jacobian=False)
    scale = max(np.max(np.abs(X)), 1e-300)
    if np.max(np.abs(Xg - grid.lam * X)) > 1e-10 * scale:
        raise ConfigError("X is not invariant under the contraction")
    return EquivariantField(grid, X, "vector", factor=1.0)


# ---------------------------------------------------------------- characteristics


@dataclass
class FlowConfig:
    t_final: float = 0.1
    n_steps: int = 16

    def __post_init__(self):
        if self.n_steps < 4 or self.n_steps % 2:
            raise ConfigError("n_steps must be even and at least 4 (composite Simpson)")
        if self.t_final < 0:
            raise ConfigError("t_final must be non-negative")


def _rhs(state, pot, bundle):
    x, M = state
    X, DX = hamiltonian_vector(x, pot, bundle)
    return X, DX @ M


def _check_escape(x, lo=1e-6, hi=1e6):
    rho = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(~np.isfinite(rho)) or np.any(rho < lo) or np.any(rho > hi):
        raise FlowError("characteristic escaped towards 0 or infinity; reduce the flow time")


def integrate_flow(x0, pot: Potential, bundle: FlatBundle, s: float, n_steps: int, visit=None):
    """RK4 for ``(x, D phi)``; ``visit(k, s_k, x, M)`` is called at every step including 0.

    Returns the final ``(x, M)``.
    """
    x = np.array(x0, dtype=float)
    M = np.broadcast_to(np.eye(4), x.shape[:-1] + (4, 4)).copy()
    h = s / n_steps
    if visit:
        visit(0, 0.0, x, M)
    for k in range(1, n_steps + 1):
        k1 = _rhs((x, M), pot, bundle)
        k2 = _rhs((x + 0.5 * h * k1[0], M + 0.5 * h * k1[1]), pot, bundle)
        k3 = _rhs((x + 0.5 * h * k2[0], M + 0.5 * h * k2[1]), pot, bundle)
        k4 = _rhs((x + h * k3[0], M + h * k3[1]), pot, bundle)
        x = x + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        M = M + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        _check_escape(x)
        if visit:
            visit(k, k * h, x, M)
    return x, M


def omega_flow(grid: FundamentalGrid, pot: Potential, bundle: FlatBundle, cfg: FlowConfig, trace=None):
    """``int_0^t (phi_s)_* F ds`` at the nodes (composite Simpson on the RK4 steps).

    ``(phi_s)_* F`` at y is the pullback of F along the backward
    characteristic ``x = phi_{-s}(y)``.  A :class:`Trace` passed as ``trace``
    collects ``(node, s, x, det D phi_{-s})`` for its nodes.
    """
    t, n = cfg.t_final, cfg.n_steps
    acc = np.zeros(grid.shape + (4, 4))
    if t == 0:
        return acc
    h = t / n
    nodes = getattr(trace, "nodes", None)

    def visit(k, s, x, M):
        w = 1.0 if k in (0, n) else (4.0 if k % 2 else 2.0)
        acc[...] += w * (pw.T(M) @ pot.ddc(x) @ M)
        if trace is not None and nodes is not None:
            xf = x.reshape(-1, 4)[nodes]
            det = np.linalg.det(M.reshape(-1, 4, 4)[nodes])
            for i, node in enumerate(nodes):
                trace.append((int(node), -s, *xf[i], det[i]))

    integrate_flow(grid.x, pot, bundle, -t, n, visit)
    return acc * (h / 3)


def pushforward_jminus(grid: FundamentalGrid, pot: Potential, bundle: FlatBundle, cfg: FlowConfig):
    """``-(phi_t)_* J`` at the nodes: trace back to ``x = phi_{-t}(y)`` and conjugate."""
    _, M = integrate_flow(grid.x, pot, bundle, -cfg.t_final, cfg.n_steps)
    # D phi_t(x) = (D phi_{-t}(y))^-1
    return -(np.linalg.inv(M) @ J0 @ M)


class Trace(list):
    def __init__(self, nodes):
        super().__init__()
        self.nodes = np.asarray(nodes, dtype=int)

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "s", "x1", "y1", "x2", "y2", "jac_det"])
            for row in self:
                w.writerow([row[0]] + [f"{v:.12e}" for v in row[1:]])


# ---------------------------------------------------------------- diagnostics


def flow_report(grid, pot, bundle, cfg: FlowConfig):
    om = omega_flow(grid, pot, bundle, cfg)
    Q, _ = bivector_at(grid.x, bundle, with_derivative=False)
    Jm = pushforward_jminus(grid, pot, bundle, cfg)
    from .deform import relative_gualtieri

    direct = -J0 - Q @ om
    return {
        "omega": om,
        "gualtieri": relative_gualtieri(om, Q, J0) if cfg.t_final > 0 else 0.0,
        "pushforward_dev": float(np.max(pw.norm(Jm - direct))),
        "jminus": Jm,
    }


def cross_validate(series, grid, pot, bundle, ts, n_steps):
    """Discrepancy between flow and series at the given times; slope of the log-log fit."""
    from .deform import assemble

    rows = []
    for t in ts:
        om_f = omega_flow(grid, pot, bundle, FlowConfig(t, n_steps))
        om_s = assemble(series, t)
        rows.append((float(t), float(np.max(pw.norm(om_f - om_s)))))
    ts_ = np.array([r[0] for r in rows])
    ds = np.array([r[1] for r in rows])
    slope = float(np.polyfit(np.log(ts_), np.log(ds), 1)[0]) if np.all(ds > 0) and len(rows) > 1 else math.inf
    return {"rows": rows, "slope": slope, "ratio_over_t": [d / t for t, d in rows]}
