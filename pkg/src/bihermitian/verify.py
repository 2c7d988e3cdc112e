"""Randomised self-checks for the pointwise algebra, the Hopf geometry and the Hodge solver.

Each suite returns a list of :class:`Check` records; a suite passes when
every check does.
"""
from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from . import hopf
from . import pointwise as pw

SUITES = ("pointwise", "geometry", "hodge")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float
    cases: int = 1

    def to_dict(self):
        return {"suite": self.suite, "name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "threshold": float(self.threshold), "cases": int(self.cases)}


def _check(suite, name, value, threshold, cases=1, above=False):
    value = float(value)
    ok = value > threshold if above else value < threshold
    return Check(suite, name, bool(ok and np.isfinite(value)), value, threshold, cases)


# ---------------------------------------------------------------- random pointwise data


def _complex_linear(rng, n):
    """Random invertible real 4x4 matrices commuting with the standard J."""
    a = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
    u, _, vh = np.linalg.svd(a)
    a = u @ (np.exp(rng.uniform(-0.5, 0.5, (n, 2)))[..., None] * vh)
    M = np.zeros((n, 4, 4))
    M[:, 0::2, 0::2] = a.real
    M[:, 1::2, 1::2] = a.real
    M[:, 0::2, 1::2] = -a.imag
    M[:, 1::2, 0::2] = a.imag
    return M


def _bounded_frames(rng, n, spread=0.7):
    """Random real frames with singular values in ``[exp(-spread), exp(spread)]``."""
    u, _, vh = np.linalg.svd(rng.standard_normal((n, 4, 4)))
    return u @ (np.exp(rng.uniform(-spread, spread, (n, 4)))[..., None] * vh)


def random_pointwise_data(rng, n, q_scale=0.3):
    """``(J, F, Q)`` in a random frame: J integrable-type, F positive (1,1), Q of type (2,0)+(0,2)."""
    A = _bounded_frames(rng, n)
    Ainv = np.linalg.inv(A)
    J = A @ pw.STANDARD_J @ Ainv
    B = _complex_linear(rng, n)
    g0 = pw.T(B) @ B
    F = pw.T(Ainv) @ (g0 @ pw.STANDARD_J) @ Ainv
    phi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    Q0, _ = pw.holomorphic_bivector(phi)
    Q = A @ Q0 @ pw.T(A)
    # keep the fixed-point map contracting
    s = q_scale / (pw.norm(Q) * pw.norm(F) + 1e-300)
    return J, F, Q * s[:, None, None]


def pointwise_suite(seed=42, n=10_000):
    rng = np.random.default_rng(seed)
    out = []
    S = "pointwise"
    J, F, Q = random_pointwise_data(rng, n)

    out.append(_check(S, "J squares to -1", np.max(pw.norm(J @ J + np.eye(4))), 1e-10, n))
    out.append(_check(S, "Q anticommutes with J", np.max(pw.anticommutes(Q, J) / pw.norm(Q)), 1e-10, n))

    # trivial Gualtieri cases
    out.append(_check(S, "gualtieri Q=0 on (1,1)", np.max(pw.norm(pw.gualtieri_residual(F, 0 * Q, J))
                                                          / pw.norm(F)), 1e-12, n))
    out.append(_check(S, "gualtieri omega=0", np.max(pw.norm(pw.gualtieri_residual(0 * F, Q, J))), 1e-300, n))

    # Lemma: (1,1)-part of sum omega_i Q omega_j vanishes for arbitrary (1,1)-parts
    terms = [F]
    worst = 0.0
    for order in range(2, 6):
        S_n = sum(terms[i - 1] @ Q @ terms[order - i - 1] for i in range(1, order))
        scale = sum(pw.norm(terms[i - 1]) * pw.norm(Q) * pw.norm(terms[order - i - 1]) for i in range(1, order))
        worst = max(worst, float(np.max(pw.norm(pw.invariant_project(S_n, J)) / scale)))
        anti = pw.anti_project(-pw.jstar(J) @ (0.5 * S_n), J)
        free = rng.standard_normal((n, 4, 4))
        free = pw.invariant_project(free - pw.T(free), J)
        terms.append(anti + 0.1 * free)
    out.append(_check(S, "lemma (1,1)-part vanishes", worst, 1e-10, 4 * n))

    # fixed point oracle
    omega, _ = pw.fixed_point_solve(F, Q, J, tol=1e-11)
    Jm = pw.build_jminus(omega, Q, J)
    out.append(_check(S, "fixed point J_-^2 + 1", np.max(pw.norm(Jm @ Jm + np.eye(4))), 1e-10, n))
    g, positive = pw.build_metric(omega, J, Jm)
    gn = pw.norm(g)
    out.append(_check(S, "metric positive", float(np.mean(~positive)), 1e-300, n))
    out.append(_check(S, "J_+ orthogonal", np.max(pw.orthogonality_defect(g, J) / gn), 1e-10, n))
    out.append(_check(S, "J_- orthogonal", np.max(pw.orthogonality_defect(g, Jm) / gn), 1e-10, n))
    out.append(_check(S, "metric symmetric", np.max(pw.metric_symmetry_defect(omega, J, Jm) / gn), 1e-10, n))
    p = pw.angle_p(J, Jm)
    out.append(_check(S, "p in [-1, 1]", np.max(np.abs(p)) - 1.0, 1e-12, n))
    # inverse direction: omega is recovered from (g, J+, J-)
    rec = pw.extract_omega(g, J, Jm)
    out.append(_check(S, "invariant part of extracted omega", np.max(pw.norm(pw.invariant_project(rec, J) - g @ J) / gn),
                      1e-10, n))
    return out


# ---------------------------------------------------------------- geometry


@contextlib.contextmanager
def corrupted_stencil(name="centered", factor=1.05):
    """Test hook: scale one stencil so that derivatives are wrong by a few percent."""
    offsets, coef = gridmod.STENCILS[name]
    gridmod.STENCILS[name] = (offsets, [c * factor for c in coef])
    try:
        yield
    finally:
        gridmod.STENCILS[name] = (offsets, coef)


def geometry_suite(seed=42, shape=(8, 9, 8, 8), lam=0.5, bundle=(-1, 0)):
    rng = np.random.default_rng(seed)
    S = "geometry"
    out = []
    params = gridmod.HopfParams.from_lambda(lam)
    L = gridmod.FlatBundle(*bundle)
    grid = gridmod.FundamentalGrid(params, *shape)
    fine = grid.refined()

    # derivative accuracy on a random homogeneous quadratic (multiplier lam^2)
    def poly_err(g):
        c = rng_poly
        x = g.x
        f = c[0] * x[..., 0] ** 2 + c[1] * x[..., 1] * x[..., 2] + c[2] * x[..., 3] * x[..., 0]
        df = np.stack([2 * c[0] * x[..., 0] + c[2] * x[..., 3], c[1] * x[..., 2], c[1] * x[..., 1],
                       c[2] * x[..., 0]], -1)
        return np.max(np.abs(g.ambient_partials(f, lam**2) - df)) / np.max(np.abs(df))

    rng_poly = rng.standard_normal(3)
    e0, e1 = poly_err(grid), poly_err(fine)
    out.append(_check(S, "stencil derivative error", e1, 1e-2))
    out.append(_check(S, "stencil refinement ratio", e0 / max(e1, 1e-300), 8.0, above=True))

    t_star = hopf.select_t_for_bundle(params, L)
    res = []
    for g in (grid, fine):
        _, F, lee = hopf.vaisman_family(g, t_star)
        res.append(hopf.lck_residual(F, lee))
    out.append(_check(S, "lcK residual refinement ratio", res[0] / res[1], 3.0, above=True))
    _, F, lee = hopf.vaisman_family(grid, t_star)
    out.append(_check(S, "holonomy ratio", abs(hopf.holonomy_check(lee, L) - 1.0), 1e-6))
    g_t, _, _ = hopf.vaisman_family(grid, t_star)
    out.append(_check(S, "degree negative", hopf.degree_check(g_t, lee), 0.0))
    out.append(_check(S, "sigma multiplier", abs(hopf.measured_seam_factor(grid, L) - L.real_factor(params)), 1e-12))
    Ft = hopf.twisted_representative(F, lee)
    from .deform import closedness

    closed = [closedness(g, hopf.twisted_representative(*hopf.vaisman_family(g, t_star)[1:]).values, Ft.factor)
              for g in (grid, fine)]
    out.append(_check(S, "twisted lcK form closed, refinement ratio", closed[0] / closed[1], 3.0, above=True))
    return out


# ---------------------------------------------------------------- hodge


def hodge_suite(seed=42, shape=(8, 9, 8, 8), lam=0.5):
    from .hodge import DolbeaultComplex, SolverConfig, Twisted02Scalar

    rng = np.random.default_rng(seed)
    S = "hodge"
    out = []
    params = gridmod.HopfParams.from_lambda(lam)
    grid = gridmod.FundamentalGrid(params, *shape)
    g, _, _ = hopf.vaisman_family(grid, 0.5)
    mu_star = 0.5

    def rand(*extra):
        return rng.standard_normal(grid.shape + extra) + 1j * rng.standard_normal(grid.shape + extra)

    for mode in ("transpose", "pole-corrected"):
        dc = DolbeaultComplex(grid, g, mu_star, adjoint=mode)
        b = (rand(), rand())
        u = rand()
        lhs = dc.inner02(dc.dbar_dual(b), u)
        rhs = dc.inner01(b, dc.dbar_adjoint(u))
        out.append(_check(S, f"adjoint identity ({mode})", abs(lhs - rhs) / abs(lhs), 1e-12))
    dc = DolbeaultComplex(grid, g, mu_star, adjoint="transpose")
    x0 = rand()
    alpha = dc.laplacian_apply(Twisted02Scalar(x0, mu_star))
    t0 = time.perf_counter()
    x, stats = dc.green(alpha, SolverConfig(rel_tol=1e-13, max_iter=20000))
    out.append(_check(S, "apply-then-solve recovery", np.linalg.norm(x.values - x0) / np.linalg.norm(x0), 1e-10))
    out.append(_check(S, "solve time [s]", time.perf_counter() - t0, 120.0))
    # smooth oracle on the standard Vaisman metric: Box(1/|z|^2) = 2/|z|^2 at mu* = 1
    g1, _, _ = hopf.vaisman_family(grid, 1.0)
    u = (1.0 / grid.rho**2).astype(complex)
    errs = []
    for mode in ("transpose", "pole-corrected"):
        dc = DolbeaultComplex(grid, g1, 1.0, adjoint=mode)
        x, _ = dc.green(Twisted02Scalar(u, 1.0))
        errs.append(np.max(np.abs(x.values - u / 2)) / np.max(np.abs(u / 2)))
    out.append(_check(S, "pole-corrected oracle beats transpose", errs[1] / errs[0], 1.0))
    return out


def run_suite(name, seed=42):
    if name == "all":
        checks = []
        for s in SUITES:
            checks += run_suite(s, seed)
        return checks
    if name == "pointwise":
        return pointwise_suite(seed)
    if name == "geometry":
        return geometry_suite(seed)
    if name == "hodge":
        return hodge_suite(seed)
    raise ValueError(f"unknown suite {name!r}")
