"""Power-series deformation of an lcK form into a bi-Hermitian structure.

The series ``omega(t) = sum_n t^n omega_n`` starts at ``omega_1 = F`` (the
L*-valued representative of the lcK form) and is fixed order by order:

* anti-invariant part: ``J* omega_n^a = S_n / 2`` with
  ``S_n = sum_{i+j=n} omega_i Q omega_j``, solved pointwise;
* invariant part: ``omega_n^{1,1} = del beta + conj`` with
  ``beta = dbar^* G(omega_n^{0,2})``, which makes ``omega_n`` d-closed.

All 2-forms are real maps ``T -> T*`` in the ambient frame (see
:mod:`bihermitian.pointwise`), sampled on a :class:`FundamentalGrid` in the
untwisted trivialisation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import forms, hopf
from . import pointwise as pw
from .grid import ConfigError, EquivariantField, FlatBundle, FundamentalGrid, HopfParams
from .hodge import DolbeaultComplex, SolverConfig, Twisted02Scalar, anti_form_from_02, assemble_omega11, omega02_component

log = logging.getLogger(__name__)


class LemmaViolation(RuntimeError):
    """The (1,1)-part of the quadratic term did not vanish: an upstream convention bug."""


@dataclass
class Tolerances:
    gualtieri: float = 1e-6      # relative pointwise residual of omega(t)
    lemma: float = 1e-10         # (1,1)-part of S_n relative to its summands
    term: float = 1e-10          # term condition residual relative to |S_n|
    overlay: float = 1e-8        # |p + 1| on the zero curve of sigma
    delta_min: float = 0.0       # p must stay in (-1 + delta, 1 - delta) off the curve
    orthogonality: float = 1e-10
    nijenhuis_order: float = 2.0


@dataclass
class DeformConfig:
    N: int = 6
    t: float | None = None                      # None: half the positivity window
    t_scan: tuple = (1e-3, 10.0, 81)            # geometric scan (lo, hi, count)
    tolerances: Tolerances = field(default_factory=Tolerances)
    solver: SolverConfig = field(default_factory=SolverConfig)
    adjoint: str = "pole-corrected"
    stencil: str = "centered"

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.t is not None and self.t <= 0:
            raise ConfigError("t must be positive")
        lo, hi, n = self.t_scan
        if not 0 < lo < hi or n < 2:
            raise ConfigError("t_scan needs 0 < lo < hi and at least two points")


@dataclass
class DeformationSeries:
    grid: FundamentalGrid
    terms: list                     # map-form arrays omega_1 .. omega_N
    factor: float                   # automorphy factor mu* of every term
    J: np.ndarray
    Q: np.ndarray
    log: list = field(default_factory=list)

    @property
    def N(self):
        return len(self.terms)

    @property
    def norms(self):
        return [float(np.max(pw.norm(w))) for w in self.terms]

    def field(self, n):
        return EquivariantField(self.grid, self.terms[n - 1], "form2", factor=self.factor)


@dataclass
class BiHermitianStructure:
    omega: np.ndarray
    g: np.ndarray
    Jp: np.ndarray
    Jm: np.ndarray
    p: np.ndarray
    t: float
    report: dict
    overlay: dict = field(default_factory=dict)

    @property
    def valid(self):
        return self.report["valid"]


# ---------------------------------------------------------------- recursion


def quadratic_term(terms, Q, n):
    """``S_n = sum_{i+j=n} omega_i Q omega_j`` and the sum of summand norms."""
    S = np.zeros_like(terms[0])
    scale = np.zeros(terms[0].shape[:-2])
    for i in range(1, n):
        a, b = terms[i - 1], terms[n - i - 1]
        S += a @ Q @ b
        scale += pw.norm(a) * pw.norm(Q) * pw.norm(b)
    return S, scale


def lemma_certificate(S, scale, J):
    """Largest pointwise ratio ``|S^{1,1}| / sum |omega_i||Q||omega_j|``."""
    inv = pw.norm(pw.invariant_project(S, J))
    mask = scale > 0
    return float(np.max(inv[mask] / scale[mask])) if np.any(mask) else 0.0


def closedness(grid, omega_map, factor, stencil="centered"):
    """Sup of the twisted ``d omega`` relative to the sup of ``omega`` (gradient scale)."""
    comp = forms.comp_from_map(omega_map)
    kappa = EquivariantField(grid, omega_map, "form2", factor=factor).kappa
    d = forms.exterior_d(grid, comp, 2, kappa, stencil)
    scale = max(forms.sup_norm(comp), 1e-300)
    return forms.sup_norm(d) / scale


def recursion_step(n, series: DeformationSeries, hodge: DolbeaultComplex, tol: Tolerances,
                   solver: SolverConfig | None = None):
    """Compute ``omega_n`` from ``omega_1 .. omega_{n-1}``; returns ``(omega_n, info)``."""
    if n < 2 or len(series.terms) < n - 1:
        raise ValueError("recursion_step needs omega_1 .. omega_{n-1}")
    J, Q = series.J, series.Q
    S, scale = quadratic_term(series.terms, Q, n)
    cert = lemma_certificate(S, scale, J)
    if cert > tol.lemma:
        raise LemmaViolation(f"order {n}: (1,1)-part of the quadratic term is {cert:.3e} (tolerance {tol.lemma:.1e})")
    # J* is an involution up to sign: (J*)^-1 = -J*
    anti = pw.anti_project(-pw.jstar(J) @ (0.5 * S), J)
    info = {"n": n, "lemma_cert": cert}
    Smax = float(np.max(pw.norm(S)))
    if Smax == 0.0:
        info.update(term_residual=0.0, solver=None, norm=0.0)
        return np.zeros_like(anti), info
    u = omega02_component(forms.comp_from_map(anti))
    beta, stats = hodge.beta_of(Twisted02Scalar(u, series.factor), solver)
    om11 = forms.map_from_comp(assemble_omega11(hodge.del_beta(beta)))
    omega_n = anti + om11
    # order n of the Gualtieri condition: omega_n J - J* omega_n + S_n = 0
    res = pw.norm(omega_n @ J - pw.jstar(J) @ omega_n + S)
    info["term_residual"] = float(np.max(res) / Smax)
    if info["term_residual"] > tol.term:
        raise LemmaViolation(f"order {n}: term condition residual {info['term_residual']:.3e}")
    info["solver"] = stats.to_dict()
    info["norm"] = float(np.max(pw.norm(omega_n)))
    info["anti_roundtrip"] = float(np.max(np.abs(anti_form_from_02(u) - forms.comp_from_map(anti))))
    return omega_n, info


def _order_solver(solver, n):
    """Per-order copy of ``solver`` whose log goes to ``<stem>_n<n><suffix>``."""
    if solver is None or not solver.log_path:
        return solver
    base = Path(solver.log_path)
    return replace(solver, log_path=str(base.with_name(f"{base.stem}_n{n}{base.suffix}")))


def build_series(grid, F, Q, J, factor, N, hodge, tol, solver=None, progress=None):
    series = DeformationSeries(grid, [np.asarray(F, dtype=float)], factor, J, Q)
    series.log.append({"n": 1, "norm": float(np.max(pw.norm(F)))})
    for n in range(2, N + 1):
        w, info = recursion_step(n, series, hodge, tol, _order_solver(solver, n))
        series.terms.append(w)
        series.log.append(info)
        if progress:
            progress(info)
        log.info("order %d: |omega_n| = %.3e", n, info["norm"])
    return series


def assemble(series: DeformationSeries, t: float) -> np.ndarray:
    out = np.zeros_like(series.terms[0])
    for n in range(series.N, 0, -1):  # Horner
        out = t * (out + series.terms[n - 1])
    return out


def relative_gualtieri(omega, Q, J):
    res = pw.norm(pw.gualtieri_residual(omega, Q, J))
    return float(np.max(res / (pw.norm(omega) + pw.norm(omega) ** 2 * pw.norm(Q) + 1e-300)))


def invariant_positive(omega, J):
    """Pointwise positivity of the Hermitian form of the J-invariant part (``g = -inv J``)."""
    inv = pw.invariant_project(omega, J)
    h = -inv @ J
    h = 0.5 * (h + pw.T(h))
    return bool(np.all(np.linalg.eigvalsh(h)[..., 0] > 0))


def positivity_scan(series: DeformationSeries, t_grid, tol: Tolerances):
    """Largest ``t`` of the grid with a positive invariant part and small Gualtieri residual.

    Scans upward and stops at the first failure; returns ``(t_max, rows)``.
    """
    J, Q = series.J, series.Q
    t_max = 0.0
    rows = []
    for t in t_grid:
        om = assemble(series, t)
        pos = invariant_positive(om / t, J)
        res = relative_gualtieri(om, Q, J) if pos else math.inf
        rows.append((float(t), pos, res))
        if not pos or res > tol.gualtieri:
            break
        t_max = float(t)
    return t_max, rows


# ---------------------------------------------------------------- structure and checks


def nijenhuis(grid: FundamentalGrid, Jm: np.ndarray, stencil="centered") -> float:
    """Sup norm of the Nijenhuis tensor of an (untwisted) endomorphism field.

    ``N^a_bc = J^d_b d_d J^a_c - J^d_c d_d J^a_b - J^a_d (d_b J^d_c - d_c J^d_b)``.
    """
    dJ = np.empty(Jm.shape + (4,))
    for a in range(4):  # component by component to bound memory
        dJ[..., a, :, :] = grid.ambient_partials(Jm[..., a, :], 1.0, stencil)
    # dJ[..., a, c, d] = d_d J^a_c
    t1 = np.einsum("...db,...acd->...abc", Jm, dJ)
    curl = np.einsum("...dcb->...dbc", dJ)  # d_b J^d_c
    t3 = np.einsum("...ad,...dbc->...abc", Jm, curl - np.swapaxes(curl, -1, -2))
    N = t1 - np.swapaxes(t1, -1, -2) - t3
    return float(np.max(np.sqrt(np.sum(N * N, axis=(-3, -2, -1)))))


def lee_form(grid, F_map, factor, stencil="centered"):
    """Pointwise least-squares solution of ``dF = theta ^ F`` (exact for a Hermitian F in dimension 4)."""
    comp = forms.comp_from_map(F_map)
    kappa = EquivariantField(grid, F_map, "form2", factor=factor).kappa
    dF = forms.exterior_d(grid, comp, 2, kappa, stencil).reshape(grid.shape + (64,))
    cols = []
    for a in range(4):
        e = np.zeros(grid.shape + (4,))
        e[..., a] = 1.0
        cols.append(forms.wedge1(e, comp, 2).reshape(grid.shape + (64,)))
    M = np.stack(cols, axis=-1)
    MtM = np.einsum("...ka,...kb->...ab", M, M)
    Mtb = np.einsum("...ka,...k->...a", M, dF)
    return np.linalg.solve(MtM, Mtb[..., None])[..., 0]


def overlay_structure(grid: FundamentalGrid, omega, bundle: FlatBundle, curve="E2"):
    """Evaluate the pointwise construction on a zero curve of sigma.

    omega is interpolated to the curve; Q is evaluated exactly there.  J_+ is
    the standard structure of the ambient frame.
    """
    J = pw.STANDARD_J
    ov = grid.overlay(curve)
    om = grid.to_overlay(omega, curve)
    om = 0.5 * (om - pw.T(om))
    phi = hopf.sigma_coefficient(ov["z1"], ov["z2"], bundle)
    Q, _ = pw.holomorphic_bivector(phi)
    Jm = -J - Q @ om
    return {"curve": curve, "p": pw.angle_p(J, Jm), "Q_sup": float(np.max(np.abs(Q)))}


def build_structure(grid, omega, Q, J, t, bundle, tol: Tolerances, stencil="centered"):
    Jm = pw.build_jminus(omega, Q, J, tol=max(tol.gualtieri, 1e-12))
    g, positive = pw.build_metric(omega, J, Jm)
    p = pw.angle_p(J, Jm)
    report = {
        "gualtieri": relative_gualtieri(omega, Q, J),
        "jminus_square": float(np.max(pw.norm(Jm @ Jm + np.eye(4)))),
        "orth_plus": float(np.max(pw.orthogonality_defect(g, J) / pw.norm(g))),
        "orth_minus": float(np.max(pw.orthogonality_defect(g, Jm) / pw.norm(g))),
        "positive": bool(np.all(positive)),
        "nijenhuis": nijenhuis(grid, Jm, stencil),
        "p_min": float(np.min(p)),
        "p_max": float(np.max(p)),
    }
    labels = [pw.classify_point(x, tol.overlay) for x in p.ravel()]
    overlays = {}
    for curve in hopf.sigma_zero_curves(bundle):
        ov = overlay_structure(grid, omega, bundle, curve)
        overlays[curve] = ov
        report[f"overlay_{curve}_dev"] = float(np.max(np.abs(ov["p"] + 1.0)))
        labels += [pw.classify_point(x, tol.overlay) for x in ov["p"].ravel()]
    report["delta"] = float(min(np.min(p + 1.0), np.min(1.0 - p)))
    report["class"] = pw.classify_labels(labels)
    ok = (
        report["gualtieri"] <= tol.gualtieri
        and report["positive"]
        and report["orth_plus"] <= tol.orthogonality
        and report["orth_minus"] <= max(tol.orthogonality, 10 * report["gualtieri"])
        and report["delta"] > tol.delta_min
        and all(report[f"overlay_{c}_dev"] <= tol.overlay for c in overlays)
    )
    report["valid"] = bool(ok)
    return BiHermitianStructure(omega, g, J, Jm, p, t, report, overlays)


def roundtrip(grid, structure: BiHermitianStructure, factor, stencil="centered"):
    """Rebuild omega from ``(g, J+, J-)`` and check it against the built data."""
    g, Jp, Jm = structure.g, structure.Jp, structure.Jm
    om = pw.extract_omega(g, Jp, Jm)
    Fp, Fm = g @ Jp, g @ Jm
    inv_dev = float(np.max(pw.norm(pw.invariant_project(om, Jp) - Fp)) / np.max(pw.norm(Fp)))
    th_p = lee_form(grid, Fp, factor, stencil)
    th_m = lee_form(grid, Fm, factor, stencil)
    th = 0.5 * (th_p + th_m)
    comp = forms.comp_from_map(om)
    kappa = EquivariantField(grid, om, "form2", factor=factor).kappa
    d = forms.exterior_d(grid, comp, 2, kappa, stencil) - forms.wedge1(th, comp, 2)
    closed = forms.sup_norm(d) / max(forms.sup_norm(comp), 1e-300)
    w = structure.omega
    ratio = float(np.sum(om * w) / np.sum(w * w))
    return {
        "invariant_dev": inv_dev,
        "closedness": float(closed),
        "proportionality": ratio,
        "proportionality_defect": float(np.max(pw.norm(om - ratio * w)) / np.max(pw.norm(w))),
    }


def ratio_monitor(series: DeformationSeries):
    """Fit ``n^2 |omega_n| ~ C b^n`` over the computed orders; returns the fitted rate b."""
    norms = np.array(series.norms)
    n = np.arange(1, len(norms) + 1)
    out = {"norms": norms.tolist(), "rate": None, "super_geometric": False}
    keep = norms > 0
    if keep.sum() >= 3:
        y = np.log(n[keep] ** 2 * norms[keep])
        slope, _ = np.polyfit(n[keep], y, 1)
        out["rate"] = float(np.exp(slope))
        second = np.diff(y, 2)
        out["super_geometric"] = bool(np.all(second > 0.1))
        if out["super_geometric"]:
            log.warning("series norms grow faster than geometrically over n = 1..%d", len(norms))
    return out


# ---------------------------------------------------------------- pipeline


@dataclass
class DeformSetup:
    grid: FundamentalGrid
    bundle: FlatBundle
    t_star: float
    F: EquivariantField         # twisted representative of the lcK form
    g_base: EquivariantField
    Q: EquivariantField
    J: np.ndarray


def setup(params: HopfParams, bundle: FlatBundle, shape) -> DeformSetup:
    grid = FundamentalGrid(params, *shape)
    t_star = hopf.select_t_for_bundle(params, bundle)
    g, F, lee = hopf.vaisman_family(grid, t_star)
    Ft = hopf.twisted_representative(F, lee)
    Q = hopf.sigma_section(grid, bundle)
    mu = bundle.real_factor(params)
    if not np.isclose(Ft.factor * mu, 1.0, rtol=1e-12):
        raise ConfigError("Lee class does not match the dual bundle")
    J = np.broadcast_to(pw.STANDARD_J, grid.shape + (4, 4))
    return DeformSetup(grid, bundle, t_star, Ft, g, Q, J)


def run(params: HopfParams, bundle: FlatBundle, shape, cfg: DeformConfig, progress=None, stages=None):
    """Full pipeline on one grid; returns a dict with series, structure and report pieces.

    If given, ``stages`` is a list that receives the name of each stage as it
    starts, so a caller can tag a failure with the stage that raised it.
    """
    stages = [] if stages is None else stages
    stages.append("setup")
    st = setup(params, bundle, shape)
    mu_star = st.F.factor
    hodge = DolbeaultComplex(st.grid, st.g_base, mu_star, stencil=cfg.stencil, bundle=bundle.dual(),
                             adjoint=cfg.adjoint)
    stages.append("series")
    series = build_series(st.grid, st.F.values, st.Q.values, st.J, mu_star, cfg.N, hodge,
                          cfg.tolerances, cfg.solver, progress)
    del hodge
    stages.append("scan")
    lo, hi, num = cfg.t_scan
    t_grid = np.geomspace(lo, hi, int(num))
    t_max, scan = positivity_scan(series, t_grid, cfg.tolerances)
    if t_max <= 0:
        raise ConfigError("empty positivity window: Q is too large for the truncation order")
    t = cfg.t if cfg.t is not None else 0.5 * t_max
    omega = assemble(series, t)
    stages.append("structure")
    structure = build_structure(st.grid, omega, st.Q.values, st.J, t, bundle, cfg.tolerances, cfg.stencil)
    stages.append("roundtrip")
    rt = roundtrip(st.grid, structure, mu_star, cfg.stencil)
    return {
        "setup": st,
        "series": series,
        "structure": structure,
        "t": t,
        "t_max": t_max,
        "scan": scan,
        "roundtrip": rt,
        "closedness": float(closedness(st.grid, omega, mu_star, cfg.stencil)),
        "lemma_cert": float(max([e.get("lemma_cert", 0.0) for e in series.log])),
        "monitor": ratio_monitor(series),
        "solver": [e.get("solver") for e in series.log[1:]],
    }


def config_dict(cfg: DeformConfig):
    d = asdict(cfg)
    d["t_scan"] = list(cfg.t_scan)
    return d
