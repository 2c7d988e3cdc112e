"""Acceptance criteria 1-8 at their stated tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary.  The
refined baseline run (criteria 4 and 6) dominates the runtime.
"""
import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from bihermitian import cli, deform, hopf, verify
from bihermitian.grid import FlatBundle, FundamentalGrid, HopfParams
from bihermitian.hodge import DolbeaultComplex, SolverConfig, Twisted02Scalar

from .conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"
COARSE = (16, 9, 16, 16)
FINE = (32, 17, 32, 32)

pytestmark = pytest.mark.slow


def record(k, ok, detail):
    line = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def run_cli(*args):
    t0 = time.perf_counter()
    code = cli.main([str(a) for a in args])
    return code, time.perf_counter() - t0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def baseline_runs(workdir):
    """Two identical coarse baseline runs (criteria 7 and 8)."""
    out = []
    for name in ("base_a", "base_b"):
        code, _ = run_cli("deform", "--config", CONFIGS / "baseline.json", "--out", workdir / name)
        out.append((code, workdir / name))
    return out


def test_1_pointwise_suite():
    t0 = time.perf_counter()
    checks = verify.pointwise_suite(seed=42, n=10_000)
    dt = time.perf_counter() - t0
    failed = [c.name for c in checks if not c.passed]
    cases = max(c.cases for c in checks)
    record(1, not failed and cases >= 10_000 and dt < 60,
           f"{len(checks)} checks, {cases} cases, {dt:.1f} s, failed={failed}")


def test_2_hopf_geometry():
    t0 = time.perf_counter()
    params = HopfParams.from_lambda(0.5)
    L = FlatBundle(-1, 0)
    res, hol, deg = [], [], []
    for shape in (COARSE, FINE):
        grid = FundamentalGrid(params, *shape)
        g, F, lee = hopf.vaisman_family(grid, 0.5)
        res.append(hopf.lck_residual(F, lee))
        hol.append(abs(hopf.holonomy_check(lee, L) - 1.0))
        deg.append(hopf.degree_check(g, lee))
        del grid, g, F
    dt = time.perf_counter() - t0
    ratio = res[0] / res[1]
    ok = ratio >= 3 and max(hol) <= 1e-6 and max(deg) < 0 and dt < 300
    record(2, ok, f"lcK residual {res[0]:.3e} -> {res[1]:.3e} (ratio {ratio:.1f}), holonomy dev {max(hol):.1e}, "
                  f"degree {deg[0]:.4f}, {dt:.1f} s")


def test_3_twisted_hodge():
    params = HopfParams.from_lambda(0.5)
    grid = FundamentalGrid(params, *COARSE)
    st = deform.setup(params, FlatBundle(-1, 0), COARSE)
    mu = st.F.factor
    rng = np.random.default_rng(42)

    def rand():
        return rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)

    adj = []
    for mode in ("transpose", "pole-corrected"):
        dc = DolbeaultComplex(grid, st.g_base, mu, adjoint=mode)
        b, u = (rand(), rand()), rand()
        lhs = dc.inner02(dc.dbar_dual(b), u)
        adj.append(abs(lhs - dc.inner01(b, dc.dbar_adjoint(u))) / abs(lhs))
    # apply-then-solve with the exactly transposed operator
    dc = DolbeaultComplex(grid, st.g_base, mu, adjoint="transpose")
    x0 = rand()
    alpha = dc.laplacian_apply(Twisted02Scalar(x0, mu))
    t0 = time.perf_counter()
    x, _ = dc.green(alpha, SolverConfig(rel_tol=1e-12, max_iter=20000))
    t_rand = time.perf_counter() - t0
    recovery = np.linalg.norm(x.values - x0) / np.linalg.norm(x0)
    # baseline solve: the order-2 right-hand side with the default operator
    del dc
    dc = DolbeaultComplex(grid, st.g_base, mu, bundle=FlatBundle(-1, 0).dual())
    series = deform.DeformationSeries(grid, [st.F.values], mu, st.J, st.Q.values)
    t0 = time.perf_counter()
    _, info = deform.recursion_step(2, series, dc, deform.Tolerances())
    t_base = time.perf_counter() - t0
    ok = recovery <= 1e-10 and max(adj) < 1e-12 and info["solver"]["rel_residual"] <= 1e-9 and max(t_rand, t_base) < 120
    record(3, ok, f"recovery {recovery:.1e}, adjoint {max(adj):.1e}, baseline relres "
                  f"{info['solver']['rel_residual']:.1e}, solve times {t_rand:.1f} s / {t_base:.1f} s")


@pytest.fixture(scope="module")
def refined_run(workdir):
    code, dt = run_cli("deform", "--config", CONFIGS / "baseline_refine.json", "--out", workdir / "refined")
    rep = json.loads((workdir / "refined" / "report.json").read_text())
    return code, dt, rep


def test_4_baseline_deformation(refined_run):
    code, dt, rep = refined_run
    tol = rep["config"]["deform"]["tolerances"]
    r, ref = rep["residuals"], rep.get("refinement") or {}
    checks = {
        "valid": code == 0 and rep["verdict"] == "VALID",
        "gualtieri": r["gualtieri"] <= tol["gualtieri"],
        "nijenhuis order": (ref.get("nijenhuis_order") or 0) >= 2,
        "positive": rep["positive"] and ref.get("valid", False),
        "overlay": max(r["overlay_p_plus_one"].values()) <= 1e-8,
        "p window": rep["delta"] > 0 and -1 + rep["delta"] <= rep["p_min"] and rep["p_max"] <= 1 - rep["delta"],
        "runtime": dt < 1800,
    }
    bad = [k for k, v in checks.items() if not v]
    record(4, not bad, f"class {rep.get('class')}, t={rep['t']:.3g}/t_max={rep['t_max']:.3g}, "
                       f"gualtieri {r['gualtieri']:.1e}, nijenhuis {ref.get('nijenhuis')} "
                       f"(order {ref.get('nijenhuis_order')}), p in [{rep['p_min']:.6f}, {rep['p_max']:.6f}], "
                       f"delta {rep['delta']:.2e}, {dt:.0f} s, failed={bad}")


def test_5_class_i(workdir):
    code, dt = run_cli("deform", "--config", CONFIGS / "class_i.json", "--out", workdir / "class_i")
    rep = json.loads((workdir / "class_i" / "report.json").read_text())
    d = rep.get("delta", 0)
    ok = code == 0 and rep["verdict"] == "VALID" and rep["class"] == "i" and d > 0 \
        and max(abs(rep["p_min"]), abs(rep["p_max"])) < 1 - d + 1e-15
    record(5, ok, f"verdict {rep['verdict']}, class {rep.get('class')}, t={rep.get('t', 0):.3g}, "
                  f"p in [{rep.get('p_min', 0):.6f}, {rep.get('p_max', 0):.6f}], delta {d:.2e}")


def test_6_roundtrip(refined_run):
    _, _, rep = refined_run
    rt, ref = rep["roundtrip"], rep.get("refinement") or {}
    closed = ref.get("roundtrip_closedness", [np.inf, np.inf])
    ok = rt["invariant_dev"] <= 1e-12 and closed[1] < closed[0]
    record(6, ok, f"invariant part dev {rt['invariant_dev']:.1e}, d_theta closedness {closed[0]:.2e} -> "
                  f"{closed[1]:.2e} (order {ref.get('roundtrip_closedness_order')}), "
                  f"proportionality {rt['proportionality']:.12f}")


def test_7_flow_vs_series(baseline_runs, workdir):
    code0, base = baseline_runs[0]
    assert code0 == 0
    code, _ = run_cli("flow", "--config", CONFIGS / "baseline.json", "--out", workdir / "flow", "--compare", base)
    rep = json.loads((workdir / "flow" / "report.json").read_text())
    cv = rep["cross_validation"] or {}
    probe = rep["integrator_probe"]
    order = probe["order"] or 0
    ok = code == 0 and cv.get("slope", 0) >= 1.8 and order >= 3.5
    record(7, ok, f"discrepancy slope {cv.get('slope', float('nan')):.2f}, rows {cv.get('rows')}, "
                  f"pushforward dev {rep['residuals']['pushforward_dev']:.1e} at t={rep['t']}, "
                  f"probe t={probe['t']} steps {probe['steps']} devs {probe['pushforward_dev']} (order {order:.2f})")


def test_8_determinism(baseline_runs):
    (ca, a), (cb, b) = baseline_runs
    same = (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    fields = all((a / "fields" / f).read_bytes() == (b / "fields" / f).read_bytes()
                 for f in ("omega.bin", "g.bin", "p.bin", "Jm.bin"))
    record(8, ca == cb == 0 and same and fields, f"report bytes identical: {same}, field dumps identical: {fields}")
    shutil.rmtree(b, ignore_errors=True)
