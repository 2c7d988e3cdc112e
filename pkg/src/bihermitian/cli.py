"""Command line front end: ``deform``, ``flow``, ``verify`` and ``plot``.

Exit codes: 0 VALID, 2 INVALID (a report is still written), 3 configuration
error, 4 solver failure.  ``report.json`` is deterministic for a fixed
configuration; wall-clock timings go to ``timing.json`` next to it.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import config as cfgmod
from . import deform, flow, hopf, io
from . import pointwise as pw
from .grid import ConfigError, FundamentalGrid
from .krylov import SolverError

EXIT_VALID, EXIT_INVALID, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4

log = logging.getLogger("bihermitian")


def versions():
    return {"bihermitian": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


class Timer:
    def __init__(self):
        self.t0 = time.perf_counter()
        self.marks = {}

    @contextlib.contextmanager
    def stage(self, name):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.marks[name] = self.marks.get(name, 0.0) + time.perf_counter() - t

    def dump(self):
        return {"stages": self.marks, "total": time.perf_counter() - self.t0}


@contextlib.contextmanager
def locked_dir(path):
    """Create ``path`` and hold ``path/.lock`` for the duration of a run."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"{path} is in use by another run (remove {lock} if stale)") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield path
    finally:
        lock.unlink(missing_ok=True)


def _order(coarse, fine):
    """Observed order under one halving of the mesh width."""
    if not (coarse > 0 and fine > 0):
        return None
    return math.log2(coarse / fine)


# ---------------------------------------------------------------- deform


def deform_report(cfg: cfgmod.RunConfig, res, params):
    s = res["structure"].report
    st = res["setup"]
    overlay = {k[len("overlay_"):-len("_dev")]: v for k, v in s.items() if k.startswith("overlay_")}
    return {
        "verdict": "VALID" if s["valid"] else "INVALID",
        "stage": None,
        "lambda": params.lam,
        "p1": cfg.bundle.p1,
        "p2": cfg.bundle.p2,
        "t_star_vaisman": st.t_star,
        "N": len(res["series"].terms),
        "t": res["t"],
        "t_max": res["t_max"],
        "residuals": {
            "gualtieri": s["gualtieri"],
            "nijenhuis": s["nijenhuis"],
            "closedness": res["closedness"],
            "lemma_cert": res["lemma_cert"],
            "jminus_square": s["jminus_square"],
            "orth_plus": s["orth_plus"],
            "orth_minus": s["orth_minus"],
            "overlay_p_plus_one": overlay,
        },
        "positive": s["positive"],
        "p_min": s["p_min"],
        "p_max": s["p_max"],
        "delta": s["delta"],
        "class": s["class"],
        "roundtrip": res["roundtrip"],
        "monitor": res["monitor"],
        "positivity_scan": [{"t": t, "positive": bool(ok), "gualtieri": g} for t, ok, g in res["scan"]],
        "solver_stats": res["solver"],
        "series_log": [{k: v for k, v in e.items() if k != "solver"} for e in res["series"].log],
    }


def _failure_report(cfg, stage, exc):
    return {"verdict": "INVALID", "stage": stage, "error": f"{type(exc).__name__}: {exc}",
            "config": cfg.to_dict(), "versions": versions()}


def write_deform_fields(out: Path, res, bundle):
    grid = res["setup"].grid
    sd = res["structure"]
    fields = out / "fields"
    fields.mkdir(exist_ok=True)
    io.write_field(fields / "omega", sd.omega, "form2", grid, bundle)
    io.write_field(fields / "g", sd.g, "metric", grid, bundle)
    io.write_field(fields / "Jm", sd.Jm, "endo", grid, bundle)
    io.write_field(fields / "p", sd.p, "scalar", grid, bundle)
    series = out / "series"
    series.mkdir(exist_ok=True)
    for n, w in enumerate(res["series"].terms, start=1):
        io.write_field(series / f"omega_n{n}", w, "form2", grid, bundle)
    for curve, ov in sorted(sd.overlay.items()):
        p = ov["p"]
        io.write_csv(out / f"overlay_{curve}_p.csv", [f"index{k}" for k in range(p.ndim)] + ["p"],
                     [(*idx, float(p[idx])) for idx in np.ndindex(p.shape)])


def _run_one(cfg, params, shape, run_cfg, stages, timer, label):
    with timer.stage(label):
        return deform.run(params, cfg.bundle, shape, run_cfg, stages=stages,
                          progress=lambda info: log.info("%s: order %d done", label, info["n"]))


def cmd_deform(args):
    cfg = cfgmod.load(args.config)
    params = cfg.surface.params()
    hopf_check = cfg.bundle.real_factor(params)
    if hopf_check <= 1.0:
        raise ConfigError(f"bundle multiplier {hopf_check} must exceed 1 for the lcK class to exist")
    timer = Timer()
    with locked_dir(args.out) as out:
        solver = dataclasses.replace(cfg.deform.solver, log_path=str(out / "solver_log.csv"))
        run_cfg = dataclasses.replace(cfg.deform, solver=solver)
        stages = []
        try:
            res = _run_one(cfg, params, cfg.grid.shape, run_cfg, stages, timer, "coarse")
        except (SolverError, deform.LemmaViolation, flow.FlowError, ConfigError) as exc:
            if isinstance(exc, ConfigError) and stages == ["setup"]:
                raise
            stage = stages[-1] if stages else "setup"
            io.write_json(out / "report.json", _failure_report(cfg, stage, exc))
            io.write_json(out / "timing.json", timer.dump())
            log.error("stage %s failed: %s", stage, exc)
            return EXIT_SOLVER if isinstance(exc, SolverError) else EXIT_INVALID
        report = deform_report(cfg, res, params)
        write_deform_fields(out, res, cfg.bundle)
        coarse = (report["residuals"]["nijenhuis"], report["residuals"]["closedness"],
                  res["roundtrip"]["closedness"])
        t_used = res["t"]
        del res
        if cfg.refine:
            fine_cfg = dataclasses.replace(cfg.deform, t=t_used)  # same t on both grids
            fstages = []
            try:
                fres = _run_one(cfg, params, cfg.grid.refined(), fine_cfg, fstages, timer, "fine")
            except (SolverError, deform.LemmaViolation, flow.FlowError) as exc:
                report["verdict"] = "INVALID"
                report["stage"] = f"refine/{fstages[-1] if fstages else 'setup'}"
                report["error"] = f"{type(exc).__name__}: {exc}"
            else:
                fs = fres["structure"].report
                fine = (fs["nijenhuis"], fres["closedness"], fres["roundtrip"]["closedness"])
                ref = {
                    "grid": dict(zip(("n_s", "n_eta", "n_xi1", "n_xi2"), cfg.grid.refined())),
                    "valid": fs["valid"],
                    "nijenhuis": [coarse[0], fine[0]],
                    "nijenhuis_order": _order(coarse[0], fine[0]),
                    "closedness": [coarse[1], fine[1]],
                    "closedness_order": _order(coarse[1], fine[1]),
                    "roundtrip_closedness": [coarse[2], fine[2]],
                    "roundtrip_closedness_order": _order(coarse[2], fine[2]),
                    "gualtieri_fine": fs["gualtieri"],
                    "p_min_fine": fs["p_min"],
                    "p_max_fine": fs["p_max"],
                    "class_fine": fs["class"],
                }
                ok = (ref["valid"] and ref["nijenhuis_order"] is not None
                      and ref["nijenhuis_order"] >= cfg.deform.tolerances.nijenhuis_order)
                ref["passed"] = bool(ok)
                report["refinement"] = ref
                if not ok:
                    report["verdict"] = "INVALID"
                    report["stage"] = "refine"
                del fres
        report["config"] = cfg.to_dict()
        report["versions"] = versions()
        io.write_json(out / "report.json", report)
        io.write_json(out / "timing.json", timer.dump())
        _residual_plot(out, report)
    log.info("deform: %s, class %s", report["verdict"], report.get("class"))
    return EXIT_VALID if report["verdict"] == "VALID" else EXIT_INVALID


# ---------------------------------------------------------------- flow


def _trace_nodes(grid, count):
    return np.unique(np.linspace(0, int(np.prod(grid.shape)) - 1, max(count, 1)).astype(int))


def load_series(directory, grid, bundle, factor, J, Q):
    """Rebuild a :class:`DeformationSeries` from ``<directory>/series``; None if absent."""
    sdir = Path(directory) / "series"
    files = sorted(sdir.glob("omega_n*.json"), key=lambda p: int(p.stem[len("omega_n"):]))
    if not files:
        return None
    terms = []
    for n, f in enumerate(files, start=1):
        if f.stem != f"omega_n{n}":
            raise io.DumpError(f"series dump in {sdir} is missing order {n}")
        values, meta = io.read_field(f)
        if meta["grid"] != grid.to_dict() or meta["bundle"] != bundle.to_dict() or meta["lambda"] != grid.lam:
            raise ConfigError(f"series dump {f} was made with a different grid, bundle or lambda")
        terms.append(values)
    return deform.DeformationSeries(grid, terms, factor, J, Q)


def cmd_flow(args):
    cfg = cfgmod.load(args.config)
    params = cfg.surface.params()
    bundle = cfg.bundle
    fc = flow.FlowConfig(cfg.flow.t_final, cfg.flow.n_steps)
    timer = Timer()
    with locked_dir(args.out) as out:
        grid = FundamentalGrid(params, *cfg.grid.shape)
        pot = flow.calibrated_potential(params, bundle)
        F = flow.lck_from_potential(grid, pot, bundle)
        flow.hamiltonian_field(grid, pot, bundle)
        t_star = hopf.select_t_for_bundle(params, bundle)
        _, Fv, lee = hopf.vaisman_family(grid, t_star)
        Ft = hopf.twisted_representative(Fv, lee)
        calib = float(np.max(pw.norm(F.values - Ft.values)) / np.max(pw.norm(Ft.values)))
        Q, _ = flow.bivector_at(grid.x, bundle, with_derivative=False)
        J = np.broadcast_to(pw.STANDARD_J, grid.shape + (4, 4))
        try:
            with timer.stage("flow"):
                trace = flow.Trace(_trace_nodes(grid, cfg.flow.trace_nodes))
                om = flow.omega_flow(grid, pot, bundle, fc, trace)
                trace.write(out / "flow_trace.csv")
                Jm_push = flow.pushforward_jminus(grid, pot, bundle, fc)
                dev = float(np.max(pw.norm(Jm_push - (-J - Q @ om))))
                # integrator order: a step ladder at a time where the deviation clears roundoff
                probe = {"t": cfg.flow.probe_t, "steps": [4, 8, 16], "pushforward_dev": []}
                for n in probe["steps"]:
                    pc = flow.FlowConfig(cfg.flow.probe_t, n)
                    om_p = flow.omega_flow(grid, pot, bundle, pc)
                    Jm_p = flow.pushforward_jminus(grid, pot, bundle, pc)
                    probe["pushforward_dev"].append(float(np.max(pw.norm(Jm_p - (-J - Q @ om_p)))))
                devs = np.array(probe["pushforward_dev"])
                probe["order"] = float(-np.polyfit(np.log2(probe["steps"]), np.log2(devs), 1)[0]) \
                    if np.all(devs > 0) else None
            with timer.stage("structure"):
                structure = deform.build_structure(grid, om, Q, J, fc.t_final, bundle, cfg.deform.tolerances,
                                                   cfg.deform.stencil)
        except flow.FlowError as exc:
            io.write_json(out / "report.json", _failure_report(cfg, "flow", exc))
            io.write_json(out / "timing.json", timer.dump())
            log.error("flow failed: %s", exc)
            return EXIT_INVALID
        s = structure.report
        report = {
            "verdict": "VALID" if s["valid"] else "INVALID",
            "stage": None,
            "lambda": params.lam,
            "p1": bundle.p1,
            "p2": bundle.p2,
            "t_star_vaisman": t_star,
            "t": fc.t_final,
            "n_steps": fc.n_steps,
            "potential": {"r": pot.r, "scale": pot.scale, "calibration_dev": calib},
            "residuals": {
                "gualtieri": s["gualtieri"],
                "nijenhuis": s["nijenhuis"],
                "closedness": float(deform.closedness(grid, om, pot.factor, cfg.deform.stencil)),
                "jminus_square": s["jminus_square"],
                "pushforward_dev": dev,
            },
            "integrator_probe": probe,
            "positive": s["positive"],
            "p_min": s["p_min"],
            "p_max": s["p_max"],
            "delta": s["delta"],
            "class": s["class"],
            "cross_validation": None,
        }
        fields = out / "fields"
        fields.mkdir(exist_ok=True)
        io.write_field(fields / "omega_flow", om, "form2", grid, bundle)
        io.write_field(fields / "Jm_flow", Jm_push, "endo", grid, bundle)
        io.write_field(fields / "p_flow", structure.p, "scalar", grid, bundle)
        if args.compare:
            series = load_series(args.compare, grid, bundle, pot.factor, J, Q)
            if series is None:
                log.warning("no series dump under %s; writing a flow-only report", args.compare)
                report["warnings"] = [f"no series dump under {args.compare}"]
            else:
                with timer.stage("cross_validate"):
                    cv = flow.cross_validate(series, grid, pot, bundle, cfg.flow.compare_times, fc.n_steps)
                cv["N"] = series.N
                cv["passed"] = bool(cv["slope"] >= 1.8)
                report["cross_validation"] = cv
                if not cv["passed"]:
                    report["verdict"] = "INVALID"
                    report["stage"] = "cross_validate"
        report["config"] = cfg.to_dict()
        report["versions"] = versions()
        io.write_json(out / "report.json", report)
        io.write_json(out / "timing.json", timer.dump())
    log.info("flow: %s, class %s", report["verdict"], report["class"])
    return EXIT_VALID if report["verdict"] == "VALID" else EXIT_INVALID


# ---------------------------------------------------------------- verify


def cmd_verify(args):
    from . import verify

    checks = verify.run_suite(args.suite, args.seed)
    summary = {
        "suite": args.suite,
        "seed": args.seed,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
    sys.stdout.write(io.dumps(summary))
    return EXIT_VALID if summary["passed"] else EXIT_INVALID


# ---------------------------------------------------------------- plot

PLOT_KINDS = ("p-slice", "residual-vs-n", "residual-vs-refinement", "solver-log", "scan")


def _write_plot(out, header, rows, series, **svg):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_csv(out.with_suffix(".csv"), header, rows)
    out.with_suffix(".svg").write_text(io.svg_lines(series, **svg))


def _residual_plot(out, report):
    norms = report["monitor"]["norms"]
    ns = list(range(1, len(norms) + 1))
    _write_plot(out / "residual_vs_n", ["n", "norm"], list(zip(ns, norms)), [("|omega_n|", ns, norms)],
                title="series term norms", xlabel="n", ylabel="sup |omega_n|", logy=True)


def _load_report(path):
    try:
        rep = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    if not isinstance(rep, dict) or not rep:
        raise ConfigError(f"{path} is an empty report")
    return rep


def cmd_plot(args):
    kind, src, out = args.kind, Path(args.input), Path(args.out)
    if kind == "p-slice":
        try:
            values, meta = io.read_field(src)
        except io.DumpError as exc:
            raise ConfigError(str(exc)) from exc
        if meta["kind"] != "scalar":
            raise ConfigError(f"p-slice needs a scalar field dump, got {meta['kind']!r}")
        # eta runs pole to pole at fixed s, xi
        line = values[0, :, 0, 0]
        idx = list(range(line.size))
        _write_plot(out, ["eta_index", "p"], [(i, float(v)) for i, v in zip(idx, line)], [("p", idx, line)],
                    title="p along eta (s, xi fixed)", xlabel="eta index", ylabel="p")
        return EXIT_VALID
    if kind == "solver-log":
        header, rows = io.read_csv(src)
        it = [float(r[0]) for r in rows]
        rr = [float(r[1]) for r in rows]
        _write_plot(out, header, rows, [("relres", it, rr)], title="solver residual", xlabel="iter",
                    ylabel="relres", logy=True)
        return EXIT_VALID
    rep = _load_report(src)
    if kind == "residual-vs-n":
        if "monitor" not in rep:
            raise ConfigError(f"{src} has no series monitor block")
        norms = rep["monitor"]["norms"]
        ns = list(range(1, len(norms) + 1))
        _write_plot(out, ["n", "norm"], list(zip(ns, norms)), [("|omega_n|", ns, norms)],
                    title="series term norms", xlabel="n", ylabel="sup |omega_n|", logy=True)
    elif kind == "residual-vs-refinement":
        ref = rep.get("refinement")
        if not ref:
            raise ConfigError(f"{src} has no refinement block (run with \"refine\": true)")
        rows = [(lvl, ref["nijenhuis"][i], ref["closedness"][i], ref["roundtrip_closedness"][i]) for i, lvl in
                enumerate((0, 1))]
        _write_plot(out, ["level", "nijenhuis", "closedness", "roundtrip_closedness"], rows,
                    [("nijenhuis", [0, 1], ref["nijenhuis"]), ("closedness", [0, 1], ref["closedness"]),
                     ("roundtrip closedness", [0, 1], ref["roundtrip_closedness"])],
                    title="residuals under refinement", xlabel="refinement level", ylabel="residual", logy=True)
    elif kind == "scan":
        scan = rep.get("positivity_scan")
        if not scan:
            raise ConfigError(f"{src} has no positivity scan")
        ts = [r["t"] for r in scan]
        ok = [1.0 if r["positive"] else 0.0 for r in scan]
        _write_plot(out, ["t", "positive"], list(zip(ts, ok)), [("positive", np.log10(ts), ok)],
                    title="positivity window", xlabel="log10 t", ylabel="positive")
    return EXIT_VALID


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="bihermitian", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    d = sub.add_parser("deform", help="series deformation of the lcK form")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    f = sub.add_parser("flow", help="Hamiltonian flow deformation")
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--compare", help="output directory of a deform run to cross-validate against")
    v = sub.add_parser("verify", help="randomised self-check suites")
    v.add_argument("--suite", required=True, choices=("pointwise", "geometry", "hodge", "all"))
    v.add_argument("--seed", type=int, default=42)
    pl = sub.add_parser("plot", help="CSV slices and SVG line plots")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--kind", required=True, choices=PLOT_KINDS)
    pl.add_argument("--out", required=True)
    return p


COMMANDS = {"deform": cmd_deform, "flow": cmd_flow, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
