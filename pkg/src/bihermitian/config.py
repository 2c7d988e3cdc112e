"""Strict JSON run configuration.

Every level rejects unknown keys; omitted keys take the defaults below and the
resolved configuration is echoed into every report.

Example::

    {
      "surface": {"lambda": 0.5},
      "bundle": {"p1": -1, "p2": 0},
      "grid": {"n_s": 16, "n_eta": 9, "n_xi1": 16, "n_xi2": 16},
      "refine": true,
      "deform": {"N": 6},
      "flow": {"t_final": 0.05, "n_steps": 16}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .deform import DeformConfig, Tolerances
from .grid import ConfigError, FlatBundle, HopfParams
from .krylov import SolverConfig


@dataclass
class SurfaceConfig:
    # either "lambda" or both of "a1", "a2"
    lam: float | None = None
    a1: float | None = None
    a2: float | None = None

    def params(self) -> HopfParams:
        if self.lam is not None:
            if self.a1 is not None or self.a2 is not None:
                raise ConfigError("give either surface.lambda or surface.a1/a2, not both")
            return HopfParams.from_lambda(self.lam)
        if self.a1 is None or self.a2 is None:
            raise ConfigError("surface needs lambda or both a1 and a2")
        return HopfParams(self.a1, self.a2)

    def to_dict(self):
        return {"lambda": self.lam, "a1": self.a1, "a2": self.a2}


@dataclass
class GridConfig:
    n_s: int = 16
    n_eta: int = 9
    n_xi1: int = 16
    n_xi2: int = 16

    @property
    def shape(self):
        return (self.n_s, self.n_eta, self.n_xi1, self.n_xi2)

    def refined(self):
        return (2 * self.n_s, 2 * self.n_eta - 1, 2 * self.n_xi1, 2 * self.n_xi2)


@dataclass
class FlowSection:
    t_final: float = 0.05
    n_steps: int = 16
    trace_nodes: int = 8
    compare_times: list = field(default_factory=lambda: [0.02, 0.01])
    probe_t: float = 0.4  # flow time of the integrator-order probe


@dataclass
class RunConfig:
    surface: SurfaceConfig = field(default_factory=lambda: SurfaceConfig(lam=0.5))
    bundle: FlatBundle = field(default_factory=lambda: FlatBundle(-1, 0))
    grid: GridConfig = field(default_factory=GridConfig)
    refine: bool = False
    deform: DeformConfig = field(default_factory=DeformConfig)
    flow: FlowSection = field(default_factory=FlowSection)

    def to_dict(self):
        d = {
            "surface": self.surface.to_dict(),
            "bundle": self.bundle.to_dict(),
            "grid": dataclasses.asdict(self.grid),
            "refine": self.refine,
            "deform": dataclasses.asdict(self.deform),
            "flow": dataclasses.asdict(self.flow),
        }
        d["deform"]["t_scan"] = list(self.deform.t_scan)
        return d


_NUM = (int, float)


def _check_type(value, kind, where):
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif kind is str:
        ok = isinstance(value, str)
    elif kind is list:
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: expected {kind.__name__}, got {type(value).__name__}")
    return float(value) if kind is float else value


def _section(raw, spec, where):
    """Validate a dict against ``{key: (type, nullable)}``; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    out = {}
    for key, (kind, nullable) in spec.items():
        if key not in raw:
            continue
        v = raw[key]
        if v is None and nullable:
            out[key] = None
            continue
        out[key] = _check_type(v, kind, f"{where}.{key}")
    return out


_TOL_SPEC = {f.name: (float, False) for f in dataclasses.fields(Tolerances)}
_SOLVER_SPEC = {"rel_tol": (float, False), "max_iter": (int, False), "preconditioner": (str, False),
                "restart": (int, False)}
_DEFORM_SPEC = {"N": (int, False), "t": (float, True), "t_scan": (list, False), "adjoint": (str, False),
                "stencil": (str, False), "tolerances": (dict, False), "solver": (dict, False)}
_TOP_SPEC = {"surface": (dict, False), "bundle": (dict, False), "grid": (dict, False), "refine": (bool, False),
             "deform": (dict, False), "flow": (dict, False)}


def parse(raw) -> RunConfig:
    top = _section(raw, _TOP_SPEC, "config")
    cfg = RunConfig()
    if "surface" in top:
        s = _section(top["surface"], {"lambda": (float, True), "a1": (float, True), "a2": (float, True)}, "surface")
        cfg.surface = SurfaceConfig(lam=s.get("lambda"), a1=s.get("a1"), a2=s.get("a2"))
    cfg.surface.params()  # validates (a1 != a2 is rejected by the grid backend)
    if "bundle" in top:
        b = _section(top["bundle"], {"p1": (int, False), "p2": (int, False)}, "bundle")
        if set(b) != {"p1", "p2"}:
            raise ConfigError("bundle needs p1 and p2")
        cfg.bundle = FlatBundle(b["p1"], b["p2"])
    if "grid" in top:
        g = _section(top["grid"], {f.name: (int, False) for f in dataclasses.fields(GridConfig)}, "grid")
        cfg.grid = GridConfig(**{**dataclasses.asdict(cfg.grid), **g})
    cfg.refine = top.get("refine", cfg.refine)
    if "deform" in top:
        d = _section(top["deform"], _DEFORM_SPEC, "deform")
        tol = Tolerances(**_section(d.pop("tolerances", {}), _TOL_SPEC, "deform.tolerances"))
        try:
            solver = SolverConfig(**_section(d.pop("solver", {}), _SOLVER_SPEC, "deform.solver"))
        except ValueError as exc:
            raise ConfigError(f"deform.solver: {exc}") from exc
        if "t_scan" in d:
            ts = d["t_scan"]
            if len(ts) != 3 or not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in ts):
                raise ConfigError("deform.t_scan must be [lo, hi, count]")
            d["t_scan"] = (float(ts[0]), float(ts[1]), int(ts[2]))
        cfg.deform = DeformConfig(**d, tolerances=tol, solver=solver)
    if "flow" in top:
        f = _section(top["flow"], {"t_final": (float, False), "n_steps": (int, False), "trace_nodes": (int, False),
                                   "compare_times": (list, False), "probe_t": (float, False)}, "flow")
        cfg.flow = FlowSection(**{**dataclasses.asdict(cfg.flow), **f})
        if len(cfg.flow.compare_times) < 2 or any(t <= 0 for t in cfg.flow.compare_times):
            raise ConfigError("flow.compare_times needs at least two positive times")
        if cfg.flow.probe_t <= 0:
            raise ConfigError("flow.probe_t must be positive")
    if cfg.deform.adjoint not in ("pole-corrected", "transpose"):
        raise ConfigError(f"deform.adjoint: unknown mode {cfg.deform.adjoint!r}")
    return cfg


def load(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse(raw)
