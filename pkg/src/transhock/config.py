"""Run configuration: a JSON document validated into plain dataclasses.

Schema (every section optional; omitted keys take the defaults below)::

    {
      "gas":          {"gamma": 2.0},
      "nozzle":       {"L0": 1.0, "L1": 2.0},
      "inflow":       {"rho0": 1.0, "u0": 2.0},
      "force":        {"constant": 0.1}            or {"x": [...], "f": [...]},
      "exit":         {"Pe": null},                 null = midpoint of the admissible range
      "perturbation": {"eps": 0.0,
                       "u10": [MODE, ...], "u20": [...], "u30": [...],
                       "P0": [...], "Phi0": [...], "Pex": [...]},
      "grid":         {"N1": 17, "N2": 9, "N3": 9},
      "solver":       {"fp_tol": 1e-9, "max_outer": 60, "relax": 1.0, "ball_factor": 10.0,
                       "checkpoint_every": 0, "background_h": 1e-3,
                       "upstream": "analytic", "upstream_nx": 401}
    }

    MODE = {"amp": 1.0, "y2": ["cos", 1], "y3": ["cos", 0], "poly": [1.0]}

``poly`` (coefficients in x1, lowest first) only matters for Phi0.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .background import ForceProfile, build_background
from .domain import Grid
from .driver import FP_TOL, MAX_OUTER, BALL_FACTOR, SolverSettings
from .errors import ConfigError
from .upstream import FAMILIES, PerturbationSpec, TrigMode, check_mode

UPSTREAM_KINDS = ("analytic", "march")


@dataclass
class SolverConfig:
    fp_tol: float = FP_TOL
    max_outer: int = MAX_OUTER
    relax: float = 1.0
    ball_factor: float = BALL_FACTOR
    checkpoint_every: int = 0
    background_h: float = 1e-3
    upstream: str = "analytic"
    upstream_nx: int = 401


@dataclass
class Config:
    gamma: float = 2.0
    L0: float = 1.0
    L1: float = 2.0
    rho0: float = 1.0
    u0: float = 2.0
    force: dict = field(default_factory=lambda: {"constant": 0.1})
    Pe: float | None = None
    eps: float = 0.0
    modes: dict = field(default_factory=lambda: {k: [] for k in FAMILIES})
    N1: int = 17
    N2: int = 9
    N3: int = 9
    solver: SolverConfig = field(default_factory=SolverConfig)

    def force_profile(self) -> ForceProfile:
        if "constant" in self.force:
            return ForceProfile(self.L0, self.L1, constant=self.force["constant"])
        return ForceProfile(self.L0, self.L1, x=self.force["x"], f=self.force["f"])

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.eps, **{k: [_mode(m) for m in v] for k, v in self.modes.items()})

    def background(self):
        return build_background(self.gamma, self.rho0, self.u0, self.force_profile(), self.L0, self.L1,
                                self.Pe, h=self.solver.background_h)

    def grid(self, Ls: float) -> Grid:
        return Grid(Ls, self.L1, self.N1, self.N2, self.N3)

    def settings(self) -> SolverSettings:
        s = self.solver
        return SolverSettings(fp_tol=s.fp_tol, max_outer=s.max_outer, relax=s.relax,
                              ball_factor=s.ball_factor, checkpoint_every=s.checkpoint_every)

    def to_dict(self) -> dict:
        return {
            "gas": {"gamma": self.gamma},
            "nozzle": {"L0": self.L0, "L1": self.L1},
            "inflow": {"rho0": self.rho0, "u0": self.u0},
            "force": copy.deepcopy(self.force),
            "exit": {"Pe": self.Pe},
            "perturbation": {"eps": self.eps, **copy.deepcopy(self.modes)},
            "grid": {"N1": self.N1, "N2": self.N2, "N3": self.N3},
            "solver": asdict(self.solver),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def _mode(d: dict) -> TrigMode:
    return TrigMode(float(d["amp"]), d["y2"][0], float(d["y2"][1]), d["y3"][0], float(d["y3"][1]),
                    tuple(float(c) for c in d.get("poly", [1.0])))


# ---------------------------------------------------------------------------
# validation helpers; every error names the JSON path of the offending entry


def _keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object", where=path)
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}: unknown key", where=f"{path}.{k}")


def _num(d, key, path, default, positive=False, integer=False):
    if key not in d or d[key] is None:
        return default
    x = d[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {x!r}", where=f"{path}.{key}")
    if integer:
        if int(x) != x:
            raise ConfigError(f"{path}.{key}: expected an integer, got {x!r}", where=f"{path}.{key}")
        x = int(x)
    elif not math.isfinite(x):
        raise ConfigError(f"{path}.{key}: must be finite", where=f"{path}.{key}")
    if positive and not x > 0:
        raise ConfigError(f"{path}.{key}: must be positive, got {x!r}", where=f"{path}.{key}")
    return float(x) if not integer else x


def _parse_mode(m, path) -> dict:
    _keys(m, ("amp", "y2", "y3", "poly"), path)
    if "amp" not in m:
        raise ConfigError(f"{path}.amp: missing", where=f"{path}.amp")
    out = {"amp": _num(m, "amp", path, 0.0)}
    for ax in ("y2", "y3"):
        f = m.get(ax, ["cos", 0])
        if not (isinstance(f, list) and len(f) == 2 and isinstance(f[0], str)
                and isinstance(f[1], (int, float)) and not isinstance(f[1], bool)):
            raise ConfigError(f"{path}.{ax}: expected [kind, k]", where=f"{path}.{ax}")
        if f[0] not in ("cos", "sin"):
            raise ConfigError(f"{path}.{ax}: unknown kind {f[0]!r}", where=f"{path}.{ax}")
        out[ax] = [f[0], f[1]]
    if "poly" in m:
        p = m["poly"]
        if not (isinstance(p, list) and p and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)):
            raise ConfigError(f"{path}.poly: expected a non-empty list of numbers", where=f"{path}.poly")
        out["poly"] = list(p)
    return out


def from_dict(raw: dict) -> Config:
    _keys(raw, ("gas", "nozzle", "inflow", "force", "exit", "perturbation", "grid", "solver"), "$")
    cfg = Config()
    sec = raw.get("gas", {})
    _keys(sec, ("gamma",), "$.gas")
    cfg.gamma = _num(sec, "gamma", "$.gas", cfg.gamma)
    if not cfg.gamma > 1.0:
        raise ConfigError(f"$.gas.gamma: need gamma > 1, got {cfg.gamma}", where="$.gas.gamma")

    sec = raw.get("nozzle", {})
    _keys(sec, ("L0", "L1"), "$.nozzle")
    cfg.L0 = _num(sec, "L0", "$.nozzle", cfg.L0)
    cfg.L1 = _num(sec, "L1", "$.nozzle", cfg.L1)
    if not cfg.L1 > cfg.L0:
        raise ConfigError("$.nozzle: need L1 > L0", where="$.nozzle")

    sec = raw.get("inflow", {})
    _keys(sec, ("rho0", "u0"), "$.inflow")
    cfg.rho0 = _num(sec, "rho0", "$.inflow", cfg.rho0, positive=True)
    cfg.u0 = _num(sec, "u0", "$.inflow", cfg.u0, positive=True)
    c2 = cfg.gamma * cfg.rho0 ** (cfg.gamma - 1.0)
    if not cfg.u0 * cfg.u0 > c2:
        raise ConfigError(f"$.inflow: inflow is not supersonic (u0^2={cfg.u0 ** 2:.4g}, c^2={c2:.4g})",
                          where="$.inflow")

    sec = raw.get("force", cfg.force)
    _keys(sec, ("constant", "x", "f"), "$.force")
    if "constant" in sec:
        if "x" in sec or "f" in sec:
            raise ConfigError("$.force: give either constant or x/f", where="$.force")
        cfg.force = {"constant": _num(sec, "constant", "$.force", None, positive=True)}
    elif "x" in sec and "f" in sec:
        cfg.force = {"x": [float(v) for v in sec["x"]], "f": [float(v) for v in sec["f"]]}
    else:
        raise ConfigError("$.force: need constant or both x and f", where="$.force")
    cfg.force_profile()            # positivity and coverage of the table

    sec = raw.get("exit", {})
    _keys(sec, ("Pe",), "$.exit")
    cfg.Pe = _num(sec, "Pe", "$.exit", None, positive=True)

    sec = raw.get("perturbation", {})
    _keys(sec, ("eps",) + tuple(FAMILIES), "$.perturbation")
    cfg.eps = _num(sec, "eps", "$.perturbation", 0.0)
    if cfg.eps < 0.0:
        raise ConfigError("$.perturbation.eps: must be non-negative", where="$.perturbation.eps")
    for name in FAMILIES:
        lst = sec.get(name, [])
        if not isinstance(lst, list):
            raise ConfigError(f"$.perturbation.{name}: expected a list", where=f"$.perturbation.{name}")
        parsed = []
        for i, m in enumerate(lst):
            d = _parse_mode(m, f"$.perturbation.{name}[{i}]")
            check_mode(name, _mode(d))
            parsed.append(d)
        cfg.modes[name] = parsed

    sec = raw.get("grid", {})
    _keys(sec, ("N1", "N2", "N3"), "$.grid")
    for k in ("N1", "N2", "N3"):
        n = _num(sec, k, "$.grid", getattr(cfg, k), integer=True)
        if n < 9 or n % 2 == 0:
            raise ConfigError(f"$.grid.{k}: must be odd and >= 9, got {n}", where=f"$.grid.{k}")
        setattr(cfg, k, n)

    sec = raw.get("solver", {})
    s = SolverConfig()
    _keys(sec, tuple(asdict(s)), "$.solver")
    s.fp_tol = _num(sec, "fp_tol", "$.solver", s.fp_tol, positive=True)
    s.max_outer = _num(sec, "max_outer", "$.solver", s.max_outer, positive=True, integer=True)
    s.relax = _num(sec, "relax", "$.solver", s.relax, positive=True)
    if s.relax > 1.0:
        raise ConfigError("$.solver.relax: must lie in (0, 1]", where="$.solver.relax")
    s.ball_factor = _num(sec, "ball_factor", "$.solver", s.ball_factor, positive=True)
    s.checkpoint_every = _num(sec, "checkpoint_every", "$.solver", s.checkpoint_every, integer=True)
    s.background_h = _num(sec, "background_h", "$.solver", s.background_h, positive=True)
    s.upstream = sec.get("upstream", s.upstream)
    if s.upstream not in UPSTREAM_KINDS:
        raise ConfigError(f"$.solver.upstream: expected one of {UPSTREAM_KINDS}", where="$.solver.upstream")
    s.upstream_nx = _num(sec, "upstream_nx", "$.solver", s.upstream_nx, positive=True, integer=True)
    cfg.solver = s
    return cfg


def parse_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file", where=str(path))
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})", where=str(path)) from None
    return from_dict(raw)


def loads(text: str) -> Config:
    return from_dict(json.loads(text))
