"""Command-line driver: ``transhock {background,sweep,solve,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .background import State1D, admissible_pressure_range, find_shock_position
from .config import Config, parse_config
from .driver import HISTORY_COLUMNS, IterState, Problem, Solution, finalize, iterate
from .errors import ConfigError, EntropyViolated, NotConverged, PressureOutOfRange, TranshockError
from .gas import GasParams
from .io import read_checkpoint, write_checkpoint, write_csv, write_field_csv
from .upstream import analytic_supersonic, march_supersonic
from .verification import report, report_json, report_text

log = logging.getLogger("transhock")

VERIFY_TOL = 1e-12
SOLUTION_FILES = ("config.json", "solution.ckpt", "report.json")


def _grid_arg(s: str) -> tuple[int, int, int]:
    try:
        n = tuple(int(p) for p in s.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N1xN2xN3, got {s!r}") from None
    if len(n) != 3:
        raise argparse.ArgumentTypeError(f"expected N1xN2xN3, got {s!r}")
    return n


def load_config(args) -> Config:
    cfg = parse_config(args.config) if args.config else Config()
    if getattr(args, "grid", None):
        for k, n in zip(("N1", "N2", "N3"), args.grid):
            if n < 9 or n % 2 == 0:
                raise ConfigError(f"--grid: {k} must be odd and >= 9, got {n}", where="--grid")
            setattr(cfg, k, n)
    if getattr(args, "eps", None) is not None:
        if args.eps < 0.0:
            raise ConfigError("--eps must be non-negative", where="--eps")
        cfg.eps = float(args.eps)
    return cfg


def build_problem(cfg: Config) -> Problem:
    bg = cfg.background()
    grid = cfg.grid(bg.Ls)
    pert = cfg.perturbation()
    if cfg.solver.upstream == "march":
        field = march_supersonic(pert, bg, grid.y2, grid.y3)
    else:
        field = analytic_supersonic(pert, bg, grid.y2, grid.y3, nx=cfg.solver.upstream_nx)
    field.check_supersonic()
    return Problem(bg, field, pert, grid)


# ---------------------------------------------------------------------------
# subcommands


def cmd_background(cfg: Config, out: Path, args) -> int:
    bg = cfg.background()
    bg.to_csv(out / "background.csv")
    bg.to_json(out / "background.json")
    j = bg.jumps()
    print(f"Ls = {bg.Ls:.12f}  Pe = {bg.Pe:.12f}  admissible Pe in [{bg.P_range[0]:.10f}, {bg.P_range[1]:.10f}]")
    print(f"mass jump {j['mass']:.3e}  momentum jump {j['momentum']:.3e}  pressure jump {j['pressure']:.6f}")
    return 0


def pressure_sweep(cfg: Config, k: int) -> list[tuple[float, float]]:
    """k exit pressures spanning the admissible range and the matching shock positions."""
    if k < 2:
        raise ConfigError("--pe-steps must be at least 2", where="--pe-steps")
    gas = GasParams(cfg.gamma)
    force = cfg.force_profile()
    h = cfg.solver.background_h
    inflow = State1D(cfg.L0, cfg.rho0, cfg.u0, gas)
    P1, P0 = admissible_pressure_range(inflow, force, gas, cfg.L0, cfg.L1, h)
    rows = []
    for Pe in np.linspace(P1, P0, k):
        bg = find_shock_position(float(Pe), inflow, force, gas, cfg.L0, cfg.L1, h)
        rows.append((float(Pe), bg.Ls))
    Ls = np.array([r[1] for r in rows])
    if not np.all(np.diff(Ls) < 0.0):
        i = int(np.argmax(np.diff(Ls) >= 0.0))
        raise PressureOutOfRange(f"shock position not strictly decreasing in Pe between steps {i} and {i + 1}",
                                 stage="sweep", where=i)
    return rows


def cmd_sweep(cfg: Config, out: Path, args) -> int:
    rows = pressure_sweep(cfg, args.pe_steps)
    write_csv(out / "sweep.csv", ["Pe", "Ls"], rows)
    for Pe, Ls in rows:
        print(f"Pe {Pe:.10f}  Ls {Ls:.10f}")
    return 0


def write_history(path, history: list[dict]) -> None:
    write_csv(path, list(HISTORY_COLUMNS), ([r[c] for c in HISTORY_COLUMNS] for r in history))


def write_solution(out: Path, cfg: Config, sol: Solution) -> None:
    g = sol.grid
    Y1, Y2, Y3 = g.mesh()
    write_field_csv(out / "fields.csv", {"y1": Y1, "y2": Y2, "y3": Y3, "x1": sol.x1}, sol.fields())
    T2, T3 = g.trace_mesh()
    write_field_csv(out / "shock.csv", {"y2": T2, "y3": T3},
                    {"xi": sol.xi, "P_plus": sol.P[0], "P_minus": sol.P_minus})
    write_history(out / "history.csv", sol.history)
    st = sol.state
    arrays = {"v": st.v, "v5": st.v5, "Pi": st.Pi, "omega": st.omega, "x1": sol.x1, "xi": sol.xi,
              "P_minus": sol.P_minus, **sol.fields()}
    meta = {"compat": st.diagnostics.get("compat", {}), "history": sol.report["history"]}
    write_checkpoint(out / "solution.ckpt", arrays, meta)
    (out / "report.json").write_text(report_json(sol.report) + "\n")


def cmd_solve(cfg: Config, out: Path, args) -> int:
    cfg.save(out / "config.json")
    prob = build_problem(cfg)
    settings = cfg.settings()
    settings.checkpoint_path = str(out / "checkpoint.ckpt")
    if not settings.checkpoint_every:
        settings.checkpoint_every = 1
    try:
        state, history = iterate(prob, settings, resume=args.resume)
    except NotConverged as e:
        if e.history:
            write_history(out / "history.csv", e.history)
        raise
    try:
        sol = finalize(state, prob, history)
        status = "converged"
    except EntropyViolated as e:
        # keep the artifacts so the violation can be inspected
        sol = finalize(state, prob, history, check=False)
        status = "entropy_violated"
        err = e
    sol.report = report(sol, status)
    write_solution(out, cfg, sol)
    print(report_text(sol.report))
    if status != "converged":
        raise err
    return 0


def load_solution(directory: Path) -> tuple[Config, Solution]:
    """Rebuild a Solution from saved fields (the problem data are recomputed from the stored config)."""
    for name in SOLUTION_FILES:
        if not (directory / name).is_file():
            raise ConfigError(f"{directory / name}: missing", where=name)
    cfg = parse_config(directory / "config.json")
    prob = build_problem(cfg)
    arrays, meta = read_checkpoint(directory / "solution.ckpt")
    state = IterState(arrays["v"], arrays["v5"], arrays["omega"], arrays["Pi"],
                      {"compat": meta.get("compat", {})})
    hist = [{k: (math.nan if v is None else v) for k, v in r.items()} for r in meta.get("history", [])]
    sol = Solution(prob.grid, arrays["x1"], arrays["u1"], arrays["u2"], arrays["u3"], arrays["P"],
                   arrays["rho"], arrays["xi"], arrays["P_minus"], state, hist, prob)
    return cfg, sol


def max_deviation(a, b, path="$") -> tuple[float, str]:
    """Largest absolute difference between two JSON-like trees (inf on a structural mismatch)."""
    if isinstance(a, dict) and isinstance(b, dict):
        if set(a) != set(b):
            return math.inf, path
        pairs = [max_deviation(a[k], b[k], f"{path}.{k}") for k in sorted(a)]
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return math.inf, path
        pairs = [max_deviation(x, y, f"{path}[{i}]") for i, (x, y) in enumerate(zip(a, b))]
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return abs(float(a) - float(b)), path
    else:
        return (0.0 if a == b else math.inf), path
    return max(pairs, default=(0.0, path), key=lambda p: p[0])


def cmd_verify(cfg: Config, out: Path, args) -> int:
    directory = Path(args.solution)
    _, sol = load_solution(directory)
    # the recomputed physical fields must match the stored ones as well
    fresh = finalize(sol.state, sol.problem, sol.history, check=False)
    dev_fields = max(float(np.max(np.abs(getattr(fresh, k) - getattr(sol, k))))
                     for k in ("x1", "u1", "u2", "u3", "P", "rho", "xi", "P_minus"))
    stored = json.loads((directory / "report.json").read_text())
    rep = report(sol, stored.get("status", "converged"))
    dev, where = max_deviation(json.loads(report_json(rep)), stored)
    (out / "verify.json").write_text(json.dumps({"report_deviation": dev, "worst_entry": where,
                                                 "field_deviation": dev_fields}, indent=2, sort_keys=True) + "\n")
    print(report_text(rep))
    print(f"report deviation {dev:.3e} at {where};  field deviation {dev_fields:.3e}")
    if dev > VERIFY_TOL or dev_fields > VERIFY_TOL:
        print(f"verify: stored artifacts not reproduced within {VERIFY_TOL:.0e}", file=sys.stderr)
        return 3
    return 0


COMMANDS = {"background": cmd_background, "sweep": cmd_sweep, "solve": cmd_solve, "verify": cmd_verify}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--grid", metavar="N1xN2xN3", type=_grid_arg, help="override the grid sizes")
    common.add_argument("--eps", type=float, help="override the perturbation amplitude")
    common.add_argument("--threads", type=int, help="worker threads (fallback: TRANSHOCK_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="transhock", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("background", parents=[common], help="1-D background flow with a transonic shock")
    sp = sub.add_parser("sweep", parents=[common], help="shock position across admissible exit pressures")
    sp.add_argument("--pe-steps", type=int, default=7, metavar="K")
    sp = sub.add_parser("solve", parents=[common], help="3-D perturbed transonic shock")
    sp.add_argument("--resume", metavar="PATH", help="restart from a checkpoint")
    sp = sub.add_parser("verify", parents=[common], help="recompute the report of a saved solution")
    sp.add_argument("--solution", metavar="DIR", required=True)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        _kernels.set_threads(args.threads)
        out.mkdir(parents=True, exist_ok=True)
        try:
            cfg = load_config(args)
        except TranshockError as e:
            e.stage = e.stage or "config"
            raise
        return COMMANDS[args.command](cfg, out, args)
    except TranshockError as e:
        stage = e.stage or args.command
        msg = e.args[0] if e.args else ""
        print(f"transhock {args.command}: {type(e).__name__} in stage '{stage}': {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
