"""Command-line entry point: reproducible experiment runs with artifacts.

Subcommands: blasius, eigen, solve, decay, sharpness.  Exit codes:
0 success, 2 config error, 3 numeric failure, 4 guard violation.  On
failure a JSON diagnostic {error, message, exit_code} goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import blasius as bl
from . import config as cfgmod
from . import eigen as eig
from . import march as mar
from .artifacts import write_csv, write_json, write_jsonl
from .diagnostics import build_decay_report, fit_decay, sharpness_family
from .errors import ConfigError, GuardViolation, NumericsError
from .grid import load_initial_csv, make_grid


def _resolved(cfg: cfgmod.RunConfig) -> dict:
    return {"config": cfg.to_dict(), "config_text": cfgmod.canonical_text(cfg)}


def _solve_blasius(cfg: cfgmod.RunConfig) -> bl.BlasiusProfile:
    b = cfg.blasius
    return bl.solve_blasius(
        z_max=b.z_max, step=b.step, shoot_tol=b.shoot_tol,
        residual_tol=b.residual_tol,
        fit_window=(b.fit_lo_frac * b.z_max, b.fit_hi_frac * b.z_max))


def cmd_blasius(cfg: cfgmod.RunConfig, out: Path) -> int:
    profile = _solve_blasius(cfg)
    grid = make_grid(cfg.grid.psi_max, cfg.grid.j_cells, cfg.grid.stretch)
    ss = bl.build_self_similar(profile, grid.nodes, tail_tol=cfg.blasius.tail_tol)
    write_csv(out / "blasius_profile.csv", ["z", "f", "fp", "fpp"],
              [profile.z_grid, profile.f, profile.fp, profile.fpp])
    write_csv(out / "self_similar.csv",
              ["psi", "wbar", "wbar_p", "wbar_pp", "rho"],
              [ss.psi_grid, ss.wbar, ss.wbar_p, ss.wbar_pp, ss.rho])
    write_json(out / "summary.json", {
        "b0": profile.b0, "n1": profile.n1, "n2": profile.n2,
        "residual": profile.ode_residual(),
        "wbar_residual": ss.stationarity_residual(),
        **_resolved(cfg),
    })
    return 0


def cmd_eigen(cfg: cfgmod.RunConfig, out: Path) -> int:
    profile = _solve_blasius(cfg)
    j_top = cfg.grid.j_cells
    js = [max(64, j_top // (2 ** k)) for k in range(cfg.eigen.refine_levels)]
    result = eig.principal_eigen_refined(
        profile, cfg.grid.psi_max, sorted(set(js)), tol=cfg.eigen.tol,
        stretch=cfg.grid.stretch, shift=cfg.eigen.shift)
    grid = make_grid(cfg.grid.psi_max, j_top, cfg.grid.stretch)
    write_csv(out / "eigenvector.csv", ["psi", "v"],
              [grid.nodes, result.eigvec])
    write_json(out / "eigen.json", {
        "lambda1": result.lambda1, "rq": result.rq, "iters": result.iters,
        "refine_history": [[int(j), lam] for j, lam in result.refine_history],
        **_resolved(cfg),
    })
    return 0


def _initial_field(cfg: cfgmod.RunConfig, ss, grid):
    if cfg.solve.init_csv:
        prof = load_initial_csv(cfg.solve.init_csv)
        from .grid import ingest_initial
        return ingest_initial(prof, cfg.solve.d_shift, grid)
    return mar.initial_from_similarity(ss, grid, cfg.solve.s_shift,
                                       cfg.solve.d_shift)


def _march_setup(cfg: cfgmod.RunConfig, stations):
    profile = _solve_blasius(cfg)
    grid = make_grid(cfg.grid.psi_max, cfg.grid.j_cells, cfg.grid.stretch)
    ss = bl.build_self_similar(profile, grid.nodes,
                               tail_tol=cfg.blasius.tail_tol)
    init = _initial_field(cfg, ss, grid)
    out_xis = np.log(np.asarray(stations) + cfg.solve.d_shift)
    mcfg = mar.MarchConfig(
        d_shift=cfg.solve.d_shift, xi_end=float(out_xis[-1]),
        dxi=cfg.solve.dxi, scheme=cfg.solve.scheme,
        guards=mar.GuardFlags(fatal=cfg.solve.guards_fatal,
                              concavity=cfg.solve.concave_guard))
    return profile, grid, ss, init, mcfg, out_xis


def cmd_solve(cfg: cfgmod.RunConfig, out: Path) -> int:
    s = cfg.solve
    stations = np.geomspace(max(s.x_end / 10.0, 0.1), s.x_end, s.n_outputs) \
        if s.n_outputs > 1 else np.array([s.x_end])
    profile, grid, ss, init, mcfg, out_xis = _march_setup(cfg, stations)
    traj = mar.march(init, mcfg, out_xis, ss)
    for k, snap in enumerate(traj.snapshots):
        write_csv(out / f"snapshot_{k:02d}.csv", ["psi", "omega"],
                  [snap.grid.nodes, snap.values])
    write_jsonl(out / "guard_log.jsonl",
                [{"xi": g.xi, "k1": g.k1, "k2": g.k2,
                  "wall_slope": g.wall_slope, "max_p": g.max_p}
                 for g in traj.guard_log])
    final = traj.snapshots[-1]
    write_json(out / "solve.json", {
        "snapshots": [s_.xi for s_ in traj.snapshots],
        "final_equilibrium_gap": float(np.max(np.abs(final.values - ss.wbar))),
        "final_xi": final.xi,
        **_resolved(cfg),
    })
    return 0


def cmd_decay(cfg: cfgmod.RunConfig, out: Path) -> int:
    d = cfg.decay
    stations = np.geomspace(d.x_lo, d.x_hi, d.n_stations)
    cfg.solve.x_end = float(d.x_hi)
    profile, grid, ss, init, mcfg, out_xis = _march_setup(cfg, stations)
    traj = mar.march(init, mcfg, out_xis, ss)
    report = build_decay_report(traj, ss, profile, window=(d.x_lo, d.x_hi))
    payload = report.to_json_dict()
    payload.update(_resolved(cfg))
    write_json(out / "decay_report.json", payload)
    pairs = [(0, 0), (0, 1), (0, 2), (1, 0)]
    write_csv(out / "norms.csv",
              ["x"] + [f"norm_{i}{j}" for i, j in pairs],
              [report.stations] + [report.norms[ij] for ij in pairs])
    write_csv(out / "loglog.csv",
              ["log_x_plus_1"] + [f"log_norm_{i}{j}" for i, j in pairs],
              [np.log(np.asarray(report.stations) + 1.0)]
              + [np.log(report.norms[ij]) for ij in pairs])
    return 0


def cmd_sharpness(cfg: cfgmod.RunConfig, out: Path) -> int:
    sh = cfg.sharpness
    profile = _solve_blasius(cfg)
    stations = np.geomspace(sh.x_lo, sh.x_hi, sh.n_stations)
    pairs = [(0, 0), (0, 1), (0, 2), (1, 0)]
    table = sharpness_family(profile, sh.s_shift, sh.d_shift, stations, pairs)
    write_csv(out / "sharpness.csv",
              ["x"] + [f"norm_{i}{j}" for i, j in pairs],
              [stations] + [table[ij] for ij in pairs])
    slopes = {}
    for ij in pairs:
        fit = fit_decay(stations, table[ij], window=(sh.x_lo, sh.x_hi))
        slopes[f"slope_{ij[0]}{ij[1]}"] = {
            "slope": fit.slope, "half_width": fit.half_width}
    write_json(out / "sharpness.json", {"slopes": slopes, **_resolved(cfg)})
    return 0


_DISPATCH = {
    "blasius": cmd_blasius,
    "eigen": cmd_eigen,
    "solve": cmd_solve,
    "decay": cmd_decay,
    "sharpness": cmd_sharpness,
}


def _diagnostic(exc: Exception, code: int) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="prandtl",
        description="boundary-layer similarity laboratory")
    parser.add_argument("command", choices=cfgmod.COMMANDS)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--preset", help="named parameter bundle")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override a single config value")
    args = parser.parse_args(argv)

    try:
        cfg = cfgmod.load_config(args.config) if args.config \
            else cfgmod.RunConfig()
        if args.preset:
            cfgmod.apply_preset(cfg, args.preset)
        cfg.command = args.command
        cfgmod.apply_overrides(cfg, args.set)
        if args.out:
            cfg.out = args.out
        cfg.validate()
    except (ConfigError, OSError) as exc:
        _diagnostic(exc, 2)
        return 2

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        np.random.default_rng(cfg.seed)  # reserved for randomized batteries
        return _DISPATCH[cfg.command](cfg, out)
    except ConfigError as exc:
        _diagnostic(exc, 2)
        return 2
    except GuardViolation as exc:
        _diagnostic(exc, 4)
        return 4
    except NumericsError as exc:
        _diagnostic(exc, 3)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
