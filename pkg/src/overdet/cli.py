"""Command line front end.

    overdet <command> --config run.toml [--out DIR] [--grid N] [--tol X]

Commands: radial, serrin-check, bernoulli-check, pde-solve, counterexample,
and run (dispatch on the config's ``kind``).  Every command writes
``report.txt`` and ``report.json`` plus CSV tables into the output directory.

Exit codes: 0 RadialAndBall, 1 RadialOnly, 2 Inconclusive, 3 Unsolvable,
4 HypothesisFails (commands without a verdict exit 0 on success);
64 configuration or parse error, 65 domain or validation error,
70 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, ConvergenceError, DomainError
from .funcexpr import ExprSyntaxError
from .manifold import Kind
from .pde2d import (StarDomain, boundary_flux, build_counterexample, radial_equivalence,
                    solve_dirichlet, write_counterexample_csv, write_flux_csv,
                    write_solution_csv)
from .radial import (OverdeterminedSpec, annulus_profile, ball_profile, ode_residual, v_of,
                     w_of, write_profile_csv)
from .reporting import to_json, to_keyvalue, write_csv
from .rigidity import bernoulli_check, serrin_check, working_grid

EXIT_CONFIG = 64
EXIT_DOMAIN = 65
EXIT_SOFTWARE = 70

COMMANDS = {
    "radial": "radial",
    "serrin-check": "serrin",
    "bernoulli-check": "bernoulli",
    "pde-solve": "pde",
    "counterexample": "counterexample",
}


def _write_reports(out: Path, command: str, blocks: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(to_keyvalue({"run": {"command": command}, **blocks}),
                                    encoding="utf-8")
    (out / "report.json").write_text(to_json({"command": command, **blocks}), encoding="utf-8")


def _problem_block(cfg: RunConfig) -> dict:
    m = cfg.manifold
    block = {"manifold": m.kind.value, "h": m.h.text, "dimension": m.N, "S": m.S,
             "f": cfg.f.text, "phi": cfg.phi.text, "kappa": cfg.kappa.text}
    if cfg.interval is not None:
        block["interval"] = list(cfg.interval)
    if cfg.R0 is not None:
        block["R0"] = cfg.R0
    return block


def cmd_radial(cfg: RunConfig, out: Path) -> int:
    if "R" not in cfg.radial:
        raise ConfigError("[radial] needs 'R'")
    spec = cfg.spec()
    R = float(cfg.radial["R"])
    c = float(cfg.radial.get("c", 0.0))
    n = max(cfg.n, 16)
    if spec.annular:
        prof = annulus_profile(spec, R, c, n)
    else:
        r_min = float(cfg.radial.get("r_min", 0.0 if spec.f_pole_exponent is None
                                     else 1e-3 * R))
        prof = ball_profile(spec, R, c, n, r_min=r_min)
    res = ode_residual(prof, spec)
    out.mkdir(parents=True, exist_ok=True)
    write_profile_csv(prof, out / "profile.csv")
    _write_reports(out, "radial", {
        "problem": _problem_block(cfg),
        "profile": {"R": R, "c": c, "nodes": len(prof.grid), "r_min": float(prof.grid[0]),
                    "u_at_start": float(prof.u[0]), "u_at_R": float(prof.u[-1]),
                    "ode_residual": res},
    })
    return 0


def _rigidity(cfg: RunConfig, out: Path, command: str, check) -> int:
    spec = cfg.spec()
    report = check(spec, cfg.n)
    grid = working_grid(spec, cfg.n)
    if spec.annular:
        phi = np.asarray(spec.phi(grid), dtype=float) * np.ones_like(grid)
        lead = w_of(spec, grid, phi)
    else:
        lead = v_of(spec, grid)
    dphi = np.asarray(spec.phi.derivative()(grid), dtype=float) * np.ones_like(grid)
    kap = np.asarray(spec.kappa(grid), dtype=float) * np.ones_like(grid)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "defect.csv", ["r", "g", "d"], [grid, dphi - lead, lead - kap])
    diag = report.diagnostics()
    notes = diag.pop("notes")
    blocks = {"problem": _problem_block(cfg), "rigidity": report.as_dict(), "diagnostics": diag}
    if notes:
        blocks["notes"] = {f"note{i + 1}": text for i, text in enumerate(notes)}
    _write_reports(out, command, blocks)
    print(f"verdict = {report.verdict.value}")
    return report.exit_code


def cmd_serrin(cfg, out):
    return _rigidity(cfg, out, "serrin-check", serrin_check)


def cmd_bernoulli(cfg, out):
    return _rigidity(cfg, out, "bernoulli-check", bernoulli_check)


def _domain(cfg: RunConfig) -> StarDomain:
    p = cfg.pde
    dom = p.get("domain", "ball")
    if dom == "ball":
        return StarDomain.ball(float(p["R"]))
    if dom == "annulus":
        return StarDomain.annulus(float(p["R0"]), float(p["R"]))
    return StarDomain.ellipse(float(p["a"]), float(p["b"]))


def cmd_pde(cfg: RunConfig, out: Path) -> int:
    if cfg.manifold.N != 2:
        raise DomainError("pde-solve needs dimension = 2")
    dom = _domain(cfg)
    g = float(cfg.pde.get("g", 0.0))
    g_inner = float(cfg.pde.get("g_inner", 0.0))
    sol = solve_dirichlet(cfg.manifold, dom, cfg.f, g, cfg.resolution, g_inner=g_inner)
    flux = boundary_flux(sol)
    out.mkdir(parents=True, exist_ok=True)
    write_solution_csv(sol, out / "solution.csv")
    write_flux_csv(flux, out / "flux.csv")
    block = {"domain": dom.kind, "resolution": list(sol.resolution), "solver": sol.solver,
             "iterations": len(sol.residual_history),
             "final_residual": sol.residual_history[-1] if sol.residual_history else 0.0,
             "flux_min": float(flux.values.min()), "flux_max": float(flux.values.max())}
    R = dom.constant_radius
    if R is not None and math.isfinite(R):
        spec = OverdeterminedSpec(cfg.manifold, cfg.f, R0=dom.inner_radius)
        if dom.annular:
            prof = annulus_profile(spec, R, g)
            if g_inner != 0.0:
                prof = None        # the radial formulas fix u = 0 on the inner circle
        else:
            prof = ball_profile(spec, R, g)
        if prof is not None:
            block["radial_equivalence"] = radial_equivalence(sol, prof)
    _write_reports(out, "pde-solve", {"problem": _problem_block(cfg), "pde": block})
    return 0


def cmd_counterexample(cfg: RunConfig, out: Path) -> int:
    if cfg.manifold.kind is not Kind.EUCLIDEAN or cfg.manifold.N != 2:
        raise DomainError("the counterexample needs the Euclidean preset with dimension 2")
    a = float(cfg.counterexample["a"])
    b = float(cfg.counterexample["b"])
    n_r = int(cfg.counterexample.get("n_r", 101))
    res = cfg.resolution if "resolution" in cfg.raw.get("grid", {}) else (192, 384)
    table = build_counterexample(a, b, cfg.f, res, n_r=n_r)
    out.mkdir(parents=True, exist_ok=True)
    write_counterexample_csv(table, out / "counterexample.csv")
    block = {"a": a, "b": b, "resolution": list(res), "consistency": table.consistency,
             "kappa_min": float(table.kappa.min()), "kappa_max": float(table.kappa.max())}
    blocks = {"problem": _problem_block(cfg), "counterexample": block}
    code = 0
    if a > b:
        # u_ν = -κ is the Neumann datum of the Serrin problem on the ellipse
        spec = OverdeterminedSpec(cfg.manifold, cfg.f, kappa=table.neumann_field(),
                                  interval=(b, a))
        report = serrin_check(spec, cfg.n)
        blocks["rigidity"] = report.as_dict()
        code = report.exit_code
        print(f"verdict = {report.verdict.value}")
    _write_reports(out, "counterexample", blocks)
    return code


HANDLERS = {
    "radial": cmd_radial,
    "serrin": cmd_serrin,
    "bernoulli": cmd_bernoulli,
    "pde": cmd_pde,
    "counterexample": cmd_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overdet",
                                description="Radial solutions and rigidity checks for "
                                            "overdetermined problems on model manifolds.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["run"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--grid", type=int, help="grid size override (nodes / radial cells)")
        sp.add_argument("--tol", type=float, help="quadrature tolerance override")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.out:
        cfg.output_dir = Path(args.out)
    if args.grid is not None:
        if args.grid < 16:
            raise ConfigError("--grid must be at least 16")
        cfg.n = args.grid
        cfg.resolution = (args.grid, 2 * args.grid)
        cfg.raw.setdefault("grid", {})["resolution"] = list(cfg.resolution)
    if args.tol is not None:
        cfg.quad_tol = args.tol
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        kind = cfg.kind if args.command == "run" else COMMANDS[args.command]
        if args.command != "run" and cfg.kind != kind:
            if not (kind == "radial" and cfg.kind in ("serrin", "bernoulli")):
                raise ConfigError(f"command '{args.command}' does not match kind '{cfg.kind}'")
        return HANDLERS[kind](cfg, cfg.output_dir)
    except ExprSyntaxError as exc:
        where = getattr(exc, "field_name", None)
        print(f"error: {exc}" + (f" in '{where}'" if where else ""), file=sys.stderr)
        print(exc.caret(), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
