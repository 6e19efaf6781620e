"""Command-line driver: ``parastab {mesh,solve-periodic,simulate,compare}``.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure,
4 periodic iteration without convergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .coefficients import builtin
from .config import ExperimentConfig, load_config, render_config, validate
from .errors import ConfigError, InvalidArgument, NoConvergence, ParastabError
from .fem import assemble_operators
from .feedback import FeedbackLaw
from .mesh import build_unit_square_mesh, refine, write_mesh
from .riccati import (RiccatiGainTable, diffusion_generator, load_gain_table, periodic_riccati,
                      save_gain_table, system_function)
from .simulate import run_simulation, summary, trace_csv
from .spaces import build_actuator_basis, state_weight

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_NO_CONVERGENCE = 0, 2, 3, 4


def _atomic_write(path: Path, data, writer=None) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        if writer is not None:
            writer(tmp)
        else:
            mode = "wb" if isinstance(data, bytes) else "w"
            with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8",
                                                             "newline": ""})) as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output.dir)


def _table_path(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output.gain_table)
    return p if p.is_absolute() else _out_dir(cfg) / p


def _coefficients(cfg: ExperimentConfig):
    p = cfg.problem
    return builtin(p.coefficients, p.c, p.initial)


def cmd_mesh(cfg: ExperimentConfig, export: str | None = None) -> int:
    mesh = refine(build_unit_square_mesh(cfg.mesh.base_n), cfg.mesh.refine)
    print(f"level {mesh.level}: N = {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    if export:
        _atomic_write(Path(export), None, lambda tmp: write_mesh(mesh, tmp))
        print(f"mesh written to {export}")
    return EXIT_OK


def solve_table(cfg: ExperimentConfig, log=print):
    """Periodic Riccati iteration on the level-0 mesh; returns the PeriodicResult."""
    fb = cfg.feedback
    mesh = build_unit_square_mesh(cfg.mesh.base_n)
    ops = assemble_operators(mesh, cfg.problem.nu)
    basis = build_actuator_basis(mesh, ops.mass, cfg.actuators.m, cfg.actuators.r, fb.beta)
    log(f"periodic Riccati: N = {mesh.n_nodes}, M0 = {basis.count}")
    return periodic_riccati(
        system_function(ops, mesh, _coefficients(cfg), fb.mu_bar), basis.B,
        state_weight(ops.mass), fb.tau, fb.varpi, fb.k_ric, epsilon=fb.epsilon,
        n_max=fb.n_max, delta_s=fb.delta_s, A_diffusion=diffusion_generator(ops), beta=fb.beta,
        progress=lambda n, e: log(f"  sweep {n}: error {e:.6e}"))


def _write_history(cfg: ExperimentConfig, history) -> Path:
    path = _out_dir(cfg) / "error_history.csv"
    lines = ["n,error"] + [f"{n},{e!r}" for n, e in enumerate(history, start=1)]
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def _save_table(cfg: ExperimentConfig, table: RiccatiGainTable) -> Path:
    path = _table_path(cfg)
    _atomic_write(path, None, lambda tmp: save_gain_table(table, tmp))
    return path


def cmd_solve_periodic(cfg: ExperimentConfig) -> int:
    if cfg.feedback.law != "riccati":
        raise ConfigError("solve-periodic needs law = riccati")
    try:
        res = solve_table(cfg)
    except NoConvergence as err:
        if err.history:
            print(f"error history written to {_write_history(cfg, err.history)}")
        raise
    print(f"converged after {res.sweeps} sweeps, step halvings {sum(res.halvings)}")
    print(f"error history written to {_write_history(cfg, res.history)}")
    print(f"gain table written to {_save_table(cfg, res.table)}")
    return EXIT_OK


def _law(cfg: ExperimentConfig, kind: str, table: RiccatiGainTable | None = None) -> FeedbackLaw:
    a = cfg.actuators
    if kind == "none":
        return FeedbackLaw.none(a.m, a.r)
    if kind == "oblique":
        return FeedbackLaw.oblique(a.m, cfg.feedback.lam, a.r)
    if table is None:
        path = _table_path(cfg)
        if not path.exists():
            raise ConfigError(f"gain table {path} not found; run solve-periodic first")
        try:
            table = load_gain_table(path)
        except InvalidArgument as err:
            raise ConfigError(str(err)) from None
    if table.m0 != a.m ** 2:
        raise ConfigError(f"gain table has M0 = {table.m0}, config asks for {a.m ** 2}")
    if table.beta != cfg.feedback.beta:
        raise ConfigError("gain table was computed for a different beta")
    return FeedbackLaw.riccati(table, a.r)


def _simulate(cfg: ExperimentConfig, law: FeedbackLaw, mesh=None):
    mesh = mesh or refine(build_unit_square_mesh(cfg.mesh.base_n), cfg.mesh.refine)
    trace = run_simulation(_coefficients(cfg), mesh, law, cfg.simulation.horizon, cfg.step,
                           nu=cfg.problem.nu, beta=cfg.feedback.beta)
    return trace, summary(trace, cfg.simulation.window)


def _write_trace(cfg: ExperimentConfig, kind: str, trace, summ) -> None:
    out = _out_dir(cfg)
    _atomic_write(out / f"trace_{kind}.csv", trace_csv(trace))
    _atomic_write(out / f"summary_{kind}.json", _json(summ))


def cmd_simulate(cfg: ExperimentConfig) -> int:
    kind = cfg.feedback.law
    trace, summ = _simulate(cfg, _law(cfg, kind))
    _write_trace(cfg, kind, trace, summ)
    mu = summ["fitted_mu"]
    mu_text = "n/a (zero state)" if mu is None else f"{mu:.4f}"
    print(f"{kind}: J = {summ['J_total']:.6g}, fitted mu = {mu_text}, outputs in {_out_dir(cfg)}")
    return EXIT_OK


def _not_decaying(summ: dict) -> bool:
    mu = summ["fitted_mu"]
    return mu is not None and mu <= 0


def cmd_compare(cfg: ExperimentConfig) -> int:
    """Oblique against Riccati feedback; computes the gain table when it is missing."""
    path = _table_path(cfg)
    table = None
    if not path.exists():
        res = solve_table(cfg)
        _write_history(cfg, res.history)
        _save_table(cfg, res.table)
        table = res.table
    results = {}
    mesh = refine(build_unit_square_mesh(cfg.mesh.base_n), cfg.mesh.refine)
    for kind in ("oblique", "riccati"):
        trace, summ = _simulate(cfg, _law(cfg, kind, table), mesh)
        _write_trace(cfg, kind, trace, summ)
        results[kind] = summ
    J_r, J_o = results["riccati"]["J_total"], results["oblique"]["J_total"]
    report = {
        "J_riccati": J_r,
        "J_oblique": J_o,
        "riccati_le_oblique": bool(J_r <= J_o),
        "fitted_mu_riccati": results["riccati"]["fitted_mu"],
        "fitted_mu_oblique": results["oblique"]["fitted_mu"],
        "oblique_not_decaying": _not_decaying(results["oblique"]),
        "riccati_not_decaying": _not_decaying(results["riccati"]),
        "M0": results["oblique"]["M0"],
        "mesh_level": mesh.level,
    }
    _atomic_write(_out_dir(cfg) / "comparison.json", _json(report))
    print(f"J_ricc = {J_r:.6g}, J_obli = {J_o:.6g}, J_ricc <= J_obli: {J_r <= J_o}")
    if report["oblique_not_decaying"]:
        print("warning: oblique feedback does not decay on the fit window")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parastab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file (defaults apply when omitted)")
    common.add_argument("--refine", type=int, help="override [mesh] refine")
    common.add_argument("--law", choices=("none", "oblique", "riccati"),
                        help="override [feedback] law")
    common.add_argument("--out", help="override [output] dir")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("mesh", parents=[common], help="build and report the mesh")
    p.add_argument("--export", help="write the mesh as text to this path")
    sub.add_parser("solve-periodic", parents=[common], help="periodic Riccati gain table")
    sub.add_parser("simulate", parents=[common], help="closed-loop run, trace and summary")
    sub.add_parser("compare", parents=[common], help="oblique vs Riccati cost comparison")
    p = sub.add_parser("show-config", parents=[common], help="print the effective config")
    return ap


def _effective_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else validate(ExperimentConfig())
    if args.refine is not None:
        cfg = cfg.replace("mesh", refine=args.refine)
    if args.law is not None:
        cfg = cfg.replace("feedback", law=args.law)
    if args.out is not None:
        cfg = cfg.replace("output", dir=args.out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _effective_config(args)
        if args.command == "mesh":
            return cmd_mesh(cfg, args.export)
        if args.command == "solve-periodic":
            return cmd_solve_periodic(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        sys.stdout.write(render_config(cfg))
        return EXIT_OK
    except (ConfigError, InvalidArgument) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as err:
        print(f"no convergence: {err}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ParastabError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
