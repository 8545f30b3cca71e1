"""Command-line front end.

Exit status: 0 success, 2 invalid configuration or arguments, 3 solver
non-convergence, 4 threshold violation under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_slip
from .fem import SolverError, solve_steady
from .geometry import GeometryError, build_region_map
from .materials import MaterialError
from .mec import build_network, mec_airgap_flux, mec_torque_curve, rotor_reaction_gap, solve_network
from .mesh import MeshError, generate_mesh, mesh_quality, refine_uniform
from .postprocess import (ASYMMETRY_DEFINITION, SweepRow, TorqueSpeedCurve, demag_margin, element_fields,
                          evaluate, sweep_torque_speed)
from .verification import cylinder_comparison, mms_study, slab_table
from .vtk import solution_cell_data, write_vtk

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4
COMMANDS = ("solve", "sweep", "demag", "mec", "oracle", "mesh-info")

log = logging.getLogger("ecoupler")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ecoupler", description="IPM eddy-current coupler simulator")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (default: bundled reference device)")
    p.add_argument("--slip", help="slip speed VALUE[rad/s|rpm] for solve/demag")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep points (disables warm starts)")
    p.add_argument("--strict", action="store_true", help="exit 4 when a threshold is violated")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--refine", type=int, help="uniform mesh refinements (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true", help="log Newton residuals to stderr")
    return p


class Report:
    def __init__(self, cfg: RunConfig, command: str):
        self.lines = [f"ecoupler {command}", ""]
        spec = cfg.coupler
        self.lines.append("coupler: " + ", ".join(
            f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in cfg.to_dict()["coupler"].items()))
        self.violations: list[str] = []
        self.errors: list[str] = []
        self.spec = spec

    def add(self, *lines):
        self.lines.extend(lines)

    def write(self, out: Path):
        body = list(self.lines)
        if self.violations:
            body += ["", "threshold violations:"] + [f"  {v}" for v in self.violations]
        if self.errors:
            body += ["", "errors:"] + [f"  {e}" for e in self.errors]
        (out / "report.txt").write_text("\n".join(body) + "\n")


def _mesh(cfg: RunConfig, refine: int):
    mesh = generate_mesh(build_region_map(cfg.coupler), cfg.density())
    for _ in range(refine):
        mesh = refine_uniform(mesh)
    return mesh


def _check(row: SweepRow, cfg: RunConfig, report: Report, thermal: bool = True):
    t = cfg.thresholds
    if row.demag_margin <= t.min_demag_margin_A_m:
        report.violations.append(
            f"slip {row.omega:g} rad/s: demag margin {row.demag_margin:.6g} A/m <= {t.min_demag_margin_A_m:g}")
    if thermal and row.avgJ > t.thermal_J_A_mm2:
        report.violations.append(
            f"slip {row.omega:g} rad/s: mean |J| {row.avgJ:.4g} A/mm^2 > {t.thermal_J_A_mm2:g}")


def _slip_name(w: float) -> str:
    return f"{w:g}".replace("-", "m")


def _curve_lines(curve: TorqueSpeedCurve) -> list[str]:
    lines = [f"{'slip rad/s':>11} {'torque N.m':>11} {'lorentz':>11} {'loss W':>11} {'avg J':>8} "
             f"{'max J':>8} {'asym':>6} {'margin kA/m':>12}"]
    for r in curve.rows:
        if r.converged:
            lines.append(f"{r.omega:11.4g} {r.torque:11.5g} {r.torque_lorentz:11.5g} {r.loss:11.5g} "
                         f"{r.avgJ:8.4g} {r.maxJ:8.4g} {r.asymmetry:6.3g} {r.demag_margin / 1e3:12.5g}")
        else:
            lines.append(f"{r.omega:11.4g}  FAILED: {r.error}")
    return lines


def cmd_solve(cfg, args, out, report):
    w = parse_slip(args.slip) if args.slip is not None else cfg.slip.rad_s
    mesh = _mesh(cfg, args.refine_k)
    sol = solve_steady(mesh, cfg.material_map(), w, cfg.solver_options())
    row = evaluate(sol)
    write_vtk(out / f"fields_{_slip_name(w)}.vtk", mesh, solution_cell_data(sol),
              title=f"ecoupler fields at slip {w:g} rad/s")
    J = element_fields(sol).J
    dm = demag_margin(sol)
    report.add(
        "", f"slip: {w:.6g} rad/s ({w * 60 / (2 * math.pi):.6g} rpm)",
        f"mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements",
        f"newton: {sol.iterations} iterations, relative residual {sol.final_residual:.3e}, "
        f"max mesh Peclet {sol.peclet_max:.3g}",
        f"torque (Arkkio): {row.torque:.6g} N.m",
        f"torque (Lorentz): {row.torque_lorentz:.6g} N.m",
        f"ohmic loss: {row.loss:.6g} W",
        f"mean |J|: {row.avgJ:.6g} A/mm^2, max |J|: {row.maxJ:.6g} A/mm^2, max |Jz| element value "
        f"{abs(J).max():.6g} A/m^2",
        f"asymmetry: {row.asymmetry:.6g} ({ASYMMETRY_DEFINITION})",
        f"demag: max reverse field {dm.H_rev_max:.6g} A/m at element {dm.worst_element}, "
        f"margin {dm.margin:.6g} A/m",
    )
    _check(row, cfg, report)
    return EXIT_OK


def _sweep(cfg, args, slips=None):
    mesh = _mesh(cfg, args.refine_k)
    jobs = max(1, args.jobs)
    warm = cfg.solver.warm_start and jobs == 1
    curve = sweep_torque_speed(cfg.coupler, cfg.material_map(), slips or cfg.sweep.slips(),
                               cfg.solver_options(), mesh=mesh, jobs=jobs, warm_start=warm)
    curve.thermal_limit_A_mm2 = cfg.thresholds.thermal_J_A_mm2
    return mesh, curve


def cmd_sweep(cfg, args, out, report):
    mesh, curve = _sweep(cfg, args)
    curve.to_csv(out / "curve.csv")
    report.add("", f"mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements", "")
    report.add(*_curve_lines(curve))
    status = EXIT_OK
    failed = [r for r in curve.rows if not r.converged]
    for r in failed:
        report.errors.append(f"slip {r.omega:g} rad/s did not converge: {r.error}")
    if curve.ok:
        pk = curve.peak()
        lim = curve.thermal_limit_slip()
        report.add("", f"peak torque: {pk.torque:.6g} N.m at {pk.omega:.6g} rad/s",
                   "thermal-limit slip (mean |J| = {:g} A/mm^2): {}".format(
                       curve.thermal_limit_A_mm2, f"{lim:.6g} rad/s" if lim is not None else "not reached"),
                   f"asymmetry: {ASYMMETRY_DEFINITION}")
        for r in curve.ok:
            _check(r, cfg, report, thermal=False)
    if failed:
        status = EXIT_SOLVER
    return status


def cmd_demag(cfg, args, out, report):
    slips = [parse_slip(args.slip)] if args.slip is not None else None
    mesh, curve = _sweep(cfg, args, slips)
    report.add("", f"{'slip rad/s':>11} {'torque N.m':>11} {'margin kA/m':>12}")
    for r in curve.rows:
        report.add(f"{r.omega:11.4g} {r.torque:11.5g} {r.demag_margin / 1e3:12.5g}" if r.converged
                   else f"{r.omega:11.4g}  FAILED: {r.error}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("omega_slip_rad_s", "torque_Nm", "demag_margin_A_m"))
    for r in curve.rows:
        w.writerow([f"{v:.9g}" for v in (r.omega, r.torque, r.demag_margin)])
    (out / "demag.csv").write_text(buf.getvalue())
    if curve.ok:
        pk = curve.peak()
        worst = min(curve.ok, key=lambda r: r.demag_margin)
        report.add("", f"peak-torque slip {pk.omega:.6g} rad/s: margin {pk.demag_margin:.6g} A/m",
                   f"worst margin {worst.demag_margin:.6g} A/m at {worst.omega:.6g} rad/s")
        for r in curve.ok:
            _check(r, cfg, report, thermal=False)
    failed = [r for r in curve.rows if not r.converged]
    for r in failed:
        report.errors.append(f"slip {r.omega:g} rad/s did not converge: {r.error}")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_mec(cfg, args, out, report):
    mats = cfg.material_map()
    sol = solve_network(build_network(cfg.coupler, mats, utilization=cfg.mec.utilization),
                        cfg.solver_options())
    B_g0 = mec_airgap_flux(sol)
    extra = rotor_reaction_gap(sol)
    curve = mec_torque_curve(B_g0, cfg.coupler, mats, cfg.sweep.slips(), extra)
    curve.to_csv(out / "mec_curve.csv")
    pk = curve.peak()
    report.add("", f"network: {sol.net.n_nodes} nodes, {sol.net.n_branches} branches, "
               f"{sol.iterations} Newton iterations",
               f"no-load air-gap fundamental B_g0: {B_g0:.6g} T",
               f"rotor reaction clearance: {extra * 1e3:.6g} mm",
               f"peak torque: {pk.torque:.6g} N.m at {pk.omega:.6g} rad/s")
    return EXIT_OK


def cmd_oracle(cfg, args, out, report):
    cyl = cylinder_comparison(cfg.coupler, cfg.density(), args.refine_k)
    (out / "oracle_cylinder.csv").write_text(
        "fem_Br1_T,oracle_Br1_T,rel_error\n" f"{cyl.fem:.9g},{cyl.oracle:.9g},{cyl.rel_error:.9g}\n")
    lines = ["peclet,level,n_elements,l2_error,order"]
    for pe in (0.0, 20.0):
        st = mms_study(3, pe, 3, cfg.coupler)
        orders = (math.nan,) + st.orders
        for i, (n, e) in enumerate(zip(st.n_elements, st.errors)):
            lines.append(f"{pe:g},{i},{n},{e:.9g},{orders[i]:.6g}")
    (out / "oracle_mms.csv").write_text("\n".join(lines) + "\n")
    rows = slab_table()
    (out / "oracle_slab.csv").write_text(
        "v_m_s,stress_N_m2,loss_W_m2\n" + "".join(f"{v:.9g},{s:.9g},{p:.9g}\n" for v, s, p in rows))
    report.add("", f"cylinder: FEM {cyl.fem:.6g} T, oracle {cyl.oracle:.6g} T, error {cyl.rel_error:+.3%}",
               "manufactured solution:", *[f"  {ln}" for ln in lines[1:]])
    sys.stdout.write((out / "oracle_cylinder.csv").read_text())
    sys.stdout.write((out / "oracle_mms.csv").read_text())
    return EXIT_OK


def cmd_mesh_info(cfg, args, out, report):
    mesh = _mesh(cfg, args.refine_k)
    q = mesh_quality(mesh)
    write_vtk(out / "mesh.vtk", mesh, title="ecoupler mesh")
    report.add("", *q.lines())
    sys.stdout.write("\n".join(q.lines()) + "\n")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "sweep": cmd_sweep, "demag": cmd_demag, "mec": cmd_mec,
            "oracle": cmd_oracle, "mesh-info": cmd_mesh_info}


def run(argv=None) -> int:
    out = None
    report = None
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        cfg = load_config(args.config)
        args.refine_k = cfg.mesh.refine if args.refine is None else args.refine
        if args.refine_k < 0:
            raise ConfigError("--refine", "must be >= 0")
        out = Path(args.out or Path(cfg.base_dir) / cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _setup_logging(out, args.verbose)
        report = Report(cfg, args.command)
        status = HANDLERS[args.command](cfg, args, out, report)
        if args.strict and report.violations and status == EXIT_OK:
            status = EXIT_THRESHOLD
        report.write(out)
        print(f"{args.command}: wrote {out}", file=sys.stderr)
        for v in report.violations:
            print(f"warning: {v}", file=sys.stderr)
        return status
    except (ConfigError, GeometryError, MaterialError, MeshError) as exc:
        return _fail(exc, EXIT_CONFIG, out, report)
    except SolverError as exc:
        return _fail(exc, EXIT_SOLVER, out, report)
    finally:
        _teardown_logging()


def _fail(exc, status, out, report) -> int:
    kind = "invalid configuration" if status == EXIT_CONFIG else "solver failure"
    print(f"error: {kind}: {exc}", file=sys.stderr)
    if out is not None:
        if report is None:
            (out / "report.txt").write_text(f"error: {kind}: {exc}\n")
        else:
            report.errors.append(f"{kind}: {exc}")
            report.write(out)
    return status


_handlers: list[logging.Handler] = []
_saved_level = [logging.NOTSET]


def _setup_logging(out: Path, verbose: bool):
    root = logging.getLogger("ecoupler")
    _saved_level[0] = root.level
    root.setLevel(logging.DEBUG)
    fh = logging.FileHandler(out / "run.log", mode="w")
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(fh)
    _handlers.append(fh)
    if verbose:
        sh = logging.StreamHandler(sys.stderr)
        sh.setLevel(logging.DEBUG)
        sh.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        root.addHandler(sh)
        _handlers.append(sh)


def _teardown_logging():
    root = logging.getLogger("ecoupler")
    while _handlers:
        h = _handlers.pop()
        root.removeHandler(h)
        h.close()
    root.setLevel(_saved_level[0])


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
