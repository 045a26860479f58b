"""Command-line interface: ``nsch <subcommand>``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, help_config, load_config
from .potential import ParameterError, verify_potential

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64

log = logging.getLogger("nsch")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(path, overrides):
    """Config or an exit code: 2 for file problems, 1 for invalid contents."""
    try:
        return load_config(path, overrides)
    except OSError as exc:
        _err(f"cannot read config {path}: {exc.strerror or exc}")
        return EXIT_RUNTIME
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID


def _admissible(cfg):
    from .state import InadmissibleDataError, validate_initial_data

    try:
        data = cfg.initial_data()
    except OSError as exc:
        _err(f"cannot read initial data: {exc}")
        return EXIT_RUNTIME
    except ValueError as exc:
        _err(f"initial data: {exc}")
        return EXIT_INVALID
    try:
        return validate_initial_data(data, cfg.params.potential)
    except InadmissibleDataError as exc:
        print("initial data rejected:")
        for v in exc.violations:
            print(f"  [{v.condition}] {v.message}")
        return EXIT_INVALID


# ----------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    from .diagnostics import ne1_scale
    from .runner import simulate
    from .state import build_initial_state
    from .trajectory import write_meta

    cfg = _load(args.config, args.set)
    if isinstance(cfg, int):
        return cfg
    adm = _admissible(cfg)
    if isinstance(adm, int):
        return adm
    out = Path(args.out or cfg["output.directory"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.render(), encoding="utf-8")
    dt, n = cfg.time_step(adm.u0)
    every = cfg["output.snapshot_every"]
    try:
        state = build_initial_state(adm, cfg["potential.eps"], cfg["solver.delta_reg"])
        res = simulate(state, cfg.step_config(dt), cfg.params, n, adm.M_r, csv_path=out / "diagnostics.csv",
                       snapshot_dir=out / "fields" if every else None, snapshot_every=every, catch=True)
    except Exception as exc:  # setup failures (non-finite mu, calibration step)
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    snaps = list(range(0, res.steps_done + 1, every)) if every else []
    write_meta(out, cfg.grid, cfg.params, cfg["potential.eps"], dt, max(every, 1), adm.M_r, snaps,
               res.energy_scale, cfg["solver.newton_abs_tol"])
    recs = res.records
    first, last = recs[0], recs[-1]
    print(f"steps: {res.steps_done}/{n}  dt = {dt:.6g}  T = {last.time:.6g}")
    print(f"mass drift: {abs(last.M - first.M) / first.M:.3e}   "
          f"M_c drift: {abs(last.M_c - first.M_c) / max(abs(first.M_c), 1e-300):.3e}")
    print(f"E_eps: {first.E_eps:.10g} -> {last.E_eps:.10g}")
    bad = [r.step for r in recs[1:] if not r.energy_ok]
    print(f"energy audit: {'pass' if not bad else f'{len(bad)} violations, first at step {bad[0]}'}")
    worst_ne1 = min(r.ne1 / ne1_scale(r) for r in recs)
    print(f"min ne1/scale: {worst_ne1:.3e}")
    if cfg["output.plots"] and not args.no_plots:
        from . import plotting
        plotting.energy_figure(recs, out / "energy.png")
        plotting.fields_figure(res.final, out / "fields.png")
    print(f"outputs in {out}")
    if res.error is not None:
        _err(f"run stopped at step {res.steps_done + 1}: {type(res.error).__name__}: {res.error}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import DEFAULT_SCHEDULE, SweepPlan, run_sweep, scenario_from, summary_lines

    cfg = _load(args.config, args.set)
    if isinstance(cfg, int):
        return cfg
    adm = _admissible(cfg)
    if isinstance(adm, int):
        return adm
    dt, n = cfg.time_step(adm.u0)
    out = Path(args.out or cfg["output.directory"])
    scenario = scenario_from(cfg.grid, cfg.params, cfg["initial.preset"], cfg.preset_params, dt, n,
                             cfl_safety=cfg["time.cfl_safety"], strict=cfg["output.strict_energy"],
                             force_form=cfg["solver.force_form"], delta_reg=cfg["solver.delta_reg"],
                             keep_every=cfg["sweep.keep_every"])
    try:
        plan = SweepPlan(scenario, cfg["potential.schedule"] or DEFAULT_SCHEDULE, str(out))
        report = run_sweep(plan)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INVALID
    print("\n".join(summary_lines(report)))
    print(f"report: {out / 'sweep_report.csv'}")
    if cfg["output.plots"] and not args.no_plots:
        from . import plotting
        plotting.sweep_figure(report, out / "sweep.png")
    for m in report.failed:
        _err(f"member eps = {m.eps:g} failed: {m.error}")
    return EXIT_RUNTIME if report.failed else EXIT_OK


def _refined_trajectories(base: Path, levels: int):
    from .runner import simulate
    from .state import build_initial_state, validate_initial_data
    from .trajectory import Trajectory

    subdirs = sorted(p for p in base.glob("level_*") if (p / "meta.json").is_file())
    if subdirs:
        return [Trajectory.load(p) for p in subdirs[: levels + 1]]
    cfg = load_config(base / "config.cfg")
    dt0, n0 = cfg.time_step(validate_initial_data(cfg.initial_data(), cfg.params.potential).u0)
    trajs = []
    for lv in range(levels + 1):
        f = 2 ** lv
        c = cfg.with_overrides(**{"grid.cells": tuple(n * f for n in cfg["grid.cells"])})
        adm = validate_initial_data(c.initial_data(), c.params.potential)
        st = build_initial_state(adm, c["potential.eps"], c["solver.delta_reg"])
        res = simulate(st, c.step_config(dt0 / f), c.params, n0 * f, adm.M_r, keep_every=1)
        trajs.append(res.trajectory)
        log.info("level %d: %s cells, dt = %g", lv, c["grid.cells"], dt0 / f)
    return trajs


def cmd_check_weakform(args) -> int:
    from .weakform import audit_energy_inequality, refinement_study

    base = Path(args.traj)
    if args.refinements < 1:
        _err("--refinements must be at least 1")
        return EXIT_USAGE
    if not base.is_dir():
        _err(f"trajectory directory {base} does not exist")
        return EXIT_RUNTIME
    try:
        trajs = _refined_trajectories(base, args.refinements)
        table = refinement_study(trajs)
    except (OSError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    except Exception as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    print(table.format())
    for tr in trajs:
        a = audit_energy_inequality(tr)
        print(f"energy inequality N={tr.grid.cells}: {'pass' if a.ok else 'FAIL'} "
              f"(worst margin {a.worst_margin:.3e} at step {a.worst_step})")
    low = table.min_order()
    print(f"minimum observed order: {low:.3f}")
    return EXIT_OK if low >= 1.0 else EXIT_INVALID


def cmd_verify_potential(args) -> int:
    try:
        rows = verify_potential(args.theta, args.theta0, args.eps, gamma=args.gamma, n_samples=args.samples)
    except (ParameterError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        print(f"{r['check']:<{width}}  {'PASS' if r['passed'] else 'FAIL'}  {r['detail']}")
    ok = all(r["passed"] for r in rows)
    print("all checks passed" if ok else "some checks FAILED")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_validate_initial(args) -> int:
    cfg = _load(args.config, args.set)
    if isinstance(cfg, int):
        return cfg
    adm = _admissible(cfg)
    if isinstance(adm, int):
        return adm
    print("initial data admissible")
    print(f"  M = {adm.M:.12g}  M_c = {adm.M_c:.12g}  M_r = {adm.M_r:.12g}")
    print(f"  E0 = {adm.E0:.12g}  E0_eps = {adm.energy_eps(cfg['potential.eps']):.12g}")
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsch", description="Compressible Navier-Stokes/Cahn-Hilliard simulator "
                                         "with the Flory-Huggins potential.")
    p.add_argument("--help-config", action="store_true", help="print every configuration key and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration key (repeatable)")

    r = sub.add_parser("run", help="run one trajectory")
    with_config(r)
    r.add_argument("--out", help="output directory (default: output.directory)")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the eps-continuation sweep")
    with_config(s)
    s.add_argument("--out")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_sweep)

    w = sub.add_parser("check-weakform", help="weak-form residuals under (h, dt) refinement")
    w.add_argument("--traj", required=True, help="run directory (with config.cfg) or directory of level_* runs")
    w.add_argument("--refinements", type=int, default=1, help="number of (h, dt) halvings")
    w.set_defaults(func=cmd_check_weakform)

    v = sub.add_parser("verify-potential", help="check the regularized potential")
    v.add_argument("--theta", type=float, required=True)
    v.add_argument("--theta0", type=float, required=True)
    v.add_argument("--eps", type=float, required=True)
    v.add_argument("--gamma", type=float, default=2.0)
    v.add_argument("--samples", type=int, default=10_000)
    v.set_defaults(func=cmd_verify_potential)

    a = sub.add_parser("validate-initial", help="check initial data against the admissibility hypotheses")
    with_config(a)
    a.set_defaults(func=cmd_validate_initial)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.help_config:
        print(help_config())
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
