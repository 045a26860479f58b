"""Epsilon-continuation harness.

Each member runs the same scenario with one value of eps on a shared grid and
time step; the report compares the uniform-estimate norms, the phase-bound
defect scaled by F''(1 - eps)^2, and L2 space-time differences of c between
consecutive members.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import diagnostics
from .constitutive import PhysicalParams
from .grid import Grid
from .potential import flory_huggins_second
from .runner import simulate
from .state import build_initial_state, preset, validate_initial_data
from .stepper import StepConfig
from .trajectory import params_from_dict, params_to_dict

DEFAULT_SCHEDULE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
NORMS = ("ne1_L2", "ne1_abs_L2", "mu_L2H1", "sqrt_rho_fprime_L2L2")
TAIL_HEURISTIC = "heuristic: subsequence convergence only is guaranteed"


@dataclass(frozen=True)
class Scenario:
    """Everything needed to rebuild one member run in a worker process."""

    cells: tuple
    lengths: tuple
    physics: dict
    preset: str
    preset_params: dict
    dt: float
    n_steps: int
    cfl_safety: float = 0.5
    strict: bool = True
    force_form: str = "energy"
    delta_reg: float = 1e-10
    keep_every: int = 10

    @property
    def grid(self) -> Grid:
        return Grid(tuple(self.cells), tuple(self.lengths))

    @property
    def params(self) -> PhysicalParams:
        return params_from_dict(self.physics)

    @property
    def T(self) -> float:
        return self.dt * self.n_steps


def scenario_from(grid: Grid, params: PhysicalParams, preset_name: str, preset_params: dict,
                  dt: float, n_steps: int, **kw) -> Scenario:
    return Scenario(tuple(grid.cells), tuple(grid.lengths), params_to_dict(params), preset_name,
                    dict(preset_params), dt, n_steps, **kw)


@dataclass(frozen=True)
class SweepPlan:
    scenario: Scenario
    eps_schedule: tuple = DEFAULT_SCHEDULE
    output_dir: str | None = None

    def __post_init__(self):
        s = tuple(float(e) for e in self.eps_schedule)
        if not s:
            raise ValueError("eps schedule is empty")
        if any(not (0 < e < 0.5) for e in s):
            raise ValueError("every eps must lie in (0, 1/2)")
        if any(b >= a for a, b in zip(s[:-1], s[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        object.__setattr__(self, "eps_schedule", s)


@dataclass
class MemberResult:
    eps: float
    norms: dict = field(default_factory=dict)
    defect_max: float = math.nan
    defect_int: float = math.nan
    times: np.ndarray | None = None
    c_series: np.ndarray | None = None
    steps: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def fpp_at_seam(theta: float, eps: float) -> float:
    """|F''(1 - eps)| = theta / (1 - (1 - eps)^2)."""
    return float(flory_huggins_second(1.0 - eps, theta))


def run_member(scenario: Scenario, eps: float, out_dir: str | None = None) -> MemberResult:
    """One sweep member; failures are captured, never raised."""
    res = MemberResult(eps)
    try:
        g = scenario.grid
        params = scenario.params
        data = validate_initial_data(preset(scenario.preset, g, **scenario.preset_params), params.potential)
        st = build_initial_state(data, eps, scenario.delta_reg)
        cfg = StepConfig(dt=scenario.dt, cfl_safety=scenario.cfl_safety, strict=scenario.strict,
                         force_form=scenario.force_form, delta_reg=scenario.delta_reg)
        csv_path = None
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            csv_path = Path(out_dir) / "diagnostics.csv"
        run = simulate(st, cfg, params, scenario.n_steps, data.M_r, csv_path=csv_path,
                       keep_every=scenario.keep_every, catch=True)
        res.steps = run.steps_done
        traj = run.trajectory
        if out_dir is not None:
            traj.save(out_dir)
        if run.error is not None:
            res.error = f"{type(run.error).__name__}: {run.error}"
            return res
        summary = diagnostics.timeseries_norms(run.records)
        res.norms = {k: float(summary[k]) for k in NORMS}
        res.defect_max = float(summary["defect_max"])
        res.defect_int = float(summary["defect_int"])
        res.times = traj.times
        res.c_series = traj.stack("c")
    except Exception as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _member_job(args):
    return run_member(*args)


def thread_cap() -> int:
    raw = os.environ.get("NSCH_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NSCH_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"NSCH_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass
class SweepReport:
    plan: SweepPlan
    members: list
    deltas: list
    defect_scaled: list
    tail_label: str

    @property
    def failed(self) -> list:
        return [m for m in self.members if not m.ok]

    def defect_span(self) -> float:
        """max / min of defect * F''(1 - eps)^2 over successful members (nan for 0/0)."""
        vals = [v for v, m in zip(self.defect_scaled, self.members) if m.ok]
        if not vals:
            return math.nan
        hi, lo = max(vals), min(vals)
        if lo > 0:
            return hi / lo
        return math.nan if hi == 0 else math.inf

    def uniformity_ratios(self) -> dict:
        """Each norm at the smallest eps divided by its value at the largest eps."""
        first, last = self.members[0], self.members[-1]
        out = {}
        for k in NORMS:
            a = first.norms.get(k, math.nan)
            b = last.norms.get(k, math.nan)
            out[k] = b / a if a > 0 else (1.0 if b == 0 else math.inf)
        return out

    def tail_nonincreasing(self) -> bool:
        d = [x for x in self.deltas[1:] if x is not None]
        return all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(d[:-1], d[1:]))


def _l2_spacetime(grid: Grid, times, a, b) -> float:
    sq = np.sum((a - b) ** 2, axis=tuple(range(1, a.ndim))) * grid.cell_volume
    return float(np.sqrt(trapezoid(sq, times)))


def run_sweep(plan: SweepPlan, workers: int | None = None) -> SweepReport:
    """Run all members (concurrently up to NSCH_THREADS) and assemble the report."""
    sc = plan.scenario
    workers = thread_cap() if workers is None else workers
    out = plan.output_dir
    jobs = [(sc, e, None if out is None else str(Path(out) / f"eps_{e:.0e}")) for e in plan.eps_schedule]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            members = list(ex.map(_member_job, jobs))
    else:
        members = [_member_job(j) for j in jobs]

    g = sc.grid
    theta = sc.physics["theta"]
    deltas = []
    for a, b in zip(members[:-1], members[1:]):
        if a.ok and b.ok:
            deltas.append(_l2_spacetime(g, a.times, a.c_series, b.c_series))
        else:
            deltas.append(None)
    scaled = [m.defect_max * fpp_at_seam(theta, m.eps) ** 2 if m.ok else math.nan for m in members]
    report = SweepReport(plan, members, deltas, scaled, "")
    report.tail_label = ("Cauchy-like tail" if report.tail_nonincreasing() else "no monotone tail") + \
        f" ({TAIL_HEURISTIC})"
    if out is not None:
        write_report_csv(report, Path(out) / "sweep_report.csv")
    return report


REPORT_COLUMNS = ("eps", *NORMS, "defect_max", "defect_int", "Fpp_seam", "defect_scaled",
                  "delta_c_next", "steps", "status")


def write_report_csv(report: SweepReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        theta = report.plan.scenario.physics["theta"]
        for i, m in enumerate(report.members):
            d = report.deltas[i] if i < len(report.deltas) else None
            w.writerow([repr(m.eps)] + [repr(m.norms.get(k, math.nan)) for k in NORMS] +
                       [repr(m.defect_max), repr(m.defect_int), repr(fpp_at_seam(theta, m.eps)),
                        repr(report.defect_scaled[i]), "" if d is None else repr(d), str(m.steps),
                        "ok" if m.ok else f"failed: {m.error}"])


def summary_lines(report: SweepReport) -> list[str]:
    lines = [f"members: {len(report.members)}, failed: {len(report.failed)}"]
    lines.append(f"defect*F''(1-eps)^2 span (max/min): {report.defect_span():.4g}")
    for k, v in report.uniformity_ratios().items():
        lines.append(f"{k}: value at eps_min / value at eps_max = {v:.4g}")
    lines.append(f"consecutive c differences: " +
                 ", ".join("n/a" if d is None else f"{d:.3e}" for d in report.deltas))
    lines.append(f"tail: {report.tail_label}")
    return lines
