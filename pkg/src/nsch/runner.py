"""Run orchestration: calibration, stepping, streaming diagnostics and snapshots."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import diagnostics
from .constitutive import PhysicalParams
from .diagnostics import CsvWriter, DiagnosticsRecord
from .potential import RegularizedPotential
from .state import State
from .stepper import StepConfig, calibrate_energy_scale, step
from .trajectory import Trajectory, write_snapshot

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    records: list[DiagnosticsRecord]
    final: State
    energy_scale: float
    trajectory: Trajectory | None = None
    error: Exception | None = None
    steps_done: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None


def simulate(state: State, cfg: StepConfig, params: PhysicalParams, n_steps: int, M_r: float,
             *, csv_path=None, snapshot_dir=None, snapshot_every: int = 0,
             keep_every: int = 0, calibrate: bool = True, catch: bool = False) -> RunResult:
    """Advance ``n_steps`` steps from ``state``.

    Parameters
    ----------
    csv_path : path, optional
        Diagnostics are streamed here row by row (step 0 included).
    snapshot_dir, snapshot_every : optional
        Write field files every ``snapshot_every`` steps (0 disables).
    keep_every : int
        Keep every k-th state in memory as a ``Trajectory`` (0 disables).
    calibrate : bool
        Measure the energy-tolerance constant with one trial step first,
        unless ``cfg.energy_scale`` is already set.
    catch : bool
        Return a partial result instead of raising on a failed step.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    reg = RegularizedPotential(params.potential, state.eps)
    if calibrate and cfg.energy_scale is None:
        cfg = dataclasses.replace(cfg, energy_scale=calibrate_energy_scale(state, cfg, params, reg))
    K = 0.0 if cfg.energy_scale is None else cfg.energy_scale
    log.debug("energy tolerance constant K = %.6e", K)

    prev = diagnostics.record(state, params, M_r, reg)
    records = [prev]
    traj = None
    if keep_every:
        traj = Trajectory(state.grid, params, state.eps, cfg.dt, keep_every, M_r, [state], records,
                          K, cfg.newton.abs_tol)
    writer = CsvWriter(csv_path) if csv_path is not None else None
    if snapshot_dir is not None and snapshot_every:
        write_snapshot(Path(snapshot_dir), state)
    err = None
    n = 0
    try:
        if writer:
            writer.write(prev)
        for n in range(1, n_steps + 1):
            state, rec = step(state, cfg, params, M_r, prev, reg)
            records.append(rec)
            prev = rec
            if writer:
                writer.write(rec)
            if traj is not None and n % keep_every == 0:
                traj.states.append(state)
            if snapshot_dir is not None and snapshot_every and n % snapshot_every == 0:
                write_snapshot(Path(snapshot_dir), state)
        n = n_steps
    except Exception as exc:
        if not catch:
            raise
        err = exc
        n -= 1
        log.warning("run stopped after %d steps: %s", n, exc)
    finally:
        if writer:
            writer.close()
    return RunResult(records, state, K, traj, err, n)
