"""
The three-stage hole-burning preparation and the optical profile it leaves behind.

Stage "burn" sweeps the three class-selection fields over the trench, so that
every class other than the selected band loses the population on its resonant
ground states. Stage "empty" keeps only the probe and control fields, still
swept, and moves the selected band into the auxiliary ground. Stage "repump"
refills the probe ground of the classes within the feature and keeps the
control field on so the control ground stays empty.
"""

import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from csvio import read_csv, write_csv
from errors import AllZero, InvalidParams, InvalidWidth, SchemaError
from holeburn.models import (
    BurnReport,
    BurnResult,
    ClassPopulations,
    LevelStructure,
    PumpStep,
    StageReport,
    make_class_grid,
)
from holeburn.pumping import enumerate_resonances, pump, select_class_fields
from profiles import BroadeningProfile, profile_from_table
from settings import get_config, get_logger

logger = get_logger(__name__)

POPULATION_COLUMNS = ("class_offset", "pop_g1", "pop_g2", "pop_g3")
STAGES = ("burn", "empty", "repump")

# cap on the (points x classes) block evaluated at once
_BLOCK = 4_000_000


def _lorentzian(x: np.ndarray, fwhm: float) -> np.ndarray:
    half = fwhm / 2.0
    return (half / math.pi) / (half * half + x * x)


def _stage_step(defaults: dict[str, Any], overrides: Mapping[str, Mapping[str, Any]] | None, stage: str) -> PumpStep:
    options = dict(defaults)
    if overrides and stage in overrides:
        options.update(overrides[stage])
    return PumpStep(**options)


def _check_indices(**indices: int) -> None:
    for name, value in indices.items():
        if value not in (0, 1, 2):
            raise InvalidParams(f"{name} must be 0, 1 or 2, got {value}")


def run_burn_sequence(
    ls: LevelStructure,
    target_class: float,
    trench_halfwidth: float,
    feature_fwhm: float,
    *,
    probe_ground: int = 0,
    control_ground: int = 1,
    shared_excited: int = 0,
    class_halfspan: float | None = None,
    steps: Mapping[str, Mapping[str, Any]] | None = None,
) -> BurnResult:
    """
    Prepare a transparency trench around `target_class` with a feature of width `feature_fwhm`.

    Args:
        ls: level structure of the site
        target_class: class offset the trench is centred on
        trench_halfwidth: sweep half-width of the burn fields
        feature_fwhm: width of the repumped region, 0 for an empty trench
        probe_ground: ground state |1> of the Lambda system
        control_ground: ground state |2> of the Lambda system
        shared_excited: excited level the three selection fields share
        class_halfspan: half-span of the simulated class grid; the default
            covers every class a swept field can reach plus a stretch of
            untouched background
        steps: per-stage PumpStep overrides keyed by "burn", "empty" or "repump"

    Returns:
        BurnResult with the final populations and a per-stage report
    """
    H, F = float(trench_halfwidth), float(feature_fwhm)
    if not math.isfinite(H) or H <= 0:
        raise InvalidParams(f"trench_halfwidth must be > 0, got {trench_halfwidth}")
    if not math.isfinite(F) or F < 0 or F >= H:
        raise InvalidParams(f"feature_fwhm must satisfy 0 <= feature_fwhm < trench_halfwidth, got {F} vs {H}")
    _check_indices(probe_ground=probe_ground, control_ground=control_ground, shared_excited=shared_excited)
    if probe_ground == control_ground:
        raise InvalidParams("probe_ground and control_ground must differ")
    if steps:
        unknown = sorted(set(steps) - set(STAGES))
        if unknown:
            raise InvalidParams(f"unknown stage override(s): {', '.join(unknown)}")

    class_step = get_config("holeburn.class_step_fraction", 0.05) * (F if F > 0 else H)
    if class_halfspan is None:
        class_halfspan = get_config("holeburn.profile_span_factor", 10) * H + ls.max_offset_difference + H
    grid = make_class_grid(target_class, class_halfspan, class_step)
    tol = class_step / 2.0
    pop = ClassPopulations.uniform(grid)
    logger.info(
        f"Burn sequence for {ls.name or 'level structure'}: target {target_class:g}, trench +-{H:g}, "
        f"feature {F:g}, {grid.size} classes at step {class_step:g}"
    )

    fields = select_class_fields(ls, target_class, shared_excited, tol=tol)
    f_probe, f_control = fields[probe_ground], fields[control_ground]
    reports: list[StageReport] = []

    burn = _stage_step(
        dict(field_frequencies=fields, sweep_halfwidth=H, resonance_tolerance=tol, allow_cycling=True, label="burn"),
        steps,
        "burn",
    )
    result = pump(pop, ls, burn)
    pop = result.populations
    reports.append(StageReport("burn", result.moved, len(result.cycling)))

    empty = _stage_step(
        dict(
            field_frequencies=(f_probe, f_control),
            sweep_halfwidth=H,
            resonance_tolerance=tol,
            allow_cycling=True,
            label="empty",
        ),
        steps,
        "empty",
    )
    result = pump(pop, ls, empty)
    pop = result.populations
    reports.append(StageReport("empty", result.moved, len(result.cycling)))

    populations = pop.populations.copy()
    inside = np.zeros(grid.size, dtype=bool)
    if F > 0:
        inside = np.abs(grid - target_class) <= F / 2.0 + 1e-9 * class_step
    refilled = float(np.sum(1.0 - populations[inside, probe_ground]))
    populations[inside] = 0.0
    populations[inside, probe_ground] = 1.0
    pop = ClassPopulations(class_grid=grid, populations=populations)
    repump = _stage_step(
        dict(
            field_frequencies=(f_control,),
            sweep_halfwidth=0.0,
            resonance_tolerance=tol,
            allow_cycling=True,
            label="repump",
        ),
        steps,
        "repump",
    )
    result = pump(pop, ls, repump)
    pop = result.populations
    reports.append(StageReport("repump", refilled + result.moved, len(result.cycling)))
    for r in reports:
        logger.info(f"Stage {r.name}: moved {r.moved:.6g}, {r.cycling_classes} cycling class(es)")

    splitting = abs(ls.ground_offsets[control_ground] - ls.ground_offsets[probe_ground])
    outside = H < splitting
    audit = []
    for r in enumerate_resonances(ls, f_control, tol).entries:
        if abs(r.class_offset - target_class) <= H + tol:
            continue
        i = pop.nearest(r.class_offset)
        if abs(grid[i] - r.class_offset) > tol:
            continue
        held = float(pop.populations[i, r.ground])
        if held > 0:
            audit.append((r.class_offset, r.ground, r.excited, held))
    if outside:
        logger.warning(
            f"Trench half-width {H:g} is below the Lambda splitting {splitting:g}: "
            "control-frequency atoms outside the trench remain"
        )

    report = BurnReport(
        stages=tuple(reports),
        field_frequencies=fields,
        control_frequency_outside_trench=outside,
        control_resonances=tuple(audit),
        class_step=class_step,
    )
    return BurnResult(populations=pop, report=report)


def profile_from_populations(
    pop: ClassPopulations,
    ls: LevelStructure,
    probe_ground: int,
    kernel_fwhm: float,
    *,
    target_class: float | None = None,
    shared_excited: int = 0,
    span: float | None = None,
    points: int | None = None,
) -> BroadeningProfile:
    """
    Optical broadening profile seen by the probe after state preparation.

    Every class holding population in `probe_ground` absorbs on each excited
    level with the transition strength, weighted by the background
    distribution of classes and broadened by a Lorentzian of `kernel_fwhm`.
    Shifts are measured from the probe resonance of the target class. The
    kernel is never narrower than two class steps so the discrete class sum
    stays smooth.

    Raises:
        InvalidWidth: kernel_fwhm <= 0
        AllZero: nothing absorbs on the probe transition
    """
    _check_indices(probe_ground=probe_ground, shared_excited=shared_excited)
    if not math.isfinite(kernel_fwhm) or kernel_fwhm <= 0:
        raise InvalidWidth(f"kernel_fwhm must be > 0, got {kernel_fwhm}")
    target = pop.center if target_class is None else float(target_class)
    span = pop.halfspan if span is None else float(span)
    points = points or get_config("holeburn.profile_points", 2001)
    if span <= 0:
        raise InvalidParams(f"profile span must be > 0, got {span}")
    kernel = max(float(kernel_fwhm), 2.0 * pop.step)
    if kernel > kernel_fwhm:
        logger.warning(f"Profile kernel widened from {kernel_fwhm:g} to {kernel:g} (two class steps)")

    x = pop.class_grid
    occupancy = pop.occupancy(probe_ground)
    background = _lorentzian(x, ls.background_fwhm)
    excited = np.asarray(ls.excited_offsets)
    weights = (occupancy * background)[:, None] * ls.strength_matrix[probe_ground][None, :]
    if not np.any(weights > 0):
        raise AllZero(f"no class holds population absorbing from ground {probe_ground}")

    shifts = (x - target)[:, None] + (excited - excited[shared_excited])[None, :]
    keep = (weights > 0) & (np.abs(shifts) <= span + 50.0 * kernel)
    if not keep.any():
        raise AllZero(f"no absorbing class within +-{span:g} of the probe resonance")
    w, s = weights[keep], shifts[keep]

    axis = np.linspace(-span, span, int(points))
    density = np.empty_like(axis)
    rows = max(1, _BLOCK // s.size)
    for start in range(0, axis.size, rows):
        block = axis[start : start + rows]
        density[start : start + rows] = _lorentzian(block[:, None] - s[None, :], kernel) @ w
    logger.debug(f"Profile from {s.size} absorbing (class, excited) terms on {axis.size} points")
    return profile_from_table(np.column_stack([axis, density]))


def write_populations_csv(pop: ClassPopulations, path: str | Path) -> Path:
    columns = {"class_offset": pop.class_grid}
    for g, name in enumerate(POPULATION_COLUMNS[1:]):
        columns[name] = pop.populations[:, g]
    return write_csv(path, columns)


def read_populations_csv(path: str | Path) -> ClassPopulations:
    frame = read_csv(path, POPULATION_COLUMNS)
    populations = frame[list(POPULATION_COLUMNS[1:])].to_numpy(dtype=float)
    # 9 significant digits on disk; restore unit row sums
    populations /= populations.sum(axis=1, keepdims=True)
    offsets = frame["class_offset"].to_numpy(dtype=float)
    grid = np.linspace(offsets[0], offsets[-1], offsets.size) if offsets.size > 1 else offsets
    if not np.allclose(offsets, grid, rtol=0.0, atol=1e-6 * max(1.0, float(np.abs(offsets).max()))):
        raise SchemaError(f"{path}: class offsets are not uniformly spaced")
    return ClassPopulations(class_grid=grid, populations=populations)
