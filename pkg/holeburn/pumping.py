"""
Idealized optical pumping over frequency classes.

A class at offset x is resonant on transition (g, e) with a field at f when
x = f - (excited[e] - ground[g]). Pumped population is excited and decays back
into the ground states of the same class with the strength-weighted branching
of the excited level; population landing on a resonant ground is pumped again
until the cascade settles.
"""

import warnings

import numpy as np

from errors import AmbiguousSelection, InvalidParams, NoConvergence
from holeburn.models import (
    ClassPopulations,
    LevelStructure,
    PumpResult,
    PumpStep,
    Resonance,
    ResonanceTable,
)
from settings import get_config, get_logger

logger = get_logger(__name__)


def default_tolerance(ls: LevelStructure) -> float:
    return 1e-9 * max(1.0, ls.max_splitting)


def enumerate_resonances(ls: LevelStructure, field_freq: float, tol: float | None = None) -> ResonanceTable:
    """
    The nine (class offset, ground, excited) triples resonant with one field.

    Offsets that coincide within `tol` are reported as collisions, pairs of
    indices into `entries`; `distinct_classes` counts the offsets left after
    merging them.
    """
    tol = default_tolerance(ls) if tol is None else tol
    entries = tuple(
        Resonance(class_offset=float(field_freq - ls.transition(g, e)), ground=g, excited=e)
        for g in range(3)
        for e in range(3)
    )
    collisions = tuple(
        (i, j)
        for i in range(len(entries))
        for j in range(i + 1, len(entries))
        if abs(entries[i].class_offset - entries[j].class_offset) <= tol
    )

    offsets = sorted(r.class_offset for r in entries)
    distinct = 1 + sum(1 for a, b in zip(offsets, offsets[1:]) if b - a > tol)
    if collisions:
        logger.info(f"Field at {field_freq:g}: {len(collisions)} collision(s), {distinct} distinct class(es)")
    return ResonanceTable(entries=entries, collisions=collisions, distinct_classes=distinct)


def _resonant_with(offset: float, table: ResonanceTable, tol: float) -> bool:
    return any(abs(r.class_offset - offset) <= tol for r in table.entries)


def sister_classes(ls: LevelStructure, target_class: float, shared_excited: int = 0) -> tuple[float, float, float]:
    """Target class and the classes the selection fields drive through the other excited levels."""
    shared = ls.excited_offsets[shared_excited]
    return tuple(float(target_class + shared - e) for e in ls.excited_offsets)


def select_class_fields(
    ls: LevelStructure, target_class: float, shared_excited: int = 0, tol: float | None = None
) -> tuple[float, float, float]:
    """
    Three field frequencies that drive the target class from each ground to `shared_excited`.

    The classes offset from the target by an excited-state splitting are
    driven by the same fields from every ground to another excited level;
    they belong to the selection and are not rivals.

    Raises:
        AmbiguousSelection: another class is resonant with all three fields
    """
    if shared_excited not in (0, 1, 2):
        raise InvalidParams(f"shared_excited must be 0, 1 or 2, got {shared_excited}")
    tol = default_tolerance(ls) if tol is None else tol
    fields = tuple(float(target_class + ls.transition(g, shared_excited)) for g in range(3))
    selected = sister_classes(ls, target_class, shared_excited)

    tables = [enumerate_resonances(ls, f, tol) for f in fields]
    rivals = sorted(
        {
            r.class_offset
            for r in tables[0].entries
            if all(abs(r.class_offset - x) > tol for x in selected)
            and all(_resonant_with(r.class_offset, t, tol) for t in tables[1:])
        }
    )
    if rivals:
        raise AmbiguousSelection(
            f"classes at {', '.join(f'{x:g}' for x in rivals)} are resonant with all three fields "
            f"selecting {target_class:g}"
        )
    return fields


def resonance_mask(pop: ClassPopulations, ls: LevelStructure, step: PumpStep) -> np.ndarray:
    """Boolean array [class, ground, excited]: transition driven by some field during the step."""
    x = pop.class_grid[:, None, None]
    reach = step.sweep_halfwidth + step.resonance_tolerance
    allowed = ls.strength_matrix > 0
    mask = np.zeros((pop.class_grid.size, 3, 3), dtype=bool)
    for f in step.field_frequencies:
        mask |= np.abs(x - (f - ls.transitions)[None, :, :]) <= reach
    return mask & allowed[None, :, :]


def pump(pop: ClassPopulations, ls: LevelStructure, step: PumpStep) -> PumpResult:
    """
    Apply one pump step and report the population moved and the cycling classes.

    Classes with every ground resonant have nowhere to put the population.
    With `allow_cycling` they are left as they are; otherwise NoConvergence is
    raised for complete transfer, and partial transfer leaves them unchanged
    with a warning.
    """
    tol = get_config("holeburn.convergence_tol", 1e-9)
    max_cycles = get_config("holeburn.max_cycles", 10000)

    driven = resonance_mask(pop, ls, step)
    resonant = driven.any(axis=2)
    cycling = resonant.all(axis=1)
    cycling_offsets = tuple(float(x) for x in pop.class_grid[cycling])
    if cycling.any() and not step.allow_cycling:
        if step.transfer_fraction == 1.0:
            raise NoConvergence(
                f"{int(cycling.sum())} class(es) have every ground state resonant",
                classes=list(cycling_offsets),
            )
        warnings.warn(f"{int(cycling.sum())} class(es) cycle under partial transfer and are left unchanged")

    active = resonant.any(axis=1) & ~cycling
    if not active.any():
        return PumpResult(populations=pop, moved=0.0, cycling=cycling_offsets)

    occ = pop.populations[active].copy()
    mask = resonant[active]
    weights = ls.strength_matrix[None, :, :] * driven[active]
    totals = weights.sum(axis=2, keepdims=True)
    excitation = np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0)
    branching = ls.branching
    share = step.transfer_fraction

    pending = share * occ * mask
    occ -= pending
    moved = float(pending.sum())
    if moved == 0.0:
        return PumpResult(populations=pop, moved=0.0, cycling=cycling_offsets)
    gained = np.zeros_like(occ)
    cycles = 0
    while pending.sum(axis=1).max() >= tol:
        cycles += 1
        if cycles > max_cycles:
            stuck = pop.class_grid[active][pending.sum(axis=1) >= tol]
            raise NoConvergence(
                f"pumping cascade did not settle after {max_cycles} cycles",
                classes=stuck.tolist(),
            )
        excited = np.einsum("cg,cge->ce", pending, excitation)
        landed = excited @ branching
        settled = landed * ~mask
        occ += settled
        gained += settled
        occ += landed * mask * (1.0 - share)
        pending = landed * mask * share

    # what is still in flight goes where the cascade was already sending it
    gain_total = gained.sum(axis=1, keepdims=True)
    leftover = pending.sum(axis=1, keepdims=True)
    occ += np.where(
        gain_total > 0,
        leftover * np.divide(gained, gain_total, out=np.zeros_like(gained), where=gain_total > 0),
        pending,
    )
    occ = np.maximum(occ, 0.0)
    occ /= occ.sum(axis=1, keepdims=True)

    populations = pop.populations.copy()
    populations[active] = occ
    logger.debug(
        f"Pump step {step.label or ''}: {int(active.sum())} class(es), moved {moved:.6g}, "
        f"{cycles} cascade cycle(s)"
    )
    return PumpResult(
        populations=ClassPopulations(class_grid=pop.class_grid, populations=populations),
        moved=moved,
        cycling=cycling_offsets,
    )


def apply_pump_step(pop: ClassPopulations, ls: LevelStructure, step: PumpStep) -> ClassPopulations:
    return pump(pop, ls, step).populations


def unresolved_classes(pop: ClassPopulations, ls: LevelStructure, step: PumpStep) -> list[float]:
    """Classes other than the cycling ones that still hold population on a driven ground."""
    driven = resonance_mask(pop, ls, step).any(axis=2)
    cycling = driven.all(axis=1)
    held = (pop.populations * driven).sum(axis=1)
    return [float(x) for x in pop.class_grid[(held > 0) & ~cycling]]

