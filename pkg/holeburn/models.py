"""Level structures, class populations and pump steps for the hole-burning simulation."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import InvalidParams
from settings import get_logger

logger = get_logger(__name__)

UNIFORM_STRENGTHS = ((1 / 3, 1 / 3, 1 / 3),) * 3


class LevelStructure(BaseModel):
    """
    Three ground and three excited hyperfine levels of one site.

    Frequencies share the unit of every other rate in the run. The carrier is
    the ground 0 -> excited 0 transition of the class at offset 0.
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field(default="", description="Label shown in reports.")
    ground_offsets: tuple[float, float, float] = Field(
        description="Ground-level energies, ascending, lowest at 0."
    )
    excited_offsets: tuple[float, float, float] = Field(
        description="Excited-level energies, ascending, lowest at 0."
    )
    strengths: tuple[tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]] = Field(
        default=UNIFORM_STRENGTHS,
        description="Relative transition strengths, rows = ground, columns = excited; rows are normalized to sum 1.",
    )
    background_fwhm: float = Field(gt=0, description="FWHM of the full ensemble's optical inhomogeneous line.")

    @field_validator("ground_offsets", "excited_offsets")
    @classmethod
    def _ascending_from_zero(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if value[0] != 0:
            raise ValueError(f"lowest offset must be 0, got {value[0]}")
        if not value[0] < value[1] < value[2]:
            raise ValueError(f"offsets must be strictly ascending, got {value}")
        return value

    @field_validator("strengths")
    @classmethod
    def _normalized_rows(cls, value):
        rows = []
        for row in value:
            if any(s < 0 or not math.isfinite(s) for s in row):
                raise ValueError(f"strengths must be finite and >= 0, got {row}")
            total = sum(row)
            if total <= 0:
                raise ValueError("every ground level needs at least one allowed transition")
            rows.append(tuple(s / total for s in row))
        return tuple(rows)

    @model_validator(mode="after")
    def _broad_background(self) -> "LevelStructure":
        if self.background_fwhm < 10 * self.max_splitting:
            logger.warning(
                f"background_fwhm={self.background_fwhm} is not much larger than the "
                f"hyperfine spread {self.max_splitting}"
            )
        return self

    @property
    def max_splitting(self) -> float:
        return max(self.ground_offsets[-1], self.excited_offsets[-1])

    @property
    def max_offset_difference(self) -> float:
        """Largest separation between classes resonant with one field on different transitions."""
        return self.ground_offsets[-1] + self.excited_offsets[-1]

    @property
    def strength_matrix(self) -> np.ndarray:
        return np.array(self.strengths, dtype=float)

    @property
    def transitions(self) -> np.ndarray:
        """transitions[g, e] = excited[e] - ground[g]."""
        return np.asarray(self.excited_offsets)[None, :] - np.asarray(self.ground_offsets)[:, None]

    def transition(self, ground: int, excited: int) -> float:
        return self.excited_offsets[excited] - self.ground_offsets[ground]

    @property
    def branching(self) -> np.ndarray:
        """branching[e, g]: fraction of decay from excited e that lands in ground g."""
        s = self.strength_matrix
        totals = s.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, s / totals, 0.0).T


def make_class_grid(center: float, halfspan: float, step: float) -> np.ndarray:
    """Uniform class offsets covering center +- halfspan, with `center` on the grid."""
    if not step > 0 or not halfspan >= 0:
        raise InvalidParams(f"class grid needs step > 0 and halfspan >= 0, got {step}, {halfspan}")
    n = int(math.ceil(halfspan / step - 1e-9))
    return center + step * np.arange(-n, n + 1, dtype=float)


@dataclass(frozen=True)
class ClassPopulations:
    """Ground-state occupancies per frequency class; each row sums to 1."""

    class_grid: np.ndarray = field(repr=False)
    populations: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.array(self.class_grid, dtype=float)
        pops = np.array(self.populations, dtype=float)
        if grid.ndim != 1 or grid.size < 1 or pops.shape != (grid.size, 3):
            raise InvalidParams(f"populations must have shape ({grid.size}, 3), got {pops.shape}")
        if grid.size > 2:
            steps = np.diff(grid)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise InvalidParams("class grid must be uniform")
        if np.any(pops < -1e-15) or not np.all(np.isfinite(pops)):
            raise InvalidParams("occupancies must be finite and >= 0")
        sums = pops.sum(axis=1)
        if not np.allclose(sums, 1.0, rtol=0, atol=1e-12):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise InvalidParams(f"per-class occupancy must sum to 1, worst deviation {worst:.3e}")
        pops = np.maximum(pops, 0.0)
        grid.flags.writeable = False
        pops.flags.writeable = False
        object.__setattr__(self, "class_grid", grid)
        object.__setattr__(self, "populations", pops)

    @classmethod
    def uniform(cls, class_grid: np.ndarray) -> "ClassPopulations":
        grid = np.asarray(class_grid, dtype=float)
        return cls(class_grid=grid, populations=np.full((grid.size, 3), 1.0 / 3.0))

    @property
    def step(self) -> float:
        return float(self.class_grid[1] - self.class_grid[0]) if self.class_grid.size > 1 else 0.0

    @property
    def center(self) -> float:
        return 0.5 * float(self.class_grid[0] + self.class_grid[-1])

    @property
    def halfspan(self) -> float:
        return 0.5 * float(self.class_grid[-1] - self.class_grid[0])

    def occupancy(self, ground: int) -> np.ndarray:
        return self.populations[:, ground]

    def nearest(self, offset: float) -> int:
        return int(np.argmin(np.abs(self.class_grid - offset)))


class PumpStep(BaseModel):
    """One optical-pumping step: fields swept together over +- sweep_halfwidth."""

    model_config = ConfigDict(frozen=True)

    field_frequencies: tuple[float, ...] = Field(min_length=1, description="Absolute field frequencies.")
    sweep_halfwidth: float = Field(default=0.0, ge=0, description="Each field is swept over +- this.")
    resonance_tolerance: float = Field(gt=0, description="Frequency mismatch still counted as resonant.")
    transfer_fraction: float = Field(
        default=1.0, gt=0, le=1, description="Share of resonant population moved per step."
    )
    allow_cycling: bool = Field(
        default=False,
        description="Leave classes with every ground resonant unchanged instead of failing.",
    )
    label: str = ""


class Resonance(NamedTuple):
    class_offset: float
    ground: int
    excited: int


class ResonanceTable(NamedTuple):
    entries: tuple[Resonance, ...]
    collisions: tuple[tuple[int, int], ...]
    distinct_classes: int


class PumpResult(NamedTuple):
    populations: ClassPopulations
    moved: float
    cycling: tuple[float, ...]


@dataclass(frozen=True)
class StageReport:
    name: str
    moved: float
    cycling_classes: int = 0


@dataclass(frozen=True)
class BurnReport:
    """What the burn sequence did, stage by stage, plus the control-frequency audit."""

    stages: tuple[StageReport, ...] = ()
    field_frequencies: tuple[float, float, float] = (0.0, 0.0, 0.0)
    control_frequency_outside_trench: bool = False
    control_resonances: tuple[tuple[float, int, int, float], ...] = ()
    class_step: float = 0.0


class BurnResult(NamedTuple):
    populations: ClassPopulations
    report: BurnReport
