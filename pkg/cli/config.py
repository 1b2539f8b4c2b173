"""Run configurations: YAML documents validated into a RunConfig."""

import math
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from pydantic import ValidationError as PydanticValidationError

from errors import InvalidParams, ParseError, ValidationError
from holeburn.models import LevelStructure
from integrator import DetuningGrid, QuadratureConfig
from profiles import BroadeningProfile, ProfileKind, make_profile, read_profile_csv
from settings import get_logger
from susceptibility import RateParams, expected_width

logger = get_logger(__name__)


class Mode(str, Enum):
    SPECTRUM = "spectrum"
    SWEEP_WIDTH = "sweep_width"
    SWEEP_VISIBILITY = "sweep_visibility"
    HOLEBURN = "holeburn"
    ANALYZE = "analyze"


COMMAND_MODES = {
    "spectrum": (Mode.SPECTRUM,),
    "sweep": (Mode.SWEEP_WIDTH, Mode.SWEEP_VISIBILITY),
    "holeburn": (Mode.HOLEBURN,),
    "analyze": (Mode.ANALYZE,),
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsSpec(_Section):
    omega: float = Field(ge=0, description="Control Rabi frequency.")
    gamma21: float = Field(default=0.0, ge=0, description="Ground-coherence decay rate.")
    gamma31: float = Field(ge=0, description="Optical-coherence decay rate.")
    sigma_opt: float = Field(default=0.0, ge=0, description="Optical inhomogeneous FWHM.")
    sigma_spin: float = Field(default=0.0, ge=0, description="Spin inhomogeneous FWHM.")

    def rate_params(self) -> RateParams:
        return RateParams(**self.model_dump())


class ProfileSpec(_Section):
    """A broadening profile: analytic kind and width, or a tabulated CSV."""

    kind: ProfileKind = ProfileKind.LORENTZIAN
    fwhm: float | None = Field(default=None, ge=0, description="Defaults to the matching sigma in params.")
    center: float = 0.0
    table: Path | None = None

    @model_validator(mode="after")
    def _table_for_tabulated(self) -> "ProfileSpec":
        if self.kind is ProfileKind.TABULATED and self.table is None:
            raise ValueError("a Tabulated profile needs a table path")
        if self.table is not None and self.kind is not ProfileKind.TABULATED:
            raise ValueError("a table path requires kind Tabulated")
        return self

    def build(self, default_fwhm: float) -> BroadeningProfile:
        if self.kind is ProfileKind.TABULATED:
            return read_profile_csv(self.table)
        fwhm = default_fwhm if self.fwhm is None else self.fwhm
        return make_profile(self.kind, fwhm, self.center)

    def resolved(self, base: Path) -> "ProfileSpec":
        if self.table is None or self.table.is_absolute():
            return self
        return self.model_copy(update={"table": base / self.table})


class GridSpec(_Section):
    """
    Detuning grid. With no halfwidth the grid spans halfwidth_factor times the
    larger of Omega and the expected EIT width, sampled at points_per_width
    points per expected width.
    """

    halfwidth: PositiveFloat | None = None
    count: int | None = Field(default=None, ge=3)
    halfwidth_factor: PositiveFloat = 3.0
    points_per_width: PositiveFloat = 50.0
    max_count: int = Field(default=20001, ge=3)

    def build(self, p: RateParams) -> DetuningGrid:
        width = expected_width(p) + p.sigma_spin + p.gamma21
        if width <= 0:
            width = p.sigma_opt + p.gamma31
        if width <= 0:
            raise InvalidParams("cannot size the grid automatically: every width and Omega is zero")
        halfwidth = self.halfwidth or self.halfwidth_factor * max(p.omega, width)
        count = self.count
        if count is None:
            count = 401 if self.halfwidth else int(math.ceil(2.0 * halfwidth * self.points_per_width / width)) + 1
        if count > self.max_count:
            logger.warning(f"Grid of {count} points capped at max_count={self.max_count}")
            count = self.max_count
        # odd count keeps delta = 0 on the grid
        count += 1 - count % 2
        return DetuningGrid.symmetric(halfwidth, count)


class ShapeSpec(_Section):
    optical: ProfileKind = ProfileKind.LORENTZIAN
    spin: ProfileKind = ProfileKind.LORENTZIAN

    @model_validator(mode="after")
    def _analytic(self) -> "ShapeSpec":
        if ProfileKind.TABULATED in (self.optical, self.spin):
            raise ValueError("sweep shapes must be analytic kinds")
        return self

    @property
    def label(self) -> str:
        return f"{self.optical.value}/{self.spin.value}"


class SweepSpec(_Section):
    values: list[PositiveFloat] = Field(
        min_length=1,
        description="Omega/sigma_opt for width sweeps, Omega^2/(sigma_opt*sigma_spin) for visibility sweeps.",
    )
    shapes: list[ShapeSpec] = Field(default_factory=lambda: [ShapeSpec()], min_length=1)


class HoleburnSpec(_Section):
    level_structure: LevelStructure
    target_class: float = 0.0
    trench_halfwidth: PositiveFloat
    feature_fwhm: float = Field(ge=0)
    probe_ground: int = Field(default=0, ge=0, le=2)
    control_ground: int = Field(default=1, ge=0, le=2)
    shared_excited: int = Field(default=0, ge=0, le=2)
    kernel_fwhm: PositiveFloat | None = Field(default=None, description="Defaults to gamma31.")
    class_halfspan: PositiveFloat | None = None
    profile_span: PositiveFloat | None = Field(default=None, description="Defaults to twice the trench half-width.")
    profile_points: int | None = Field(default=None, ge=3)
    steps: dict[Literal["burn", "empty", "repump"], dict[str, Any]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _feature_in_trench(self) -> "HoleburnSpec":
        if self.feature_fwhm >= self.trench_halfwidth:
            raise ValueError("feature_fwhm must be smaller than trench_halfwidth")
        if self.probe_ground == self.control_ground:
            raise ValueError("probe_ground and control_ground must differ")
        return self


class AnalyzeSpec(_Section):
    input: Path = Field(description="Transmission trace with columns delta,transmission.")
    baseline_input: Path | None = Field(default=None, description="Trace recorded without the coupling field.")
    optical_depth: PositiveFloat | None = None
    dip: bool = True
    fit_saturated: bool = False

    @model_validator(mode="after")
    def _depth_source(self) -> "AnalyzeSpec":
        if self.optical_depth is None and not self.fit_saturated:
            raise ValueError("give optical_depth or set fit_saturated to estimate it")
        if not self.dip and not self.fit_saturated:
            raise ValueError("nothing to do: dip and fit_saturated are both off")
        return self

    def resolved(self, base: Path) -> "AnalyzeSpec":
        update = {}
        for name in ("input", "baseline_input"):
            path = getattr(self, name)
            if path is not None and not path.is_absolute():
                update[name] = base / path
        return self.model_copy(update=update)


class RunConfig(_Section):
    mode: Mode
    params: ParamsSpec | None = None
    optical: ProfileSpec = Field(default_factory=ProfileSpec)
    spin: ProfileSpec = Field(default_factory=ProfileSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    optical_depth: PositiveFloat | None = None
    sweep: SweepSpec | None = None
    holeburn: HoleburnSpec | None = None
    analyze: AnalyzeSpec | None = None
    output: Path = Path("runs")

    @model_validator(mode="after")
    def _mode_sections(self) -> "RunConfig":
        needed = {
            Mode.SPECTRUM: ("params",),
            Mode.SWEEP_WIDTH: ("params", "sweep"),
            Mode.SWEEP_VISIBILITY: ("params", "sweep"),
            Mode.HOLEBURN: ("params", "holeburn"),
            Mode.ANALYZE: ("analyze",),
        }[self.mode]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"mode {self.mode.value} needs section(s): {', '.join(missing)}")
        if self.mode in (Mode.SWEEP_WIDTH, Mode.SWEEP_VISIBILITY) and self.params.sigma_opt <= 0:
            raise ValueError("sweeps need params.sigma_opt > 0")
        if self.mode is Mode.SWEEP_VISIBILITY and self.params.sigma_spin <= 0:
            raise ValueError("visibility sweeps need params.sigma_spin > 0")
        return self

    def rate_params(self) -> RateParams:
        """Rate parameters with sigma_opt and sigma_spin taken from analytic profile widths."""
        p = self.params.rate_params()
        update = {}
        for name, spec in (("sigma_opt", self.optical), ("sigma_spin", self.spin)):
            if spec.kind is not ProfileKind.TABULATED and spec.fwhm is not None:
                update[name] = spec.fwhm
        return replace(p, **update)

    def planned_runs(self) -> int:
        if self.sweep is not None and self.mode in (Mode.SWEEP_WIDTH, Mode.SWEEP_VISIBILITY):
            return len(self.sweep.shapes) * len(self.sweep.values)
        return 1

    def resolved(self, base: Path) -> "RunConfig":
        update: dict[str, Any] = {"optical": self.optical.resolved(base), "spin": self.spin.resolved(base)}
        if self.analyze is not None:
            update["analyze"] = self.analyze.resolved(base)
        return self.model_copy(update=update)


def _field_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def load_config(path: str | Path) -> RunConfig:
    """
    Parse and validate a run configuration.

    Relative paths inside the file are resolved against the file's directory.

    Raises:
        ParseError: the file is not a YAML mapping; carries line and column when known
        ValidationError: the document violates the schema; names every offending field
        OSError: the file cannot be read
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ParseError(f"{path}: {problem}", line=line, column=column) from e
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a mapping of settings at the top level", line=1, column=1)

    try:
        cfg = RunConfig.model_validate(data)
    except PydanticValidationError as e:
        fields = [_field_path(err["loc"]) for err in e.errors()]
        details = "; ".join(f"{_field_path(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ValidationError(f"{path}: {details}", fields=fields) from e

    cfg = cfg.resolved(path.parent)
    logger.info(f"Loaded {cfg.mode.value} config from {path}: {cfg.planned_runs()} planned run(s)")
    logger.debug(f"Effective config: {cfg.model_dump(mode='json')}")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """YAML echo of the effective configuration, defaults included."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
