"""
Numeric susceptibility of an inhomogeneously broadened ensemble.

The homogeneous kernel is averaged over the optical shift (outer adaptive
quadrature) and the spin shift (inner axis). The inner axis is collapsed in
closed form for point-mass, Lorentzian, Gaussian and flat-top spin profiles
unless `collapse_spin` is off; tabulated spin profiles always use nested
quadrature. Unbounded profiles are integrated either through the tangent map
x = center + (fwhm/2) tan(t) or by truncation at N FWHM. Breakpoints ladder
out from each kernel pole so features as narrow as gamma31 are bracketed.

Without coupling the kernel is a single pole in the optical shift and the
average is taken exactly with `profile_transform`.
"""

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import quad
from scipy.special import wofz

from csvio import read_csv, write_csv
from errors import InvalidParams, QuadratureNotConverged
from profiles import (
    FWHM_TO_SD,
    BroadeningProfile,
    ProfileKind,
    profile_density,
    profile_support,
    profile_transform,
)
from settings import get_config, get_logger
from susceptibility import RateParams, chi_lorentzian_inhomogeneous

logger = get_logger(__name__)

SPECTRUM_COLUMNS = ("delta", "chi_re", "chi_im")

SQRT2 = math.sqrt(2.0)
SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
LADDER_FACTOR = 10.0


@dataclass(frozen=True)
class DetuningGrid:
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.stop)) or self.start >= self.stop:
            raise InvalidParams(f"grid needs start < stop, got [{self.start}, {self.stop}]")
        if int(self.count) != self.count or self.count < 3:
            raise InvalidParams(f"grid needs an integer count >= 3, got {self.count}")
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "stop", float(self.stop))
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def symmetric(cls, halfwidth: float, count: int) -> "DetuningGrid":
        return cls(-halfwidth, halfwidth, count)

    @property
    def step(self) -> float:
        return (self.stop - self.start) / (self.count - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    def refined(self) -> "DetuningGrid":
        """Same span with twice the number of intervals."""
        return DetuningGrid(self.start, self.stop, 2 * self.count - 1)


class TailMapping(str, Enum):
    TANGENT = "tangent"
    TRUNCATE = "truncate"


class QuadratureConfig(BaseModel):
    """Tolerances and tail handling for the numeric profile average."""

    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(
        default_factory=lambda: get_config("quadrature.rel_tol", 1e-6),
        gt=0,
        le=1e-2,
        description="Relative tolerance per grid point.",
    )
    max_depth: int = Field(
        default_factory=lambda: get_config("quadrature.max_depth", 30),
        ge=5,
        description="Adaptive subdivision cap; QUADPACK receives max_depth * subintervals_per_depth intervals.",
    )
    tail_mapping: TailMapping = Field(
        default_factory=lambda: TailMapping(get_config("quadrature.tail_mapping", "tangent")),
        description="How unbounded profiles are brought to a finite interval.",
    )
    truncate_n: float = Field(
        default_factory=lambda: get_config("quadrature.truncate_n", 1e4),
        gt=0,
        description="Half-span in FWHM units when tail_mapping is truncate.",
    )
    collapse_spin: bool = Field(
        default_factory=lambda: get_config("quadrature.collapse_spin", True),
        description="Average over analytic spin profiles in closed form.",
    )
    flag_fraction: float = Field(
        default_factory=lambda: get_config("quadrature.flag_fraction", 0.01),
        ge=0,
        le=1,
        description="Largest tolerated fraction of flagged grid points.",
    )

    @property
    def limit(self) -> int:
        return self.max_depth * get_config("quadrature.subintervals_per_depth", 25)


@dataclass(frozen=True)
class QuadratureReport:
    method: str
    rel_tol: float
    achieved: float = 0.0
    evaluations: int = 0
    flagged: tuple[int, ...] = ()


@dataclass(frozen=True)
class SusceptibilitySpectrum:
    grid: DetuningGrid
    values: np.ndarray = field(repr=False)
    params: RateParams | None = None
    optical: str = ""
    spin: str = ""
    report: QuadratureReport | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.count,):
            raise InvalidParams(f"spectrum has {values.size} values for {self.grid.count} grid points")
        if not np.all(np.isfinite(values)):
            raise InvalidParams("spectrum contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def delta(self) -> np.ndarray:
        return self.grid.values()

    @property
    def method(self) -> str:
        return self.report.method if self.report else "closed_form"


class _Axis:
    """One profile axis: integration variable, bounds, weight and breakpoint mapping."""

    def __init__(self, prof: BroadeningProfile, q: QuadratureConfig):
        self.prof = prof
        bounded = prof.kind in (ProfileKind.TABULATED, ProfileKind.FLAT_TOP)
        self._mapped = not bounded and q.tail_mapping is TailMapping.TANGENT
        if self._mapped:
            self.bounds = (-math.pi / 2.0, math.pi / 2.0)
        else:
            self.bounds = profile_support(prof, None if bounded else q.truncate_n)
        self._density = _scalar_density(prof)
        self._scale = prof.fwhm / 2.0
        if bounded:
            lo, hi = profile_support(prof)
            self.span = hi - lo
        else:
            self.span = prof.fwhm

    def point(self, t: float) -> tuple[float, float]:
        """Shift and weight (density times Jacobian) at integration variable t."""
        if not self._mapped:
            return t, self._density(t)
        x = self.prof.center + self._scale * math.tan(t)
        cos_t = math.cos(t)
        return x, self._density(x) * self._scale / (cos_t * cos_t)

    def to_variable(self, x: float) -> float:
        if not self._mapped:
            return x
        return math.atan((x - self.prof.center) / self._scale)

    def breakpoints(self, shifts: list[float]) -> list[float]:
        a, b = self.bounds
        if self.prof.kind is not ProfileKind.FLAT_TOP:
            c, w = self.prof.center, self.prof.fwhm
            shifts = shifts + [c, c - w, c + w]
        ts = sorted({self.to_variable(x) for x in shifts if math.isfinite(x)})
        return [t for t in ts if a < t < b]

    def ladder(self, pole: complex) -> list[float]:
        """Shifts around a kernel pole at geometric distances Im(pole) * 10^k, up to the span."""
        center = pole.real
        step = max(abs(pole.imag), self.span * 1e-12)
        shifts = [center]
        while step < self.span:
            shifts += [center - step, center + step]
            step *= LADDER_FACTOR
        return shifts


def _scalar_density(prof: BroadeningProfile) -> Callable[[float], float]:
    c = prof.center
    if prof.kind is ProfileKind.LORENTZIAN:
        half = prof.fwhm / 2.0
        norm = half / math.pi
        return lambda x: norm / (half * half + (x - c) ** 2)
    if prof.kind is ProfileKind.GAUSSIAN:
        sd = prof.fwhm * FWHM_TO_SD
        norm = 1.0 / (sd * math.sqrt(2.0 * math.pi))
        return lambda x: norm * math.exp(-0.5 * ((x - c) / sd) ** 2)
    if prof.kind is ProfileKind.FLAT_TOP:
        return lambda x: 1.0 / prof.fwhm
    return lambda x: float(profile_density(prof, x))


def _equivalent_width(prof: BroadeningProfile) -> float:
    """Width of the Lorentzian with the same peak density; 0 for a point mass."""
    if prof.is_point_mass:
        return 0.0
    if prof.kind is ProfileKind.TABULATED:
        peak = float(prof.densities.max())
    else:
        peak = float(profile_density(prof, prof.center))
    return 2.0 / (math.pi * peak)


def _kernel(delta: float, delta_o: float, delta_s: float, p: RateParams) -> complex:
    """Homogeneous susceptibility of the atom with optical shift delta_o and spin shift delta_s."""
    u = delta - delta_s
    w = p.gamma21 - 2j * u
    return 2j * w / (p.omega**2 + w * (p.gamma31 - 2j * (delta - delta_o)))


def _collapsed_spin(delta: float, delta_o: float, p: RateParams, spin: BroadeningProfile) -> complex:
    """Kernel averaged over an analytic spin profile in closed form."""
    A = p.gamma31 - 2j * (delta - delta_o)
    if spin.is_point_mass or spin.kind is ProfileKind.LORENTZIAN:
        # Lorentzian average shifts the pole: gamma21 -> gamma21 + sigma_spin
        w = p.gamma21 + spin.fwhm - 2j * (delta - spin.center)
        return 2j * w / (p.omega**2 + A * w)
    if p.omega == 0:
        return 2j / A

    # chi = (2i/A) (1 - Omega^2 / (K - 2iAu)),  K = Omega^2 + A gamma21,  u = delta - delta_s
    K = p.omega**2 + A * p.gamma21
    z0 = K / (2j * A)
    u0 = delta - spin.center
    if spin.kind is ProfileKind.GAUSSIAN:
        sd = spin.fwhm * FWHM_TO_SD
        zeta = (z0 - u0) / (SQRT2 * sd)
        mean_inverse = -1j * SQRT_HALF_PI * complex(wofz(-zeta)) / sd
    else:
        half = spin.fwhm / 2.0
        mean_inverse = (cmath.log(u0 + half - z0) - cmath.log(u0 - half - z0)) / spin.fwhm
    return (2j / A) * (1.0 - p.omega**2 * mean_inverse / (-2j * A))


def _spin_pole(delta: float, delta_o: float, p: RateParams) -> complex:
    """Pole of the kernel in the spin shift; the kernel is (w / A) / (delta_s - pole)."""
    A = p.gamma31 - 2j * (delta - delta_o)
    return delta + 1j * (p.omega**2 + A * p.gamma21) / (2.0 * A)


def _optical_pole(delta: float, p: RateParams, spin: BroadeningProfile) -> complex:
    """
    Pole of the spin-averaged kernel in the optical shift.

    Exact for point-mass and Lorentzian spin profiles, where the kernel is
    1 / (delta_o - pole); other spin kinds use the Lorentzian of equal FWHM.
    """
    width = spin.fwhm if math.isfinite(spin.fwhm) else 0.0
    w = p.gamma21 + width - 2j * (delta - spin.center)
    if w == 0:
        return complex(delta, p.gamma31 / 2.0)
    return delta + 1j * (p.omega**2 + p.gamma31 * w) / (2.0 * w)


def _quad_complex(
    f: Callable[[float], complex],
    bounds: tuple[float, float],
    points: list[float],
    q: QuadratureConfig,
    epsabs: float,
) -> tuple[complex, float, int, bool]:
    """Adaptive quadrature of a complex integrand as two real QUADPACK calls sharing evaluations."""
    cache: dict[float, complex] = {}

    def cached(t: float) -> complex:
        value = cache.get(t)
        if value is None:
            value = f(t)
            cache[t] = value
        return value

    kwargs = dict(epsabs=epsabs, epsrel=q.rel_tol, limit=q.limit, full_output=1)
    if points:
        kwargs["points"] = points
    a, b = bounds
    re = quad(lambda t: cached(t).real, a, b, **kwargs)
    im = quad(lambda t: cached(t).imag, a, b, **kwargs)
    ok = len(re) == 3 and len(im) == 3
    evaluations = re[2]["neval"] + im[2]["neval"]
    return complex(re[0], im[0]), math.hypot(re[1], im[1]), evaluations, ok


class _PointEvaluator:
    """Evaluates the profile-averaged susceptibility at one two-photon detuning."""

    def __init__(self, p: RateParams, optical: BroadeningProfile, spin: BroadeningProfile, q: QuadratureConfig):
        self.p = p
        self.optical = optical
        self.spin = spin
        self.q = q
        self.collapse = spin.is_point_mass or (
            q.collapse_spin and spin.kind is not ProfileKind.TABULATED
        )
        self.optical_axis = None if optical.is_point_mass else _Axis(optical, q)
        self.spin_axis = None if self.collapse else _Axis(spin, q)
        self.scale = 2.0 / (p.gamma31 + _equivalent_width(optical))
        self.epsabs = q.rel_tol * self.scale * 1e-2
        if p.omega == 0:
            self.method = "analytic"
        elif self.collapse and optical.is_point_mass:
            self.method = "point"
        elif self.collapse:
            self.method = "collapsed"
        else:
            self.method = "nested"

    def _spin_average(self, delta: float, delta_o: float) -> tuple[complex, float, int, bool]:
        if self.collapse:
            return _collapsed_spin(delta, delta_o, self.p, self.spin), 0.0, 1, True
        axis = self.spin_axis

        def integrand(t: float) -> complex:
            delta_s, weight = axis.point(t)
            if weight == 0.0:
                return 0j
            return weight * _kernel(delta, delta_o, delta_s, self.p)

        hints = axis.breakpoints(axis.ladder(_spin_pole(delta, delta_o, self.p)) + [delta])
        return _quad_complex(integrand, axis.bounds, hints, self.q, self.epsabs)

    def __call__(self, delta: float) -> tuple[complex, float, int, bool]:
        if self.method == "analytic":
            # 2i / A = 1 / (delta_o - delta - i gamma31 / 2) whatever the spin shift
            return profile_transform(self.optical, complex(delta, self.p.gamma31 / 2.0)), 0.0, 0, True
        if self.optical_axis is None:
            return self._spin_average(delta, self.optical.center)

        axis = self.optical_axis
        inner = {"error": 0.0, "evaluations": 0, "ok": True}

        def integrand(t: float) -> complex:
            delta_o, weight = axis.point(t)
            if weight == 0.0:
                return 0j
            value, abserr, evaluations, ok = self._spin_average(delta, delta_o)
            inner["error"] = max(inner["error"], abserr)
            inner["evaluations"] += evaluations
            inner["ok"] = inner["ok"] and ok
            return weight * value

        pole = _optical_pole(delta, self.p, self.spin)
        hints = axis.breakpoints(axis.ladder(pole) + axis.ladder(complex(delta, self.p.gamma31 / 2.0)))
        value, abserr, evaluations, ok = _quad_complex(integrand, axis.bounds, hints, self.q, self.epsabs)
        total = inner["evaluations"] if not self.collapse else evaluations
        # optical weights integrate to one: inner errors add at most their maximum
        return value, abserr + inner["error"], total, ok and inner["ok"]


def _check_inputs(p: RateParams, optical: BroadeningProfile, spin: BroadeningProfile) -> None:
    if p.gamma31 <= 0:
        raise InvalidParams(f"numeric integration needs gamma31 > 0, got {p.gamma31}")
    spin_width = spin.fwhm if not spin.is_point_mass else 0.0
    if p.omega != 0 and not p.gamma21 + spin_width > 0:
        raise InvalidParams("numeric integration needs gamma21 + spin profile width > 0")
    for name, prof in (("optical", optical), ("spin", spin)):
        if prof.kind is ProfileKind.TABULATED and prof.shifts is None:
            raise InvalidParams(f"{name} tabulated profile carries no table")


def integrate_susceptibility(
    grid: DetuningGrid,
    p: RateParams,
    optical: BroadeningProfile,
    spin: BroadeningProfile,
    q: QuadratureConfig | None = None,
) -> SusceptibilitySpectrum:
    """
    Average the homogeneous susceptibility over optical and spin profiles on `grid`.

    The profile widths come from `optical` and `spin`; the sigma fields of `p`
    are carried as metadata only. Points whose quadrature does not reach the
    tolerance are flagged in the report; if more than `flag_fraction` of the
    grid is flagged, QuadratureNotConverged is raised with the partial
    spectrum attached as `spectrum`.
    """
    q = q or QuadratureConfig()
    _check_inputs(p, optical, spin)
    evaluate = _PointEvaluator(p, optical, spin, q)
    deltas = grid.values()
    logger.info(
        f"Integrating {grid.count} point(s): optical={optical.describe()}, "
        f"spin={spin.describe()}, method={evaluate.method}"
    )

    values = np.empty(grid.count, dtype=complex)
    flagged: list[int] = []
    achieved = 0.0
    evaluations = 0
    for i, delta in enumerate(deltas):
        value, abserr, count, _ = evaluate(float(delta))
        values[i] = value
        evaluations += count
        relative = abserr / max(abs(value), evaluate.scale)
        achieved = max(achieved, relative)
        if relative > q.rel_tol:
            flagged.append(i)
            logger.warning(f"Quadrature flagged at delta={delta:.6g}: estimated error {relative:.2e}")

    report = QuadratureReport(
        method=evaluate.method,
        rel_tol=q.rel_tol,
        achieved=achieved,
        evaluations=evaluations,
        flagged=tuple(flagged),
    )
    spectrum = SusceptibilitySpectrum(
        grid=grid,
        values=values,
        params=p,
        optical=optical.describe(),
        spin=spin.describe(),
        report=report,
    )
    logger.debug(f"Quadrature report: {report}")
    if len(flagged) > q.flag_fraction * grid.count:
        error = QuadratureNotConverged(
            f"{len(flagged)} of {grid.count} grid points did not reach rel_tol={q.rel_tol}",
            flagged=flagged,
        )
        error.spectrum = spectrum
        raise error
    return spectrum


def closed_form_spectrum(grid: DetuningGrid, p: RateParams) -> SusceptibilitySpectrum:
    """Lorentzian-broadened susceptibility evaluated in closed form on `grid`."""
    return SusceptibilitySpectrum(
        grid=grid,
        values=chi_lorentzian_inhomogeneous(grid.values(), p),
        params=p,
        optical=f"Lorentzian(fwhm={p.sigma_opt:g}, center=0)",
        spin=f"Lorentzian(fwhm={p.sigma_spin:g}, center=0)",
        report=QuadratureReport(method="closed_form", rel_tol=0.0),
    )


def grid_from_deltas(deltas: np.ndarray) -> DetuningGrid:
    deltas = np.asarray(deltas, dtype=float)
    grid = DetuningGrid(float(deltas[0]), float(deltas[-1]), deltas.size)
    if not np.allclose(deltas, grid.values(), rtol=1e-7, atol=1e-9 * grid.step):
        raise InvalidParams("detunings are not uniformly spaced")
    return grid


def write_spectrum_csv(s: SusceptibilitySpectrum, path: str | Path) -> Path:
    return write_csv(path, {"delta": s.delta, "chi_re": s.values.real, "chi_im": s.values.imag})


def read_spectrum_csv(path: str | Path) -> SusceptibilitySpectrum:
    frame = read_csv(path, SPECTRUM_COLUMNS)
    grid = grid_from_deltas(frame["delta"].to_numpy(dtype=float))
    values = frame["chi_re"].to_numpy(dtype=float) + 1j * frame["chi_im"].to_numpy(dtype=float)
    return SusceptibilitySpectrum(grid=grid, values=values, report=QuadratureReport(method="file", rel_tol=0.0))
