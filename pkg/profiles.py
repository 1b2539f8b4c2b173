"""
Normalized broadening densities for the optical and spin inhomogeneous profiles.

FWHM is the width parameter of every kind. A zero FWHM requests a point mass,
which carries no numeric density; the integrator collapses that axis instead.
"""

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import trapezoid
from scipy.special import wofz

from csvio import read_csv, write_csv
from errors import AllZero, InvalidWidth, NegativeDensity, NonUniformGrid
from settings import get_logger

logger = get_logger(__name__)

PROFILE_COLUMNS = ("shift", "density")

FWHM_TO_SD = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class ProfileKind(str, Enum):
    LORENTZIAN = "Lorentzian"
    GAUSSIAN = "Gaussian"
    FLAT_TOP = "FlatTop"
    TABULATED = "Tabulated"


@dataclass(frozen=True)
class BroadeningProfile:
    kind: ProfileKind
    fwhm: float
    center: float = 0.0
    shifts: np.ndarray | None = field(default=None, repr=False, compare=False)
    densities: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def is_point_mass(self) -> bool:
        return self.kind is not ProfileKind.TABULATED and self.fwhm == 0.0

    @property
    def table(self) -> list[tuple[float, float]]:
        if self.shifts is None:
            return []
        return list(zip(self.shifts.tolist(), self.densities.tolist()))

    def describe(self) -> str:
        if self.is_point_mass:
            return f"PointMass(center={self.center:g})"
        return f"{self.kind.value}(fwhm={self.fwhm:g}, center={self.center:g})"


def make_profile(kind: ProfileKind | str, fwhm: float, center: float = 0.0) -> BroadeningProfile:
    """Analytic profile of the requested kind; fwhm = 0 gives a point mass at `center`."""
    kind = ProfileKind(kind)
    if kind is ProfileKind.TABULATED:
        raise InvalidWidth("tabulated profiles are built with profile_from_table")
    if not math.isfinite(fwhm) or fwhm < 0:
        raise InvalidWidth(f"fwhm must be >= 0, got {fwhm}")
    if not math.isfinite(center):
        raise InvalidWidth(f"center must be finite, got {center}")
    return BroadeningProfile(kind=kind, fwhm=float(fwhm), center=float(center))


def profile_density(prof: BroadeningProfile, x: ArrayLike) -> float | np.ndarray:
    """Probability density at shift(s) x; zero outside a tabulated profile's span."""
    x = np.asarray(x, dtype=float)
    u = x - prof.center
    if prof.is_point_mass:
        density = np.where(u == 0.0, np.inf, 0.0)
    elif prof.kind is ProfileKind.LORENTZIAN:
        half = prof.fwhm / 2.0
        density = (half / math.pi) / (half**2 + u**2)
    elif prof.kind is ProfileKind.GAUSSIAN:
        sd = prof.fwhm * FWHM_TO_SD
        density = np.exp(-0.5 * (u / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    elif prof.kind is ProfileKind.FLAT_TOP:
        density = np.where(np.abs(u) <= prof.fwhm / 2.0, 1.0 / prof.fwhm, 0.0)
    else:
        density = np.interp(x, prof.shifts, prof.densities, left=0.0, right=0.0)
    return float(density) if density.ndim == 0 else density


def profile_support(prof: BroadeningProfile, truncate_n: float | None = None) -> tuple[float, float]:
    """
    Integration domain of a profile.

    Bounded kinds return their exact support. Lorentzian and Gaussian profiles
    are unbounded unless `truncate_n` is given, in which case the domain is
    center +- truncate_n * FWHM.
    """
    c = prof.center
    if prof.is_point_mass:
        return c, c
    if prof.kind is ProfileKind.TABULATED:
        return float(prof.shifts[0]), float(prof.shifts[-1])
    if prof.kind is ProfileKind.FLAT_TOP:
        return c - prof.fwhm / 2.0, c + prof.fwhm / 2.0
    if truncate_n is None:
        return -math.inf, math.inf
    return c - truncate_n * prof.fwhm, c + truncate_n * prof.fwhm


def profile_transform(prof: BroadeningProfile, zeta: complex) -> complex:
    """
    Mean of 1 / (x - zeta) over the profile, for zeta in the upper half plane.

    Exact for every kind: a pole shift for Lorentzian, the Faddeeva function
    for Gaussian and a complex log per segment for flat-top and tabulated
    densities (piecewise linear between table points).
    """
    if not zeta.imag > 0:
        raise InvalidWidth(f"transform needs Im(zeta) > 0, got {zeta!r}")
    c = prof.center
    if prof.is_point_mass:
        return 1.0 / (c - zeta)
    if prof.kind is ProfileKind.LORENTZIAN:
        return 1.0 / (c - 0.5j * prof.fwhm - zeta)
    if prof.kind is ProfileKind.GAUSSIAN:
        scale = math.sqrt(2.0) * prof.fwhm * FWHM_TO_SD
        return 1j * math.sqrt(math.pi) * complex(wofz((zeta - c) / scale)) / scale
    if prof.kind is ProfileKind.FLAT_TOP:
        half = prof.fwhm / 2.0
        return (cmath.log(c + half - zeta) - cmath.log(c - half - zeta)) / prof.fwhm

    a, b = prof.shifts[:-1], prof.shifts[1:]
    ya, yb = prof.densities[:-1], prof.densities[1:]
    slope = (yb - ya) / (b - a)
    logs = np.log(b - zeta) - np.log(a - zeta)
    return complex(np.sum(slope * (b - a) + (ya + slope * (zeta - a)) * logs))


def numeric_fwhm(x: ArrayLike, y: ArrayLike) -> float:
    """
    Full width at half maximum of the dominant peak of y(x).

    Half-maximum crossings are located by linear interpolation on either side of
    the global maximum. Returns nan when a side never drops below half maximum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    peak = int(np.argmax(y))
    half = y[peak] / 2.0
    if y[peak] <= 0:
        return math.nan

    below_left = np.nonzero(y[:peak] < half)[0]
    below_right = np.nonzero(y[peak:] < half)[0]
    if below_left.size == 0 or below_right.size == 0:
        return math.nan

    i = below_left[-1]
    x_left = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])
    j = peak + below_right[0]
    x_right = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
    return float(x_right - x_left)


def _uniform_step(shifts: np.ndarray) -> float:
    steps = np.diff(shifts)
    if np.any(steps <= 0):
        raise NonUniformGrid("shifts must be strictly increasing")
    step = float(np.mean(steps))
    if not np.allclose(steps, step, rtol=1e-6, atol=1e-12 * max(1.0, abs(step))):
        raise NonUniformGrid(
            f"shifts must be uniformly spaced, steps range over [{steps.min():g}, {steps.max():g}]"
        )
    return step


def profile_from_table(points: Sequence[tuple[float, float]] | np.ndarray) -> BroadeningProfile:
    """
    Tabulated profile from (shift, density) pairs on a uniform grid.

    The table is renormalized to unit trapezoid area; the numeric FWHM of its
    dominant feature and the location of its maximum are recorded.
    """
    table = np.asarray(points, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 3:
        raise NonUniformGrid("a tabulated profile needs at least 3 (shift, density) pairs")
    shifts, densities = table[:, 0].copy(), table[:, 1].copy()
    _uniform_step(shifts)
    if np.any(densities < 0):
        raise NegativeDensity(f"densities must be >= 0, minimum is {densities.min():g}")
    area = float(trapezoid(densities, shifts))
    if not np.any(densities > 0) or area <= 0:
        raise AllZero("tabulated profile has no positive density")

    densities /= area
    shifts.flags.writeable = False
    densities.flags.writeable = False
    width = numeric_fwhm(shifts, densities)
    center = float(shifts[int(np.argmax(densities))])
    logger.debug(f"Tabulated profile: {shifts.size} points, numeric FWHM {width:.6g}")
    return BroadeningProfile(
        kind=ProfileKind.TABULATED,
        fwhm=width,
        center=center,
        shifts=shifts,
        densities=densities,
    )


def discretize(prof: BroadeningProfile, shifts: ArrayLike) -> BroadeningProfile:
    """Sample an analytic profile on `shifts` and return it as a tabulated profile."""
    shifts = np.asarray(shifts, dtype=float)
    return profile_from_table(np.column_stack([shifts, profile_density(prof, shifts)]))


def write_profile_csv(prof: BroadeningProfile, path: str | Path) -> Path:
    if prof.kind is not ProfileKind.TABULATED:
        raise InvalidWidth("only tabulated profiles have a CSV form")
    return write_csv(path, {"shift": prof.shifts, "density": prof.densities})


def read_profile_csv(path: str | Path) -> BroadeningProfile:
    frame = read_csv(path, PROFILE_COLUMNS)
    return profile_from_table(frame.to_numpy(dtype=float))
