"""
Probe susceptibility of a Lambda system and the closed-form EIT metrics.

All rates share one user-chosen frequency unit and use the FWHM convention;
no factors of 2*pi are applied anywhere. The susceptibility is returned up to
a proportionality constant fixed to 1, so absolute absorption scaling belongs
to the transmission model.
"""

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike

from errors import ExpansionUnreliable, Indeterminate, InvalidParams
from settings import get_config, get_logger

logger = get_logger(__name__)


class Regime(str, Enum):
    EIT = "EIT"
    CROSSOVER = "Crossover"
    AUTLER_TOWNES = "AutlerTownes"


@dataclass(frozen=True)
class RateParams:
    """Lambda-system constants in one common frequency unit."""

    omega: float
    gamma21: float
    gamma31: float
    sigma_opt: float = 0.0
    sigma_spin: float = 0.0

    def __post_init__(self):
        for name in ("omega", "gamma21", "gamma31", "sigma_opt", "sigma_spin"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise InvalidParams(f"{name} must be a finite number, got {value!r}")
            if value < 0:
                raise InvalidParams(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, float(value))

    def substituted(self) -> "RateParams":
        """Homogeneous parameters equivalent to Lorentzian broadening (gamma -> gamma + sigma)."""
        return RateParams(
            omega=self.omega,
            gamma21=self.gamma21 + self.sigma_spin,
            gamma31=self.gamma31 + self.sigma_opt,
        )

    def with_omega(self, omega: float) -> "RateParams":
        return replace(self, omega=omega)


@dataclass(frozen=True)
class ClosedFormMetrics:
    width: float
    visibility: float
    regime: Regime
    expansion_reliable: bool = True

    def __post_init__(self):
        if self.width < 0:
            raise InvalidParams(f"width must be >= 0, got {self.width}")
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidParams(f"visibility must lie in [0, 1], got {self.visibility}")


def _as_complex(value: np.ndarray) -> complex | np.ndarray:
    return complex(value) if np.ndim(value) == 0 else value


def chi_homogeneous(delta: ArrayLike, Delta: ArrayLike, p: RateParams) -> complex | np.ndarray:
    """
    Linear susceptibility of a weak probe on a homogeneously broadened Lambda system.

        chi = (2i*gamma21 + 4*delta) / (Omega^2 + (gamma21 - 2i*delta)(gamma31 - 2i*Delta))

    Args:
        delta: two-photon detuning (scalar or array)
        Delta: probe detuning (scalar or array, broadcast against delta)
        p: rate parameters; sigma fields are ignored here

    Returns:
        Complex susceptibility with the same shape as the broadcast inputs
    """
    delta = np.asarray(delta, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    numerator = 2j * p.gamma21 + 4.0 * delta
    denominator = p.omega**2 + (p.gamma21 - 2j * delta) * (p.gamma31 - 2j * Delta)
    if np.any(denominator == 0):
        raise InvalidParams(
            f"susceptibility denominator vanishes for omega={p.omega}, "
            f"gamma21={p.gamma21}, gamma31={p.gamma31}"
        )
    return _as_complex(numerator / denominator)


def chi_lorentzian_inhomogeneous(delta: ArrayLike, p: RateParams) -> complex | np.ndarray:
    """Closed-form susceptibility for Lorentzian optical and spin profiles with a resonant control."""
    return chi_homogeneous(delta, delta, p.substituted())


def effective_spin_width(intrinsic: float, laser_linewidth: float) -> float:
    """Spin inhomogeneous width seen by EIT: quadrature sum of intrinsic width and laser linewidth."""
    if intrinsic < 0 or laser_linewidth < 0:
        raise InvalidParams(
            f"widths must be >= 0, got intrinsic={intrinsic}, laser_linewidth={laser_linewidth}"
        )
    return math.hypot(intrinsic, laser_linewidth)


def expected_width(p: RateParams) -> float:
    """Leading term of the EIT width, (sqrt(sigma_opt^2 + 4 Omega^2) - sigma_opt) / 2."""
    root = math.sqrt(p.sigma_opt**2 + 4.0 * p.omega**2)
    # Algebraically equal to the difference form; stays accurate for omega << sigma_opt
    return 2.0 * p.omega**2 / (root + p.sigma_opt) if root + p.sigma_opt > 0 else 0.0


def visibility_abscissa(p: RateParams) -> float:
    """Omega^2 / (sigma_opt * sigma_spin), the visibility collapse variable."""
    product = p.sigma_opt * p.sigma_spin
    if product == 0:
        raise Indeterminate("visibility abscissa needs sigma_opt * sigma_spin > 0")
    return p.omega**2 / product


def _width_closed(p: RateParams) -> tuple[float, bool]:
    if p.sigma_opt <= 0 or p.omega <= 0:
        raise InvalidParams(
            f"closed-form width needs sigma_opt > 0 and omega > 0, "
            f"got sigma_opt={p.sigma_opt}, omega={p.omega}"
        )
    root = math.sqrt(p.sigma_opt**2 + 4.0 * p.omega**2)
    leading = expected_width(p)
    correction = p.sigma_spin * (p.sigma_opt**2 - p.omega**2) / (p.omega**2 * root)
    threshold = get_config("closed_form.expansion_threshold", 0.5)
    reliable = p.sigma_spin <= threshold * leading
    return leading * (1.0 + correction), reliable


def eit_width_closed(p: RateParams) -> float:
    """
    FWHM of the transparency window to first order in sigma_spin.

    Emits ExpansionUnreliable when sigma_spin exceeds the configured fraction
    of the leading term; the value is still returned.
    """
    width, reliable = _width_closed(p)
    if not reliable:
        warnings.warn(
            f"sigma_spin={p.sigma_spin} is large against the leading width "
            f"{expected_width(p):.6g}; first-order expansion is unreliable",
            ExpansionUnreliable,
            stacklevel=2,
        )
    return width


def eit_width_asymptotic(p: RateParams, regime: Regime) -> float:
    """Width asymptotes: Omega^2/sigma_opt + sigma_spin (EIT) or Omega - (sigma_opt + sigma_spin)/2 (Autler-Townes)."""
    regime = Regime(regime)
    if regime is Regime.EIT:
        if p.sigma_opt <= 0:
            raise InvalidParams("EIT asymptote needs sigma_opt > 0")
        return p.omega**2 / p.sigma_opt + p.sigma_spin
    if regime is Regime.AUTLER_TOWNES:
        return p.omega - (p.sigma_opt + p.sigma_spin) / 2.0
    raise InvalidParams(f"no asymptote exists for regime {regime.value}")


def eit_visibility_closed(p: RateParams) -> float:
    """Residual-definition visibility Omega^2 / (Omega^2 + sigma_opt*sigma_spin)."""
    product = p.sigma_opt * p.sigma_spin
    if p.omega == 0 and product == 0:
        raise Indeterminate("visibility is 0/0 for omega = 0 and sigma_opt * sigma_spin = 0")
    return p.omega**2 / (p.omega**2 + product)


def classify_regime(p: RateParams, r_lo: float | None = None, r_hi: float | None = None) -> Regime:
    """EIT below r_lo * sigma_opt, Autler-Townes above r_hi * sigma_opt, Crossover between."""
    if p.sigma_opt <= 0:
        raise InvalidParams(f"regime classification needs sigma_opt > 0, got {p.sigma_opt}")
    r_lo = get_config("regime.r_lo", 0.5) if r_lo is None else r_lo
    r_hi = get_config("regime.r_hi", 2.0) if r_hi is None else r_hi
    if not 0 < r_lo <= r_hi:
        raise InvalidParams(f"regime band must satisfy 0 < r_lo <= r_hi, got [{r_lo}, {r_hi}]")
    if p.omega < r_lo * p.sigma_opt:
        return Regime.EIT
    if p.omega > r_hi * p.sigma_opt:
        return Regime.AUTLER_TOWNES
    return Regime.CROSSOVER


def closed_form_metrics(p: RateParams) -> ClosedFormMetrics:
    """Width, visibility and regime from the closed-form expressions, without warnings."""
    width, reliable = _width_closed(p)
    if not reliable:
        logger.debug(f"closed-form width flagged unreliable for {p}")
    return ClosedFormMetrics(
        width=max(width, 0.0),
        visibility=eit_visibility_closed(p),
        regime=classify_regime(p),
        expansion_reliable=reliable,
    )
