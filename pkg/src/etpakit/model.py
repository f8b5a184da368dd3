"""Closed-form rate laws and flux accounting for two-photon absorption driven
by squeezed light, from the isolated-pair regime to bright squeezed vacuum.

All quantities are SI unless a unit suffix says otherwise (``_gm`` for
Goppert-Mayer cross sections).  Flux density ``phi`` is photons m^-2 s^-1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from scipy.constants import c as C_LIGHT, h as H_PLANCK

#: 1 Goppert-Mayer in m^4 s.
GM_IN_SI = 1e-58


class PhaseMatching(enum.Enum):
    """Down-conversion phase-matching class.

    Type-0 and type-I produce indistinguishable (degenerate) photon pairs;
    type-II pairs are distinguishable by polarization.  The class fixes the
    high-gain limit of the second-order coherence of the generated light.
    """

    TYPE_0_OR_I = "type-0/I"
    TYPE_II = "type-II"

    @property
    def g2_high_gain(self) -> float:
        """High-gain limit of g2(0): 3 for type-0/I, 2 for type-II."""
        return 3.0 if self is PhaseMatching.TYPE_0_OR_I else 2.0


class CWPump:
    """Marker for continuous-wave pumping (no per-pulse bookkeeping)."""

    mode = "cw"

    def __repr__(self):
        return "CWPump()"

    def __eq__(self, other):
        return isinstance(other, CWPump)

    def __hash__(self):
        return hash("CWPump")


@dataclass(frozen=True)
class PulsedPump:
    """Pulsed pumping: repetition rate and pump pulse duration."""

    rep_rate_hz: float
    pulse_duration_s: float

    mode = "pulsed"

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ValueError(f"rep_rate_hz must be positive, got {self.rep_rate_hz}")
        if self.pulse_duration_s <= 0:
            raise ValueError(
                f"pulse_duration_s must be positive, got {self.pulse_duration_s}"
            )


@dataclass(frozen=True)
class SourceSpec:
    """Squeezed-light source parameters.

    The entanglement time is the inverse FWHM bandwidth of the source, and
    the entanglement area is taken equal to the (single) transverse mode
    area.  ``temporal_modes`` is the effective Schmidt mode count.
    """

    center_wavelength_m: float
    fwhm_bandwidth_hz: float
    entanglement_time_s: float
    mode_area_m2: float
    phase_matching: PhaseMatching = PhaseMatching.TYPE_0_OR_I
    temporal_modes: int = 1
    pump: CWPump | PulsedPump = field(default_factory=CWPump)

    def __post_init__(self):
        for name in ("center_wavelength_m", "fwhm_bandwidth_hz",
                     "entanglement_time_s", "mode_area_m2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.temporal_modes < 1:
            raise ValueError(f"temporal_modes must be >= 1, got {self.temporal_modes}")
        expected = 1.0 / self.fwhm_bandwidth_hz
        if abs(self.entanglement_time_s - expected) > 1e-12 * expected:
            raise ValueError(
                "entanglement_time_s must equal 1/fwhm_bandwidth_hz "
                f"({expected:.6e} s), got {self.entanglement_time_s:.6e} s"
            )

    @classmethod
    def from_bandwidth(cls, center_wavelength_m, fwhm_bandwidth_hz, mode_area_m2,
                       phase_matching=PhaseMatching.TYPE_0_OR_I, temporal_modes=1,
                       pump=None):
        """Build a source with the entanglement time derived from the bandwidth."""
        return cls(
            center_wavelength_m=center_wavelength_m,
            fwhm_bandwidth_hz=fwhm_bandwidth_hz,
            entanglement_time_s=1.0 / fwhm_bandwidth_hz,
            mode_area_m2=mode_area_m2,
            phase_matching=phase_matching,
            temporal_modes=temporal_modes,
            pump=pump if pump is not None else CWPump(),
        )

    @classmethod
    def from_wavelengths(cls, center_wavelength_m, fwhm_wavelength_m, mode_area_m2,
                         **kwargs):
        """Build a source from a wavelength-domain FWHM bandwidth."""
        bw = bandwidth_from_wavelength(center_wavelength_m, fwhm_wavelength_m)
        return cls.from_bandwidth(center_wavelength_m, bw, mode_area_m2, **kwargs)

    @property
    def entanglement_area_m2(self) -> float:
        # Single transverse mode: entanglement area equals the mode area.
        return self.mode_area_m2


@dataclass(frozen=True)
class AbsorberSpec:
    """Effective two-photon absorber.

    ``calibration_constant`` lumps detection efficiency and the number of
    participating molecules into a single scenario-fitted scale factor that
    converts a per-absorber rate into a detected count rate.
    """

    sigma2_gm: float = 10.0
    tpa_linewidth_hz: float = 1e13
    calibration_constant: float = 0.0

    def __post_init__(self):
        if self.sigma2_gm < 0:
            raise ValueError(f"sigma2_gm must be >= 0, got {self.sigma2_gm}")
        if self.tpa_linewidth_hz <= 0:
            raise ValueError(
                f"tpa_linewidth_hz must be positive, got {self.tpa_linewidth_hz}"
            )
        if self.calibration_constant < 0:
            raise ValueError(
                f"calibration_constant must be >= 0, got {self.calibration_constant}"
            )

    @property
    def sigma2_si(self) -> float:
        """Conventional TPA cross section in m^4 s (exactly sigma2_gm x 1e-58)."""
        return self.sigma2_gm * GM_IN_SI


@dataclass(frozen=True)
class ExcitationState:
    """Flux bookkeeping for one excitation condition."""

    avg_power_w: float = 0.0
    flux_density: float = 0.0
    photons_per_pulse: float = 0.0
    photons_per_mode: float = 0.0

    def __post_init__(self):
        for name in ("avg_power_w", "flux_density", "photons_per_pulse",
                     "photons_per_mode"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_power(cls, source: SourceSpec, avg_power_w: float) -> "ExcitationState":
        """Derive flux density, photons per mode and (if pulsed) per pulse."""
        if avg_power_w < 0:
            raise ValueError(f"avg_power_w must be >= 0, got {avg_power_w}")
        photon_flux = avg_power_w / photon_energy(source.center_wavelength_m)
        phi = photon_flux / source.mode_area_m2
        n = photons_per_mode(phi, source.mode_area_m2, source.entanglement_time_s)
        n_pulse = 0.0
        if isinstance(source.pump, PulsedPump):
            n_pulse = photons_per_pulse(avg_power_w, source.pump.rep_rate_hz,
                                        source.center_wavelength_m)
        return cls(avg_power_w=avg_power_w, flux_density=phi,
                   photons_per_pulse=n_pulse, photons_per_mode=n)

    @classmethod
    def from_flux(cls, source: SourceSpec, flux_density: float) -> "ExcitationState":
        """Derive the state from a photon-flux density."""
        if flux_density < 0:
            raise ValueError(f"flux_density must be >= 0, got {flux_density}")
        power = flux_density * source.mode_area_m2 * photon_energy(
            source.center_wavelength_m)
        n = photons_per_mode(flux_density, source.mode_area_m2,
                             source.entanglement_time_s)
        n_pulse = 0.0
        if isinstance(source.pump, PulsedPump):
            n_pulse = photons_per_pulse(power, source.pump.rep_rate_hz,
                                        source.center_wavelength_m)
        return cls(avg_power_w=power, flux_density=flux_density,
                   photons_per_pulse=n_pulse, photons_per_mode=n)


@dataclass(frozen=True)
class RateParams:
    """Phenomenological parameters of the two-term rate law.

    ``f`` scales the coherent (pairwise-correlated) cross section and is of
    order unity; ``xi`` is the quadratic-term coefficient, equal to the
    high-gain g2(0) limit of the driving light (3 for type-0/I, 2 for
    type-II) when the two-photon response is broadband.
    """

    f: float = 1.0
    xi: float = 3.0

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError(f"f must be positive, got {self.f}")
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")

    @classmethod
    def for_phase_matching(cls, phase_matching: PhaseMatching, f: float = 1.0):
        return cls(f=f, xi=phase_matching.g2_high_gain)


def photon_energy(wavelength_m: float) -> float:
    """Energy of one photon, h*c/lambda, in joules."""
    if wavelength_m <= 0:
        raise ValueError(f"wavelength_m must be positive, got {wavelength_m}")
    return H_PLANCK * C_LIGHT / wavelength_m


def gm_to_si(sigma_gm: float) -> float:
    """Convert a TPA cross section from GM to m^4 s (1 GM = 1e-58 m^4 s)."""
    if sigma_gm < 0:
        raise ValueError(f"sigma_gm must be >= 0, got {sigma_gm}")
    return sigma_gm * GM_IN_SI


def bandwidth_from_wavelength(center_wavelength_m: float,
                              fwhm_wavelength_m: float) -> float:
    """Frequency bandwidth c*dlambda/lambda^2 of a wavelength-domain FWHM."""
    if center_wavelength_m <= 0:
        raise ValueError(
            f"center_wavelength_m must be positive, got {center_wavelength_m}")
    if fwhm_wavelength_m < 0:
        raise ValueError(
            f"fwhm_wavelength_m must be >= 0, got {fwhm_wavelength_m}")
    return C_LIGHT * fwhm_wavelength_m / center_wavelength_m**2


def entanglement_time(fwhm_bandwidth_hz: float) -> float:
    """Entanglement (correlation) time, the inverse FWHM bandwidth."""
    if fwhm_bandwidth_hz <= 0:
        raise ValueError(
            f"fwhm_bandwidth_hz must be positive, got {fwhm_bandwidth_hz}")
    return 1.0 / fwhm_bandwidth_hz


def photons_per_mode(flux_density: float, mode_area_m2: float,
                     entanglement_time_s: float) -> float:
    """Mean photon number per spectral-temporal mode, n = phi * A0 * Te."""
    if flux_density < 0 or mode_area_m2 < 0 or entanglement_time_s < 0:
        raise ValueError("flux_density, mode_area_m2 and entanglement_time_s "
                         "must be >= 0")
    return flux_density * mode_area_m2 * entanglement_time_s


def photons_per_pulse(avg_power_w: float, rep_rate_hz: float,
                      wavelength_m: float) -> float:
    """Photons per pulse N = P / (rep_rate * h c / lambda).

    Defined for pulsed operation only; a zero repetition rate has no
    per-pulse notion and raises.
    """
    if avg_power_w < 0:
        raise ValueError(f"avg_power_w must be >= 0, got {avg_power_w}")
    if rep_rate_hz <= 0:
        raise ValueError(f"rep_rate_hz must be positive, got {rep_rate_hz}")
    return avg_power_w / (rep_rate_hz * photon_energy(wavelength_m))


def g2_zero(n: float, phase_matching: PhaseMatching) -> float:
    """Second-order coherence g2(0) of squeezed vacuum at n photons per mode.

    1/n + 3 for type-0/I (indistinguishable photons), 1/n + 2 for type-II.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    return 1.0 / n + phase_matching.g2_high_gain


def sigma_e(f: float, sigma2_si: float, entanglement_area_m2: float,
            entanglement_time_s: float) -> float:
    """Pairwise-coherent TPA cross section sigma_e = f * sigma2 / (Ae * Te)."""
    if f <= 0:
        raise ValueError(f"f must be positive, got {f}")
    if sigma2_si < 0:
        raise ValueError(f"sigma2_si must be >= 0, got {sigma2_si}")
    if entanglement_area_m2 <= 0 or entanglement_time_s <= 0:
        raise ValueError("entanglement_area_m2 and entanglement_time_s must be "
                         "positive")
    return f * sigma2_si / (entanglement_area_m2 * entanglement_time_s)


def etpa_rate(flux_density: float, sigma_e_m2: float, sigma2_si: float,
              xi: float) -> float:
    """Two-term TPA rate per absorber: sigma_e*phi + xi*sigma2*phi^2."""
    if flux_density < 0 or sigma_e_m2 < 0 or sigma2_si < 0 or xi < 0:
        raise ValueError("all rate-law inputs must be >= 0")
    return sigma_e_m2 * flux_density + xi * sigma2_si * flux_density**2


def tpa_rate_broadband(flux_density: float, sigma2_si: float, g2: float) -> float:
    """TPA rate per absorber for a broadband (instantaneous) two-photon
    response: g2(0) * sigma2 * phi^2.

    Requires g2 >= 1; coherent light has g2 = 1 and recovers the classical
    quadratic rate.
    """
    if flux_density < 0 or sigma2_si < 0:
        raise ValueError("flux_density and sigma2_si must be >= 0")
    if g2 < 1:
        raise ValueError(f"g2 must be >= 1, got {g2}")
    return g2 * sigma2_si * flux_density**2


def crossover_flux(sigma_e_m2: float, sigma2_si: float) -> float:
    """Flux density at which the linear and quadratic rate terms are equal,
    phi_c = sigma_e / sigma2.

    When sigma_e comes from the same source geometry (Ae = A0, same Te), the
    photons per mode at phi_c equal f.
    """
    if sigma_e_m2 <= 0:
        raise ValueError(f"sigma_e_m2 must be positive, got {sigma_e_m2}")
    if sigma2_si <= 0:
        raise ValueError(f"sigma2_si must be positive, got {sigma2_si}")
    return sigma_e_m2 / sigma2_si
