"""Request/response models of the HTTP service."""

from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, Field


def finite_or_none(value: float | None) -> float | None:
    """NaN and infinities have no JSON form; report them as null."""
    if value is None or not math.isfinite(value):
        return None
    return value


class RatesRequest(BaseModel):
    center_wavelength_nm: float = 1064.0
    fwhm_bandwidth_nm: Optional[float] = 30.0
    fwhm_bandwidth_hz: Optional[float] = None
    mode_area_m2: float = 1e-11
    phase_matching: Literal["type-0/I", "type-II"] = "type-0/I"
    sigma2_gm: float = 10.0
    f: float = 1.0
    xi: float = 3.0
    flux_density: Optional[float] = None
    avg_power_w: Optional[float] = None
    rep_rate_hz: Optional[float] = None


class RatesResponse(BaseModel):
    sigma2_si: float
    sigma_e_m2: float
    entanglement_time_s: float
    crossover_flux: float
    n_at_crossover: float
    flux_density: Optional[float] = None
    avg_power_w: Optional[float] = None
    photons_per_mode: Optional[float] = None
    photons_per_pulse: Optional[float] = None
    g2_zero: Optional[float] = None
    etpa_rate_hz: Optional[float] = None
    broadband_rate_hz: Optional[float] = None


class ThresholdRequest(BaseModel):
    dark_rate_hz: float
    duration_s: float
    k: float = 5.0
    duty_cycle: float = 0.5


class ThresholdResponse(BaseModel):
    r_det_hz: float


class PowerLawRequest(BaseModel):
    x: list[float]
    y: list[float]
    y_sigma: Optional[list[float]] = None


class PowerLawResponse(BaseModel):
    exponent: float
    exponent_stderr: float
    log_prefactor: float
    prefactor: float


class CrossoverRequest(BaseModel):
    x: list[float]
    y: list[float]
    y_var: Optional[list[float]] = None


class CrossoverResponse(BaseModel):
    a: float
    b: float
    n_cross: Optional[float]
    n_cross_stderr: Optional[float]
    a_stderr: float
    b_stderr: float
    ill_conditioned: bool
    note: str


class ChoppedCountsIn(BaseModel):
    open_counts: int = Field(ge=0)
    closed_counts: int = Field(ge=0)
    open_time_s: float = Field(gt=0)
    closed_time_s: float = Field(gt=0)


class DifferentialRequest(BaseModel):
    counts: ChoppedCountsIn
    dark_rate_hz: Optional[float] = None
    duration_s: Optional[float] = None
    threshold_k: float = 5.0
    duty_cycle: float = 0.5


class DifferentialResponse(BaseModel):
    rate_hz: float
    sigma_hz: float
    z_score: float
    counts_open: int
    counts_closed: int
    r_det_hz: Optional[float] = None
    verdict: Optional[str] = None


class EfficiencyFit(BaseModel):
    exponent: float
    log_prefactor: float
    exponent_stderr: float = 0.0
    pulse_duration_s: float


class EfficiencyRequest(BaseModel):
    numerator: EfficiencyFit
    reference: EfficiencyFit


class EfficiencyResponse(BaseModel):
    ratio: float


class TimetagAnalysisRequest(BaseModel):
    csv_text: str
    meta_text: Optional[str] = None
    dark_rate_hz: Optional[float] = None
    duration_s: Optional[float] = None
    chopper_freq_hz: Optional[float] = None
    duty_cycle: Optional[float] = None
    threshold_k: Optional[float] = None
    edge_ramp_fraction: Optional[float] = None


class ScenarioRunRequest(BaseModel):
    config_text: str
    seed: Optional[int] = None
    points: Optional[int] = None
    mc_pulses: Optional[int] = None


class ScenarioRunResponse(BaseModel):
    report: dict
    files: dict[str, str]


class ScenarioListResponse(BaseModel):
    scenarios: list[str]


class ScenarioConfigResponse(BaseModel):
    name: str
    config_text: str


class HealthResponse(BaseModel):
    status: str
    version: str
