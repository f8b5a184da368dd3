"""Time-of-flight spectrometer simulation.

A dispersive fiber maps wavelength to arrival delay; histograms of delays,
calibrated back to wavelength with known filter edges (or the exact fiber
map), reconstruct marginal spectra and joint spectral intensities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detection import CHANNEL_FLUOR, CHANNEL_SYNC, TimeTagStream
from .model import C_LIGHT
from .source import FrequencyPairSample

#: Representative normal dispersion near 1064 nm, exposed in configs.
DEFAULT_DISPERSION_PS_NM_KM = 40.0
#: Detector timing jitter standard deviation, exposed in configs.
DEFAULT_JITTER_SIGMA_S = 50e-12


@dataclass(frozen=True)
class DispersiveFiber:
    """Fiber spool used for wavelength-to-time mapping.

    ``dispersion`` is in SI seconds of delay per meter of wavelength offset
    per meter of fiber; the conventional unit is ps/(nm km), see
    :meth:`from_ps_nm_km`.
    """

    length_m: float
    dispersion: float
    reference_wavelength_m: float

    def __post_init__(self):
        if self.length_m <= 0:
            raise ValueError(f"length_m must be positive, got {self.length_m}")
        if self.dispersion == 0:
            raise ValueError("dispersion must be nonzero")
        if self.reference_wavelength_m <= 0:
            raise ValueError("reference_wavelength_m must be positive")

    @classmethod
    def from_ps_nm_km(cls, length_m: float, dispersion_ps_nm_km: float,
                      reference_wavelength_m: float) -> "DispersiveFiber":
        # 1 ps/(nm km) = 1e-12 s / (1e-9 m * 1e3 m) = 1e-6 s/m^2
        return cls(length_m=length_m,
                   dispersion=dispersion_ps_nm_km * 1e-6,
                   reference_wavelength_m=reference_wavelength_m)

    @property
    def delay_per_wavelength(self) -> float:
        """Seconds of delay per meter of wavelength offset."""
        return self.dispersion * self.length_m


def disperse(wavelength_m, fiber: DispersiveFiber):
    """Arrival delay of a photon after the fiber, relative to the reference
    wavelength.  Affine and monotone in wavelength."""
    wl = np.asarray(wavelength_m, dtype=float)
    return fiber.delay_per_wavelength * (wl - fiber.reference_wavelength_m)


@dataclass(frozen=True)
class TofSpectrometer:
    """Fiber plus detection timing model.

    ``timing="pulsed-clock"`` references arrival times to a pulse clock
    (one detector jitter); ``"cw-relative"`` uses the undispersed partner
    photon as the reference, doubling the jitter variance.
    """

    fiber: DispersiveFiber
    jitter_sigma_s: float = DEFAULT_JITTER_SIGMA_S
    timing: str = "pulsed-clock"

    def __post_init__(self):
        if self.jitter_sigma_s < 0:
            raise ValueError("jitter_sigma_s must be >= 0")
        if self.timing not in ("pulsed-clock", "cw-relative"):
            raise ValueError(f"unknown timing mode {self.timing!r}")

    @property
    def effective_jitter_s(self) -> float:
        scale = math.sqrt(2.0) if self.timing == "cw-relative" else 1.0
        return self.jitter_sigma_s * scale


@dataclass(frozen=True)
class Calibration:
    """Affine delay-to-wavelength map with per-edge fit residuals."""

    slope_m_per_s: float
    intercept_m: float
    residuals_m: tuple = ()

    def wavelength_at(self, delay_s):
        return self.slope_m_per_s * np.asarray(delay_s, dtype=float) \
            + self.intercept_m

    @classmethod
    def from_fiber(cls, fiber: DispersiveFiber) -> "Calibration":
        """Exact inverse of the fiber dispersion map."""
        return cls(slope_m_per_s=1.0 / fiber.delay_per_wavelength,
                   intercept_m=fiber.reference_wavelength_m)


def detect_edges(counts, bin_edges, n_edges: int) -> np.ndarray:
    """Locate the ``n_edges`` sharpest count steps in a histogram.

    Returns the bin-boundary positions of the steepest gradients, in
    ascending order; nearby candidates within a few bins of a stronger one
    are suppressed.
    """
    counts = np.asarray(counts, dtype=float)
    bin_edges = np.asarray(bin_edges, dtype=float)
    if n_edges < 1:
        raise ValueError("n_edges must be >= 1")
    grad = np.abs(np.diff(counts))
    min_sep = max(2, counts.size // 20)
    order = np.argsort(grad)[::-1]
    picked: list[int] = []
    for idx in order:
        if grad[idx] <= 0:
            break
        if all(abs(idx - p) >= min_sep for p in picked):
            picked.append(int(idx))
        if len(picked) == n_edges:
            break
    if len(picked) < n_edges:
        raise ValueError(f"only {len(picked)} edges detectable, "
                         f"need {n_edges}")
    # the step between bins i and i+1 sits at the shared boundary
    return np.sort(bin_edges[np.asarray(picked) + 1])


def calibrate(delay_counts, delay_bin_edges, known_edge_wavelengths_m
              ) -> Calibration:
    """Fit the affine delay-to-wavelength map from known filter cutoffs.

    Detects as many count steps as there are known edges, pairs them in
    ascending order (normal dispersion: longer wavelengths arrive later),
    and least-squares fits wavelength against delay.
    """
    known = np.sort(np.asarray(known_edge_wavelengths_m, dtype=float))
    if known.size < 2:
        raise ValueError("need at least 2 known filter edges to calibrate")
    delays = detect_edges(delay_counts, delay_bin_edges, known.size)
    slope, intercept = np.polyfit(delays, known, 1)
    residuals = known - (slope * delays + intercept)
    return Calibration(slope_m_per_s=float(slope), intercept_m=float(intercept),
                       residuals_m=tuple(float(r) for r in residuals))


def _histogram_fwhm(centers: np.ndarray, counts: np.ndarray) -> float:
    """Full width at half maximum with linear interpolation at the crossings."""
    c = np.asarray(counts, dtype=float)
    peak = int(np.argmax(c))
    half = c[peak] / 2.0
    left = centers[0]
    for i in range(peak, 0, -1):
        if c[i - 1] < half <= c[i]:
            frac = (half - c[i - 1]) / (c[i] - c[i - 1])
            left = centers[i - 1] + frac * (centers[i] - centers[i - 1])
            break
    right = centers[-1]
    for i in range(peak, c.size - 1):
        if c[i + 1] < half <= c[i]:
            frac = (c[i] - half) / (c[i] - c[i + 1])
            right = centers[i] + frac * (centers[i + 1] - centers[i])
            break
    return float(right - left)


@dataclass
class SpectralHistogram:
    """Marginal spectrum on a calibrated wavelength axis."""

    wavelength_edges_m: np.ndarray
    counts: np.ndarray
    calibration: Calibration = field(
        default_factory=lambda: Calibration(1.0, 0.0))

    @property
    def bin_centers_m(self) -> np.ndarray:
        return 0.5 * (self.wavelength_edges_m[:-1] + self.wavelength_edges_m[1:])

    def fwhm_m(self) -> float:
        return _histogram_fwhm(self.bin_centers_m, self.counts)

    def __add__(self, other: "SpectralHistogram") -> "SpectralHistogram":
        if not np.array_equal(self.wavelength_edges_m, other.wavelength_edges_m):
            raise ValueError("cannot merge histograms with different bins")
        return SpectralHistogram(wavelength_edges_m=self.wavelength_edges_m,
                                 counts=self.counts + other.counts,
                                 calibration=self.calibration)

    def to_csv(self) -> str:
        lines = ["bin_center_m,count"]
        lines += [f"{c:.9e},{int(v)}" for c, v in
                  zip(self.bin_centers_m, self.counts)]
        return "\n".join(lines) + "\n"


def _dispersed_delays(wavelengths_m, spectrometer: TofSpectrometer, rng):
    delays = disperse(wavelengths_m, spectrometer.fiber)
    jitter = spectrometer.effective_jitter_s
    if jitter > 0:
        delays = delays + rng.normal(0.0, jitter, delays.shape)
    return delays


def marginal_spectrum(pairs: FrequencyPairSample,
                      spectrometer: TofSpectrometer, bins, seed: int
                      ) -> SpectralHistogram:
    """Reconstruct the single-photon marginal spectrum of a pair stream.

    Both photons of each pair are dispersed, histogrammed in delay and
    mapped back to wavelength with the exact fiber calibration.
    """
    if len(pairs) == 0:
        raise ValueError("cannot build a spectrum from an empty stream")
    rng = np.random.default_rng(seed)
    wavelengths = np.concatenate([pairs.signal_wavelength_m,
                                  pairs.idler_wavelength_m])
    delays = _dispersed_delays(wavelengths, spectrometer, rng)
    counts, edges = np.histogram(delays, bins=bins)
    cal = Calibration.from_fiber(spectrometer.fiber)
    return SpectralHistogram(wavelength_edges_m=cal.wavelength_at(edges),
                             counts=counts, calibration=cal)


@dataclass
class JsiHistogram:
    """Joint spectral intensity on calibrated wavelength axes.

    Axes are forced square and identical, so the ``i + j = const``
    direction is the energy-conservation (anti-diagonal) axis and
    ``i - j = const`` the degenerate (diagonal) axis.
    """

    wavelength_edges_m: np.ndarray
    counts: np.ndarray

    @property
    def bin_centers_m(self) -> np.ndarray:
        return 0.5 * (self.wavelength_edges_m[:-1] + self.wavelength_edges_m[1:])

    def marginal(self, axis: int) -> SpectralHistogram:
        return SpectralHistogram(wavelength_edges_m=self.wavelength_edges_m,
                                 counts=self.counts.sum(axis=1 - axis))

    def antidiagonal_profile(self) -> np.ndarray:
        """Counts summed along lines of constant signal+idler wavelength."""
        flipped = self.counts[:, ::-1]
        n = self.counts.shape[0]
        return np.array([np.trace(flipped, offset=k)
                         for k in range(n - 1, -n, -1)])

    def diagonal_profile(self) -> np.ndarray:
        """Counts summed along lines of constant signal-idler difference."""
        n = self.counts.shape[0]
        return np.array([np.trace(self.counts, offset=k)
                         for k in range(n - 1, -n, -1)])

    def feature_peak_ratio(self) -> float:
        """Peak of the anti-diagonal feature over the diagonal one.

        Much greater than 1 when only the energy-conserving ridge is
        present (low gain); approaches 1 when the uncorrelated background
        dominates (high gain).
        """
        anti = self.antidiagonal_profile().max()
        diag = self.diagonal_profile().max()
        if diag == 0:
            return math.inf
        return float(anti) / float(diag)

    def to_csv(self) -> str:
        centers = self.bin_centers_m
        header = "signal_m\\idler_m," + ",".join(f"{c:.9e}" for c in centers)
        lines = [header]
        for i, row in enumerate(self.counts):
            lines.append(f"{centers[i]:.9e}," +
                         ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def jsi_histogram(pairs: FrequencyPairSample, spectrometer: TofSpectrometer,
                  bins: int, seed: int) -> JsiHistogram:
    """2-D histogram of dispersed signal/idler wavelengths."""
    if len(pairs) == 0:
        raise ValueError("cannot build a JSI from an empty stream")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    rng = np.random.default_rng(seed)
    ds = _dispersed_delays(pairs.signal_wavelength_m, spectrometer, rng)
    di = _dispersed_delays(pairs.idler_wavelength_m, spectrometer, rng)
    cal = Calibration.from_fiber(spectrometer.fiber)
    ws, wi = cal.wavelength_at(ds), cal.wavelength_at(di)
    lo = min(ws.min(), wi.min())
    hi = max(ws.max(), wi.max())
    counts, edges, _ = np.histogram2d(ws, wi, bins=bins,
                                      range=[[lo, hi], [lo, hi]])
    return JsiHistogram(wavelength_edges_m=edges,
                        counts=counts.astype(np.int64))


def timetags_from_pairs(pairs: FrequencyPairSample,
                        spectrometer: TofSpectrometer, rep_rate_hz: float,
                        seed: int, offset_s: float | None = None
                        ) -> TimeTagStream:
    """Encode dispersed pair arrivals as a pulse-clocked time-tag stream.

    Pulse ``k`` emits a sync tag at ``k / rep_rate`` and both photons at
    sync + offset + delay.  The offset (default a quarter period) keeps
    delays of shorter-than-reference wavelengths positive; its value is
    recorded in the stream metadata as ``tof_offset_ns``.
    """
    if rep_rate_hz <= 0:
        raise ValueError("rep_rate_hz must be positive")
    if len(pairs) == 0:
        raise ValueError("cannot encode an empty stream")
    rng = np.random.default_rng(seed)
    period = 1.0 / rep_rate_hz
    offset = period / 4.0 if offset_s is None else offset_s
    ds = _dispersed_delays(pairs.signal_wavelength_m, spectrometer, rng) + offset
    di = _dispersed_delays(pairs.idler_wavelength_m, spectrometer, rng) + offset
    if np.any(ds < 0) or np.any(di < 0) or np.any(ds >= period) \
            or np.any(di >= period):
        raise ValueError("dispersed delays exceed the pulse period; "
                         "lower the repetition rate or adjust the offset")
    n = len(pairs)
    sync = np.arange(n) * period
    times = np.concatenate([sync, sync + ds, sync + di])
    chans = np.concatenate([
        np.full(n, CHANNEL_SYNC, dtype=np.uint8),
        np.zeros(2 * n, dtype=np.uint8),
    ])
    ts = np.rint(times * 1e9).astype(np.int64)
    order = np.lexsort((chans, ts))
    metadata = {
        "seed": int(seed),
        "rep_rate_hz": rep_rate_hz,
        "tof_offset_ns": int(round(offset * 1e9)),
        "fiber_length_m": spectrometer.fiber.length_m,
        "fiber_dispersion_si": spectrometer.fiber.dispersion,
        "reference_wavelength_m": spectrometer.fiber.reference_wavelength_m,
        "jitter_sigma_s": spectrometer.jitter_sigma_s,
        "timing": spectrometer.timing,
    }
    return TimeTagStream(timestamps_ns=ts[order], channels=chans[order],
                         metadata=metadata)


def delays_from_timetags(stream: TimeTagStream) -> np.ndarray:
    """Delay of each detector event since the preceding sync tag, seconds.

    Events arriving before the first sync are dropped.
    """
    sync_times = stream.channel_times_s(CHANNEL_SYNC)
    if sync_times.size == 0:
        raise ValueError("stream carries no sync channel")
    fluor = stream.channel_times_s(CHANNEL_FLUOR)
    idx = np.searchsorted(sync_times, fluor, side="right") - 1
    keep = idx >= 0
    return fluor[keep] - sync_times[idx[keep]]


def spectrum_from_timetags(stream: TimeTagStream,
                           spectrometer: TofSpectrometer, bins: int,
                           offset_s: float | None = None) -> SpectralHistogram:
    """Rebuild a marginal spectrum from a pulse-clocked time-tag stream.

    File timestamps are quantized to 1 ns, so bin edges are snapped to an
    integer number of nanoseconds (at least one) to avoid aliasing against
    the quantization grid; the instrument must provide enough dispersion
    for the spectrum to span many nanoseconds.
    """
    if offset_s is None:
        offset_ns = stream.metadata.get("tof_offset_ns", 0)
        offset_s = float(offset_ns) * 1e-9
    delays = delays_from_timetags(stream) - offset_s
    if delays.size == 0:
        raise ValueError("no delayed events in the stream")
    delays_ns = np.rint(delays * 1e9)
    span = delays_ns.max() - delays_ns.min()
    width_ns = max(1, int(np.ceil((span + 1) / bins)))
    start = delays_ns.min() - 0.5
    n_bins = int(np.ceil((span + 1) / width_ns))
    edges_ns = start + width_ns * np.arange(n_bins + 1)
    counts, edges = np.histogram(delays_ns, bins=edges_ns)
    cal = Calibration.from_fiber(spectrometer.fiber)
    return SpectralHistogram(wavelength_edges_m=cal.wavelength_at(edges * 1e-9),
                             counts=counts, calibration=cal)
