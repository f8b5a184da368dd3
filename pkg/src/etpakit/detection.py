"""Monte Carlo photon-counting detection.

Dark counts, chopper-wheel modulation, time-tag stream generation and
per-channel counting.  Timestamps are quantized to integer nanoseconds at
generation so that in-memory streams and their on-disk CSV form are
bit-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .kvtext import coerce_scalar, format_kv, parse_kv

CHANNEL_FLUOR = 0
CHANNEL_SYNC = 1
TIMETAG_FORMAT_VERSION = 1
TIMETAG_HEADER = "timestamp_ns,channel"


@dataclass(frozen=True)
class DetectionConfig:
    """Detector and chopped-measurement parameters.

    ``edge_ramp_fraction`` is the width of each linear transmission ramp
    (partial beam blockage at the chopper slot edges) as a fraction of the
    chopper period; zero gives ideal square modulation.
    """

    dark_rate_hz: float = 3.0
    duration_s: float = 600.0
    chopper_freq_hz: float = 400.0
    duty_cycle: float = 0.5
    threshold_k: float = 5.0
    edge_ramp_fraction: float = 0.02

    def __post_init__(self):
        if self.dark_rate_hz < 0:
            raise ValueError(f"dark_rate_hz must be >= 0, got {self.dark_rate_hz}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.chopper_freq_hz <= 0:
            raise ValueError(
                f"chopper_freq_hz must be positive, got {self.chopper_freq_hz}")
        if not 0.0 < self.duty_cycle < 1.0:
            raise ValueError(
                f"duty_cycle must be in (0, 1), got {self.duty_cycle}")
        if self.threshold_k <= 0:
            raise ValueError(f"threshold_k must be positive, got {self.threshold_k}")
        if self.edge_ramp_fraction < 0:
            raise ValueError("edge_ramp_fraction must be >= 0")
        if self.duty_cycle + 2.0 * self.edge_ramp_fraction >= 1.0:
            raise ValueError("duty_cycle + 2*edge_ramp_fraction must be < 1 "
                             "(no closed plateau left)")

    def as_flat_dict(self) -> dict:
        return {
            "dark_rate_hz": self.dark_rate_hz,
            "duration_s": self.duration_s,
            "chopper_freq_hz": self.chopper_freq_hz,
            "duty_cycle": self.duty_cycle,
            "threshold_k": self.threshold_k,
            "edge_ramp_fraction": self.edge_ramp_fraction,
        }


@dataclass(frozen=True)
class ChoppedCounts:
    """Accumulated counts in the beam-open and beam-closed gates."""

    open_counts: int
    closed_counts: int
    open_time_s: float
    closed_time_s: float

    def __post_init__(self):
        if self.open_counts < 0 or self.closed_counts < 0:
            raise ValueError("counts must be >= 0")
        if self.open_time_s < 0 or self.closed_time_s < 0:
            raise ValueError("gate times must be >= 0")

    def __add__(self, other: "ChoppedCounts") -> "ChoppedCounts":
        """Merge counts from disjoint measurement windows."""
        return ChoppedCounts(
            open_counts=self.open_counts + other.open_counts,
            closed_counts=self.closed_counts + other.closed_counts,
            open_time_s=self.open_time_s + other.open_time_s,
            closed_time_s=self.closed_time_s + other.closed_time_s,
        )


@dataclass
class TimeTagStream:
    """Ordered detection events with their acquisition metadata."""

    timestamps_ns: np.ndarray
    channels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps_ns = np.asarray(self.timestamps_ns, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.timestamps_ns.shape != self.channels.shape:
            raise ValueError("timestamps and channels must have equal length")
        if self.timestamps_ns.size and np.any(np.diff(self.timestamps_ns) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if self.timestamps_ns.size and self.timestamps_ns[0] < 0:
            raise ValueError("timestamps must be non-negative")

    def __len__(self):
        return self.timestamps_ns.size

    @property
    def timestamps_s(self) -> np.ndarray:
        return self.timestamps_ns * 1e-9

    def channel_times_s(self, channel: int) -> np.ndarray:
        return self.timestamps_s[self.channels == channel]


def transmission(t_s, cfg: DetectionConfig):
    """Chopper transmission at time(s) ``t_s``: a periodic trapezoid with an
    open plateau of ``duty_cycle`` of the period and linear ramps of
    ``edge_ramp_fraction`` of the period on each side."""
    frac = np.mod(np.asarray(t_s, dtype=float) * cfg.chopper_freq_hz, 1.0)
    duty, w = cfg.duty_cycle, cfg.edge_ramp_fraction
    if w == 0.0:
        return (frac < duty).astype(float)
    down = np.clip((duty + w - frac) / w, 0.0, 1.0)   # falling edge after plateau
    up = np.clip((frac - (1.0 - w)) / w, 0.0, 1.0)    # rising edge before wrap
    return np.where(frac < duty, 1.0, np.maximum(down, up))


def simulate_chopped_counts(signal_rate_hz: float, cfg: DetectionConfig,
                            seed: int) -> ChoppedCounts:
    """Poisson counts for an idealized (square-gated) chopped measurement.

    ``signal_rate_hz`` is the rate while the beam is unblocked; dark counts
    accrue in both gates.
    """
    if signal_rate_hz < 0:
        raise ValueError(f"signal_rate_hz must be >= 0, got {signal_rate_hz}")
    rng = np.random.default_rng(seed)
    open_time = cfg.duty_cycle * cfg.duration_s
    closed_time = (1.0 - cfg.duty_cycle) * cfg.duration_s
    open_counts = rng.poisson((signal_rate_hz + cfg.dark_rate_hz) * open_time)
    closed_counts = rng.poisson(cfg.dark_rate_hz * closed_time)
    return ChoppedCounts(open_counts=int(open_counts),
                         closed_counts=int(closed_counts),
                         open_time_s=open_time, closed_time_s=closed_time)


def generate_timetags(signal_rate_hz: float, cfg: DetectionConfig, seed: int,
                      emit_sync: bool = False) -> TimeTagStream:
    """Simulate a detector time-tag stream over one chopped measurement.

    The detector sees an inhomogeneous Poisson process with rate
    ``dark_rate + signal_rate * transmission(t)``; events are drawn exactly
    by thinning a homogeneous process at the peak rate.  With ``emit_sync``
    a sync tag is written at the start of every chopper period.
    """
    if signal_rate_hz < 0:
        raise ValueError(f"signal_rate_hz must be >= 0, got {signal_rate_hz}")
    if cfg.chopper_freq_hz * cfg.duration_s < 1.0:
        raise ValueError("measurement must span at least one chopper period")
    rng = np.random.default_rng(seed)
    lam_max = cfg.dark_rate_hz + signal_rate_hz
    if lam_max > 0:
        n = rng.poisson(lam_max * cfg.duration_s)
        t = np.sort(rng.uniform(0.0, cfg.duration_s, n))
        accept = rng.random(n) * lam_max \
            < cfg.dark_rate_hz + signal_rate_hz * transmission(t, cfg)
        t = t[accept]
    else:
        t = np.empty(0)
    ts = np.rint(t * 1e9).astype(np.int64)
    ch = np.zeros(ts.size, dtype=np.uint8)

    if emit_sync:
        n_periods = int(np.floor(cfg.chopper_freq_hz * cfg.duration_s))
        sync_s = np.arange(n_periods) / cfg.chopper_freq_hz
        sync_ns = np.rint(sync_s * 1e9).astype(np.int64)
        ts = np.concatenate([ts, sync_ns])
        ch = np.concatenate([ch, np.full(sync_ns.size, CHANNEL_SYNC,
                                         dtype=np.uint8)])
        order = np.lexsort((ch, ts))
        ts, ch = ts[order], ch[order]

    metadata = {"format_version": TIMETAG_FORMAT_VERSION, "seed": int(seed),
                "signal_rate_hz": signal_rate_hz, "emit_sync": emit_sync}
    metadata.update(cfg.as_flat_dict())
    return TimeTagStream(timestamps_ns=ts, channels=ch, metadata=metadata)


@dataclass
class PhaseHistogram:
    """Counts folded modulo the chopper period."""

    bin_edges_s: np.ndarray
    counts: np.ndarray
    period_s: float

    def __add__(self, other: "PhaseHistogram") -> "PhaseHistogram":
        if not np.array_equal(self.bin_edges_s, other.bin_edges_s):
            raise ValueError("cannot merge histograms with different bins")
        return PhaseHistogram(bin_edges_s=self.bin_edges_s,
                              counts=self.counts + other.counts,
                              period_s=self.period_s)

    @property
    def bin_centers_s(self) -> np.ndarray:
        return 0.5 * (self.bin_edges_s[:-1] + self.bin_edges_s[1:])

    def to_csv(self) -> str:
        lines = ["phase_s,count"]
        lines += [f"{c:.9e},{int(v)}" for c, v in
                  zip(self.bin_centers_s, self.counts)]
        return "\n".join(lines) + "\n"


def chopper_phase_histogram(stream: TimeTagStream, chopper_freq_hz: float,
                            bins: int, channel: int = CHANNEL_FLUOR
                            ) -> PhaseHistogram:
    """Fold one channel's arrival times modulo the chopper period."""
    if chopper_freq_hz <= 0:
        raise ValueError("chopper_freq_hz must be positive")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    times = stream.channel_times_s(channel)
    if times.size == 0:
        raise ValueError("cannot histogram an empty stream")
    period = 1.0 / chopper_freq_hz
    phases = np.mod(times, period)
    counts, edges = np.histogram(phases, bins=bins, range=(0.0, period))
    return PhaseHistogram(bin_edges_s=edges, counts=counts, period_s=period)


def counts_from_timetags(stream: TimeTagStream, cfg: DetectionConfig
                         ) -> ChoppedCounts:
    """Gate a time-tag stream into open/closed counts.

    Events on the transmission ramps are discarded, so the gates cover
    ``duty`` and ``1 - duty - 2*edge_ramp_fraction`` of the run.
    """
    times = stream.channel_times_s(CHANNEL_FLUOR)
    frac = np.mod(times * cfg.chopper_freq_hz, 1.0)
    duty, w = cfg.duty_cycle, cfg.edge_ramp_fraction
    open_counts = int(np.count_nonzero(frac < duty))
    closed_counts = int(np.count_nonzero((frac >= duty + w) & (frac < 1.0 - w)))
    return ChoppedCounts(
        open_counts=open_counts,
        closed_counts=closed_counts,
        open_time_s=duty * cfg.duration_s,
        closed_time_s=(1.0 - duty - 2.0 * w) * cfg.duration_s,
    )


def format_timetag_csv(stream: TimeTagStream) -> str:
    """The bit-exact CSV form of a stream."""
    rows = [TIMETAG_HEADER]
    rows += [f"{int(t)},{int(c)}" for t, c in
             zip(stream.timestamps_ns, stream.channels)]
    return "\n".join(rows) + "\n"


def format_timetag_meta(stream: TimeTagStream) -> str:
    """The sidecar text carrying seed, config snapshot and format version."""
    meta = {"format_version": TIMETAG_FORMAT_VERSION}
    meta.update(stream.metadata)
    return format_kv(meta)


def write_timetags(stream: TimeTagStream, path: str) -> None:
    """Write the bit-exact CSV form plus a ``.meta`` sidecar."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_timetag_csv(stream))
    with open(path + ".meta", "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_timetag_meta(stream))


def parse_timetag_meta(text: str) -> dict:
    """Parse a sidecar into typed metadata."""
    return {key: coerce_scalar(raw) for key, (raw, _) in parse_kv(text).items()}


def parse_timetag_csv(text: str, metadata: dict | None = None) -> TimeTagStream:
    """Parse the time-tag CSV format into a stream."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != TIMETAG_HEADER:
        raise ValueError(
            f"not a time-tag file: expected header {TIMETAG_HEADER!r}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if body:
        data = np.loadtxt(body, delimiter=",", dtype=np.int64, ndmin=2)
    else:
        data = np.empty((0, 2), dtype=np.int64)
    return TimeTagStream(timestamps_ns=data[:, 0],
                         channels=data[:, 1].astype(np.uint8),
                         metadata=metadata or {})


def read_timetags(path: str) -> TimeTagStream:
    """Read a time-tag CSV (and its sidecar, when present)."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    metadata = {}
    sidecar = path + ".meta"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="ascii") as fh:
            metadata = parse_timetag_meta(fh.read())
    return parse_timetag_csv(text, metadata)
