"""Scenario configs and end-to-end pipelines.

A scenario is one flat ``key = value`` config file (see
``docs/config-schema.md``) describing a source, a sweep and a detection
setup.  Running it produces a report dict plus named output files
(``<name>.points.csv``, ``<name>.fit.json``, ``<name>.report.json``,
time-tag files), all deterministic for a given config and seed.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from . import analysis, detection, model, source, spectrometry
from .kvtext import KvParseError, parse_kv


class ConfigError(Exception):
    """Schema violation in a scenario config; carries the offending line."""

    def __init__(self, message: str, line_no: int = 0):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no else ""
        super().__init__(prefix + message)


class PhysicsError(Exception):
    """Config parsed fine but describes infeasible physics."""


@dataclass(frozen=True)
class Field:
    kind: str                 # float | int | str | bool | float_list
    required: bool = False
    default: object = None


COMMON_SCHEMA = {
    "name": Field("str", required=True),
    "kind": Field("str", required=True),
    "seed": Field("int", required=True),
}

DETECTION_SCHEMA = {
    "detection.dark_rate_hz": Field("float", default=3.0),
    "detection.duration_s": Field("float", default=600.0),
    "detection.chopper_freq_hz": Field("float", default=400.0),
    "detection.duty_cycle": Field("float", default=0.5),
    "detection.threshold_k": Field("float", default=5.0),
    "detection.edge_ramp_fraction": Field("float", default=0.02),
}

SCHEMAS = {
    "replication": {
        **DETECTION_SCHEMA,
        "signal_rate_hz": Field("float", default=0.0),
    },
    "chopper-sim": {
        **DETECTION_SCHEMA,
        "signal_rate_hz": Field("float", default=1.0),
        "histogram.bins": Field("int", default=50),
        "emit_sync": Field("bool", default=False),
    },
    "bsv-sweep": {
        "source.center_wavelength_nm": Field("float", default=1064.0),
        "sweep.rep_rate_min_hz": Field("float", default=1e5),
        "sweep.rep_rate_max_hz": Field("float", default=5e6),
        "sweep.points": Field("int", default=6),
        "sweep.avg_power_w": Field("float", default=300e-9),
        "extra.rep_rate_hz": Field("float", default=0.0),
        "extra.avg_powers_w": Field("float_list", default=()),
        "anchor.rate_hz": Field("float", required=True),
        "point.snr_margin": Field("float", default=2.0),
        "point.min_duration_s": Field("float", default=60.0),
        "point.max_duration_s": Field("float", default=2e6),
        "detection.dark_rate_hz": Field("float", default=3.0),
        "detection.duty_cycle": Field("float", default=0.5),
        "detection.threshold_k": Field("float", default=5.0),
    },
    "sfg-crossover": {
        "source.temporal_modes": Field("int", default=100),
        "rate.photons_per_mode_at_crossover": Field("float", default=2.5),
        "sweep.photons_per_pulse_min": Field("float", default=2.5),
        "sweep.photons_per_pulse_max": Field("float", default=25000.0),
        "sweep.points": Field("int", default=12),
        "counting.rate_at_crossover_hz": Field("float", default=20.0),
        "counting.duration_s": Field("float", default=2000.0),
    },
    "tof-spec": {
        "jsa.center_wavelength_nm": Field("float", default=1064.0),
        "jsa.marginal_fwhm_nm": Field("float", default=30.0),
        "jsa.pump_fwhm_hz": Field("float", default=5e6),
        "gain.n_per_mode": Field("float", default=0.01),
        "samples": Field("int", default=100_000),
        "fiber.length_m": Field("float", default=1000.0),
        "fiber.dispersion_ps_nm_km": Field(
            "float", default=spectrometry.DEFAULT_DISPERSION_PS_NM_KM),
        "fiber.jitter_ps": Field("float", default=50.0),
        "fiber.timing": Field("str", default="cw-relative"),
        "histogram.bins": Field("int", default=120),
        "jsi.bins": Field("int", default=80),
        "timetags.rep_rate_hz": Field("float", default=0.0),
    },
}


@dataclass
class Scenario:
    """A parsed, schema-checked scenario."""

    name: str
    kind: str
    seed: int
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]


def _coerce(key, raw, line_no, kind):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == "bool":
            if raw.lower() in ("true", "false"):
                return raw.lower() == "true"
            raise ValueError
        if kind == "float_list":
            return tuple(float(item) for item in raw.split(",") if item.strip())
        return raw
    except ValueError:
        raise ConfigError(f"key {key!r} expects a {kind}, got {raw!r}",
                          line_no) from None


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario config against its kind's schema.

    Every key must be consumed; unknown keys are rejected with the line
    they appear on.
    """
    try:
        raw = parse_kv(text)
    except KvParseError as err:
        raise ConfigError(str(err).split(": ", 1)[1], err.line_no) from None

    if "kind" not in raw:
        raise ConfigError("missing required key 'kind'")
    kind = raw["kind"][0]
    if kind not in SCHEMAS:
        raise ConfigError(
            f"unknown scenario kind {kind!r}; expected one of "
            f"{sorted(SCHEMAS)}", raw["kind"][1])
    schema = {**COMMON_SCHEMA, **SCHEMAS[kind]}

    for key, (_, line_no) in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for kind {kind!r}", line_no)

    values: dict = {}
    for key, spec in schema.items():
        if key in raw:
            values[key] = _coerce(key, raw[key][0], raw[key][1], spec.kind)
        elif spec.required:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = spec.default
    return Scenario(name=values.pop("name"), kind=values.pop("kind"),
                    seed=values.pop("seed"), values=values)


def _detection_config(values) -> detection.DetectionConfig:
    try:
        return detection.DetectionConfig(
            dark_rate_hz=values["detection.dark_rate_hz"],
            duration_s=values["detection.duration_s"],
            chopper_freq_hz=values["detection.chopper_freq_hz"],
            duty_cycle=values["detection.duty_cycle"],
            threshold_k=values["detection.threshold_k"],
            edge_ramp_fraction=values["detection.edge_ramp_fraction"],
        )
    except ValueError as err:
        raise PhysicsError(str(err)) from None


def _json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _fit_report(*, exponent=None, exponent_stderr=None, a=None, b=None,
                n_cross=None, n_cross_stderr=None, z=None, r_det=None,
                **extra) -> dict:
    report = {"exponent": exponent, "exponent_stderr": exponent_stderr,
              "a": a, "b": b, "n_cross": n_cross,
              "n_cross_stderr": n_cross_stderr, "z": z, "r_det": r_det}
    report.update(extra)
    return report


def _points_csv(header: list[str], rows: list[list]) -> str:
    def fmt(value):
        if isinstance(value, float):
            return f"{value:.9e}"
        return str(value)

    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _verdict(result: analysis.DifferentialResult, r_det: float,
             k: float) -> str:
    if result.rate_hz >= r_det and result.z_score >= k:
        return "above threshold"
    return "below threshold"


@dataclass
class RunResult:
    """Everything one scenario run produces."""

    report: dict
    files: dict[str, str]


def _provenance(scn: Scenario) -> dict:
    return {
        "package_version": __version__,
        "seed": scn.seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _run_replication(scn: Scenario) -> RunResult:
    cfg = _detection_config(scn.values)
    cc = detection.simulate_chopped_counts(scn["signal_rate_hz"], cfg,
                                           scn.seed)
    result = analysis.differential_rate(cc)
    r_det = analysis.detection_threshold(cfg.dark_rate_hz, cfg.duration_s,
                                         cfg.threshold_k, cfg.duty_cycle)
    fit = _fit_report(z=result.z_score, r_det=r_det)
    report = {
        "scenario": {"name": scn.name, "kind": scn.kind, **scn.values},
        "differential": result.to_dict(),
        "threshold": {"r_det_hz": r_det,
                      "verdict": _verdict(result, r_det, cfg.threshold_k)},
        "provenance": _provenance(scn),
    }
    return RunResult(report=report, files={
        f"{scn.name}.fit.json": _json(fit),
        f"{scn.name}.report.json": _json(report),
    })


def differential_from_stream(stream: detection.TimeTagStream,
                             cfg: detection.DetectionConfig) -> dict:
    """Gate a time-tag stream and report the differential result with the
    detection-threshold verdict.  Shared by the in-process pipeline and
    the file-based analyze path so both emit identical JSON."""
    cc = detection.counts_from_timetags(stream, cfg)
    result = analysis.differential_rate(cc)
    r_det = analysis.detection_threshold(cfg.dark_rate_hz, cfg.duration_s,
                                         cfg.threshold_k, cfg.duty_cycle)
    return {
        "differential": result.to_dict(),
        "threshold": {"r_det_hz": r_det,
                      "verdict": _verdict(result, r_det, cfg.threshold_k)},
    }


def _run_chopper_sim(scn: Scenario) -> RunResult:
    cfg = _detection_config(scn.values)
    if scn["signal_rate_hz"] < 0:
        raise PhysicsError("signal_rate_hz must be >= 0")
    stream = detection.generate_timetags(scn["signal_rate_hz"], cfg, scn.seed,
                                         emit_sync=scn["emit_sync"])
    hist = detection.chopper_phase_histogram(stream, cfg.chopper_freq_hz,
                                             scn["histogram.bins"])
    analyzed = differential_from_stream(stream, cfg)
    fit = _fit_report(z=analyzed["differential"]["z_score"],
                      r_det=analyzed["threshold"]["r_det_hz"])
    report = {
        "scenario": {"name": scn.name, "kind": scn.kind, **scn.values},
        **analyzed,
        "events": len(stream),
        "provenance": _provenance(scn),
    }
    timetag_name = f"{scn.name}.timetags.csv"
    return RunResult(report=report, files={
        timetag_name: detection.format_timetag_csv(stream),
        timetag_name + ".meta": detection.format_timetag_meta(stream),
        f"{scn.name}.phase_hist.csv": hist.to_csv(),
        f"{scn.name}.fit.json": _json(fit),
        f"{scn.name}.report.json": _json(report),
    })


def _sweep_durations(rates, dark, duty, k, margin, tmin, tmax):
    rates = np.asarray(rates)
    durations = margin**2 * k**2 * dark / (duty**2 * rates**2)
    return np.clip(durations, tmin, tmax)


def _run_bsv_sweep(scn: Scenario) -> RunResult:
    wavelength = scn["source.center_wavelength_nm"] * 1e-9
    power = scn["sweep.avg_power_w"]
    if power <= 0:
        raise PhysicsError("sweep.avg_power_w must be positive")
    n_points = scn["sweep.points"]
    if n_points < 3:
        raise PhysicsError("sweep.points must be >= 3")
    rep_rates = np.geomspace(scn["sweep.rep_rate_min_hz"],
                             scn["sweep.rep_rate_max_hz"], n_points)
    powers = np.full(n_points, power)
    if scn["extra.avg_powers_w"]:
        extra_rep = scn["extra.rep_rate_hz"] or scn["sweep.rep_rate_max_hz"]
        rep_rates = np.concatenate(
            [rep_rates, np.full(len(scn["extra.avg_powers_w"]), extra_rep)])
        powers = np.concatenate([powers, np.asarray(scn["extra.avg_powers_w"])])

    photons = np.array([model.photons_per_pulse(p, r, wavelength)
                        for p, r in zip(powers, rep_rates)])
    # detected rate is quadratic per pulse; one anchor point sets the scale
    anchor_rate = scn["anchor.rate_hz"]
    calibration = anchor_rate / (rep_rates[0] * photons[0] ** 2)
    model_rates = calibration * photons**2 * rep_rates

    dark = scn["detection.dark_rate_hz"]
    duty = scn["detection.duty_cycle"]
    k = scn["detection.threshold_k"]
    durations = _sweep_durations(model_rates, dark, duty, k,
                                 scn["point.snr_margin"],
                                 scn["point.min_duration_s"],
                                 scn["point.max_duration_s"])

    rows, yields, yield_sigmas = [], [], []
    for i, (rep, pw, n_pulse, rate, dur) in enumerate(
            zip(rep_rates, powers, photons, model_rates, durations)):
        cfg = detection.DetectionConfig(
            dark_rate_hz=dark, duration_s=float(dur), duty_cycle=duty,
            threshold_k=k, edge_ramp_fraction=0.0)
        cc = detection.simulate_chopped_counts(float(rate), cfg,
                                               source.substream_seed(scn.seed, i))
        res = analysis.differential_rate(cc)
        yields.append(res.rate_hz / rep)
        yield_sigmas.append(res.sigma_hz / rep)
        rows.append([i, float(rep), float(pw), float(n_pulse), float(dur),
                     cc.open_counts, cc.closed_counts, res.rate_hz,
                     res.sigma_hz, yields[-1], yield_sigmas[-1], float(rate)])

    fit = analysis.fit_power_law(photons, np.asarray(yields),
                                 y_sigma=np.asarray(yield_sigmas))
    sweep_end = n_points - 1  # last constant-power point (highest rep rate)
    fit_json = _fit_report(exponent=fit.exponent,
                           exponent_stderr=fit.exponent_stderr,
                           log_prefactor=fit.log_prefactor,
                           calibration_constant=calibration)
    report = {
        "scenario": {"name": scn.name, "kind": scn.kind, **scn.values},
        "calibration_constant": calibration,
        "anchor": {"rate_hz": anchor_rate, "rep_rate_hz": float(rep_rates[0]),
                   "photons_per_pulse": float(photons[0])},
        "fit": fit.to_dict(),
        "predicted_rate_at_max_rep_hz": float(model_rates[sweep_end]),
        "max_rep_rate_hz": float(rep_rates[sweep_end]),
        "provenance": _provenance(scn),
    }
    header = ["index", "rep_rate_hz", "avg_power_w", "photons_per_pulse",
              "duration_s", "counts_open", "counts_closed", "rate_hz",
              "rate_sigma_hz", "per_pulse_yield", "per_pulse_yield_sigma",
              "model_rate_hz"]
    return RunResult(report=report, files={
        f"{scn.name}.points.csv": _points_csv(header, rows),
        f"{scn.name}.fit.json": _json(fit_json),
        f"{scn.name}.report.json": _json(report),
    })


def _run_sfg_crossover(scn: Scenario) -> RunResult:
    modes = scn["source.temporal_modes"]
    f_per_mode = scn["rate.photons_per_mode_at_crossover"]
    if modes < 1 or f_per_mode <= 0:
        raise PhysicsError("temporal_modes must be >= 1 and the crossover "
                           "photons-per-mode positive")
    n_cross_true = f_per_mode * modes
    x = np.geomspace(scn["sweep.photons_per_pulse_min"],
                     scn["sweep.photons_per_pulse_max"], scn["sweep.points"])
    if x.size < 4:
        raise PhysicsError("sweep.points must be >= 4")
    amplitude = scn["counting.rate_at_crossover_hz"] / 2.0
    duration = scn["counting.duration_s"]
    if duration <= 0:
        raise PhysicsError("counting.duration_s must be positive")
    true_rates = amplitude * (x / n_cross_true + (x / n_cross_true) ** 2)
    rng = np.random.default_rng(scn.seed)
    counts = rng.poisson(true_rates * duration)
    measured = counts / duration
    variances = np.maximum(counts, 1.0) / duration**2

    fit = analysis.fit_crossover(x, measured, y_var=variances)
    fit_json = _fit_report(a=fit.a, b=fit.b, n_cross=fit.n_cross,
                           n_cross_stderr=fit.n_cross_stderr,
                           ill_conditioned=fit.ill_conditioned)
    rows = [[i, float(xv), int(cv), float(mv), float(tv)]
            for i, (xv, cv, mv, tv) in
            enumerate(zip(x, counts, measured, true_rates))]
    report = {
        "scenario": {"name": scn.name, "kind": scn.kind, **scn.values},
        "expected_n_cross": n_cross_true,
        "fit": fit.to_dict(),
        "provenance": _provenance(scn),
    }
    header = ["index", "photons_per_pulse", "counts", "rate_hz",
              "model_rate_hz"]
    return RunResult(report=report, files={
        f"{scn.name}.points.csv": _points_csv(header, rows),
        f"{scn.name}.fit.json": _json(fit_json),
        f"{scn.name}.report.json": _json(report),
    })


def _run_tof_spec(scn: Scenario) -> RunResult:
    try:
        jsa = source.JsaModel.degenerate(
            scn["jsa.center_wavelength_nm"] * 1e-9,
            scn["jsa.marginal_fwhm_nm"] * 1e-9,
            pump_fwhm_hz=scn["jsa.pump_fwhm_hz"])
        fiber = spectrometry.DispersiveFiber.from_ps_nm_km(
            scn["fiber.length_m"], scn["fiber.dispersion_ps_nm_km"],
            scn["jsa.center_wavelength_nm"] * 1e-9)
        spectrometer = spectrometry.TofSpectrometer(
            fiber=fiber, jitter_sigma_s=scn["fiber.jitter_ps"] * 1e-12,
            timing=scn["fiber.timing"])
    except ValueError as err:
        raise PhysicsError(str(err)) from None
    if scn["samples"] < 1:
        raise PhysicsError("samples must be >= 1")

    pairs = source.sample_pair_frequencies(jsa, scn["gain.n_per_mode"],
                                           scn["samples"], scn.seed)
    spectrum = spectrometry.marginal_spectrum(
        pairs, spectrometer, scn["histogram.bins"],
        seed=source.substream_seed(scn.seed, 1))
    jsi = spectrometry.jsi_histogram(pairs, spectrometer, scn["jsi.bins"],
                                     seed=source.substream_seed(scn.seed, 2))
    files = {
        f"{scn.name}.marginal.csv": spectrum.to_csv(),
        f"{scn.name}.jsi.csv": jsi.to_csv(),
    }
    if scn["timetags.rep_rate_hz"] > 0:
        stream = spectrometry.timetags_from_pairs(
            pairs, spectrometer, scn["timetags.rep_rate_hz"],
            seed=source.substream_seed(scn.seed, 3))
        files[f"{scn.name}.timetags.csv"] = detection.format_timetag_csv(stream)
        files[f"{scn.name}.timetags.csv.meta"] = \
            detection.format_timetag_meta(stream)

    report = {
        "scenario": {"name": scn.name, "kind": scn.kind, **scn.values},
        "marginal_fwhm_nm": spectrum.fwhm_m() * 1e9,
        "feature_peak_ratio": jsi.feature_peak_ratio(),
        "correlated_fraction": float(pairs.correlated.mean()),
        "provenance": _provenance(scn),
    }
    files[f"{scn.name}.report.json"] = _json(report)
    return RunResult(report=report, files=files)


_RUNNERS = {
    "replication": _run_replication,
    "chopper-sim": _run_chopper_sim,
    "bsv-sweep": _run_bsv_sweep,
    "sfg-crossover": _run_sfg_crossover,
    "tof-spec": _run_tof_spec,
}

# override targets for the generic CLI/service knobs
_POINTS_KEYS = {"bsv-sweep": "sweep.points", "sfg-crossover": "sweep.points"}
_MC_KEYS = {"tof-spec": "samples"}


def run_scenario(scn: Scenario) -> RunResult:
    """Execute a parsed scenario."""
    if scn.kind not in _RUNNERS:
        raise ConfigError(f"unknown scenario kind {scn.kind!r}")
    return _RUNNERS[scn.kind](scn)


def run_scenario_text(text: str, seed: int | None = None,
                      points: int | None = None,
                      mc_pulses: int | None = None) -> RunResult:
    """Parse and execute a scenario config given as text."""
    scn = parse_scenario(text)
    if seed is not None:
        scn.seed = int(seed)
    if points is not None:
        key = _POINTS_KEYS.get(scn.kind)
        if key:
            scn.values[key] = int(points)
    if mc_pulses is not None:
        key = _MC_KEYS.get(scn.kind)
        if key:
            scn.values[key] = int(mc_pulses)
    return run_scenario(scn)


def run_scenario_file(path: str, out_dir: str | None = None,
                      seed: int | None = None, points: int | None = None,
                      mc_pulses: int | None = None) -> RunResult:
    """Run a scenario config file and optionally write its outputs."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    result = run_scenario_text(text, seed=seed, points=points,
                               mc_pulses=mc_pulses)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: RunResult, out_dir: str) -> list[str]:
    """Write every produced file under ``out_dir``; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for filename, content in sorted(result.files.items()):
        path = os.path.join(out_dir, filename)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        paths.append(path)
    return paths


def builtin_scenarios() -> list[str]:
    """Names of the packaged scenario configs."""
    files = resources.files("etpakit").joinpath("configs")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".cfg"))


def load_builtin(name: str) -> str:
    """Text of a packaged scenario config."""
    path = resources.files("etpakit").joinpath("configs", f"{name}.cfg")
    if not path.is_file():
        raise FileNotFoundError(
            f"no built-in scenario {name!r}; available: {builtin_scenarios()}")
    return path.read_text(encoding="utf-8")


def evaluate_rates(center_wavelength_m: float, fwhm_bandwidth_hz: float,
                   mode_area_m2: float, sigma2_gm: float = 10.0,
                   f: float = 1.0, xi: float = 3.0,
                   phase_matching: model.PhaseMatching =
                   model.PhaseMatching.TYPE_0_OR_I,
                   flux_density: float | None = None,
                   avg_power_w: float | None = None,
                   rep_rate_hz: float | None = None) -> dict:
    """Evaluate the closed-form rate laws for one parameter set.

    Always reports the entangled cross section, crossover flux and photons
    per mode at crossover; when an excitation (flux density or average
    power) is given, also the per-absorber rates there.
    """
    try:
        pump = model.PulsedPump(rep_rate_hz, 1e-11) if rep_rate_hz \
            else model.CWPump()
        src = model.SourceSpec.from_bandwidth(
            center_wavelength_m, fwhm_bandwidth_hz, mode_area_m2,
            phase_matching=phase_matching, pump=pump)
        params = model.RateParams(f=f, xi=xi)
        sigma2_si = model.gm_to_si(sigma2_gm)
        se = model.sigma_e(params.f, sigma2_si, src.entanglement_area_m2,
                           src.entanglement_time_s)
        phi_c = model.crossover_flux(se, sigma2_si)
    except ValueError as err:
        raise PhysicsError(str(err)) from None
    out = {
        "sigma2_si": sigma2_si,
        "sigma_e_m2": se,
        "entanglement_time_s": src.entanglement_time_s,
        "crossover_flux": phi_c,
        "n_at_crossover": model.photons_per_mode(
            phi_c, src.mode_area_m2, src.entanglement_time_s),
    }
    state = None
    if flux_density is not None:
        state = model.ExcitationState.from_flux(src, flux_density)
    elif avg_power_w is not None:
        state = model.ExcitationState.from_power(src, avg_power_w)
    if state is not None:
        n = state.photons_per_mode
        out.update({
            "flux_density": state.flux_density,
            "avg_power_w": state.avg_power_w,
            "photons_per_mode": n,
            "photons_per_pulse": state.photons_per_pulse,
            "etpa_rate_hz": model.etpa_rate(state.flux_density, se, sigma2_si,
                                            params.xi),
        })
        if n > 0:
            g2 = model.g2_zero(n, phase_matching)
            out["g2_zero"] = g2
            out["broadband_rate_hz"] = model.tpa_rate_broadband(
                state.flux_density, sigma2_si, g2)
    return out
