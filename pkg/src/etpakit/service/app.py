"""HTTP service wrapping the simulation and analysis core.

Schema violations in scenario configs map to 400 with ``kind="config"``
(client exit code 2); infeasible physics to 400 with ``kind="physics"``
(exit code 3); other domain errors to ``kind="domain"``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, analysis, detection, model, scenarios
from . import schemas
from .schemas import finite_or_none


def _error(status: int, kind: str, message: str, line: int = 0) -> JSONResponse:
    detail = {"kind": kind, "message": message}
    if line:
        detail["line"] = line
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app() -> FastAPI:
    app = FastAPI(
        title="etpakit",
        version=__version__,
        description="Two-photon absorption and sum-frequency generation "
                    "with squeezed light: rate laws, Monte Carlo counting, "
                    "TOF spectrometry and fits.",
    )

    @app.exception_handler(scenarios.ConfigError)
    async def config_error(request: Request, exc: scenarios.ConfigError):
        return _error(400, "config", str(exc), exc.line_no)

    @app.exception_handler(scenarios.PhysicsError)
    async def physics_error(request: Request, exc: scenarios.PhysicsError):
        return _error(400, "physics", str(exc))

    @app.exception_handler(ValueError)
    async def domain_error(request: Request, exc: ValueError):
        return _error(400, "domain", str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/rates", response_model=schemas.RatesResponse,
              response_model_exclude_none=True)
    def rates(req: schemas.RatesRequest):
        if req.fwhm_bandwidth_hz is not None:
            bandwidth = req.fwhm_bandwidth_hz
        elif req.fwhm_bandwidth_nm is not None:
            bandwidth = model.bandwidth_from_wavelength(
                req.center_wavelength_nm * 1e-9, req.fwhm_bandwidth_nm * 1e-9)
        else:
            raise scenarios.PhysicsError(
                "one of fwhm_bandwidth_nm or fwhm_bandwidth_hz is required")
        return scenarios.evaluate_rates(
            center_wavelength_m=req.center_wavelength_nm * 1e-9,
            fwhm_bandwidth_hz=bandwidth,
            mode_area_m2=req.mode_area_m2,
            sigma2_gm=req.sigma2_gm,
            f=req.f,
            xi=req.xi,
            phase_matching=model.PhaseMatching(req.phase_matching),
            flux_density=req.flux_density,
            avg_power_w=req.avg_power_w,
            rep_rate_hz=req.rep_rate_hz,
        )

    @app.post("/threshold", response_model=schemas.ThresholdResponse)
    def threshold(req: schemas.ThresholdRequest):
        r_det = analysis.detection_threshold(req.dark_rate_hz, req.duration_s,
                                             req.k, req.duty_cycle)
        return {"r_det_hz": r_det}

    @app.post("/fit/power-law", response_model=schemas.PowerLawResponse)
    def fit_power_law(req: schemas.PowerLawRequest):
        fit = analysis.fit_power_law(req.x, req.y, y_sigma=req.y_sigma)
        return fit.to_dict()

    @app.post("/fit/crossover", response_model=schemas.CrossoverResponse)
    def fit_crossover(req: schemas.CrossoverRequest):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = analysis.fit_crossover(req.x, req.y, y_var=req.y_var)
        out = fit.to_dict()
        out["n_cross"] = finite_or_none(out["n_cross"])
        out["n_cross_stderr"] = finite_or_none(out["n_cross_stderr"])
        return out

    @app.post("/analyze/chopped", response_model=schemas.DifferentialResponse,
              response_model_exclude_none=True)
    def analyze_chopped(req: schemas.DifferentialRequest):
        cc = detection.ChoppedCounts(
            open_counts=req.counts.open_counts,
            closed_counts=req.counts.closed_counts,
            open_time_s=req.counts.open_time_s,
            closed_time_s=req.counts.closed_time_s,
        )
        result = analysis.differential_rate(cc)
        out = result.to_dict()
        if req.dark_rate_hz is not None and req.duration_s is not None:
            r_det = analysis.detection_threshold(
                req.dark_rate_hz, req.duration_s, req.threshold_k,
                req.duty_cycle)
            out["r_det_hz"] = r_det
            out["verdict"] = ("above threshold"
                              if result.rate_hz >= r_det
                              and result.z_score >= req.threshold_k
                              else "below threshold")
        return out

    @app.post("/analyze/timetags")
    def analyze_timetags(req: schemas.TimetagAnalysisRequest):
        metadata = detection.parse_timetag_meta(req.meta_text) \
            if req.meta_text else {}
        stream = detection.parse_timetag_csv(req.csv_text, metadata)
        fields = {}
        for name in ("dark_rate_hz", "duration_s", "chopper_freq_hz",
                     "duty_cycle", "threshold_k", "edge_ramp_fraction"):
            override = getattr(req, name)
            if override is not None:
                fields[name] = override
            elif name in metadata:
                fields[name] = metadata[name]
        try:
            cfg = detection.DetectionConfig(**fields)
        except ValueError as err:
            raise scenarios.PhysicsError(str(err)) from None
        return scenarios.differential_from_stream(stream, cfg)

    @app.post("/analyze/efficiency", response_model=schemas.EfficiencyResponse)
    def analyze_efficiency(req: schemas.EfficiencyRequest):
        num = analysis.PowerLawFit(req.numerator.exponent,
                                   req.numerator.log_prefactor,
                                   req.numerator.exponent_stderr)
        ref = analysis.PowerLawFit(req.reference.exponent,
                                   req.reference.log_prefactor,
                                   req.reference.exponent_stderr)
        ratio = analysis.efficiency_ratio(num, req.numerator.pulse_duration_s,
                                          ref, req.reference.pulse_duration_s)
        return {"ratio": ratio}

    @app.get("/scenarios", response_model=schemas.ScenarioListResponse)
    def list_scenarios():
        return {"scenarios": scenarios.builtin_scenarios()}

    @app.get("/scenarios/{name}", response_model=schemas.ScenarioConfigResponse)
    def get_scenario(name: str):
        try:
            text = scenarios.load_builtin(name)
        except FileNotFoundError as err:
            return _error(404, "config", str(err))
        return {"name": name, "config_text": text}

    @app.post("/scenarios/run", response_model=schemas.ScenarioRunResponse)
    def run(req: schemas.ScenarioRunRequest):
        result = scenarios.run_scenario_text(req.config_text, seed=req.seed,
                                             points=req.points,
                                             mc_pulses=req.mc_pulses)
        return {"report": result.report, "files": result.files}

    return app
