"""Command-line client for the etpakit service.

Every subcommand talks to the HTTP API: by default an in-process instance
of the service (no network involved), or a remote one via ``--server``.
File handling stays on the client side; all computation happens behind the
API so results are identical either way.
"""

from __future__ import annotations

import json
import os

import click

from . import __version__


class SchemaError(click.ClickException):
    exit_code = 2


class PhysicsError(click.ClickException):
    exit_code = 3


class ServiceClient:
    """Minimal JSON-over-HTTP client with in-process fallback."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def _raise_for(self, response):
        if response.status_code < 400:
            return
        try:
            detail = response.json().get("detail")
        except Exception:
            detail = response.text
        if isinstance(detail, dict):
            kind = detail.get("kind", "domain")
            message = detail.get("message", str(detail))
            if kind == "physics":
                raise PhysicsError(message)
            raise SchemaError(message)
        raise SchemaError(str(detail))

    def get(self, path: str) -> dict:
        response = self._client.get(path)
        self._raise_for(response)
        return response.json()

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        self._raise_for(response)
        return response.json()


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write_files(files: dict[str, str], out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, content in sorted(files.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        written.append(path)
    return written


def _summarize(report: dict):
    if "threshold" in report:
        thr = report["threshold"]
        click.echo(f"r_det = {thr['r_det_hz']:.4g} Hz  ->  {thr['verdict']}")
    if "differential" in report:
        d = report["differential"]
        click.echo(f"rate = {d['rate_hz']:.4g} Hz +/- {d['sigma_hz']:.4g} "
                   f"(z = {d['z_score']:.2f})")
    fit = report.get("fit", {})
    if fit.get("exponent") is not None:
        click.echo(f"power-law exponent = {fit['exponent']:.4f} "
                   f"+/- {fit['exponent_stderr']:.4f}")
    if fit.get("n_cross") is not None:
        click.echo(f"crossover = {fit['n_cross']:.4g} photons/pulse "
                   f"+/- {fit['n_cross_stderr']:.2g}")
    if "predicted_rate_at_max_rep_hz" in report:
        click.echo(f"predicted rate at {report['max_rep_rate_hz']:.3g} Hz rep "
                   f"= {report['predicted_rate_at_max_rep_hz']:.3g} Hz")
    if "marginal_fwhm_nm" in report:
        click.echo(f"marginal FWHM = {report['marginal_fwhm_nm']:.2f} nm")
    if "feature_peak_ratio" in report:
        click.echo(f"anti-diagonal/diagonal peak ratio = "
                   f"{report['feature_peak_ratio']:.3g}")


def _run_and_write(client: ServiceClient, config_text: str, out: str,
                   seed, points, mc_pulses):
    payload = {"config_text": config_text}
    if seed is not None:
        payload["seed"] = seed
    if points is not None:
        payload["points"] = points
    if mc_pulses is not None:
        payload["mc_pulses"] = mc_pulses
    result = client.post("/scenarios/run", payload)
    written = _write_files(result["files"], out)
    name = result["report"]["scenario"]["name"]
    click.echo(f"scenario {name}: wrote {len(written)} files to {out}")
    _summarize(result["report"])
    return result


def _scenario_options(fn):
    fn = click.option("--out", default=".", show_default=True,
                      help="Directory for output files.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the scenario seed.")(fn)
    fn = click.option("--points", type=int, default=None,
                      help="Override the number of sweep points.")(fn)
    fn = click.option("--mc-pulses", type=int, default=None,
                      help="Override the Monte Carlo sample count.")(fn)
    return fn


@click.group()
@click.version_option(__version__)
@click.option("--server", default=None, envvar="ETPAKIT_SERVER",
              help="Base URL of a running service; defaults to an "
                   "in-process instance.")
@click.pass_context
def main(ctx, server):
    """Squeezed-light two-photon absorption: simulate, count, fit."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Scenario config file.")
@_scenario_options
@click.pass_obj
def run(client, config_path, out, seed, points, mc_pulses):
    """Run a scenario config end to end."""
    with open(config_path, "r", encoding="utf-8") as fh:
        text = fh.read()
    _run_and_write(client, text, out, seed, points, mc_pulses)


@main.command()
@click.pass_obj
def scenarios(client):
    """List the built-in scenarios."""
    for name in client.get("/scenarios")["scenarios"]:
        click.echo(name)


def _builtin_command(cli_name: str, builtin: str, help_text: str):
    @main.command(name=cli_name, help=help_text)
    @click.option("--config", "config_path", default=None,
                  type=click.Path(exists=True, dir_okay=False),
                  help=f"Scenario config (default: built-in {builtin!r}).")
    @_scenario_options
    @click.pass_obj
    def _cmd(client, config_path, out, seed, points, mc_pulses):
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = client.get(f"/scenarios/{builtin}")["config_text"]
        _run_and_write(client, text, out, seed, points, mc_pulses)

    return _cmd


_builtin_command("sweep", "bsv-sweep",
                 "Constant-power flux sweep with a quadratic power-law fit.")
_builtin_command("sfg-crossover", "sfg-crossover",
                 "Sum-frequency crossover sweep and two-term rate fit.")
_builtin_command("chopper-sim", "chopper-sim",
                 "Chopped photon counting with time tags and phase histogram.")
_builtin_command("tof-spec", "tof-spec",
                 "Time-of-flight spectra and joint spectral intensity.")

_RATES_FORMATS = {
    "n_at_crossover": "{:.2f}",
    "photons_per_mode": "{:.4g}",
    "g2_zero": "{:.4f}",
}


@main.command()
@click.option("--center-wavelength-nm", default=1064.0, show_default=True)
@click.option("--fwhm-nm", "fwhm_nm", default=30.0, show_default=True,
              help="Source FWHM bandwidth, wavelength domain.")
@click.option("--fwhm-hz", "fwhm_hz", type=float, default=None,
              help="Source FWHM bandwidth in Hz (overrides --fwhm-nm).")
@click.option("--mode-area-m2", default=1e-11, show_default=True)
@click.option("--phase-matching", type=click.Choice(["type-0/I", "type-II"]),
              default="type-0/I", show_default=True)
@click.option("--sigma2-gm", default=10.0, show_default=True,
              help="Two-photon cross section in GM.")
@click.option("--f", "f_param", default=1.0, show_default=True)
@click.option("--xi", default=3.0, show_default=True)
@click.option("--flux-density", type=float, default=None,
              help="Photon flux density, photons/m^2/s.")
@click.option("--avg-power-w", type=float, default=None)
@click.option("--rep-rate-hz", type=float, default=None)
@click.option("--out", default=None, help="Also write rates.json here.")
@click.pass_obj
def rates(client, center_wavelength_nm, fwhm_nm, fwhm_hz, mode_area_m2,
          phase_matching, sigma2_gm, f_param, xi, flux_density, avg_power_w,
          rep_rate_hz, out):
    """Evaluate the closed-form rate laws for one parameter set."""
    payload = {
        "center_wavelength_nm": center_wavelength_nm,
        "fwhm_bandwidth_nm": fwhm_nm,
        "fwhm_bandwidth_hz": fwhm_hz,
        "mode_area_m2": mode_area_m2,
        "phase_matching": phase_matching,
        "sigma2_gm": sigma2_gm,
        "f": f_param,
        "xi": xi,
        "flux_density": flux_density,
        "avg_power_w": avg_power_w,
        "rep_rate_hz": rep_rate_hz,
    }
    result = client.post("/rates", payload)
    for key, value in result.items():
        fmt = _RATES_FORMATS.get(key, "{:.6g}")
        click.echo(f"{key} = {fmt.format(value)}")
    if out:
        _write_files({"rates.json": _dump_json(result)}, out)


@main.command()
@click.option("--timetags", "timetag_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Time-tag CSV to analyze (sidecar .meta is picked up).")
@click.option("--points-csv", "points_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Point-set CSV (columns x,y[,y_sigma]) to fit.")
@click.option("--fit", "fit_kind", type=click.Choice(["power-law", "crossover"]),
              default="power-law", show_default=True)
@click.option("--x-col", default=None,
              help="Header name of the x column (default: first column).")
@click.option("--y-col", default=None,
              help="Header name of the y column (default: second column).")
@click.option("--sigma-col", default=None,
              help="Header name of the y-sigma column (default: third, "
                   "if present).")
@click.option("--dark-rate-hz", type=float, default=None)
@click.option("--duration-s", type=float, default=None)
@click.option("--out", default=".", show_default=True)
@click.pass_obj
def analyze(client, timetag_path, points_path, fit_kind, x_col, y_col,
            sigma_col, dark_rate_hz, duration_s, out):
    """Fit or gate externally produced data files."""
    if (timetag_path is None) == (points_path is None):
        raise click.UsageError("provide exactly one of --timetags or "
                               "--points-csv")
    if timetag_path:
        with open(timetag_path, "r", encoding="utf-8") as fh:
            csv_text = fh.read()
        meta_text = None
        if os.path.exists(timetag_path + ".meta"):
            with open(timetag_path + ".meta", "r", encoding="utf-8") as fh:
                meta_text = fh.read()
        payload = {"csv_text": csv_text, "meta_text": meta_text,
                   "dark_rate_hz": dark_rate_hz, "duration_s": duration_s}
        result = client.post("/analyze/timetags", payload)
        stem = os.path.basename(timetag_path).split(".")[0]
        _write_files({f"{stem}.analysis.json": _dump_json(result)}, out)
        _summarize(result)
        return

    x, y, y_sigma = _read_points_csv(points_path, x_col, y_col, sigma_col)
    if fit_kind == "power-law":
        result = client.post("/fit/power-law",
                             {"x": x, "y": y, "y_sigma": y_sigma})
    else:
        y_var = [s * s for s in y_sigma] if y_sigma else None
        result = client.post("/fit/crossover", {"x": x, "y": y, "y_var": y_var})
    stem = os.path.basename(points_path).split(".")[0]
    _write_files({f"{stem}.fit.json": _dump_json(result)}, out)
    _summarize({"fit": result})


def _read_points_csv(path: str, x_col=None, y_col=None, sigma_col=None):
    """Point-set CSV: columns x,y[,y_sigma] by position, or picked from a
    header line by name."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path} is empty")
    header = [h.strip() for h in lines[0].split(",")]
    cols = [0, 1, None]
    if any(name is not None for name in (x_col, y_col, sigma_col)):
        for i, name in enumerate((x_col, y_col, sigma_col)):
            if name is None:
                continue
            if name not in header:
                raise SchemaError(
                    f"column {name!r} not in header {header} of {path}")
            cols[i] = header.index(name)
    x, y, sigma = [], [], []
    for line in lines:
        parts = [p.strip() for p in line.split(",")]
        try:
            xv = float(parts[cols[0]])
            yv = float(parts[cols[1]])
            sv = None
            if cols[2] is not None:
                sv = float(parts[cols[2]])
            elif len(parts) > 2 and x_col is None:
                sv = float(parts[2])
        except (ValueError, IndexError):
            continue  # header or malformed row
        x.append(xv)
        y.append(yv)
        if sv is not None:
            sigma.append(sv)
    if not x:
        raise SchemaError(f"no numeric x,y rows found in {path}")
    return x, y, (sigma if len(sigma) == len(x) else None)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
