"""Statistical estimators and fits for chopped photon-counting data.

Differential rates with Poisson error propagation, significance thresholds,
log-log power-law fits, and the linear-plus-quadratic crossover fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .detection import ChoppedCounts


@dataclass(frozen=True)
class DifferentialResult:
    """Background-subtracted signal rate from a chopped measurement."""

    rate_hz: float
    sigma_hz: float
    z_score: float
    counts_open: int
    counts_closed: int

    def to_dict(self) -> dict:
        return {"rate_hz": self.rate_hz, "sigma_hz": self.sigma_hz,
                "z_score": self.z_score, "counts_open": self.counts_open,
                "counts_closed": self.counts_closed}


def differential_rate(cc: ChoppedCounts) -> DifferentialResult:
    """Signal-while-open rate: open-gate rate minus closed-gate (dark) rate.

    The uncertainty propagates Poisson errors of both gates,
    sigma^2 = open/open_time^2 + closed/closed_time^2.
    """
    if cc.open_time_s <= 0 or cc.closed_time_s <= 0:
        raise ValueError("gate times must be positive")
    rate = cc.open_counts / cc.open_time_s - cc.closed_counts / cc.closed_time_s
    var = cc.open_counts / cc.open_time_s**2 + cc.closed_counts / cc.closed_time_s**2
    sigma = math.sqrt(var)
    z = rate / sigma if sigma > 0 else 0.0
    return DifferentialResult(rate_hz=rate, sigma_hz=sigma, z_score=z,
                              counts_open=cc.open_counts,
                              counts_closed=cc.closed_counts)


def detection_threshold(dark_rate_hz: float, duration_s: float,
                        k: float = 5.0, duty_cycle: float = 0.5) -> float:
    """Smallest signal rate detectable at ``k`` standard deviations of the
    dark-count noise: R_det = k * (1/duty) * sqrt(D/T).

    A constant signal at R_det accumulates exactly k*sqrt(D*T) excess
    counts over the run.
    """
    if dark_rate_hz <= 0 or duration_s <= 0:
        raise ValueError("dark_rate_hz and duration_s must be positive")
    if k <= 0 or not 0.0 < duty_cycle < 1.0:
        raise ValueError("k must be positive and duty_cycle in (0, 1)")
    return k / duty_cycle * math.sqrt(dark_rate_hz / duration_s)


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares line in log-log space: y = prefactor * x^exponent."""

    exponent: float
    log_prefactor: float
    exponent_stderr: float

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)

    def predict(self, x):
        return np.exp(self.log_prefactor + self.exponent * np.log(x))

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "log_prefactor": self.log_prefactor,
                "exponent_stderr": self.exponent_stderr,
                "prefactor": self.prefactor}


def fit_power_law(x, y, y_sigma=None) -> PowerLawFit:
    """Fit ``y = C x^p`` by (weighted) least squares on log-log axes.

    ``y_sigma`` are absolute 1-sigma errors on ``y``; they are mapped to
    log space as sigma/y.  Without them the exponent error comes from the
    residual scatter.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points for a power-law fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit requires strictly positive data")
    if np.unique(x).size < 2:
        raise ValueError("all x identical: exponent is degenerate")
    lx, ly = np.log(x), np.log(y)
    if y_sigma is not None:
        y_sigma = np.asarray(y_sigma, dtype=float)
        if np.any(y_sigma <= 0):
            raise ValueError("y_sigma must be positive")
        w = (y / y_sigma) ** 2
    else:
        w = np.ones_like(ly)
    a = np.column_stack([np.ones_like(lx), lx])
    awa = a.T @ (w[:, None] * a)
    beta = np.linalg.solve(awa, a.T @ (w * ly))
    cov = np.linalg.inv(awa)
    if y_sigma is None:
        resid = ly - a @ beta
        dof = max(x.size - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return PowerLawFit(exponent=float(beta[1]), log_prefactor=float(beta[0]),
                       exponent_stderr=float(math.sqrt(max(cov[1, 1], 0.0))))


@dataclass(frozen=True)
class CrossoverFit:
    """Weighted fit of rate = a*N + b*N^2 and the implied crossover point."""

    a: float
    b: float
    n_cross: float
    n_cross_stderr: float
    a_stderr: float
    b_stderr: float
    ill_conditioned: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "n_cross": self.n_cross,
                "n_cross_stderr": self.n_cross_stderr,
                "a_stderr": self.a_stderr, "b_stderr": self.b_stderr,
                "ill_conditioned": self.ill_conditioned, "note": self.note}


def fit_crossover(x, y, y_var=None) -> CrossoverFit:
    """Fit the two-term rate law and locate the linear/quadratic crossover.

    Weighted least squares of ``y = a x + b x^2`` with 1/variance weights.
    Without explicit ``y_var`` the variances are taken Poisson-like (equal
    to the model prediction) and the fit is iterated once.  The crossover
    ``N = a/b`` carries a first-order propagated uncertainty.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 4:
        raise ValueError("need at least 4 points spanning both regimes")
    if np.any(x <= 0):
        raise ValueError("x must be strictly positive")
    note = ""
    span = x.max() / x.min()
    if span < 100.0:
        note = (f"x span ratio {span:.3g} < 100: data may cover a single "
                "scaling regime; crossover estimate is ill-conditioned")
        warnings.warn(note, RuntimeWarning, stacklevel=2)

    design = np.column_stack([x, x * x])
    floor = max(np.abs(y).max(), 1.0) * 1e-12

    def solve(variances):
        w = 1.0 / np.maximum(variances, floor)
        awa = design.T @ (w[:, None] * design)
        beta = np.linalg.solve(awa, design.T @ (w * y))
        return beta, np.linalg.inv(awa)

    if y_var is not None:
        variances = np.asarray(y_var, dtype=float)
        if np.any(variances <= 0):
            raise ValueError("y_var must be positive")
        beta, cov = solve(variances)
    else:
        beta, _ = solve(np.maximum(y, floor))
        model = design @ beta  # refit with Poisson weights from the model
        beta, cov = solve(np.maximum(model, floor))

    a, b = float(beta[0]), float(beta[1])
    var_a, var_b = float(cov[0, 0]), float(cov[1, 1])
    cov_ab = float(cov[0, 1])
    ill = bool(span < 100.0 or b <= 0)
    if b > 0:
        n_cross = a / b
        grad = np.array([1.0 / b, -a / b**2])
        var_nc = float(grad @ np.array([[var_a, cov_ab], [cov_ab, var_b]]) @ grad)
        n_cross_stderr = math.sqrt(max(var_nc, 0.0))
    else:
        n_cross, n_cross_stderr = math.nan, math.inf
        note = note or "quadratic coefficient is non-positive"
    return CrossoverFit(a=a, b=b, n_cross=n_cross,
                        n_cross_stderr=n_cross_stderr,
                        a_stderr=math.sqrt(max(var_a, 0.0)),
                        b_stderr=math.sqrt(max(var_b, 0.0)),
                        ill_conditioned=ill, note=note)


def efficiency_ratio(numerator_fit: PowerLawFit, numerator_duration_s: float,
                     reference_fit: PowerLawFit, reference_duration_s: float
                     ) -> float:
    """Relative two-photon efficiency of two quadratically scaling sources.

    Equal-energy pulses excite in proportion to peak power, i.e. inversely
    to pulse duration, so each quadratic prefactor is normalized by
    multiplying with its pulse duration before taking the ratio.
    """
    for fit in (numerator_fit, reference_fit):
        if abs(fit.exponent - 2.0) > 0.2:
            raise ValueError(
                f"efficiency comparison requires quadratic scaling; "
                f"got exponent {fit.exponent:.3f}")
    if numerator_duration_s <= 0 or reference_duration_s <= 0:
        raise ValueError("pulse durations must be positive")
    return (numerator_fit.prefactor * numerator_duration_s) / \
        (reference_fit.prefactor * reference_duration_s)
