"""Stochastic model of the squeezed-vacuum source.

Per-mode photon statistics across gain regimes, joint-spectral sampling of
photon pairs, and loss channels.  Samplers are pure functions of
``(parameters, seed)``; see :func:`substream` for the documented rule that
derives independent streams for parallel work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import C_LIGHT, PhaseMatching, bandwidth_from_wavelength

#: Gaussian FWHM -> standard deviation.
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

#: Truncation tail for the inverse-CDF pair sampler.
PMF_TAIL = 1e-12


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent RNG substream for parallel sampling.

    The rule is ``SeedSequence([seed, index])``: the same ``(seed, index)``
    always yields the same stream, and distinct indices give streams that
    are statistically independent.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def substream_seed(seed: int, index: int) -> int:
    """Integer seed of the :func:`substream` rule, for APIs that record the
    seed they were given."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(
        1, dtype=np.uint64)
    return int(state[0])


def squeezed_pair_pmf(mean_photons: float, tail: float = PMF_TAIL) -> np.ndarray:
    """Pair-number pmf of single-mode squeezed vacuum with mean photon
    number ``mean_photons``.

    Photons come in degenerate pairs, so the photon-number distribution has
    even-only support; entry ``m`` is the probability of ``m`` pairs
    (``2m`` photons):

        P(m) = (2m)! / (m!)^2 * (tanh^2 r / 4)^m / cosh r,  sinh^2 r = n.

    The support is truncated where the CDF exceeds ``1 - tail``.  This law,
    not a thermal one, is what makes g2(0) = 1/n + 3.
    """
    n = float(mean_photons)
    if n < 0:
        raise ValueError(f"mean_photons must be >= 0, got {n}")
    if n == 0.0:
        return np.array([1.0])
    t2 = n / (n + 1.0)            # tanh^2 r
    p = 1.0 / math.sqrt(n + 1.0)  # 1 / cosh r
    probs = [p]
    total = p
    m = 0
    while total < 1.0 - tail:
        # P(m+1)/P(m) = tanh^2 r * (2m+1)/(2m+2)
        p = p * t2 * (2 * m + 1) / (2 * m + 2)
        probs.append(p)
        total += p
        m += 1
    return np.asarray(probs)


def _draw_pairs(n_per_mode, phase_matching, size, rng):
    """Per-mode pair counts for one phase-matching class."""
    if n_per_mode == 0.0:
        return np.zeros(size, dtype=np.int64)
    if phase_matching is PhaseMatching.TYPE_0_OR_I:
        cdf = np.cumsum(squeezed_pair_pmf(n_per_mode))
        u = rng.random(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"),
                          len(cdf) - 1).astype(np.int64)
    # type-II: thermal pair-number law with mean n/2 pairs
    mu = n_per_mode / 2.0
    return rng.geometric(1.0 / (1.0 + mu), size=size).astype(np.int64) - 1


@dataclass
class PulseSample:
    """Photon content of a single pulse, one entry per temporal mode.

    ``per_mode_pairs`` counts intact photon pairs; after loss a mode can
    hold unpaired photons, so ``per_mode_photons`` is tracked separately.
    """

    per_mode_photons: np.ndarray
    per_mode_pairs: np.ndarray
    phase_matching: PhaseMatching

    @property
    def total_photons(self) -> int:
        return int(self.per_mode_photons.sum())

    @property
    def total_pairs(self) -> int:
        return int(self.per_mode_pairs.sum())


@dataclass
class PulseBatch:
    """Photon content of many pulses: arrays of shape (n_pulses, modes)."""

    photons: np.ndarray
    pairs: np.ndarray
    phase_matching: PhaseMatching

    @property
    def n_pulses(self) -> int:
        return self.photons.shape[0]

    def total_photons(self) -> np.ndarray:
        return self.photons.sum(axis=1)

    def total_pairs(self) -> np.ndarray:
        return self.pairs.sum(axis=1)


def sample_pulse_batch(n_per_mode: float, modes: int,
                       phase_matching: PhaseMatching, n_pulses: int,
                       seed: int) -> PulseBatch:
    """Draw ``n_pulses`` pulses with ``modes`` i.i.d. temporal modes each.

    Type-0/I modes follow the even-only squeezed-vacuum photon-number law
    with mean ``n_per_mode``; type-II modes hold thermally distributed
    pairs with mean ``n_per_mode / 2`` (two distinguishable photons each).
    """
    if n_per_mode < 0:
        raise ValueError(f"n_per_mode must be >= 0, got {n_per_mode}")
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    if n_pulses < 1:
        raise ValueError(f"n_pulses must be >= 1, got {n_pulses}")
    rng = np.random.default_rng(seed)
    pairs = _draw_pairs(n_per_mode, phase_matching, (n_pulses, modes), rng)
    return PulseBatch(photons=2 * pairs, pairs=pairs,
                      phase_matching=phase_matching)


def sample_pulse(n_per_mode: float, modes: int, phase_matching: PhaseMatching,
                 seed: int) -> PulseSample:
    """Draw one pulse; equals the first row of a batch with the same seed."""
    batch = sample_pulse_batch(n_per_mode, modes, phase_matching, 1, seed)
    return PulseSample(per_mode_photons=batch.photons[0],
                       per_mode_pairs=batch.pairs[0],
                       phase_matching=phase_matching)


def sample_total_photons(n_per_mode: float, modes: int,
                         phase_matching: PhaseMatching, n_pulses: int,
                         seed: int) -> np.ndarray:
    """Per-pulse total photon numbers, accumulated mode by mode.

    Equivalent in distribution to ``sample_pulse_batch(...).total_photons()``
    but needs only O(n_pulses) memory, for Monte Carlo at large mode counts.
    """
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    rng = np.random.default_rng(seed)
    totals = np.zeros(n_pulses, dtype=np.int64)
    for _ in range(modes):
        totals += 2 * _draw_pairs(n_per_mode, phase_matching, n_pulses, rng)
    return totals


def _thin_pairs(pairs, photons, eta, rng):
    """Exact per-pair loss: each photon survives independently with
    probability eta.  Returns (surviving photons, intact pairs)."""
    singles = photons - 2 * pairs
    if np.any(singles < 0):
        raise ValueError("photons inconsistent with pair count")
    both = rng.binomial(pairs, eta * eta)
    # among pairs that did not survive whole, one photon remains with
    # conditional probability 2 eta (1-eta) / (1 - eta^2) = 2 eta / (1+eta)
    one = rng.binomial(pairs - both, 2.0 * eta / (1.0 + eta)) if eta < 1.0 \
        else np.zeros_like(pairs)
    lone = rng.binomial(singles, eta)
    return 2 * both + one + lone, both


def apply_loss(sample: PulseSample, eta: float, seed: int) -> PulseSample:
    """Binomial thinning of a pulse by a transmission ``eta`` in [0, 1].

    Each photon survives independently; a pair stays intact only if both
    photons survive, so intact-pair counts thin as eta^2 while photon
    counts thin as eta.
    """
    _check_eta(eta)
    rng = np.random.default_rng(seed)
    photons, pairs = _thin_pairs(sample.per_mode_pairs, sample.per_mode_photons,
                                 eta, rng)
    return PulseSample(per_mode_photons=photons, per_mode_pairs=pairs,
                       phase_matching=sample.phase_matching)


def apply_loss_batch(batch: PulseBatch, eta: float, seed: int) -> PulseBatch:
    """Vectorized :func:`apply_loss` over a pulse batch."""
    _check_eta(eta)
    rng = np.random.default_rng(seed)
    photons, pairs = _thin_pairs(batch.pairs, batch.photons, eta, rng)
    return PulseBatch(photons=photons, pairs=pairs,
                      phase_matching=batch.phase_matching)


def _check_eta(eta):
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmission eta must be in [0, 1], got {eta}")


def g2_from_counts(counts) -> tuple[float, float]:
    """Estimate g2(0) and its Monte Carlo standard error from per-pulse
    photon totals.

    g2 = <N(N-1)> / <N>^2; the standard error comes from first-order error
    propagation of the sample moments (delta method).
    """
    n = np.asarray(counts, dtype=float)
    if n.size < 2:
        raise ValueError("need at least two pulses to estimate g2")
    m1 = n.mean()
    if m1 == 0.0:
        raise ValueError("cannot estimate g2 from an all-zero sample")
    y = n * (n - 1.0)
    m2 = y.mean()
    g2 = m2 / m1**2
    cov = np.cov(n, y)
    var = (cov[1, 1] / m1**4
           + 4.0 * m2**2 * cov[0, 0] / m1**6
           - 4.0 * m2 * cov[0, 1] / m1**5) / n.size
    return g2, math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class JsaModel:
    """Double-Gaussian joint spectral model of the pair source.

    ``pump_fwhm_hz`` is the spread of the pair sum frequency (energy
    conservation axis, set by the pump spectrum); ``phasematch_fwhm_hz`` is
    the spread of the difference frequency (set by the phase-matching
    bandwidth).  A zero pump width is the CW limit with exact
    sum-frequency correlation.
    """

    center_signal_hz: float
    center_idler_hz: float
    pump_fwhm_hz: float
    phasematch_fwhm_hz: float

    def __post_init__(self):
        if self.center_signal_hz <= 0 or self.center_idler_hz <= 0:
            raise ValueError("center frequencies must be positive")
        if self.pump_fwhm_hz < 0:
            raise ValueError(f"pump_fwhm_hz must be >= 0, got {self.pump_fwhm_hz}")
        if self.phasematch_fwhm_hz <= 0:
            raise ValueError(
                f"phasematch_fwhm_hz must be positive, got {self.phasematch_fwhm_hz}")

    @classmethod
    def degenerate(cls, center_wavelength_m: float,
                   marginal_fwhm_wavelength_m: float,
                   pump_fwhm_hz: float = 0.0) -> "JsaModel":
        """Degenerate source described by its marginal spectrum.

        Chooses the phase-matching width so that the single-photon marginal
        has the requested wavelength-domain FWHM.
        """
        nu0 = C_LIGHT / center_wavelength_m
        marginal_hz = bandwidth_from_wavelength(center_wavelength_m,
                                                marginal_fwhm_wavelength_m)
        if 2.0 * marginal_hz <= pump_fwhm_hz:
            raise ValueError("marginal width must exceed half the pump width")
        pm = math.sqrt(4.0 * marginal_hz**2 - pump_fwhm_hz**2)
        return cls(center_signal_hz=nu0, center_idler_hz=nu0,
                   pump_fwhm_hz=pump_fwhm_hz, phasematch_fwhm_hz=pm)

    @property
    def marginal_fwhm_hz(self) -> float:
        """FWHM of each arm's marginal spectrum for correlated pairs."""
        return math.sqrt(self.pump_fwhm_hz**2 + self.phasematch_fwhm_hz**2) / 2.0

    @property
    def center_wavelength_m(self) -> float:
        return C_LIGHT / self.center_signal_hz


@dataclass
class FrequencyPairSample:
    """A stream of sampled signal/idler frequency pairs.

    Correlated pairs satisfy energy conservation up to the pump width;
    uncorrelated pairs are independent draws from the marginal and build
    the diffuse high-gain background.
    """

    signal_hz: np.ndarray
    idler_hz: np.ndarray
    correlated: np.ndarray

    def __len__(self):
        return self.signal_hz.size

    @property
    def signal_wavelength_m(self) -> np.ndarray:
        return C_LIGHT / self.signal_hz

    @property
    def idler_wavelength_m(self) -> np.ndarray:
        return C_LIGHT / self.idler_hz


def correlated_fraction(n_per_mode: float) -> float:
    """Fraction of pairs drawn correlated at a given gain: 1 / (1 + n).

    Low gain gives fully correlated pairs; at high gain uncorrelated
    combinations dominate and the joint spectrum grows a diffuse background
    whose diagonal feature matches the anti-diagonal ridge in intensity.
    """
    if n_per_mode < 0:
        raise ValueError(f"n_per_mode must be >= 0, got {n_per_mode}")
    return 1.0 / (1.0 + n_per_mode)


def sample_pair_frequencies(jsa: JsaModel, n_per_mode: float, n_samples: int,
                            seed: int) -> FrequencyPairSample:
    """Draw ``n_samples`` signal/idler frequency pairs at the given gain."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    p_corr = correlated_fraction(n_per_mode)
    corr = rng.random(n_samples) < p_corr

    s_sum = FWHM_TO_SIGMA * jsa.pump_fwhm_hz
    s_diff = FWHM_TO_SIGMA * jsa.phasematch_fwhm_hz
    s_marg = math.sqrt(s_sum**2 + s_diff**2) / 2.0

    # correlated: sum and difference frequencies are independent Gaussians
    total = rng.normal(0.0, s_sum, n_samples) if s_sum > 0 else np.zeros(n_samples)
    diff = rng.normal(0.0, s_diff, n_samples)
    sig_c = jsa.center_signal_hz + (total + diff) / 2.0
    idl_c = jsa.center_idler_hz + (total - diff) / 2.0

    # uncorrelated: both photons independently from the marginal
    sig_u = jsa.center_signal_hz + rng.normal(0.0, s_marg, n_samples)
    idl_u = jsa.center_idler_hz + rng.normal(0.0, s_marg, n_samples)

    return FrequencyPairSample(
        signal_hz=np.where(corr, sig_c, sig_u),
        idler_hz=np.where(corr, idl_c, idl_u),
        correlated=corr,
    )


def schmidt_mode_estimate(jsa: JsaModel) -> float:
    """Effective temporal mode count of a double-Gaussian joint spectrum.

    Equals the ratio of the marginal (joint) width to the conditional
    (heralded) width, which for Gaussians is (r + 1/r)/2 with
    r = phasematch_fwhm / pump_fwhm.
    """
    if jsa.pump_fwhm_hz <= 0:
        raise ValueError("mode count is undefined for a zero pump width")
    r = jsa.phasematch_fwhm_hz / jsa.pump_fwhm_hz
    return (r + 1.0 / r) / 2.0
