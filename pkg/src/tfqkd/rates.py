"""Asymptotic key-rate formulas with a shared detection and error model.

The detection model is the single source of truth for interference
statistics: the Monte Carlo engine samples from exactly the same click
probabilities that the quadratures here integrate, which is what makes
the simulated and analytic gains/QBERs agree within statistics.

Rate conventions:
  * intensities are total mean photon numbers of a pulse pair; each arm
    carries half, so a gain labelled "mu" refers to the combined pulse;
  * negative rates clamp to zero so curve generation stays total;
  * all rates are per emitted pulse pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .bounds import evaluate_bound
from .core import ChannelParams, binary_entropy

MU_SEARCH_LO = 1e-4
MU_SEARCH_HI = 10.0
_COARSE_GRID_POINTS = 64
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# Fixed Gauss-Legendre rule; the integrands are smooth, so this is
# effectively exact while keeping curve generation deterministic.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
_UNIFORM_PHASES = np.linspace(0.0, 2.0 * math.pi, 512, endpoint=False)


class ProtocolVariant(str, Enum):
    TF_GLLP = "tf_gllp"
    TF_STAR = "tf_star"
    PM = "pm"
    PM_MDI = "pmmdi"
    NPP = "npp"
    SNS = "sns"


ANALYTIC_VARIANTS = (
    ProtocolVariant.TF_GLLP,
    ProtocolVariant.PM,
    ProtocolVariant.PM_MDI,
)

SNS_TEST_CONVENTIONS = ("verbatim", "relative-phase")


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol knobs shared by the analytic models and the simulator.

    ``send_prob``, ``sns_test_param``, ``sns_x_intensity`` and
    ``sns_test_convention`` only matter for the send/not-send variant;
    ``key_mode_prob`` is the per-party probability of choosing the key
    mode (or Z window) where the protocol has one.
    """

    variant: ProtocolVariant = ProtocolVariant.PM
    slice_count: int = 16
    signal_intensity: float = 0.5
    decoy_intensities: tuple[float, ...] = (0.1, 0.0)
    ec_efficiency: float = 1.15
    sifting_factor: float = 1.0
    send_prob: float = 0.1
    sns_test_param: float = 0.25
    key_mode_prob: float = 0.5
    sns_x_intensity: float | None = None
    sns_test_convention: str = "verbatim"

    def __post_init__(self):
        if self.slice_count < 2 or self.slice_count % 2 != 0:
            raise ValueError("slice_count must be even and >= 2")
        if self.signal_intensity <= 0:
            raise ValueError("signal_intensity must be > 0")
        levels = (self.signal_intensity, *self.decoy_intensities)
        if any(b < 0 for b in levels):
            raise ValueError("intensities must be >= 0")
        if len(set(levels)) != len(levels) or list(levels) != sorted(levels, reverse=True):
            raise ValueError("intensities must be distinct and ordered mu > nu > omega")
        if self.ec_efficiency < 1.0:
            raise ValueError("ec_efficiency must be >= 1")
        if not 0.0 < self.sifting_factor <= 1.0:
            raise ValueError("sifting_factor must be in (0, 1]")
        # zero send probability is a degenerate but simulable edge
        if not 0.0 <= self.send_prob < 1.0:
            raise ValueError("send_prob must be in [0, 1)")
        if not 0.0 <= self.key_mode_prob <= 1.0:
            raise ValueError("key_mode_prob must be in [0, 1]")
        if self.sns_x_intensity is not None and self.sns_x_intensity <= 0:
            raise ValueError("sns_x_intensity must be > 0")
        if self.sns_test_convention not in SNS_TEST_CONVENTIONS:
            raise ValueError(
                f"sns_test_convention must be one of {SNS_TEST_CONVENTIONS}"
            )

    @property
    def intensity_levels(self) -> tuple[float, ...]:
        return (self.signal_intensity, *self.decoy_intensities)

    @property
    def x_intensity(self) -> float:
        return (
            self.signal_intensity
            if self.sns_x_intensity is None
            else self.sns_x_intensity
        )

    def with_intensity(self, mu: float) -> "ProtocolConfig":
        """Copy with a rescaled signal intensity, decoys scaled along."""
        scale = mu / self.signal_intensity
        return ProtocolConfig(
            variant=self.variant,
            slice_count=self.slice_count,
            signal_intensity=mu,
            decoy_intensities=tuple(v * scale for v in self.decoy_intensities),
            ec_efficiency=self.ec_efficiency,
            sifting_factor=self.sifting_factor,
            send_prob=self.send_prob,
            sns_test_param=self.sns_test_param,
            key_mode_prob=self.key_mode_prob,
            sns_x_intensity=self.sns_x_intensity,
            sns_test_convention=self.sns_test_convention,
        )


@dataclass(frozen=True)
class DetectionStats:
    """Gains and error rates of one operating point.

    The single-photon fields are ``None`` when derived from Monte Carlo
    tallies (estimating them needs decoy analysis, which this artifact
    treats in the asymptotic limit only). Standard errors are attached
    for tally-derived estimates and are ``None`` for analytic values.
    """

    gain: float
    qber_z: float
    phase_error_x: float
    single_photon_gain: float | None = None
    single_photon_qber: float | None = None
    single_photon_yield: float | None = None
    gain_se: float | None = None
    qber_z_se: float | None = None
    phase_error_x_se: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.gain <= 1.0:
            raise ValueError("gain must be in [0, 1]")
        for name in ("qber_z", "phase_error_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must be in [0, 0.5]")
        if self.single_photon_gain is not None:
            if self.single_photon_gain > self.gain + 1e-12:
                raise ValueError("single-photon gain cannot exceed total gain")


def click_probabilities(
    intensity_a, intensity_b, delta_phi, dark_count_prob: float
):
    """Per-detector click probabilities after interference.

    ``intensity_a`` and ``intensity_b`` are post-loss mean photon numbers
    of the two arms; the beam splitter sends
    (i_a + i_b)/2 +- sqrt(i_a i_b) cos(delta_phi) mean photons to the two
    outputs. Threshold detectors click with 1 - (1 - p_d) exp(-n).
    Accepts scalars or numpy arrays.
    """
    ia = np.asarray(intensity_a, dtype=float)
    ib = np.asarray(intensity_b, dtype=float)
    cross = 2.0 * np.sqrt(ia * ib) * np.cos(delta_phi)
    half = 0.5 * (ia + ib)
    n0 = half + 0.5 * cross
    n1 = half - 0.5 * cross
    p0 = -np.expm1(-n0) + dark_count_prob * np.exp(-n0)
    p1 = -np.expm1(-n1) + dark_count_prob * np.exp(-n1)
    return p0, p1


def _mix_error(raw: float, misalignment: float) -> float:
    """Apply the misalignment bit-flip channel to a raw error rate."""
    return raw * (1.0 - misalignment) + (1.0 - raw) * misalignment


def _single_and_wrong(p0, p1):
    single = p0 * (1.0 - p1) + p1 * (1.0 - p0)
    wrong = p1 * (1.0 - p0)
    return single, wrong


def model_detection_stats(
    channel: ChannelParams,
    config: ProtocolConfig,
    delta_phi: float | None = None,
) -> DetectionStats:
    """Threshold-detector model of gains and error rates.

    The gain averages the single-click probability over the protocol's
    relative-phase distribution: uniform on [0, 2*pi) for the
    slice-reconciled variants, a delta at zero for the fixed-phase ones
    (no-post-selection key mode), or a forced ``delta_phi`` when given.

    The Z error averages the wrong-detector click fraction over the
    matched-slice phase mismatch, which for two phases uniform in the
    same slice is triangular on (-2*pi/M, 2*pi/M). The X error uses the
    slice-grained stand-in: mismatch uniform on [-pi/M, pi/M]. Both are
    then mixed with the misalignment flip; dark counts dilute them
    through the click probabilities themselves.

    Raises:
        ValueError: for the send/not-send variant, whose gain is not an
            interference quantity (use the Monte Carlo engine).
    """
    if config.variant is ProtocolVariant.SNS:
        raise ValueError(
            "send/not-send statistics are not interferometric; "
            "derive them from simulation tallies instead"
        )
    t_a, t_b = channel.detection_transmittances()
    mu = config.signal_intensity
    i_a = t_a * mu / 2.0
    i_b = t_b * mu / 2.0
    p_d = channel.dark_count_prob
    m = config.slice_count

    fixed_phase = config.variant in (ProtocolVariant.NPP, ProtocolVariant.PM_MDI)
    if delta_phi is not None:
        p0, p1 = click_probabilities(i_a, i_b, delta_phi, p_d)
        single, wrong = _single_and_wrong(p0, p1)
        gain = float(single)
        ez_raw = float(wrong / single) if single > 0 else 0.0
    elif fixed_phase:
        p0, p1 = click_probabilities(i_a, i_b, 0.0, p_d)
        single, wrong = _single_and_wrong(p0, p1)
        gain = float(single)
        ez_raw = float(wrong / single) if single > 0 else 0.0
    else:
        p0, p1 = click_probabilities(i_a, i_b, _UNIFORM_PHASES, p_d)
        single, _ = _single_and_wrong(p0, p1)
        gain = float(np.mean(single))
        ez_raw = _matched_slice_error(i_a, i_b, p_d, m)

    ex_raw = _slice_grain_error(i_a, i_b, p_d, m)
    e_d = channel.misalignment
    qber_z = min(0.5, _mix_error(ez_raw, e_d))
    phase_error_x = min(0.5, _mix_error(ex_raw, e_d))

    y1, e1 = _single_photon_stats(channel)
    q1 = mu * math.exp(-mu) * y1
    return DetectionStats(
        gain=gain,
        qber_z=qber_z,
        phase_error_x=phase_error_x,
        single_photon_gain=min(q1, gain),
        single_photon_qber=e1,
        single_photon_yield=y1,
    )


def _matched_slice_error(i_a, i_b, p_d, slice_count) -> float:
    """Wrong-click fraction with triangular phase mismatch on (-w, w).

    w = 2*pi/M; the density is symmetric, so only [0, w] is integrated.
    """
    w = 2.0 * math.pi / slice_count
    delta = 0.5 * w * (_GL_NODES + 1.0)
    density = 1.0 - delta / w
    p0, p1 = click_probabilities(i_a, i_b, delta, p_d)
    single, wrong = _single_and_wrong(p0, p1)
    num = float(np.sum(_GL_WEIGHTS * density * wrong))
    den = float(np.sum(_GL_WEIGHTS * density * single))
    return num / den if den > 0 else 0.0


def _slice_grain_error(i_a, i_b, p_d, slice_count) -> float:
    """Wrong-click fraction with mismatch uniform on [-pi/M, pi/M]."""
    half = math.pi / slice_count
    theta = 0.5 * half * (_GL_NODES + 1.0)
    p0, p1 = click_probabilities(i_a, i_b, theta, p_d)
    single, wrong = _single_and_wrong(p0, p1)
    num = float(np.sum(_GL_WEIGHTS * wrong))
    den = float(np.sum(_GL_WEIGHTS * single))
    return num / den if den > 0 else 0.0


def _single_photon_stats(channel: ChannelParams) -> tuple[float, float]:
    """Yield and QBER of the single-photon component.

    Y1 = 1 - (1 - t)(1 - p_d)^2, which reduces to the arm transmittance
    for ideal devices; with asymmetric arms t is the geometric mean. The
    detected photon errs with the misalignment probability and the
    dark-count surplus is random.
    """
    t_a, t_b = channel.detection_transmittances()
    t = math.sqrt(t_a * t_b)
    p_d = channel.dark_count_prob
    y1 = 1.0 - (1.0 - t) * (1.0 - p_d) ** 2
    if y1 <= 0.0:
        return 0.0, 0.0
    e1 = (channel.misalignment * t + 0.5 * (y1 - t)) / y1
    return y1, min(max(e1, 0.0), 0.5)


def tf_gllp_rate(stats: DetectionStats, config: ProtocolConfig) -> float:
    """Tagging-style rate q { Q1 [1 - H2(e1)] - f Qmu H2(Emu) }, clamped."""
    if stats.single_photon_gain is None or stats.single_photon_qber is None:
        raise ValueError("tf_gllp_rate needs single-photon statistics")
    q = config.sifting_factor
    r = q * (
        stats.single_photon_gain * (1.0 - binary_entropy(stats.single_photon_qber))
        - config.ec_efficiency * stats.gain * binary_entropy(stats.qber_z)
    )
    return max(0.0, r)


def tfstar_rate(
    sifted_fraction: float, phase_error: float, qber: float, f: float
) -> float:
    """Generic one-way rate skeleton, per pulse.

    R = N_sif [1 - H2(e_ph)] - lambda_EC with lambda_EC = f N_sif H2(E),
    everything expressed as fractions of emitted pulses; clamped at zero.
    """
    if sifted_fraction < 0:
        raise ValueError("sifted_fraction must be >= 0")
    r = sifted_fraction * (
        1.0 - binary_entropy(phase_error) - f * binary_entropy(qber)
    )
    return max(0.0, r)


def pm_rate(stats: DetectionStats, config: ProtocolConfig) -> float:
    """Phase-matching rate (2/M) Qmu [1 - H2(E_Z) - H2(E_X)], clamped.

    The 2/M sifting factor counts both same-slice and opposite-slice
    pairs.
    """
    r = (2.0 / config.slice_count) * stats.gain * (
        1.0 - binary_entropy(stats.qber_z) - binary_entropy(stats.phase_error_x)
    )
    return max(0.0, r)


def pmmdi_rate(mu: float, eta: float) -> float:
    """Loss-only rate of the key/test-state protocol.

    R = (1 - e^(-2 mu sqrt(eta))) [1 - H2(x)] with
    x = (1 - exp(-4 mu (1 - sqrt(eta)) e^(-2 mu sqrt(eta)))) / 2.
    Optimized over mu it approaches 0.0714 sqrt(eta) at high loss.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    s = math.sqrt(eta)
    gain = -math.expm1(-2.0 * mu * s)
    x = -math.expm1(-4.0 * mu * (1.0 - s) * math.exp(-2.0 * mu * s)) / 2.0
    return max(0.0, gain * (1.0 - binary_entropy(x)))


@dataclass(frozen=True)
class IntensityOptimum:
    mu: float
    rate: float
    degenerate: bool = False


def optimize_intensity(
    rate_fn: Callable[[float, float], float],
    eta: float,
    lo: float = MU_SEARCH_LO,
    hi: float = MU_SEARCH_HI,
) -> IntensityOptimum:
    """Maximize a rate over the pulse intensity.

    A 64-point log-spaced coarse grid locates the basin, then a
    golden-section refinement in log(mu) narrows it to a relative mu
    tolerance of 1e-4. If the rate vanishes on the whole grid the result
    is flagged degenerate with mu at the grid's geometric midpoint.
    """
    grid = np.geomspace(lo, hi, _COARSE_GRID_POINTS)
    values = np.array([rate_fn(mu, eta) for mu in grid])
    best = int(np.argmax(values))
    if values[best] <= 0.0:
        return IntensityOptimum(mu=math.sqrt(lo * hi), rate=0.0, degenerate=True)

    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, len(grid) - 1)]
    a, b = math.log(left), math.log(right)
    tol = math.log1p(1e-4)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = rate_fn(math.exp(c), eta)
    fd = rate_fn(math.exp(d), eta)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = rate_fn(math.exp(c), eta)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = rate_fn(math.exp(d), eta)
    mu_star = math.exp(0.5 * (a + b))
    return IntensityOptimum(mu=mu_star, rate=rate_fn(mu_star, eta))


@dataclass(frozen=True)
class RateCurvePoint:
    """One distance of the rate-versus-distance sweep."""

    distance_km: float
    eta: float
    rates: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, float] = field(default_factory=dict)
    optimal_mu: dict[str, float] = field(default_factory=dict)


def _analytic_rate_fn(
    variant: ProtocolVariant, channel: ChannelParams, config: ProtocolConfig
) -> Callable[[float, float], float]:
    if variant is ProtocolVariant.PM_MDI:
        return pmmdi_rate
    if variant is ProtocolVariant.TF_GLLP:
        def tf_fn(mu: float, _eta: float) -> float:
            stats = model_detection_stats(channel, config.with_intensity(mu))
            return tf_gllp_rate(stats, config)
        return tf_fn
    if variant is ProtocolVariant.PM:
        def pm_fn(mu: float, _eta: float) -> float:
            stats = model_detection_stats(channel, config.with_intensity(mu))
            return pm_rate(stats, config)
        return pm_fn
    raise ValueError(f"{variant.value} has no closed-form rate in this model")


def optimized_rate(
    variant: ProtocolVariant, channel: ChannelParams, config: ProtocolConfig
) -> IntensityOptimum:
    """Per-distance intensity optimization for one analytic protocol."""
    fn = _analytic_rate_fn(variant, channel, config)
    return optimize_intensity(fn, channel.eta)


def generate_rate_curve(
    channel_template: ChannelParams,
    distances: Sequence[float],
    protocols: Sequence[ProtocolVariant] = ANALYTIC_VARIANTS,
    bound_names: Sequence[str] = ("plob", "srb", "tgw"),
    config: ProtocolConfig | None = None,
    mc_pulses: int = 0,
    seed: int = 0,
) -> list[RateCurvePoint]:
    """Rate curve over a distance sweep.

    Analytic protocols (tf_gllp, pm, pmmdi) are optimized over intensity
    at each distance. The npp and sns variants are simulated with
    ``mc_pulses`` pulse pairs each and fed through the one-way rate
    skeleton; their columns carry the seed's statistics. Distances must
    be sorted ascending. Deterministic for fixed inputs.
    """
    if list(distances) != sorted(distances):
        raise ValueError("distances must be sorted ascending")
    config = config or ProtocolConfig()
    mc_variants = [
        v for v in protocols if v in (ProtocolVariant.NPP, ProtocolVariant.SNS)
    ]
    if mc_variants and mc_pulses <= 0:
        raise ValueError("mc_pulses must be > 0 when npp or sns curves are requested")

    points = []
    for dist in distances:
        channel = channel_template.at_length(dist)
        eta = channel.eta
        bounds = {name: evaluate_bound(name, eta) for name in bound_names}
        rates: dict[str, float] = {}
        optimal: dict[str, float] = {}
        for variant in protocols:
            if variant in mc_variants:
                continue
            opt = optimized_rate(variant, channel, config)
            rates[variant.value] = opt.rate
            optimal[variant.value] = opt.mu
        if mc_variants:
            from . import engine  # deferred: keeps analytic import light
            from .tallies import TallyError

            for variant in mc_variants:
                try:
                    rate = engine.simulated_rate(variant, channel, config, mc_pulses, seed)
                except TallyError:
                    # too few events at this distance to estimate a rate
                    rate = 0.0
                rates[variant.value + "_mc"] = rate
        points.append(
            RateCurvePoint(
                distance_km=float(dist),
                eta=eta,
                rates=rates,
                bounds=bounds,
                optimal_mu=optimal,
            )
        )
    return points
