"""Fiber-induced phase drift, its compensation, and the visibility error.

The drift model is a piecewise-constant rate process: within each window
the relative phase moves linearly at a rate drawn from a zero-mean
Gaussian, matching how drift-rate histograms are reported for deployed
fiber. The induced interference error of a residual phase distribution
is eps = E[(1 - cos(dphi)) / 2], i.e. (1 - V)/2 in terms of visibility.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from numbers import Real
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.optimize import isotonic_regression

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DriftModel:
    """Gaussian drift-rate process for the relative fiber phase.

    ``rate_std_rad_per_ms`` is the standard deviation of the per-window
    drift rate; the rate is redrawn every ``window_ms`` and held constant
    in between.
    """

    rate_std_rad_per_ms: float
    window_ms: float = 1.0
    initial_phase: float = 0.0

    def __post_init__(self):
        if self.rate_std_rad_per_ms < 0:
            raise ValueError("rate_std_rad_per_ms must be >= 0")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be > 0")


@dataclass(frozen=True)
class PhasePath:
    """A sampled phase trajectory, piecewise linear between knots."""

    times_ms: np.ndarray
    phases_rad: np.ndarray
    window_rates: np.ndarray

    @property
    def duration_ms(self) -> float:
        return float(self.times_ms[-1])

    def phase_at(self, t_ms):
        """Interpolated phase; accepts scalars or arrays inside the path."""
        t = np.asarray(t_ms, dtype=float)
        if np.any(t < 0) or np.any(t > self.duration_ms + 1e-12):
            raise ValueError("query time outside the sampled path")
        return np.interp(t, self.times_ms, self.phases_rad)


def sample_phase_path(model: DriftModel, duration_ms: float, seed: int) -> PhasePath:
    """Sample a continuous phase trajectory of the given duration.

    Deterministic per seed. A zero duration yields the single initial
    knot; a zero rate deviation yields a constant path.
    """
    if duration_ms < 0:
        raise ValueError("duration_ms must be >= 0")
    rng = np.random.default_rng(seed)
    if duration_ms == 0:
        return PhasePath(
            times_ms=np.array([0.0]),
            phases_rad=np.array([model.initial_phase]),
            window_rates=np.array([]),
        )
    n_windows = int(math.ceil(duration_ms / model.window_ms))
    rates = rng.normal(0.0, model.rate_std_rad_per_ms, n_windows)
    knots = np.minimum(np.arange(1, n_windows + 1) * model.window_ms, duration_ms)
    times = np.concatenate(([0.0], knots))
    spans = np.diff(times)
    phases = model.initial_phase + np.concatenate(([0.0], np.cumsum(rates * spans)))
    return PhasePath(times_ms=times, phases_rad=phases, window_rates=rates)


# -- drift rate versus distance ----------------------------------------------

def load_drift_anchors() -> list[tuple[float, float, str]]:
    """Measured drift-rate anchors shipped with the package."""
    anchors = []
    with resources.files("tfqkd.data").joinpath("drift_anchors.csv").open() as fh:
        for row in csv.DictReader(fh):
            anchors.append(
                (float(row["length_km"]), float(row["rate_std_rad_per_ms"]), row["source"])
            )
    anchors.sort(key=lambda a: a[0])
    return anchors


_drift_interpolator: tuple[PchipInterpolator, float, float] | None = None


def _drift_fit():
    """Monotone fit through the anchors.

    Two anchors come from different setups and break monotonicity; an
    isotonic regression pools them so the queryable model stays
    single-valued and non-decreasing, then a shape-preserving cubic
    interpolates. Beyond the last anchor the end slope extends linearly.
    """
    global _drift_interpolator
    if _drift_interpolator is None:
        anchors = load_drift_anchors()
        lengths = np.array([a[0] for a in anchors])
        rates = np.array([a[1] for a in anchors])
        iso = isotonic_regression(rates).x
        interp = PchipInterpolator(lengths, iso)
        end_slope = float(interp.derivative()(lengths[-1]))
        _drift_interpolator = (interp, float(lengths[-1]), end_slope)
    return _drift_interpolator


def drift_rate_for_length(length_km: float) -> float:
    """Drift-rate standard deviation (rad/ms) expected at a fiber length."""
    if length_km < 0:
        raise ValueError("length_km must be >= 0")
    interp, last, end_slope = _drift_fit()
    if length_km <= last:
        return float(interp(length_km))
    return float(interp(last)) + end_slope * (length_km - last)


# -- visibility error ---------------------------------------------------------

def interference_error(delta_phi_dist) -> float:
    """Mean interference error eps = E[(1 - cos(dphi)) / 2].

    Accepts a deterministic phase (number), an array of sampled phases
    (Monte Carlo mean), or a frozen scipy.stats distribution (adaptive
    quadrature of pdf * (1 - cos)/2 to relative tolerance 1e-6 or
    better).
    """
    if isinstance(delta_phi_dist, Real):
        return (1.0 - math.cos(delta_phi_dist)) / 2.0
    if isinstance(delta_phi_dist, (str, bytes)):
        raise TypeError(
            "expected a number, an array of phase samples, or a frozen distribution"
        )
    if isinstance(delta_phi_dist, (Sequence, np.ndarray)):
        samples = np.asarray(delta_phi_dist, dtype=float)
        if samples.size == 0:
            raise ValueError("empty sample array")
        return float(np.mean((1.0 - np.cos(samples)) / 2.0))
    if hasattr(delta_phi_dist, "pdf") and hasattr(delta_phi_dist, "support"):
        a, b = delta_phi_dist.support()
        if not math.isfinite(a):
            a = delta_phi_dist.ppf(1e-14)
        if not math.isfinite(b):
            b = delta_phi_dist.ppf(1.0 - 1e-14)
        median = float(delta_phi_dist.ppf(0.5))
        value, _abserr = integrate.quad(
            lambda x: delta_phi_dist.pdf(x) * (1.0 - math.cos(x)) / 2.0,
            a,
            b,
            points=[median],
            epsabs=1e-14,
            epsrel=1e-8,
            limit=200,
        )
        return float(value)
    raise TypeError(
        "expected a number, an array of phase samples, or a frozen distribution"
    )


def gaussian_interference_error(sigma_rad: float, mean_rad: float = 0.0) -> float:
    """Closed form for Gaussian residuals: (1 - e^(-sigma^2/2) cos(mean))/2."""
    return (1.0 - math.exp(-0.5 * sigma_rad**2) * math.cos(mean_rad)) / 2.0


# -- phase estimation ---------------------------------------------------------

class ClickStarvationError(ValueError):
    """Raised when a phase estimate is requested with zero reference clicks."""


@dataclass(frozen=True)
class PhaseEstimate:
    delta_phi_rad: float
    std_error: float


def estimate_phase_offset(
    n0: int,
    n1: int,
    total: int,
    quadrature: tuple[int, int] | None = None,
) -> PhaseEstimate:
    """Invert reference-pulse click counts into a phase offset.

    The in-phase block gives cos(dphi) ~ (n0 - n1)/(n0 + n1). Without a
    quadrature block the estimate is the arccos branch in [0, pi]; with
    counts from a pi/2-modulated sub-block the sign ambiguity is resolved
    and the estimate covers [0, 2*pi). The attached standard error comes
    from binomial propagation of the click fractions.

    Raises:
        ClickStarvationError: when a block saw no clicks at all.
    """
    if total <= 0:
        raise ValueError("total must be > 0")
    clicks = n0 + n1
    if clicks == 0:
        raise ClickStarvationError("no reference clicks in the in-phase block")
    cos_hat = (n0 - n1) / clicks
    cos_hat = min(1.0, max(-1.0, cos_hat))
    p = n0 / clicks
    se_cos = 2.0 * math.sqrt(max(p * (1.0 - p), 1.0 / clicks) / clicks)

    if quadrature is None:
        est = math.acos(cos_hat)
        sin_est = math.sin(est)
        se = se_cos / max(sin_est, 1e-6)
        return PhaseEstimate(delta_phi_rad=est, std_error=se)

    q0, q1 = quadrature
    qclicks = q0 + q1
    if qclicks == 0:
        raise ClickStarvationError("no reference clicks in the quadrature block")
    sin_hat = min(1.0, max(-1.0, (q0 - q1) / qclicks))
    pq = q0 / qclicks
    se_sin = 2.0 * math.sqrt(max(pq * (1.0 - pq), 1.0 / qclicks) / qclicks)
    est = math.atan2(sin_hat, cos_hat) % TWO_PI
    norm = cos_hat**2 + sin_hat**2
    if norm <= 0:
        se = math.pi
    else:
        se = math.sqrt(sin_hat**2 * se_cos**2 + cos_hat**2 * se_sin**2) / norm
    return PhaseEstimate(delta_phi_rad=est, std_error=se)


def click_limited_estimator(
    reference_pulses: int, click_prob_scale: float, seed: int
) -> Callable[[float], float]:
    """Estimator that sees the phase only through simulated clicks.

    Each call splits the reference budget between an in-phase and a
    quadrature sub-block, samples binomial clicks with per-pulse
    probability click_prob_scale * (1 +- cos)/2, and inverts them.
    """
    if reference_pulses < 4:
        raise ValueError("need at least 4 reference pulses")
    if not 0.0 < click_prob_scale <= 1.0:
        raise ValueError("click_prob_scale must be in (0, 1]")
    rng = np.random.default_rng(seed)
    half = reference_pulses // 2

    def estimator(true_phase: float) -> float:
        n0 = rng.binomial(half, click_prob_scale * (1.0 + math.cos(true_phase)) / 2.0)
        n1 = rng.binomial(half, click_prob_scale * (1.0 - math.cos(true_phase)) / 2.0)
        q0 = rng.binomial(half, click_prob_scale * (1.0 + math.sin(true_phase)) / 2.0)
        q1 = rng.binomial(half, click_prob_scale * (1.0 - math.sin(true_phase)) / 2.0)
        est = estimate_phase_offset(n0, n1, half, quadrature=(q0, q1))
        # keep the estimate on the same winding as the true phase
        return est.delta_phi_rad + TWO_PI * round((true_phase - est.delta_phi_rad) / TWO_PI)

    return estimator


# -- pulse-train compensation --------------------------------------------------

@dataclass(frozen=True)
class PulseTrainSchedule:
    """Duty cycle of dim signal, bright reference and detector recovery."""

    signal_us: float = 50.0
    reference_us: float = 50.0
    recovery_us: float = 50.0
    reference_intensity: float = 1000.0

    def __post_init__(self):
        for name in ("signal_us", "reference_us", "recovery_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.reference_intensity < 0:
            raise ValueError("reference_intensity must be >= 0")

    @property
    def cycle_ms(self) -> float:
        return (self.signal_us + self.reference_us + self.recovery_us) / 1000.0

    @property
    def signal_ms(self) -> float:
        return self.signal_us / 1000.0

    def duty_fractions(self) -> tuple[float, float, float]:
        total = self.signal_us + self.reference_us + self.recovery_us
        return (
            self.signal_us / total,
            self.reference_us / total,
            self.recovery_us / total,
        )


COMPENSATION_MODES = ("active_npp", "post_select")


@dataclass(frozen=True)
class CompensationResult:
    """Residual phases per signal block after compensation."""

    mode: str
    residuals: np.ndarray  # shape (n_blocks, samples_per_block)
    estimates: np.ndarray  # estimate used for each sample

    @property
    def epsilon(self) -> float:
        """Interference error implied by the residual distribution."""
        return interference_error(self.residuals.ravel())


def apply_compensation(
    mode: str,
    path: PhasePath,
    schedule: PulseTrainSchedule,
    estimator: Callable[[float], float] | None = None,
    samples_per_block: int = 8,
) -> CompensationResult:
    """Residual phase of each signal block under one-block-stale estimates.

    Every signal sample is referenced against the estimate formed one
    signal-block earlier (latency = signal duration), the declared
    staleness assumption of the pulse-train scheme. The active mode
    subtracts that estimate (hardware compensation); the post-selection
    mode carries it into reconciliation. Both yield the same residual
    distribution, differing in how the estimate is consumed downstream.

    ``estimator`` maps the true phase at the estimation time to the
    estimated phase; None means a perfect estimator.
    """
    if mode not in COMPENSATION_MODES:
        raise ValueError(f"mode must be one of {COMPENSATION_MODES}, got {mode!r}")
    if samples_per_block < 1:
        raise ValueError("samples_per_block must be >= 1")
    latency = schedule.signal_ms
    cycle = schedule.cycle_ms
    n_cycles = int(path.duration_ms // cycle)
    if n_cycles < 2:
        raise ValueError("path shorter than two pulse-train cycles")

    offsets = (np.arange(samples_per_block) + 0.5) / samples_per_block * schedule.signal_ms
    starts = np.arange(1, n_cycles) * cycle
    times = starts[:, None] + offsets[None, :]
    true_now = path.phase_at(times)
    ref_phase = path.phase_at(times - latency)
    if estimator is None:
        estimates = ref_phase
    else:
        estimates = np.vectorize(estimator)(ref_phase)
    residuals = true_now - estimates
    return CompensationResult(mode=mode, residuals=residuals, estimates=estimates)
