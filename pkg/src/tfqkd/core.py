"""Elementary quantities shared by every other module.

Binary entropy, fiber transmittance, and phase-slice arithmetic. All
functions here are pure and safe for unrestricted concurrent use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def binary_entropy(x: float) -> float:
    """Shannon entropy of a binary variable, in bits.

    Defined with the limit convention 0*log2(0) = 0 so that rate formulas
    stay total at exact 0/1 error rates.

    Args:
        x: probability in [0, 1].

    Raises:
        ValueError: if x lies outside [0, 1].
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy defined on [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def channel_transmittance(length_km: float, loss_db_per_km: float) -> float:
    """End-to-end fiber transmittance 10^(-loss*length/10)."""
    if length_km < 0 or loss_db_per_km < 0:
        raise ValueError("length and loss coefficient must be non-negative")
    return 10.0 ** (-loss_db_per_km * length_km / 10.0)


def reduce_phase(phase: float) -> float:
    """Reduce a phase to the canonical interval [0, 2*pi).

    Phases are reduced once, at construction, so slice boundaries are
    decided on a single representation.
    """
    r = math.fmod(phase, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a tiny negative can land exactly on 2*pi after the shift
    if r >= TWO_PI:
        r = 0.0
    return r


@dataclass(frozen=True)
class PhaseSliceIndex:
    """One of M equal sectors of [0, 2*pi).

    Slice k covers phases [2*pi*k/M, 2*pi*(k+1)/M).
    """

    index: int
    slice_count: int

    def __post_init__(self):
        _validate_slice_count(self.slice_count)
        if not 0 <= self.index < self.slice_count:
            raise ValueError(
                f"slice index {self.index} outside [0, {self.slice_count})"
            )

    @property
    def lower_rad(self) -> float:
        return TWO_PI * self.index / self.slice_count

    @property
    def upper_rad(self) -> float:
        return TWO_PI * (self.index + 1) / self.slice_count

    def is_opposite(self, other: "PhaseSliceIndex") -> bool:
        """True when the two slices sit pi apart (k and k + M/2 mod M)."""
        if self.slice_count != other.slice_count:
            raise ValueError("slice counts differ")
        half = self.slice_count // 2
        return (self.index - other.index) % self.slice_count == half


def _validate_slice_count(slice_count: int) -> None:
    if slice_count < 2 or slice_count % 2 != 0:
        raise ValueError(f"slice count must be even and >= 2, got {slice_count}")


def slice_of_phase(phase: float, slice_count: int) -> PhaseSliceIndex:
    """Map a phase to its slice; the phase is reduced to [0, 2*pi) first."""
    _validate_slice_count(slice_count)
    reduced = reduce_phase(phase)
    idx = int(reduced * slice_count / TWO_PI)
    if idx >= slice_count:  # guard against floating round-up at the seam
        idx = slice_count - 1
    return PhaseSliceIndex(index=idx, slice_count=slice_count)


@dataclass(frozen=True)
class ChannelParams:
    """Optical channel between the two senders and the middle detector node.

    ``length_km`` is the full sender-to-sender distance; the measurement
    node sits halfway, so each arm sees the square root of the end-to-end
    fiber transmittance. ``asymmetry_db`` adds extra loss to the second
    arm. ``detector_efficiency`` is folded into the arm transmittance by
    the detection model (equivalent for threshold detectors).
    """

    length_km: float
    loss_db_per_km: float = 0.2
    detector_efficiency: float = 1.0
    dark_count_prob: float = 0.0
    misalignment: float = 0.0
    asymmetry_db: float = 0.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError("length_km must be >= 0")
        if self.loss_db_per_km < 0:
            raise ValueError("loss_db_per_km must be >= 0")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must be in [0, 1]")
        if not 0.0 <= self.dark_count_prob < 1.0:
            raise ValueError("dark_count_prob must be in [0, 1)")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must be in [0, 0.5]")

    @property
    def eta(self) -> float:
        """Fiber-only end-to-end transmittance."""
        return channel_transmittance(self.length_km, self.loss_db_per_km)

    def arm_transmittances(self) -> tuple[float, float]:
        """Fiber-only transmittance of each arm (detector not included)."""
        arm = math.sqrt(self.eta)
        return arm, arm * 10.0 ** (-self.asymmetry_db / 10.0)

    def detection_transmittances(self) -> tuple[float, float]:
        """Arm transmittances with detector efficiency absorbed."""
        a, b = self.arm_transmittances()
        return a * self.detector_efficiency, b * self.detector_efficiency

    def at_length(self, length_km: float) -> "ChannelParams":
        """Copy of these parameters at a different distance."""
        return ChannelParams(
            length_km=length_km,
            loss_db_per_km=self.loss_db_per_km,
            detector_efficiency=self.detector_efficiency,
            dark_count_prob=self.dark_count_prob,
            misalignment=self.misalignment,
            asymmetry_db=self.asymmetry_db,
        )
