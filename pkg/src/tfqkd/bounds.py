"""Repeaterless and single-repeater secret-key capacity bounds.

All bounds are in secret bits per channel use as a function of the
end-to-end transmittance eta. The strict functions raise outside the
open interval (0, 1); curve generation goes through
:func:`evaluate_bound`, which returns 0/inf sentinels at the endpoints so
curve endpoints render instead of aborting.
"""
from __future__ import annotations

import math

from .core import ChannelParams


def _check_eta(eta: float, allow_zero: bool = False) -> None:
    lo_ok = eta > 0.0 or (allow_zero and eta == 0.0)
    if not lo_ok or eta >= 1.0:
        raise ValueError(f"transmittance must lie in (0, 1), got {eta}")


def rci_lower_bound(eta: float) -> float:
    """Achievable reverse-coherent-information rate -log2(1 - eta).

    Numerically identical to :func:`plob_bound`; kept as a named alias for
    its lower-bound role.
    """
    _check_eta(eta)
    return -math.log2(1.0 - eta)


def plob_bound(eta: float) -> float:
    """Repeaterless secret-key capacity -log2(1 - eta).

    For eta << 1 this behaves as 1.4427 * eta (linear in transmittance).
    """
    _check_eta(eta)
    return -math.log2(1.0 - eta)


def tgw_bound(eta: float) -> float:
    """Squashed-entanglement upper bound log2((1 + eta)/(1 - eta))."""
    if eta < 0.0 or eta >= 1.0:
        raise ValueError(f"transmittance must lie in [0, 1), got {eta}")
    return math.log2((1.0 + eta) / (1.0 - eta))


def srb_bound(eta: float) -> float:
    """Single-repeater capacity -log2(1 - sqrt(eta))."""
    _check_eta(eta)
    return -math.log2(1.0 - math.sqrt(eta))


_BOUNDS = {
    "rci": rci_lower_bound,
    "plob": plob_bound,
    "tgw": tgw_bound,
    "srb": srb_bound,
}

BOUND_NAMES = tuple(_BOUNDS)


def evaluate_bound(name: str, eta: float) -> float:
    """Bound value with curve-friendly endpoint sentinels.

    Returns 0.0 at eta = 0 and +inf at eta = 1 instead of raising, so a
    distance sweep that touches L = 0 still produces a row.
    """
    try:
        fn = _BOUNDS[name]
    except KeyError:
        raise ValueError(f"unknown bound {name!r}; expected one of {BOUND_NAMES}")
    if eta <= 0.0:
        return 0.0
    if eta >= 1.0:
        return math.inf
    return fn(eta)


def absolute_plob(channel: ChannelParams, include_detector: bool = False) -> float:
    """PLOB bound of a channel, by default against fiber-only loss.

    The fiber-only value is the absolute bound with no device
    imperfections; with ``include_detector`` the detector efficiency is
    multiplied into eta, giving the device-dependent comparison. Returns
    +inf at zero length.
    """
    eta = channel.eta
    if include_detector:
        eta *= channel.detector_efficiency
    return evaluate_bound("plob", eta)
