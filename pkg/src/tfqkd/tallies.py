"""Tally tables aggregating Monte Carlo pulse outcomes.

A table is a dense count array keyed by (intensity pair, mode pair,
slice relation, outcome) plus a parallel error array for single-click
events, so every derived quantity (gain, QBER, sifted fraction) is
recomputable from raw counts. Merging is plain addition, which makes
batch execution order irrelevant.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .rates import DetectionStats

INTENSITY_LABELS = ("mu", "nu", "omega", "off")
SLICE_LABELS = ("same", "opposite", "other")
OUTCOME_LABELS = ("no_click", "d0_only", "d1_only", "double_click")

MODE_LABELS = {
    "tf": ("xx", "yy", "basis_mismatch"),
    "npp": ("key", "test", "mode_mismatch"),
    "sns": ("zz", "xx", "mode_mismatch"),
}

# Axis index constants used by the engine kernels.
I_MU, I_NU, I_OMEGA, I_OFF = 0, 1, 2, 3
M_KEY, M_EST, M_MIX = 0, 1, 2
S_SAME, S_OPP, S_OTHER = 0, 1, 2


class Outcome(IntEnum):
    NO_CLICK = 0
    D0_ONLY = 1
    D1_ONLY = 2
    DOUBLE_CLICK = 3


_COUNTS_SHAPE = (4, 4, 3, 3, 4)
_ERRORS_SHAPE = (4, 4, 3, 3, 2)


class TallyError(ValueError):
    """Raised when a requested statistic has no events to estimate from."""


@dataclass
class TallyTable:
    """Aggregated pulse-pair outcomes of one simulation run.

    ``counts[ia, ib, mode, slice_rel, outcome]`` counts pulse pairs;
    ``errors[ia, ib, mode, slice_rel, detector]`` counts reconciliation
    errors among single-click events, split by which detector fired.
    Error cells stay zero for groups where no bit expectation is defined
    (mode mismatches, out-of-window test pairs).
    """

    protocol: str
    n_pulses: int
    slice_count: int
    counts: np.ndarray
    errors: np.ndarray

    @classmethod
    def empty(cls, protocol: str, slice_count: int) -> "TallyTable":
        if protocol not in MODE_LABELS:
            raise ValueError(f"unknown protocol {protocol!r}")
        return cls(
            protocol=protocol,
            n_pulses=0,
            slice_count=slice_count,
            counts=np.zeros(_COUNTS_SHAPE, dtype=np.int64),
            errors=np.zeros(_ERRORS_SHAPE, dtype=np.int64),
        )

    @property
    def mode_labels(self) -> tuple[str, ...]:
        return MODE_LABELS[self.protocol]

    def merge(self, other: "TallyTable") -> "TallyTable":
        """Combine two tables; addition is associative and commutative."""
        if self.protocol != other.protocol or self.slice_count != other.slice_count:
            raise ValueError("cannot merge tables from different configurations")
        return TallyTable(
            protocol=self.protocol,
            n_pulses=self.n_pulses + other.n_pulses,
            slice_count=self.slice_count,
            counts=self.counts + other.counts,
            errors=self.errors + other.errors,
        )

    def add_in_place(self, counts: np.ndarray, errors: np.ndarray, pulses: int) -> None:
        self.counts += counts
        self.errors += errors
        self.n_pulses += pulses

    # -- derived quantities ------------------------------------------------

    def group_total(self, ia=slice(None), ib=slice(None), mode=slice(None),
                    slice_rel=slice(None)) -> int:
        return int(self.counts[ia, ib, mode, slice_rel].sum())

    def group_effective(self, ia=slice(None), ib=slice(None), mode=slice(None),
                        slice_rel=slice(None)) -> int:
        return int(self.counts[ia, ib, mode, slice_rel, ..., 1:3].sum())

    def group_errors(self, ia=slice(None), ib=slice(None), mode=slice(None),
                     slice_rel=slice(None)) -> int:
        return int(self.errors[ia, ib, mode, slice_rel].sum())

    def nonzero_rows(self):
        """Sorted (labels, outcome counts, error counts) rows for reports."""
        rows = []
        for ia in range(4):
            for ib in range(4):
                for mo in range(3):
                    for sl in range(3):
                        c = self.counts[ia, ib, mo, sl]
                        if c.sum() == 0:
                            continue
                        rows.append(
                            (
                                (
                                    INTENSITY_LABELS[ia],
                                    INTENSITY_LABELS[ib],
                                    self.mode_labels[mo],
                                    SLICE_LABELS[sl],
                                ),
                                tuple(int(v) for v in c),
                                tuple(int(v) for v in self.errors[ia, ib, mo, sl]),
                            )
                        )
        return rows


def _binomial_se(k: int, n: int) -> float:
    """Standard error of a count fraction; rule-of-three upper bound
    stands in as a one-sided error when no events were seen."""
    if n <= 0:
        return 0.0
    if k == 0 or k == n:
        return 3.0 / n
    p = k / n
    return float(np.sqrt(p * (1.0 - p) / n))


def _ratio(k: int, n: int, group: str) -> float:
    if n <= 0:
        raise TallyError(f"no events in group {group!r} to estimate from")
    return k / n


_KEY_SLICES = [S_SAME, S_OPP]


def signal_gain(table: TallyTable) -> tuple[float, float, int, int]:
    """(gain, se, effective, total) of the signal group."""
    if table.protocol == "tf":
        total = table.group_total(I_MU, I_MU)
        eff = table.group_effective(I_MU, I_MU)
        gain = _ratio(eff, total, "signal pairs (mu, mu)")
    elif table.protocol == "npp":
        total = table.group_total(I_MU, I_MU, M_KEY)
        eff = table.group_effective(I_MU, I_MU, M_KEY)
        gain = _ratio(eff, total, "key pairs")
    elif table.protocol == "sns":
        total = table.group_total(mode=M_KEY)
        eff = table.group_effective(mode=M_KEY)
        gain = _ratio(eff, total, "send/not-send Z pairs")
    else:
        raise ValueError(f"unknown protocol {table.protocol!r}")
    return min(gain, 1.0), _binomial_se(eff, total), eff, total


def key_qber(table: TallyTable) -> tuple[float, float, int, int]:
    """(qber, se, errors, effective) of the key group."""
    if table.protocol == "tf":
        eff = table.group_effective(I_MU, I_MU, M_KEY, _KEY_SLICES)
        err = table.group_errors(I_MU, I_MU, M_KEY, _KEY_SLICES)
        q = _ratio(err, eff, "key group (mu, mu, xx, matched)")
    elif table.protocol == "npp":
        eff = table.group_effective(I_MU, I_MU, M_KEY)
        err = table.group_errors(I_MU, I_MU, M_KEY)
        q = _ratio(err, eff, "key pairs")
    elif table.protocol == "sns":
        eff = table.group_effective(mode=M_KEY)
        err = table.group_errors(mode=M_KEY)
        q = _ratio(err, eff, "send/not-send Z pairs")
    else:
        raise ValueError(f"unknown protocol {table.protocol!r}")
    return min(q, 0.5), _binomial_se(err, eff), err, eff


def x_error(table: TallyTable) -> tuple[float, float, int, int]:
    """(error rate, se, errors, effective) of the phase-estimation group."""
    group = {
        "tf": "estimation group (mu, mu, yy, matched)",
        "npp": "test group (mu, mu, matched)",
        "sns": "X test pairs inside the phase window",
    }.get(table.protocol)
    if group is None:
        raise ValueError(f"unknown protocol {table.protocol!r}")
    eff = table.group_effective(I_MU, I_MU, M_EST, _KEY_SLICES)
    err = table.group_errors(I_MU, I_MU, M_EST, _KEY_SLICES)
    e = _ratio(err, eff, group)
    return min(e, 0.5), _binomial_se(err, eff), err, eff


def tallies_to_stats(table: TallyTable) -> DetectionStats:
    """Point estimates of gain and error rates from raw tallies.

    Gains are effective detections over emitted pairs of the relevant
    group; QBERs are errors over effective detections. Estimates clamp at
    the random-guessing ceiling of 0.5. Single-photon fields stay unset,
    since separating photon-number components needs decoy analysis.

    Raises:
        TallyError: naming the group, when its denominator is empty.
    """
    gain, gain_se, _eff, _total = signal_gain(table)
    qber, qber_se, _err, _keff = key_qber(table)
    ex, ex_se, _xerr, _xeff = x_error(table)
    return DetectionStats(
        gain=gain,
        qber_z=qber,
        phase_error_x=ex,
        gain_se=gain_se,
        qber_z_se=qber_se,
        phase_error_x_se=ex_se,
    )


def sifted_fraction(table: TallyTable) -> float:
    """Sifted key events per emitted pulse pair."""
    if table.n_pulses == 0:
        return 0.0
    if table.protocol == "tf":
        eff = table.group_effective(I_MU, I_MU, M_KEY, [S_SAME, S_OPP])
    elif table.protocol == "npp":
        eff = table.group_effective(I_MU, I_MU, M_KEY)
    elif table.protocol == "sns":
        eff = table.group_effective(mode=M_KEY)
    else:
        raise ValueError(f"unknown protocol {table.protocol!r}")
    return eff / table.n_pulses
