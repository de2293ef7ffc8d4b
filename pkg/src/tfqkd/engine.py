"""Pulse-by-pulse Monte Carlo simulation of the interferometric protocols.

Pulses are processed in fixed-size chunks. Each chunk draws its
randomness from a counter-based Philox stream keyed by (seed, chunk
index), with a second stream for the channel environment, and the draw
order inside a chunk is fixed. Tallies merge by addition, so the result
for a given (seed, n_pulses) is identical no matter how chunks are
distributed over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .core import ChannelParams
from .phase import DriftModel
from .rates import (
    DetectionStats,
    ProtocolConfig,
    ProtocolVariant,
    click_probabilities,
    model_detection_stats,
    tf_gllp_rate,
    tfstar_rate,
)
from .tallies import (
    I_MU,
    I_OFF,
    M_EST,
    M_KEY,
    M_MIX,
    Outcome,
    S_OPP,
    S_OTHER,
    S_SAME,
    TallyTable,
)

CHUNK_PULSES = 1 << 19
_MASK64 = (1 << 64) - 1
_ENV_STREAM = 1 << 48  # chunk indices stay far below this

ENGINE_PROTOCOLS = ("tf", "npp", "sns")


def _chunk_rngs(seed: int, chunk: int) -> tuple[Generator, Generator]:
    key = seed & _MASK64
    protocol_rng = Generator(Philox(key=[key, chunk]))
    env_rng = Generator(Philox(key=[key, _ENV_STREAM + chunk]))
    return protocol_rng, env_rng


def charlie_measure(intensity_a, intensity_b, delta_phi, channel: ChannelParams, rng):
    """Sample the middle node's measurement outcome.

    Intensities are source mean photon numbers per arm; loss and
    detector efficiency are applied per arm, then the two threshold
    detectors click independently with dark counts included. Accepts
    scalars or arrays and returns Outcome codes of the same shape.
    """
    t_a, t_b = channel.detection_transmittances()
    p0, p1 = click_probabilities(
        t_a * np.asarray(intensity_a, dtype=float),
        t_b * np.asarray(intensity_b, dtype=float),
        delta_phi,
        channel.dark_count_prob,
    )
    shape = np.broadcast_shapes(np.shape(p0), np.shape(p1))
    click0 = rng.random(shape) < p0
    click1 = rng.random(shape) < p1
    code = click0.astype(np.int8) + 2 * click1.astype(np.int8)
    if code.shape == ():
        return Outcome(int(code))
    return code


def _relative_channel_phase(
    env_rng: Generator,
    size: int,
    drift: DriftModel | None,
    pulses_per_ms: float,
):
    """Per-pulse relative phase shift tau_A - tau_B across one chunk.

    The drift rate is constant within each window and Gaussian across
    windows. Each chunk starts at an independent uniform phase, which
    models the stationary regime without coupling chunks.
    """
    if drift is None:
        return 0.0
    t = np.arange(size) / pulses_per_ms
    n_windows = int(t[-1] // drift.window_ms) + 1 if size else 1
    rates = env_rng.normal(0.0, drift.rate_std_rad_per_ms, n_windows)
    start = drift.initial_phase + env_rng.uniform(0.0, 2.0 * math.pi)
    widx = np.minimum((t // drift.window_ms).astype(np.int64), n_windows - 1)
    window_starts = np.concatenate(
        ([0.0], np.cumsum(rates[:-1]) * drift.window_ms)
    )
    return start + window_starts[widx] + rates[widx] * (t - widx * drift.window_ms)


def _slice_indices(rho: np.ndarray, slice_count: int) -> np.ndarray:
    idx = (rho * (slice_count / (2.0 * math.pi))).astype(np.int64)
    return np.minimum(idx, slice_count - 1)


def _slice_relation(ka: np.ndarray, kb: np.ndarray, slice_count: int) -> np.ndarray:
    diff = (ka - kb) % slice_count
    rel = np.full(diff.shape, S_OTHER, dtype=np.int64)
    rel[diff == 0] = S_SAME
    rel[diff == slice_count // 2] = S_OPP
    return rel


def _sample_outcomes(i_a, i_b, dphi, channel: ChannelParams, rng: Generator):
    t_a, t_b = channel.detection_transmittances()
    p0, p1 = click_probabilities(t_a * i_a, t_b * i_b, dphi, channel.dark_count_prob)
    click0 = rng.random(i_a.shape) < p0
    click1 = rng.random(i_a.shape) < p1
    return click0.astype(np.int64) + 2 * click1.astype(np.int64)


def _accumulate(counts, errors, ia, ib, mode, rel, outcome, err_mask):
    """bincount the composite group index into the dense tally arrays."""
    group = ((ia * 4 + ib) * 3 + mode) * 3 + rel
    flat = group * 4 + outcome
    counts += np.bincount(flat, minlength=counts.size).reshape(counts.shape)
    single = (outcome == Outcome.D0_ONLY) | (outcome == Outcome.D1_ONLY)
    err_sel = single & err_mask
    if np.any(err_sel):
        detector = (outcome[err_sel] == Outcome.D1_ONLY).astype(np.int64)
        eflat = group[err_sel] * 2 + detector
        errors += np.bincount(eflat, minlength=errors.size).reshape(errors.shape)


# -- per-chunk kernels ------------------------------------------------------
# Draw order inside a chunk is part of the reproducibility contract and
# must not change: see each kernel's leading block.

def _tf_kernel(channel, config, size, rng, env_rng, drift, pulses_per_ms, capture=None):
    m = config.slice_count
    levels = np.asarray(config.intensity_levels)
    ia = rng.integers(0, len(levels), size)
    ib = rng.integers(0, len(levels), size)
    bit_a = rng.integers(0, 2, size)
    bit_b = rng.integers(0, 2, size)
    basis_a = rng.integers(0, 2, size)
    basis_b = rng.integers(0, 2, size)
    rho_a = rng.random(size) * (2.0 * math.pi)
    rho_b = rng.random(size) * (2.0 * math.pi)
    tau = _relative_channel_phase(env_rng, size, drift, pulses_per_ms)

    phase_a = bit_a * math.pi + basis_a * (math.pi / 2.0) + rho_a
    phase_b = bit_b * math.pi + basis_b * (math.pi / 2.0) + rho_b
    dphi = phase_a - phase_b + tau
    half = levels / 2.0
    outcome = _sample_outcomes(half[ia], half[ib], dphi, channel, rng)
    flip = rng.random(size) < channel.misalignment

    ka = _slice_indices(rho_a, m)
    kb = _slice_indices(rho_b, m)
    rel = _slice_relation(ka, kb, m)
    mode = np.where(
        basis_a == basis_b, np.where(basis_a == 0, M_KEY, M_EST), M_MIX
    )

    # Bit reconciliation: d1 means the bits differ, opposite slices add pi.
    guess = (outcome == Outcome.D1_ONLY) ^ (rel == S_OPP) ^ flip
    err = guess != (bit_a != bit_b)
    err_mask = (mode != M_MIX) & (rel != S_OTHER) & err

    counts = np.zeros((4, 4, 3, 3, 4), dtype=np.int64)
    errors = np.zeros((4, 4, 3, 3, 2), dtype=np.int64)
    _accumulate(counts, errors, ia, ib, mode, rel, outcome, err_mask)
    if capture is not None:
        capture.update(
            intensity_a=half[ia], intensity_b=half[ib], bit_a=bit_a, bit_b=bit_b,
            basis_a=basis_a, basis_b=basis_b, rho_a=rho_a, rho_b=rho_b,
            send_a=np.ones(size, bool), send_b=np.ones(size, bool),
            mode_a=np.zeros(size, np.int64), mode_b=np.zeros(size, np.int64),
            tau=np.broadcast_to(np.asarray(tau, float), (size,)), outcome=outcome,
        )
    return counts, errors


def _npp_kernel(channel, config, size, rng, env_rng, drift, pulses_per_ms, capture=None):
    m = config.slice_count
    levels = np.asarray(config.intensity_levels)
    mode_a = (rng.random(size) >= config.key_mode_prob).astype(np.int64)  # 0 key
    mode_b = (rng.random(size) >= config.key_mode_prob).astype(np.int64)
    ia = rng.integers(0, len(levels), size)
    ib = rng.integers(0, len(levels), size)
    bit_a = rng.integers(0, 2, size)
    bit_b = rng.integers(0, 2, size)
    rho_a = rng.random(size) * (2.0 * math.pi)
    rho_b = rng.random(size) * (2.0 * math.pi)
    tau = _relative_channel_phase(env_rng, size, drift, pulses_per_ms)

    # Key mode: signal intensity, bit phase only. Test mode: random decoy
    # intensity, phase-randomized.
    ia = np.where(mode_a == 0, I_MU, ia)
    ib = np.where(mode_b == 0, I_MU, ib)
    phase_a = np.where(mode_a == 0, bit_a * math.pi, rho_a)
    phase_b = np.where(mode_b == 0, bit_b * math.pi, rho_b)
    dphi = phase_a - phase_b + tau
    half = levels / 2.0
    outcome = _sample_outcomes(half[ia], half[ib], dphi, channel, rng)
    flip = rng.random(size) < channel.misalignment

    mode = np.where(mode_a == mode_b, np.where(mode_a == 0, M_KEY, M_EST), M_MIX)
    rel = _slice_relation(_slice_indices(rho_a, m), _slice_indices(rho_b, m), m)
    rel = np.where(mode == M_KEY, S_SAME, np.where(mode == M_MIX, S_OTHER, rel))

    truth = np.where(mode == M_KEY, bit_a != bit_b, False)
    guess = (outcome == Outcome.D1_ONLY) ^ (rel == S_OPP) ^ flip
    err = guess != truth
    err_mask = (mode != M_MIX) & (rel != S_OTHER) & err

    counts = np.zeros((4, 4, 3, 3, 4), dtype=np.int64)
    errors = np.zeros((4, 4, 3, 3, 2), dtype=np.int64)
    _accumulate(counts, errors, ia, ib, mode, rel, outcome, err_mask)
    if capture is not None:
        capture.update(
            intensity_a=half[ia], intensity_b=half[ib], bit_a=bit_a, bit_b=bit_b,
            basis_a=np.zeros(size, np.int64), basis_b=np.zeros(size, np.int64),
            rho_a=np.where(mode_a == 0, 0.0, rho_a),
            rho_b=np.where(mode_b == 0, 0.0, rho_b),
            send_a=np.ones(size, bool), send_b=np.ones(size, bool),
            mode_a=mode_a, mode_b=mode_b,
            tau=np.broadcast_to(np.asarray(tau, float), (size,)), outcome=outcome,
        )
    return counts, errors


def _sns_kernel(channel, config, size, rng, env_rng, drift, pulses_per_ms, capture=None):
    mu = config.signal_intensity
    mu_x = config.x_intensity
    eps = config.send_prob
    mode_a = (rng.random(size) >= config.key_mode_prob).astype(np.int64)  # 0 = Z
    mode_b = (rng.random(size) >= config.key_mode_prob).astype(np.int64)
    send_a = rng.random(size) < eps
    send_b = rng.random(size) < eps
    rho_a = rng.random(size) * (2.0 * math.pi)
    rho_b = rng.random(size) * (2.0 * math.pi)
    tau = _relative_channel_phase(env_rng, size, drift, pulses_per_ms)

    # Z windows: a sent pulse carries the full signal intensity and a
    # random phase; X windows always send mu_x/2 per arm.
    x_a = mode_a == 1
    x_b = mode_b == 1
    int_a = np.where(x_a, mu_x / 2.0, np.where(send_a, mu, 0.0))
    int_b = np.where(x_b, mu_x / 2.0, np.where(send_b, mu, 0.0))
    dphi = rho_a - rho_b + tau
    outcome = _sample_outcomes(int_a, int_b, dphi, channel, rng)
    flip = rng.random(size) < channel.misalignment

    ia = np.where(x_a | send_a, I_MU, I_OFF)
    ib = np.where(x_b | send_b, I_MU, I_OFF)
    mode = np.where(mode_a == mode_b, np.where(mode_a == 0, M_KEY, M_EST), M_MIX)

    # X-window pairing test; both phase-closeness conventions available.
    if config.sns_test_convention == "verbatim":
        passed = 1.0 - np.abs(np.cos(rho_a) - np.cos(rho_b)) <= abs(config.sns_test_param)
    else:
        passed = 1.0 - np.abs(np.cos(rho_a - rho_b)) <= abs(config.sns_test_param)
    anti = np.cos(rho_a - rho_b) < 0.0
    rel = np.where(passed, np.where(anti, S_OPP, S_SAME), S_OTHER)
    rel = np.where(mode == M_EST, rel, np.where(mode == M_KEY, S_SAME, S_OTHER))

    # Z bits: sending encodes 0 for the first party and 1 for the second,
    # so a kept round is correct exactly when one party sent.
    bit_a = (~send_a).astype(np.int64)
    bit_b = send_b.astype(np.int64)
    z_err = (bit_a != bit_b) ^ flip
    x_err = ((outcome == Outcome.D1_ONLY) ^ anti) ^ flip
    err = np.where(mode == M_KEY, z_err, x_err)
    err_mask = ((mode == M_KEY) | ((mode == M_EST) & (rel != S_OTHER))) & err

    counts = np.zeros((4, 4, 3, 3, 4), dtype=np.int64)
    errors = np.zeros((4, 4, 3, 3, 2), dtype=np.int64)
    _accumulate(counts, errors, ia, ib, mode, rel, outcome, err_mask)
    if capture is not None:
        capture.update(
            intensity_a=int_a, intensity_b=int_b, bit_a=bit_a, bit_b=bit_b,
            basis_a=np.zeros(size, np.int64), basis_b=np.zeros(size, np.int64),
            rho_a=rho_a, rho_b=rho_b,
            send_a=x_a | send_a, send_b=x_b | send_b,
            mode_a=mode_a, mode_b=mode_b,
            tau=np.broadcast_to(np.asarray(tau, float), (size,)), outcome=outcome,
        )
    return counts, errors


_KERNELS = {"tf": _tf_kernel, "npp": _npp_kernel, "sns": _sns_kernel}


def _run_chunked(
    protocol: str,
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None,
    pulses_per_ms: float,
    workers: int,
) -> TallyTable:
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    kernel = _KERNELS[protocol]
    table = TallyTable.empty(protocol, config.slice_count)
    if n_pulses == 0:
        return table

    spans = [
        (chunk, start, min(CHUNK_PULSES, n_pulses - start))
        for chunk, start in enumerate(range(0, n_pulses, CHUNK_PULSES))
    ]

    def run_span(span):
        chunk, _start, size = span
        rng, env_rng = _chunk_rngs(seed, chunk)
        return size, kernel(channel, config, size, rng, env_rng, drift, pulses_per_ms)

    if workers <= 1 or len(spans) == 1:
        results = map(run_span, spans)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_span, spans))
    for size, (counts, errors) in results:
        table.add_in_place(counts, errors, size)
    return table


def run_tfqkd(
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None = None,
    pulses_per_ms: float = 1000.0,
    workers: int = 1,
) -> TallyTable:
    """Simulate the slice-reconciled twin-field procedure.

    Each pulse draws an intensity from the decoy set, a bit phase, a
    basis phase and a random phase per party; the middle node reports
    single-detector clicks as effective. Key tallies come from the
    X-basis signal pairs in matching or opposite slices, with the bit
    flip applied on d1 clicks.
    """
    return _run_chunked("tf", channel, config, n_pulses, seed, drift, pulses_per_ms, workers)


def run_pmmdi_npp(
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None = None,
    pulses_per_ms: float = 1000.0,
    workers: int = 1,
) -> TallyTable:
    """Simulate the key/test-state protocol without phase post-selection.

    Key mode sends fixed-phase pulses at the signal intensity; test mode
    sends phase-randomized decoys. Key pairs are kept when both parties
    chose key mode and exactly one detector clicked.
    """
    return _run_chunked("npp", channel, config, n_pulses, seed, drift, pulses_per_ms, workers)


def run_sns(
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None = None,
    pulses_per_ms: float = 1000.0,
    workers: int = 1,
) -> TallyTable:
    """Simulate the send/not-send protocol.

    Z windows encode bits in whether a phase-randomized pulse is sent at
    all, so the key basis needs no interference; X windows always send
    and are kept only inside the configured phase window.
    """
    return _run_chunked("sns", channel, config, n_pulses, seed, drift, pulses_per_ms, workers)


def run_protocol(protocol: str, *args, **kwargs) -> TallyTable:
    if protocol not in _KERNELS:
        raise ValueError(f"protocol must be one of {ENGINE_PROTOCOLS}, got {protocol!r}")
    return _run_chunked(protocol, *args, **kwargs)


def rate_from_table(
    protocol: str,
    table: TallyTable,
    channel: ChannelParams,
    config: ProtocolConfig,
) -> float:
    """Key rate implied by a tally table.

    npp and sns tallies feed the one-way rate skeleton; the tf tallies
    evaluate the tagging formula with the simulated gain and QBER and
    the detection model's asymptotic single-photon component.
    """
    from .tallies import key_qber, sifted_fraction, signal_gain, x_error

    if table.n_pulses == 0 or sifted_fraction(table) == 0.0:
        return 0.0
    gain, _, _, _ = signal_gain(table)
    qber, _, _, _ = key_qber(table)
    if protocol == "tf":
        model = model_detection_stats(channel, config)
        hybrid = DetectionStats(
            gain=gain,
            qber_z=qber,
            phase_error_x=model.phase_error_x,
            single_photon_gain=min(model.single_photon_gain, gain),
            single_photon_qber=model.single_photon_qber,
            single_photon_yield=model.single_photon_yield,
        )
        return tf_gllp_rate(hybrid, config)
    ex, _, _, _ = x_error(table)
    return tfstar_rate(
        sifted_fraction(table), ex, qber, config.ec_efficiency
    )


def simulated_rate(
    variant: ProtocolVariant,
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None = None,
) -> float:
    """Run a simulation and derive its key rate (see rate_from_table)."""
    protocol = {
        ProtocolVariant.NPP: "npp",
        ProtocolVariant.SNS: "sns",
        ProtocolVariant.TF_GLLP: "tf",
        ProtocolVariant.TF_STAR: "tf",
    }.get(variant)
    if protocol is None:
        raise ValueError(f"{variant.value} rates are analytic; no simulation route")
    table = _run_chunked(protocol, channel, config, n_pulses, seed, drift, 1000.0, 1)
    return rate_from_table(protocol, table, channel, config)


# -- per-pulse records for inspection ---------------------------------------

@dataclass(frozen=True)
class PartyPulse:
    """One party's preparation choices for a single pulse."""

    intensity: float
    bit_phase: float
    basis_phase: float
    random_phase: float
    mode: int
    send: bool


@dataclass(frozen=True)
class TrialRecord:
    """One pulse pair: both preparations, channel phases, outcome."""

    alice: PartyPulse
    bob: PartyPulse
    channel_phase: tuple[float, float]
    outcome: Outcome


def sample_trials(
    protocol: str,
    channel: ChannelParams,
    config: ProtocolConfig,
    n_pulses: int,
    seed: int,
    drift: DriftModel | None = None,
    pulses_per_ms: float = 1000.0,
) -> list[TrialRecord]:
    """Materialized per-pulse records, for debugging and small studies.

    Runs the same kernel as the tally path and captures its arrays, so
    records and tallies can never drift apart. Intended for small n.
    """
    if protocol not in _KERNELS:
        raise ValueError(f"protocol must be one of {ENGINE_PROTOCOLS}, got {protocol!r}")
    if n_pulses > CHUNK_PULSES:
        raise ValueError("trial records are capped at one chunk of pulses")
    if n_pulses == 0:
        return []
    rng, env_rng = _chunk_rngs(seed, 0)
    capture: dict = {}
    _KERNELS[protocol](
        channel, config, n_pulses, rng, env_rng, drift, pulses_per_ms, capture=capture
    )
    records = []
    for i in range(n_pulses):
        alice = PartyPulse(
            intensity=float(capture["intensity_a"][i]),
            bit_phase=float(capture["bit_a"][i]) * math.pi,
            basis_phase=float(capture["basis_a"][i]) * math.pi / 2.0,
            random_phase=float(capture["rho_a"][i]),
            mode=int(capture["mode_a"][i]),
            send=bool(capture["send_a"][i]),
        )
        bob = PartyPulse(
            intensity=float(capture["intensity_b"][i]),
            bit_phase=float(capture["bit_b"][i]) * math.pi,
            basis_phase=float(capture["basis_b"][i]) * math.pi / 2.0,
            random_phase=float(capture["rho_b"][i]),
            mode=int(capture["mode_b"][i]),
            send=bool(capture["send_b"][i]),
        )
        records.append(
            TrialRecord(
                alice=alice,
                bob=bob,
                channel_phase=(float(capture["tau"][i]), 0.0),
                outcome=Outcome(int(capture["outcome"][i])),
            )
        )
    return records
