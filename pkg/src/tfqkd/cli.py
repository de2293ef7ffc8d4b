"""Command-line interface.

Subcommands: bounds, rate-curve, simulate, table1, phase-demo.
Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error.
All floating-point output uses 6 significant digits (format '.6g'), and
every command is byte-reproducible for a fixed seed.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import engine
from .bounds import BOUND_NAMES, evaluate_bound
from .config import (
    AppConfig,
    ConfigError,
    default_seed,
    parse_config,
    serialize_config,
)
from .core import channel_transmittance
from .experiments import annotate_all
from .phase import (
    COMPENSATION_MODES,
    DriftModel,
    PulseTrainSchedule,
    apply_compensation,
    click_limited_estimator,
    drift_rate_for_length,
    sample_phase_path,
)
from .rates import ProtocolVariant, generate_rate_curve
from .tallies import TallyError, key_qber, sifted_fraction, signal_gain, x_error

CSV_HEADER = (
    "distance_km,eta,plob,srb,tgw,tf_gllp,pm,pmmdi,npp_mc,sns_mc,"
    "opt_mu_tf_gllp,opt_mu_pm,opt_mu_pmmdi"
)

_CURVE_NAME_TO_VARIANT = {
    "tf_gllp": ProtocolVariant.TF_GLLP,
    "pm": ProtocolVariant.PM,
    "pmmdi": ProtocolVariant.PM_MDI,
    "npp": ProtocolVariant.NPP,
    "sns": ProtocolVariant.SNS,
}

_SIM_PROTOCOL_VARIANT = {
    "tf": ProtocolVariant.TF_GLLP,
    "npp": ProtocolVariant.NPP,
    "sns": ProtocolVariant.SNS,
}


def fmt(value: float) -> str:
    """Canonical float rendering: 6 significant digits."""
    return format(float(value), ".6g")


def _load_config(path: str | None) -> AppConfig:
    if path is None:
        return AppConfig.defaults()
    return parse_config(path)


def _write_output(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- bounds -------------------------------------------------------------------

def cmd_bounds(args) -> int:
    names = [n.strip() for n in args.bounds.split(",") if n.strip()]
    for name in names:
        if name not in BOUND_NAMES:
            raise ConfigError(f"unknown bound {name!r}; choose from {BOUND_NAMES}")
    if args.eta is not None:
        if not 0.0 <= args.eta <= 1.0:
            raise ConfigError(f"transmittance must lie in [0, 1], got {args.eta}")
        eta = args.eta
    else:
        if args.length < 0:
            raise ConfigError("length must be >= 0")
        eta = channel_transmittance(args.length, args.alpha)
    lines = [f"{name}\t{fmt(evaluate_bound(name, eta))}" for name in names]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


# -- rate-curve ---------------------------------------------------------------

def _curve_rows(points) -> list[str]:
    rows = []
    for p in points:
        cells = [fmt(p.distance_km), fmt(p.eta)]
        for bname in ("plob", "srb", "tgw"):
            cells.append(fmt(p.bounds[bname]) if bname in p.bounds else "")
        for rname in ("tf_gllp", "pm", "pmmdi", "npp_mc", "sns_mc"):
            cells.append(fmt(p.rates[rname]) if rname in p.rates else "")
        for oname in ("tf_gllp", "pm", "pmmdi"):
            cells.append(fmt(p.optimal_mu[oname]) if oname in p.optimal_mu else "")
        rows.append(",".join(cells))
    return rows


def cmd_rate_curve(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    if args.step <= 0:
        raise ConfigError("step must be > 0")
    distances = list(np.arange(args.start, args.stop + args.step / 2.0, args.step))

    protocol_names = cfg["curve"]["protocols"]
    try:
        protocols = [_CURVE_NAME_TO_VARIANT[name] for name in protocol_names]
    except KeyError as exc:
        raise ConfigError(f"unknown curve protocol {exc.args[0]!r}")
    for bname in cfg["curve"]["bounds"]:
        if bname not in BOUND_NAMES:
            raise ConfigError(f"unknown bound {bname!r}")

    points = generate_rate_curve(
        cfg.channel(0.0),
        distances,
        protocols=protocols,
        bound_names=cfg["curve"]["bounds"],
        config=cfg.protocol(),
        mc_pulses=cfg["curve"]["mc_pulses"],
        seed=seed,
    )
    text = CSV_HEADER + "\n" + "".join(row + "\n" for row in _curve_rows(points))
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    sys.stdout.write(f"wrote {args.output} ({len(points)} rows), seed {seed}\n")

    if args.plot is not None:
        from .figures import save_rate_curve_figure

        fig_path = args.plot if args.plot != "auto" else _sibling_png(args.output)
        save_rate_curve_figure(points, fig_path)
        sys.stdout.write(f"wrote {fig_path}\n")
    return 0


def _sibling_png(path: str) -> str:
    stem = path[: -len(".csv")] if path.endswith(".csv") else path
    return stem + ".png"


# -- simulate -----------------------------------------------------------------

def _drift_from_config(cfg: AppConfig) -> DriftModel | None:
    rate = cfg["simulation"]["drift_rate_rad_per_ms"]
    if rate == 0.0:
        return None
    return DriftModel(
        rate_std_rad_per_ms=rate, window_ms=cfg["simulation"]["drift_window_ms"]
    )


def _simulate_report(args, cfg: AppConfig) -> str:
    variant = _SIM_PROTOCOL_VARIANT[args.protocol]
    config = cfg.protocol(variant)
    channel = cfg.channel(args.length)
    seed = args.seed if args.seed is not None else cfg.seed
    pulses = args.pulses if args.pulses is not None else cfg["simulation"]["n_pulses"]
    workers = args.workers if args.workers is not None else cfg["simulation"]["workers"]
    drift = _drift_from_config(cfg)

    table = engine.run_protocol(
        args.protocol,
        channel,
        config,
        pulses,
        seed,
        drift,
        cfg["simulation"]["pulses_per_ms"],
        workers,
    )

    lines = [
        f"protocol: {args.protocol}",
        f"pulses: {pulses}",
        f"seed: {seed}",
        f"length_km: {fmt(args.length)}",
        "channel: "
        + " ".join(
            f"{k}={fmt(v)}"
            for k, v in (
                ("loss_db_per_km", channel.loss_db_per_km),
                ("detector_efficiency", channel.detector_efficiency),
                ("dark_count_prob", channel.dark_count_prob),
                ("misalignment", channel.misalignment),
                ("asymmetry_db", channel.asymmetry_db),
            )
        ),
        "intensities: "
        + " ".join(
            f"{name}={fmt(v)}"
            for name, v in zip(("mu", "nu", "omega"), config.intensity_levels)
        ),
        f"slice_count: {config.slice_count}",
        f"drift_rate_rad_per_ms: {fmt(cfg['simulation']['drift_rate_rad_per_ms'])}",
        "",
        "tallies (intensity_a intensity_b mode slice_rel"
        " | no_click d0_only d1_only double_click | err_d0 err_d1):",
    ]
    rows = table.nonzero_rows()
    if not rows:
        lines.append("(no pulses)")
    for labels, counts, errors in rows:
        lines.append(
            " ".join(labels)
            + " | "
            + " ".join(str(c) for c in counts)
            + " | "
            + " ".join(str(e) for e in errors)
        )

    lines.append("")
    lines.append("derived:")
    if table.n_pulses == 0:
        lines += ["(empty tally, no statistics)", "rate: 0"]
    else:
        for label, accessor in (
            ("gain", signal_gain),
            ("qber_z", key_qber),
            ("phase_error_x", x_error),
        ):
            try:
                value, se, _, _ = accessor(table)
                lines.append(f"{label}: {fmt(value)} +- {fmt(se)}")
            except TallyError as exc:
                lines.append(f"{label}: n/a ({exc})")
        lines.append(f"sifted_fraction: {fmt(sifted_fraction(table))}")
        try:
            rate = engine.rate_from_table(args.protocol, table, channel, config)
            lines.append(f"rate: {fmt(rate)}")
        except TallyError as exc:
            lines.append(f"rate: n/a ({exc})")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.pulses is not None and args.pulses < 0:
        raise ConfigError("pulses must be >= 0")
    report = _simulate_report(args, cfg)
    _write_output(args.output, report)
    return 0


# -- table1 -------------------------------------------------------------------

def cmd_table1(args) -> int:
    comparisons = annotate_all(args.alpha, args.detector_efficiency)
    lines = [
        "reported long-haul experiments versus the repeaterless capacity",
        f"fiber loss {fmt(args.alpha)} dB/km for length rows; "
        f"device comparison at detector efficiency {fmt(args.detector_efficiency)}",
        "reference | protocol | clock | loss_db | key_rate_per_pulse | finite_size"
        " | plob_absolute | plob_device | beats_absolute | beats_device",
    ]
    for c in comparisons:
        r = c.record
        lines.append(
            " | ".join(
                (
                    r.reference,
                    r.protocol,
                    r.clock_rate,
                    fmt(c.loss_db),
                    fmt(r.key_rate_per_pulse),
                    "yes" if r.finite_size else "no",
                    fmt(c.absolute_plob),
                    fmt(c.device_plob),
                    "yes" if c.beats_absolute else "no",
                    "yes" if c.beats_device else "no",
                )
            )
        )
    lines.append(
        "note: key rates are the published values; only the bound comparison"
        " is computed here"
    )
    _write_output(args.output, "\n".join(lines) + "\n")
    return 0


# -- phase-demo ---------------------------------------------------------------

def _phase_demo_mode(mode, path, schedule, estimator) -> list[str]:
    result = apply_compensation(mode, path, schedule, estimator=estimator)
    residuals = result.residuals.ravel()
    counts, edges = np.histogram(residuals, bins=40)
    lines = [
        f"mode: {mode}",
        f"residual_samples: {residuals.size}",
        f"residual_std_rad: {fmt(float(np.std(residuals)))}",
        f"epsilon: {fmt(result.epsilon)}",
        "histogram (bin_lo bin_hi count):",
    ]
    lines += [
        f"{fmt(edges[i])} {fmt(edges[i + 1])} {int(counts[i])}"
        for i in range(len(counts))
    ]
    lines.append("")
    return lines


def cmd_phase_demo(args) -> int:
    if args.mode != "both" and args.mode not in COMPENSATION_MODES:
        raise ConfigError(
            f"mode must be one of {COMPENSATION_MODES + ('both',)}, got {args.mode!r}"
        )
    rate = args.drift_rate
    if args.length is not None:
        rate = drift_rate_for_length(args.length)
    seed = args.seed if args.seed is not None else default_seed()
    model = DriftModel(rate_std_rad_per_ms=rate, window_ms=args.window_ms)
    schedule = PulseTrainSchedule(
        signal_us=args.signal_us,
        reference_us=args.reference_us,
        recovery_us=args.recovery_us,
    )
    path = sample_phase_path(model, args.duration_ms, seed)
    estimator = None
    if args.estimator == "clicks":
        estimator = click_limited_estimator(args.reference_pulses, 0.5, seed + 1)

    modes = COMPENSATION_MODES if args.mode == "both" else (args.mode,)
    lines = [
        "phase-demo",
        f"drift_rate_rad_per_ms: {fmt(rate)}",
        f"window_ms: {fmt(args.window_ms)}",
        f"schedule_us: signal={fmt(args.signal_us)} reference={fmt(args.reference_us)}"
        f" recovery={fmt(args.recovery_us)}",
        f"duration_ms: {fmt(args.duration_ms)}",
        f"latency_ms: {fmt(schedule.signal_ms)}",
        f"seed: {seed}",
        f"estimator: {args.estimator}",
        "",
    ]
    residuals_by_mode = {}
    for mode in modes:
        result = apply_compensation(mode, path, schedule, estimator=estimator)
        residuals_by_mode[mode] = result.residuals
        lines += _phase_demo_mode(mode, path, schedule, estimator)
    _write_output(args.output, "\n".join(lines))

    if args.plot is not None:
        from .figures import save_phase_histogram

        fig_path = args.plot
        if fig_path == "auto":
            fig_path = (args.output or "phase_demo") + ".png"
        save_phase_histogram(residuals_by_mode, fig_path)
        sys.stdout.write(f"wrote {fig_path}\n")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfqkd",
        description="Key-rate analysis and simulation for twin-field-type QKD",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="evaluate capacity bounds")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--eta", type=float, help="channel transmittance in [0, 1]")
    group.add_argument("--length", type=float, help="fiber length in km")
    p.add_argument("--alpha", type=float, default=0.2, help="fiber loss dB/km")
    p.add_argument("--bounds", default="plob,srb,tgw", help="comma-separated bound names")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rate-curve", help="rate-versus-distance CSV")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=600.0)
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--seed", type=int, help="seed for the Monte Carlo columns")
    p.add_argument("-o", "--output", required=True, help="CSV output path")
    p.add_argument("--plot", nargs="?", const="auto", help="also render a figure")
    p.set_defaults(func=cmd_rate_curve)

    p = sub.add_parser("simulate", help="run one Monte Carlo scenario")
    p.add_argument("--protocol", required=True, choices=sorted(engine.ENGINE_PROTOCOLS))
    p.add_argument("--config", help="configuration file")
    p.add_argument("--length", type=float, required=True, help="fiber length in km")
    p.add_argument("--pulses", type=int, help="pulse pairs to simulate")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", help="report path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table1", help="experiment comparison table")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--detector-efficiency", type=float, default=0.4)
    p.add_argument("-o", "--output", help="report path (default stdout)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("phase-demo", help="drift compensation demonstration")
    p.add_argument("--drift-rate", type=float, default=6.0, help="rad/ms")
    p.add_argument("--length", type=float, help="look drift rate up from fiber length")
    p.add_argument("--window-ms", type=float, default=1.0)
    p.add_argument("--signal-us", type=float, default=50.0)
    p.add_argument("--reference-us", type=float, default=50.0)
    p.add_argument("--recovery-us", type=float, default=50.0)
    p.add_argument("--duration-ms", type=float, default=2000.0)
    p.add_argument("--mode", default="both")
    p.add_argument("--estimator", choices=("perfect", "clicks"), default="perfect")
    p.add_argument("--reference-pulses", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", help="report path (default stdout)")
    p.add_argument("--plot", nargs="?", const="auto", help="also render a figure")
    p.set_defaults(func=cmd_phase_demo)

    p = sub.add_parser("show-config", help="print the effective configuration")
    p.add_argument("--config", help="configuration file")
    p.set_defaults(func=cmd_show_config)

    return parser


def cmd_show_config(args) -> int:
    cfg = _load_config(args.config)
    sys.stdout.write(serialize_config(cfg))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
