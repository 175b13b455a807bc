"""Command-line front end.

Subcommands: simulate, analyze, sweep, characterize, g2. Reports are
emitted on stdout in a chosen format; per-stage timings go to stderr so
that re-running identical inputs yields byte-identical report output.

Exit codes: 0 ok, 2 config error, 3 model error, 4 fit error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calibrate, config, protocol, security, session, timetag
from .errors import ConfigError, FitError, ModelError
from .streams import TimeTagStream, read_stream_binary, read_stream_csv, write_stream_binary, write_stream_csv

logger = logging.getLogger("spqkd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_FIT = 4


@dataclass
class RunReport:
    """Everything one invocation produced, ready for emission."""

    command: str
    config_path: str
    seed: int | None
    config_echo: dict[str, dict[str, str]]
    outputs: list[str] = field(default_factory=list)
    headline: dict[str, object] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def emit_report(report: RunReport, fmt: str = "human") -> str:
    """Serialize a report with stable field ordering.

    Timings are not part of the emitted text (they are logged instead), so
    identical inputs re-emit identical bytes.
    """
    if fmt == "human":
        lines = [f"spqkd {report.command} report"]
        lines.append(f"config: {report.config_path}")
        if report.seed is not None:
            lines.append(f"seed: {report.seed}")
        for path in report.outputs:
            lines.append(f"output: {path}")
        for key, value in report.headline.items():
            lines.append(f"{key}: {_fmt(value)}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["key,value"]
        for key, value in report.headline.items():
            lines.append(f"{key},{_fmt(value)}")
        return "\n".join(lines) + "\n"
    if fmt == "structured":
        payload = {
            "command": report.command,
            "config": report.config_path,
            "seed": report.seed,
            "outputs": report.outputs,
            "headline": report.headline,
            "config_echo": report.config_echo,
        }
        return json.dumps(payload, indent=2) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


class _Stopwatch:
    def __init__(self, report: RunReport):
        self.report = report

    def time(self, stage: str):
        return _StageTimer(self.report, stage)


class _StageTimer:
    def __init__(self, report: RunReport, stage: str):
        self.report = report
        self.stage = stage

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self.start
        self.report.timings_s[self.stage] = elapsed
        logger.info("%s: %.3f s", self.stage, elapsed)
        return False


def _read_stream(path: Path) -> TimeTagStream:
    if path.suffix == ".bin":
        return read_stream_binary(path)
    return read_stream_csv(path)


def _write_alice_csv(ledger: protocol.PulseLedger, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("pulse_index,alice_bit\n")
        for i, bit in enumerate(ledger.bits):
            fh.write(f"{i},{bit}\n")


def _read_alice_csv(path: Path) -> protocol.PulseLedger:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    bits = np.zeros(int(rows[:, 0].max()) + 1, dtype=np.uint8)
    bits[rows[:, 0]] = rows[:, 1]
    return protocol.PulseLedger(bits)


def _scan_and_report(
    report: RunReport,
    stream: TimeTagStream,
    ledger: protocol.PulseLedger,
    cfg: session.ScenarioConfig,
    t0_ns: float,
    deltas: list[float],
    primary: float,
    out_dir: Path,
) -> None:
    watch = _Stopwatch(report)
    rep_rate = cfg.source.rep_rate_hz
    with watch.time("histograms"):
        for channel, name in ((1, "apd1"), (2, "apd2")):
            mask = (stream.channels == 0) | (stream.channels == channel)
            sub = TimeTagStream(stream.channels[mask], stream.times_ps[mask])
            hist = timetag.build_histogram(sub, rep_rate)
            path = out_dir / f"histogram_{name}.csv"
            timetag.write_histogram_csv(hist, path)
            report.outputs.append(str(path))
    with watch.time("filter_scan"):
        rows = timetag.filter_scan(stream, ledger, rep_rate, t0_ns, deltas, source=cfg.source)
        scan_path = out_dir / "filter_scan.csv"
        timetag.write_scan_csv(rows, scan_path)
        report.outputs.append(str(scan_path))
    with watch.time("sift_primary"):
        window = timetag.FilterWindow(t0_ns, primary)
        filtered = timetag.apply_window(stream, window, rep_rate)
        key = protocol.b92_sift(ledger, filtered, rep_rate)
        key_path = out_dir / f"sifted_{primary:g}ns.csv"
        protocol.write_sifted_csv(key, key_path)
        report.outputs.append(str(key_path))
    duration = stream.trigger_times_ps.size / rep_rate
    report.headline["n_pulses"] = int(stream.trigger_times_ps.size)
    report.headline["duration_s"] = duration
    report.headline["primary_delta_t_ns"] = primary
    if len(key):
        qber, n_sifted, n_err = protocol.measure_qber(key)
        report.headline["sifted_bits"] = n_sifted
        report.headline["sifted_errors"] = n_err
        report.headline["qber"] = qber
        report.headline["sifted_rate_bps"] = n_sifted / duration
        report.headline["skr_measured_bps"] = n_sifted / duration / 2.0
        eq1 = security.skr_from_observed(
            p_click=n_sifted / stream.trigger_times_ps.size,
            qber=qber,
            p_m=0.5 * cfg.source.mu**2 * cfg.source.g2_zero,
            rep_rate_hz=rep_rate,
        )
        report.headline["skr_eq1_bps"] = eq1.skr_bps
    else:
        report.headline["sifted_bits"] = 0


def _cmd_simulate(args: dict, report: RunReport, parser) -> None:
    cfg = config.scenario_from_config(parser, args.get("seed"))
    report.seed = cfg.seed
    t0_ns, deltas, primary = config.filter_settings(parser)
    out_dir = Path(args.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    watch = _Stopwatch(report)
    with watch.time("simulate"):
        ledger, stream = session.run_qkd_session(cfg)
    with watch.time("write_streams"):
        csv_path = out_dir / "stream.csv"
        bin_path = out_dir / "stream.bin"
        alice_path = out_dir / "alice.csv"
        write_stream_csv(stream, csv_path)
        write_stream_binary(stream, bin_path)
        _write_alice_csv(ledger, alice_path)
        report.outputs += [str(csv_path), str(bin_path), str(alice_path)]
    _scan_and_report(report, stream, ledger, cfg, t0_ns, deltas, primary, out_dir)


def _cmd_analyze(args: dict, report: RunReport, parser) -> None:
    stream_path = args.get("stream")
    alice_path = args.get("alice")
    if not stream_path or not alice_path:
        raise ConfigError("analyze requires --stream and --alice")
    cfg = config.scenario_from_config(parser, args.get("seed") or 0)
    t0_ns, deltas, primary = config.filter_settings(parser)
    out_dir = Path(args.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.seed = None
    stream = _read_stream(Path(stream_path))
    ledger = _read_alice_csv(Path(alice_path))
    _scan_and_report(report, stream, ledger, cfg, t0_ns, deltas, primary, out_dir)


def _cmd_sweep(args: dict, report: RunReport, parser) -> None:
    losses, windows = config.sweep_settings(parser)
    out_dir = Path(args.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    watch = _Stopwatch(report)
    with watch.time("sweep"):
        for label, params in windows:
            rows = security.sweep_loss(params, losses)
            path = out_dir / f"sweep_{label}.csv"
            security.write_sweep_csv(rows, path)
            report.outputs.append(str(path))
            zero_loss = rows[0][1]
            cutoff = security.positive_rate_cutoff_db(rows)
            report.headline[f"{label}_skr_bps_at_{losses[0]:g}db"] = max(zero_loss.skr_bps, 0.0)
            report.headline[f"{label}_qber_at_{losses[0]:g}db"] = zero_loss.qber_expected
            report.headline[f"{label}_cutoff_db"] = cutoff if cutoff is not None else "none"


def _cmd_characterize(args: dict, report: RunReport, parser) -> None:
    did_anything = False
    watch = _Stopwatch(report)
    if args.get("saturation"):
        with watch.time("fit_saturation"):
            try:
                points = calibrate.read_saturation_csv(args["saturation"])
                model, rmse = calibrate.fit_saturation(points)
            except ValueError as exc:
                raise ConfigError(f"unusable saturation data: {exc}")
        report.headline["saturation_r_inf_hz"] = model.r_inf_hz
        report.headline["saturation_p_sat"] = model.p_sat
        report.headline["saturation_rmse_hz"] = rmse
        did_anything = True
    if args.get("lifetime"):
        with watch.time("fit_lifetime"):
            hist = timetag.read_histogram_csv(args["lifetime"])
            lifetime, sigma = calibrate.fit_lifetime(hist)
        report.headline["lifetime_ns"] = lifetime
        report.headline["lifetime_sigma_ns"] = sigma
        did_anything = True
    if not did_anything:
        raise ConfigError("characterize requires --saturation and/or --lifetime")


def _cmd_g2(args: dict, report: RunReport, parser) -> None:
    cfg = config.scenario_from_config(parser, args.get("seed"))
    report.seed = cfg.seed
    watch = _Stopwatch(report)
    with watch.time("hbt_session"):
        stream = session.run_hbt_session(cfg)
    with watch.time("estimate_g2"):
        estimate = timetag.estimate_g2(stream, cfg.source.rep_rate_hz)
    report.headline["g2_configured"] = cfg.source.g2_zero
    report.headline["g2_estimate"] = estimate.value
    report.headline["g2_uncertainty"] = estimate.uncertainty
    report.headline["n_pulses"] = cfg.n_pulses


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "characterize": _cmd_characterize,
    "g2": _cmd_g2,
}


def run_config(config_path: str | None, overrides: dict) -> RunReport:
    """Dispatch one subcommand against a parsed config file."""
    command = overrides.get("command")
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if command == "characterize" and config_path is None:
        parser = None
        echo: dict[str, dict[str, str]] = {}
        path_str = ""
    else:
        if config_path is None:
            raise ConfigError(f"{command} requires --config")
        path = config.resolve_config_path(str(config_path))
        parser = config.load_config(path)
        echo = config.echo_config(parser)
        path_str = str(path)
    report = RunReport(
        command=command,
        config_path=path_str,
        seed=overrides.get("seed"),
        config_echo=echo,
    )
    _COMMANDS[command](overrides, report, parser)
    return report


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spqkd",
        description="QKD simulation and analysis for imperfect single-photon sources",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", required=True, help="scenario config file or shipped name")
        p.add_argument("--seed", type=int, default=None, help="override the [run] seed")
        p.add_argument("--out-dir", default=".", help="directory for produced files")
        p.add_argument(
            "--format",
            choices=("human", "csv", "structured"),
            default="human",
            help="report format on stdout",
        )

    add_common(sub.add_parser("simulate", help="run a QKD session and analyze it"))
    pa = sub.add_parser("analyze", help="analyze an existing stream")
    add_common(pa)
    pa.add_argument("--stream", required=True, help="stream file (.csv or .bin)")
    pa.add_argument("--alice", required=True, help="alice truth CSV (pulse_index,alice_bit)")
    add_common(sub.add_parser("sweep", help="secret key rate versus channel loss"))
    pc = sub.add_parser("characterize", help="fit saturation/lifetime data")
    pc.add_argument("--saturation", help="power,rate_hz CSV")
    pc.add_argument("--lifetime", help="bin_ns,counts CSV")
    pc.add_argument(
        "--format", choices=("human", "csv", "structured"), default="human"
    )
    add_common(sub.add_parser("g2", help="run an HBT session and estimate g2(0)"))
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s", stream=sys.stderr)
    ap = _build_argparser()
    args = vars(ap.parse_args(argv))
    fmt = args.get("format", "human")
    try:
        report = run_config(args.get("config"), args)
        sys.stdout.write(emit_report(report, fmt))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
