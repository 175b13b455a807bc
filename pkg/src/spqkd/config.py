"""Scenario configuration files.

Flat sectioned key-value text (INI syntax) with units spelled out in key
names. Every simulated run draws all of its randomness from the single
`seed` key in [run]; there is no wall-clock fallback.
"""

from __future__ import annotations

import configparser
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .photonics import ChannelParams, DetectorParams, SourceParams
from .security import SweepParams
from .session import ScenarioConfig

_CONFIG_PACKAGE = "spqkd.configs"


def builtin_config_path(name: str) -> Path:
    """Path of a config shipped with the package (for example 'paper_b92')."""
    filename = name if name.endswith(".cfg") else f"{name}.cfg"
    path = resources.files(_CONFIG_PACKAGE) / filename
    with resources.as_file(path) as concrete:
        return Path(concrete)


def resolve_config_path(spec: str) -> Path:
    """Accept a filesystem path or the bare name of a shipped config."""
    path = Path(spec)
    if path.exists():
        return path
    try:
        builtin = builtin_config_path(spec)
    except (FileNotFoundError, ModuleNotFoundError):
        raise ConfigError(f"config file not found: {spec}")
    if builtin.exists():
        return builtin
    raise ConfigError(f"config file not found: {spec}")


def load_config(path: str | Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}")
    return parser


def _get(parser: configparser.ConfigParser, section: str, key: str) -> str:
    try:
        return parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(str(exc))


def _get_float(parser: configparser.ConfigParser, section: str, key: str) -> float:
    raw = _get(parser, section, key)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number")


def _get_float_default(
    parser: configparser.ConfigParser, section: str, key: str, default: float
) -> float:
    if parser.has_option(section, key):
        return _get_float(parser, section, key)
    return default


def _parse_pattern(raw: str) -> tuple[int, ...]:
    cleaned = raw.replace(",", "").replace(" ", "")
    if not cleaned or any(c not in "01" for c in cleaned):
        raise ConfigError(f"pattern must be a non-empty string of 0/1, got {raw!r}")
    return tuple(int(c) for c in cleaned)


def require_seed(parser: configparser.ConfigParser, override: int | None) -> int:
    if override is not None:
        return int(override)
    if not parser.has_option("run", "seed"):
        raise ConfigError(
            "no seed: supply --seed or a [run] seed key (runs are never "
            "seeded from the clock)"
        )
    raw = parser.get("run", "seed")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[run] seed = {raw!r} is not an integer")


def scenario_from_config(
    parser: configparser.ConfigParser, seed_override: int | None = None
) -> ScenarioConfig:
    source = SourceParams(
        mu=_get_float(parser, "source", "mu"),
        g2_zero=_get_float(parser, "source", "g2_zero"),
        lifetime_ns=_get_float(parser, "source", "lifetime_ns"),
        rep_rate_hz=_get_float(parser, "source", "rep_rate_hz"),
        sync_delay_ns=_get_float_default(parser, "source", "sync_delay_ns", 0.0),
        jitter_ns=_get_float_default(parser, "source", "jitter_ns", 0.0),
    )
    channel = ChannelParams(
        loss_db=_get_float_default(parser, "channel", "loss_db", 0.0),
        setup_transmission=_get_float_default(parser, "channel", "setup_transmission", 1.0),
    )
    detectors = tuple(
        DetectorParams(
            efficiency=_get_float(parser, sec, "efficiency"),
            dark_rate_hz=_get_float(parser, sec, "dark_rate_hz"),
        )
        for sec in ("detector1", "detector2")
    )
    pattern = _parse_pattern(_get(parser, "protocol", "pattern"))
    misalignment = _get_float_default(parser, "protocol", "pol_misalignment_deg", 0.0)
    duration = _get_float(parser, "run", "duration_s")
    seed = require_seed(parser, seed_override)
    try:
        return ScenarioConfig(
            source=source,
            channel=channel,
            detectors=detectors,  # type: ignore[arg-type]
            pol_misalignment_deg=misalignment,
            pattern=pattern,
            duration_s=duration,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def filter_settings(parser: configparser.ConfigParser) -> tuple[float, list[float], float]:
    """Window anchor, scan widths and the primary reporting width."""
    t0 = _get_float(parser, "filter", "t0_ns")
    raw = _get(parser, "filter", "delta_t_ns_list")
    try:
        deltas = [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"[filter] delta_t_ns_list = {raw!r} is not a number list")
    if not deltas:
        raise ConfigError("[filter] delta_t_ns_list is empty")
    primary = _get_float_default(parser, "filter", "primary_delta_t_ns", deltas[0])
    return t0, deltas, primary


def sweep_settings(
    parser: configparser.ConfigParser,
) -> tuple[list[float], list[tuple[str, SweepParams]]]:
    """Loss grid plus one SweepParams per [window.*] section."""
    start = _get_float(parser, "sweep", "loss_db_start")
    stop = _get_float(parser, "sweep", "loss_db_stop")
    step = _get_float(parser, "sweep", "loss_db_step")
    if step <= 0 or stop < start:
        raise ConfigError("[sweep] requires loss_db_step > 0 and stop >= start")
    losses: list[float] = []
    loss = start
    while loss <= stop + 1e-9:
        losses.append(round(loss, 9))
        loss += step

    windows: list[tuple[str, SweepParams]] = []
    for section in parser.sections():
        if not section.startswith("window."):
            continue
        label = section.split(".", 1)[1]
        windows.append(
            (
                label,
                SweepParams(
                    mu=_get_float(parser, section, "mu"),
                    g2_zero=_get_float(parser, section, "g2_zero"),
                    setup_transmission=_get_float(parser, "sweep", "setup_transmission"),
                    det_efficiency=_get_float(parser, "sweep", "det_efficiency"),
                    dark_rate_hz=_get_float(parser, "sweep", "dark_rate_hz"),
                    q=_get_float(parser, "sweep", "q"),
                    delta_t_ns=_get_float(parser, section, "delta_t_ns"),
                    lifetime_ns=_get_float(parser, "sweep", "lifetime_ns"),
                    rep_rate_hz=_get_float(parser, "sweep", "rep_rate_hz"),
                ),
            )
        )
    if not windows:
        raise ConfigError("sweep config needs at least one [window.*] section")
    return losses, windows


def echo_config(parser: configparser.ConfigParser) -> dict[str, dict[str, str]]:
    return {section: dict(parser.items(section)) for section in parser.sections()}
