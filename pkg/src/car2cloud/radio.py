"""Radio environment: WINNER-II B1 path loss, uplink link budget, association.

The path-loss model is the two-slope urban-micro LOS formula with breakpoint
distance d_bp = 4 * h'_bs * h'_ue * f / c, where effective antenna heights
are the physical heights minus 1 m.  SNR follows the additive link budget

    snr = tx_power + ue_gain + bs_gain - path_loss - (noise_power + noise_figure)

with every term in dB/dBm.  All functions here are pure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple

from .errors import ConfigError, ParseError, ValidationError

SPEED_OF_LIGHT = 3.0e8  # m/s

# The B1 formula is not validated below roughly 10 m; shorter distances are
# clamped so SNR stays bounded as a vehicle drives past a station.
MIN_MODEL_DISTANCE = 10.0


@dataclass(frozen=True)
class BaseStation:
    station_id: str
    x: float
    y: float
    antenna_gain: float = 15.0  # dBi
    height: float = 10.0        # m

    def __post_init__(self) -> None:
        if self.height <= 1.0:
            raise ConfigError(
                f"station {self.station_id!r}: height must exceed 1 m "
                f"(effective height h-1 must stay positive)"
            )


@dataclass(frozen=True)
class LinkBudgetConfig:
    carrier_freq_ghz: float = 1.8
    tx_power_dbm: float = 23.0
    ue_gain_dbi: float = 1.0
    ue_height_m: float = 1.5
    noise_figure_db: float = 6.0
    noise_power_dbm: float = -100.0
    # Hook for shadowing/fading studies: added to the path loss as-is.
    extra_loss_db: float = 0.0

    def __post_init__(self) -> None:
        if self.carrier_freq_ghz <= 0:
            raise ConfigError("link.carrier_freq_ghz must be positive")


class LinkSample(NamedTuple):
    """Link-budget evaluation for one vehicle-station pair."""

    distance: float
    path_loss: float
    snr: float


@dataclass(frozen=True)
class SnrSample:
    """Per-tick serving-link record; snr satisfies the budget identity."""

    vehicle_id: str
    t: int
    serving_station: str
    distance: float
    path_loss: float
    snr: float


def breakpoint_distance(cfg: LinkBudgetConfig, bs_height: float = 10.0) -> float:
    """B1 breakpoint distance 4 * h'_bs * h'_ue * f / c in meters."""
    h_bs = bs_height - 1.0
    h_ue = cfg.ue_height_m - 1.0
    if h_bs <= 0 or h_ue <= 0:
        raise ConfigError("antenna heights must exceed 1 m")
    return 4.0 * h_bs * h_ue * cfg.carrier_freq_ghz * 1e9 / SPEED_OF_LIGHT


def path_loss_b1(distance: float, cfg: LinkBudgetConfig, bs_height: float = 10.0) -> float:
    """WINNER-II B1 LOS path loss in dB at the given 2-D distance.

    Below the breakpoint: PL = 22.7 log10(d) + 41.0 + 20 log10(f/5GHz).
    Beyond it:  PL = 40 log10(d) + 9.45 - 17.3 log10(h'_bs)
                - 17.3 log10(h'_ue) + 2.7 log10(f/5GHz).
    Distances under 10 m are clamped to 10 m.
    """
    d = max(distance, MIN_MODEL_DISTANCE)
    d_bp = breakpoint_distance(cfg, bs_height)
    f_rel = cfg.carrier_freq_ghz / 5.0
    if d <= d_bp:
        return 22.7 * math.log10(d) + 41.0 + 20.0 * math.log10(f_rel)
    h_bs = bs_height - 1.0
    h_ue = cfg.ue_height_m - 1.0
    return (
        40.0 * math.log10(d)
        + 9.45
        - 17.3 * math.log10(h_bs)
        - 17.3 * math.log10(h_ue)
        + 2.7 * math.log10(f_rel)
    )


def snr(
    vehicle_pos: tuple[float, float], station: BaseStation, cfg: LinkBudgetConfig
) -> LinkSample:
    """Distance, total path loss and uplink SNR for one vehicle-station pair.

    The reported path loss includes the configured extra_loss_db offset, so
    the budget identity holds exactly against the reported value.
    """
    dx = vehicle_pos[0] - station.x
    dy = vehicle_pos[1] - station.y
    distance = math.hypot(dx, dy)
    loss = path_loss_b1(distance, cfg, station.height) + cfg.extra_loss_db
    value = (
        cfg.tx_power_dbm
        + cfg.ue_gain_dbi
        + station.antenna_gain
        - loss
        - (cfg.noise_power_dbm + cfg.noise_figure_db)
    )
    return LinkSample(distance, loss, value)


def best_link(
    vehicle_pos: tuple[float, float],
    stations: Iterable[BaseStation],
    cfg: LinkBudgetConfig,
) -> tuple[BaseStation, LinkSample]:
    """Best-SNR station for a position; ties go to the smallest station id.

    Iterating in canonical id order with a strict-improvement test makes the
    result independent of the input collection's ordering.
    """
    ordered = sorted(stations, key=lambda s: str(s.station_id))
    if not ordered:
        raise ConfigError("cannot associate: no base stations configured")
    best = None
    best_sample = None
    for station in ordered:
        sample = snr(vehicle_pos, station, cfg)
        if best_sample is None or sample.snr > best_sample.snr:
            best, best_sample = station, sample
    return best, best_sample


def associate(
    vehicle_pos: tuple[float, float],
    stations: Iterable[BaseStation],
    cfg: LinkBudgetConfig,
) -> str:
    """Station id the vehicle at this position attaches to."""
    station, _ = best_link(vehicle_pos, stations, cfg)
    return station.station_id


def snr_sample(
    vehicle_id: str,
    t: int,
    vehicle_pos: tuple[float, float],
    stations: Iterable[BaseStation],
    cfg: LinkBudgetConfig,
) -> SnrSample:
    """Full serving-link record (association plus budget) for one tick."""
    station, link = best_link(vehicle_pos, stations, cfg)
    return SnrSample(
        vehicle_id, t, station.station_id, link.distance, link.path_loss, link.snr
    )


STATION_CSV_FIELDS = ("station_id", "x", "y", "antenna_gain", "height")


def parse_stations_csv(stream: IO[str]) -> list[BaseStation]:
    """Read base stations from CSV; gain and height columns are optional."""
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("station CSV is empty (missing header)") from None
    if tuple(header) != STATION_CSV_FIELDS[: len(header)] or len(header) < 3:
        raise ParseError(f"bad station CSV header: {','.join(header)!r}")
    stations: list[BaseStation] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        sid = row[0]
        if not sid:
            raise ParseError(f"line {lineno}: empty station_id")
        if sid in seen:
            raise ValidationError(f"line {lineno}: duplicate station_id {sid!r}")
        seen.add(sid)
        try:
            x, y = float(row[1]), float(row[2])
            gain = float(row[3]) if len(row) > 3 and row[3] != "" else 15.0
            height = float(row[4]) if len(row) > 4 and row[4] != "" else 10.0
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        stations.append(BaseStation(sid, x, y, antenna_gain=gain, height=height))
    return stations
