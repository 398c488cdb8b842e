"""White-space ground truth: TV station registry, protection contours and the
per-location channel availability a BS would get from a geolocation database."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cfo import LIGHT_SPEED

TV_BAND_LOW = 470e6
TV_BAND_HIGH = 698e6
TV_CHANNEL_WIDTH = 6e6
FIRST_TV_CHANNEL = 14
TV_CHANNELS = tuple(range(FIRST_TV_CHANNEL, FIRST_TV_CHANNEL + int(round((TV_BAND_HIGH - TV_BAND_LOW) / TV_CHANNEL_WIDTH))))

PROTECTION_RSS_DBM = -84.0
SEPARATION_M = 6000.0
ANTENNA_CORRECTION_DB = 7.5


class SpectrumError(ValueError):
    pass


def channel_low_edge(channel: int) -> float:
    if channel not in TV_CHANNELS:
        raise SpectrumError(f"channel {channel} is outside the UHF TV band")
    return TV_BAND_LOW + (channel - FIRST_TV_CHANNEL) * TV_CHANNEL_WIDTH


def channel_center(channel: int) -> float:
    return channel_low_edge(channel) + TV_CHANNEL_WIDTH / 2


def channel_for_freq(freq: float) -> int:
    ch = FIRST_TV_CHANNEL + int(math.floor((freq - TV_BAND_LOW) / TV_CHANNEL_WIDTH))
    if ch not in TV_CHANNELS:
        raise SpectrumError(f"{freq:g} Hz is outside the UHF TV band")
    return ch


def antenna_correction(h_m: float) -> float:
    """Hata urban mobile-antenna correction factor in dB."""
    if not h_m > 0:
        raise SpectrumError("antenna height must be positive")
    return 3.2 * math.log10(11.5 * h_m) ** 2 - 4.97


def correction_for_height(h_m: float, reference_height: float = 10.0) -> float:
    """RSS correction (dB) for a sensor at ``h_m`` relative to the reference height."""
    return antenna_correction(reference_height) - antenna_correction(h_m)


def free_space_loss(distance: float, freq: float) -> float:
    return 20 * math.log10(4 * math.pi * distance * freq / LIGHT_SPEED)


@dataclass(frozen=True)
class PropagationModel:
    """Log-distance path loss anchored at free-space loss at ``reference_distance``.

    ``exponent=2`` is plain free space.
    """

    exponent: float = 3.5
    reference_distance: float = 1.0
    reference_loss_db: float | None = None

    @classmethod
    def free_space(cls) -> "PropagationModel":
        return cls(exponent=2.0)

    def reference_loss(self, freq: float) -> float:
        if self.reference_loss_db is not None:
            return self.reference_loss_db
        return free_space_loss(self.reference_distance, freq)

    def path_loss(self, distance: float, freq: float) -> float:
        d = max(distance, 1.0)
        return self.reference_loss(freq) + 10 * self.exponent * math.log10(d / self.reference_distance)

    def path_loss_array(self, distance: np.ndarray, freq: float) -> np.ndarray:
        d = np.maximum(distance, 1.0)
        return self.reference_loss(freq) + 10 * self.exponent * np.log10(d / self.reference_distance)

    def range_for_loss(self, loss_db: float, freq: float) -> float:
        """Distance at which path loss reaches ``loss_db``."""
        return self.reference_distance * 10 ** ((loss_db - self.reference_loss(freq)) / (10 * self.exponent))


@dataclass(frozen=True)
class TvStation:
    channel_index: int
    location: tuple[float, float]
    tx_power: float
    antenna_height: float = 10.0

    def __post_init__(self):
        channel_low_edge(self.channel_index)
        if not math.isfinite(self.tx_power):
            raise SpectrumError("station tx_power must be finite")
        object.__setattr__(self, "location", (float(self.location[0]), float(self.location[1])))

    @property
    def freq(self) -> float:
        return channel_center(self.channel_index)


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def rss_at(
    station: TvStation,
    point: Sequence[float],
    model: PropagationModel = PropagationModel(),
    correction_db: float = ANTENNA_CORRECTION_DB,
) -> float:
    """Corrected RSS (dBm) of ``station`` at ``point``; distance clamps at 1 m."""
    return station.tx_power - model.path_loss(_dist(station.location, point), station.freq) + correction_db


def contour_radius(
    station: TvStation,
    model: PropagationModel = PropagationModel(),
    correction_db: float = ANTENNA_CORRECTION_DB,
    threshold_dbm: float = PROTECTION_RSS_DBM,
) -> float:
    """Radius of the region where corrected RSS exceeds the protection threshold."""
    budget = station.tx_power + correction_db - threshold_dbm
    return model.range_for_loss(budget, station.freq)


def parse_station_registry(text: str) -> list[TvStation]:
    """Whitespace table: channel x_m y_m tx_power_dbm height_m; '#' starts a comment line."""
    stations = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise SpectrumError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            ch = int(parts[0])
            x, y, p, h = (float(v) for v in parts[1:])
        except ValueError as exc:
            raise SpectrumError(f"line {lineno}: {exc}") from None
        try:
            stations.append(TvStation(ch, (x, y), p, h))
        except SpectrumError as exc:
            raise SpectrumError(f"line {lineno}: {exc}") from None
    return stations


def load_station_registry(path: str | Path) -> list[TvStation]:
    return parse_station_registry(Path(path).read_text())


def format_station_registry(stations: Iterable[TvStation]) -> str:
    lines = ["# channel x_m y_m tx_power_dbm height_m"]
    for s in stations:
        lines.append(f"{s.channel_index} {s.location[0]:g} {s.location[1]:g} {s.tx_power:g} {s.antenna_height:g}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EightPointEntry:
    location: tuple[float, float]
    channels: frozenset
    in_bounds: bool = True


EIGHT_POINT_OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


class SpectrumMap:
    """Grid of per-cell, per-channel corrected RSS and availability.

    Built once per scenario and read-only afterwards.
    """

    def __init__(
        self,
        stations: Iterable[TvStation],
        extent: tuple[float, float, float, float],
        resolution: float = 100.0,
        channels: Sequence[int] = TV_CHANNELS,
        model: PropagationModel = PropagationModel(),
        correction_db: float = ANTENNA_CORRECTION_DB,
        threshold_dbm: float = PROTECTION_RSS_DBM,
        separation_m: float = SEPARATION_M,
    ):
        xmin, xmax, ymin, ymax = (float(v) for v in extent)
        if not (xmax > xmin and ymax > ymin):
            raise SpectrumError("map extent must have positive area")
        if not resolution > 0:
            raise SpectrumError("grid resolution must be positive")
        self.stations = tuple(stations)
        self.extent = (xmin, xmax, ymin, ymax)
        self.resolution = float(resolution)
        self.channels = tuple(sorted(set(channels)))
        self.model = model
        self.correction_db = correction_db
        self.threshold_dbm = threshold_dbm
        self.separation_m = separation_m
        for s in self.stations:
            if s.channel_index not in self.channels:
                raise SpectrumError(f"station on unregistered channel {s.channel_index}")

        self._by_channel: dict[int, list[tuple[TvStation, float]]] = {ch: [] for ch in self.channels}
        for s in self.stations:
            self._by_channel[s.channel_index].append((s, contour_radius(s, model, correction_db, threshold_dbm)))

        nx = max(1, int(math.ceil((xmax - xmin) / resolution)))
        ny = max(1, int(math.ceil((ymax - ymin) / resolution)))
        self.xs = xmin + (np.arange(nx) + 0.5) * resolution
        self.ys = ymin + (np.arange(ny) + 0.5) * resolution
        gx, gy = np.meshgrid(self.xs, self.ys)
        self.rss = np.full((len(self.channels), ny, nx), -np.inf)
        self.available = np.ones((len(self.channels), ny, nx), dtype=bool)
        for k, ch in enumerate(self.channels):
            for s, radius in self._by_channel[ch]:
                d = np.hypot(gx - s.location[0], gy - s.location[1])
                rss = s.tx_power - model.path_loss_array(d, s.freq) + correction_db
                lin = 10 ** (self.rss[k] / 10) + 10 ** (rss / 10)
                self.rss[k] = 10 * np.log10(lin)
                self.available[k] &= d > radius + separation_m
        self.rss.setflags(write=False)
        self.available.setflags(write=False)

    def in_bounds(self, point: Sequence[float]) -> bool:
        xmin, xmax, ymin, ymax = self.extent
        return xmin <= point[0] <= xmax and ymin <= point[1] <= ymax

    def _check_channel(self, channel: int):
        if channel not in self._by_channel:
            raise SpectrumError(f"channel {channel} is not registered in the spectrum map")

    def corrected_rss(self, channel: int, point: Sequence[float]) -> float:
        """Strongest corrected RSS on ``channel`` at ``point``; -inf when no station."""
        self._check_channel(channel)
        vals = [rss_at(s, point, self.model, self.correction_db) for s, _ in self._by_channel[channel]]
        return max(vals, default=-math.inf)

    def total_rss(self, channel: int, point: Sequence[float]) -> float:
        """Power sum of all stations on ``channel`` at ``point`` (dBm)."""
        self._check_channel(channel)
        lin = sum(10 ** (rss_at(s, point, self.model, self.correction_db) / 10) for s, _ in self._by_channel[channel])
        return 10 * math.log10(lin) if lin > 0 else -math.inf

    def is_white_space(self, channel: int, point: Sequence[float]) -> bool:
        """Free iff every co-channel station is below threshold here and its
        protection contour is more than the separation distance away."""
        self._check_channel(channel)
        for s, radius in self._by_channel[channel]:
            if rss_at(s, point, self.model, self.correction_db) > self.threshold_dbm:
                return False
            if _dist(s.location, point) <= radius + self.separation_m:
                return False
        return True

    def available_channels(self, point: Sequence[float]) -> frozenset:
        if not self.in_bounds(point):
            raise SpectrumError(f"point {tuple(point)} is outside the map")
        return frozenset(ch for ch in self.channels if self.is_white_space(ch, point))

    def eight_point_channel_list(self, bs_location: Sequence[float], r: float) -> list[EightPointEntry]:
        out = []
        for dx, dy in EIGHT_POINT_OFFSETS:
            p = (bs_location[0] + dx * r, bs_location[1] + dy * r)
            if self.in_bounds(p):
                out.append(EightPointEntry(p, self.available_channels(p)))
            else:
                out.append(EightPointEntry(p, frozenset(), in_bounds=False))
        return out

    def coverage_cell_count(self, channel: int, center: Sequence[float], radius: float) -> int:
        """Grid cells inside the disc where ``channel`` is white space."""
        self._check_channel(channel)
        k = self.channels.index(channel)
        gx, gy = np.meshgrid(self.xs, self.ys)
        inside = np.hypot(gx - center[0], gy - center[1]) <= radius
        return int(np.count_nonzero(self.available[k] & inside))

    def coverage_cells(self, center: Sequence[float], radius: float) -> int:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return int(np.count_nonzero(np.hypot(gx - center[0], gy - center[1]) <= radius))
