"""Irradiance time series container, CSV I/O and solar geometry.

Timestamps are UTC, hourly, and mark the *end* of the averaging interval.
Solar geometry for a row is evaluated at the interval midpoint.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataError, DomainError, ParseError

logger = logging.getLogger(__name__)

SOLAR_CONSTANT = 1361.0  # W/m^2
CSV_HEADER = ("timestamp_utc", "ghi_wm2", "nwp_wm2")
HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class SiteGeometry:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DomainError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise DomainError(f"longitude {self.longitude} outside [-180, 180]")


# A station in western Denmark.
DEFAULT_SITE = SiteGeometry(56.0, 8.6)


def _as_utc_index(t) -> pd.DatetimeIndex:
    idx = pd.DatetimeIndex(np.atleast_1d(pd.to_datetime(t, utc=True)))
    if idx.tz is None:
        idx = idx.tz_localize("UTC")
    return idx.tz_convert("UTC")


def fractional_day_of_year(t) -> np.ndarray:
    """Day of year (1-based) including the fraction of the UTC day elapsed."""
    idx = _as_utc_index(t)
    hours = idx.hour + idx.minute / 60.0 + idx.second / 3600.0
    return idx.dayofyear.to_numpy(dtype=float) + np.asarray(hours) / 24.0


def solar_declination(day: np.ndarray) -> np.ndarray:
    """Declination in radians from Cooper's equation."""
    return np.deg2rad(23.45) * np.sin(2.0 * np.pi * (284.0 + day) / 365.0)


def equation_of_time(day: np.ndarray) -> np.ndarray:
    """Equation of time in minutes (Spencer's Fourier series)."""
    b = 2.0 * np.pi * (day - 1.0) / 365.0
    return 229.18 * (
        0.000075
        + 0.001868 * np.cos(b)
        - 0.032077 * np.sin(b)
        - 0.014615 * np.cos(2 * b)
        - 0.040849 * np.sin(2 * b)
    )


def solar_time(t, site: SiteGeometry) -> np.ndarray:
    """Apparent local solar time in hours, in [0, 24)."""
    idx = _as_utc_index(t)
    day = fractional_day_of_year(idx)
    utc_hours = np.asarray(idx.hour + idx.minute / 60.0 + idx.second / 3600.0)
    return np.mod(utc_hours + site.longitude / 15.0 + equation_of_time(day) / 60.0, 24.0)


def cos_zenith(t, site: SiteGeometry) -> np.ndarray:
    day = fractional_day_of_year(t)
    decl = solar_declination(day)
    hour_angle = np.deg2rad(15.0 * (solar_time(t, site) - 12.0))
    lat = np.deg2rad(site.latitude)
    return np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)


def extraterrestrial_irradiance(t, site: SiteGeometry):
    """Top-of-atmosphere irradiance on a horizontal plane at instant(s) ``t``.

    Returns a float for scalar input and an array otherwise.
    """
    day = fractional_day_of_year(t)
    eccentricity = 1.0 + 0.033 * np.cos(2.0 * np.pi * day / 365.0)
    value = SOLAR_CONSTANT * eccentricity * np.maximum(cos_zenith(t, site), 0.0)
    if np.ndim(t) == 0 and not isinstance(t, pd.DatetimeIndex):
        return float(value[0])
    return value


def interval_midpoints(timestamps: pd.DatetimeIndex) -> pd.DatetimeIndex:
    return timestamps - HOUR / 2


@dataclass(frozen=True, eq=False)
class IrradianceSeries:
    """Hourly observations with aligned exogenous inputs.

    ``irradiance`` may hold negative values only for synthetic draws; the CSV
    loader flags negative readings as missing.
    """

    timestamps: pd.DatetimeIndex
    irradiance: np.ndarray
    nwp: np.ndarray
    max_irradiance: np.ndarray
    missing: np.ndarray
    site: SiteGeometry = field(default=DEFAULT_SITE)

    def __post_init__(self):
        ts = _as_utc_index(self.timestamps) if len(self.timestamps) else pd.DatetimeIndex([], tz="UTC")
        object.__setattr__(self, "timestamps", ts)
        n = len(ts)
        arrays = {}
        for name in ("irradiance", "nwp", "max_irradiance"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise DataError(f"{name} has length {arr.size}, expected {n}")
            arrays[name] = arr
        missing = np.array(self.missing, dtype=bool).reshape(-1)
        if missing.shape != (n,):
            raise DataError(f"missing mask has length {missing.size}, expected {n}")
        missing |= ~np.isfinite(arrays["irradiance"])
        if n > 1:
            steps = np.diff(ts.asi8)
            if np.any(steps <= 0):
                raise DataError("timestamps are not strictly increasing")
            if np.any(steps != HOUR.value):
                raise DataError("timestamps are not spaced exactly one hour apart")
        if np.any(~np.isfinite(arrays["nwp"])) or np.any(arrays["nwp"] < 0):
            raise DataError("nwp must be finite and non-negative")
        if np.any(~np.isfinite(arrays["max_irradiance"])) or np.any(arrays["max_irradiance"] < 0):
            raise DataError("max_irradiance must be finite and non-negative")
        for name, arr in arrays.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        missing.flags.writeable = False
        object.__setattr__(self, "missing", missing)

    def __len__(self) -> int:
        return len(self.timestamps)

    @classmethod
    def from_arrays(cls, timestamps, irradiance, nwp, site: SiteGeometry = DEFAULT_SITE,
                    missing=None) -> IrradianceSeries:
        """Build a series, computing Max_t from solar geometry."""
        ts = _as_utc_index(timestamps)
        mx = extraterrestrial_irradiance(interval_midpoints(ts), site) if len(ts) else np.zeros(0)
        irr = np.asarray(irradiance, dtype=float)
        if missing is None:
            missing = ~np.isfinite(irr)
        return cls(ts, irr, nwp, mx, missing, site)

    @cached_property
    def hour_of_day(self) -> np.ndarray:
        """Local solar time (hours) at each interval midpoint."""
        out = solar_time(interval_midpoints(self.timestamps), self.site) if len(self) else np.zeros(0)
        out = np.array(out, dtype=float)
        out.flags.writeable = False
        return out

    @property
    def observed(self) -> np.ndarray:
        """Irradiance with missing entries replaced by NaN."""
        return np.where(self.missing, np.nan, self.irradiance)

    def take(self, index) -> IrradianceSeries:
        """Sub-series for a slice (must keep hourly spacing)."""
        return IrradianceSeries(
            self.timestamps[index],
            self.irradiance[index],
            self.nwp[index],
            self.max_irradiance[index],
            self.missing[index],
            self.site,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "ghi": self.observed,
                "nwp": self.nwp,
                "max_irradiance": self.max_irradiance,
            },
            index=self.timestamps,
        )


def concatenate(first: IrradianceSeries, second: IrradianceSeries) -> IrradianceSeries:
    return IrradianceSeries(
        first.timestamps.append(second.timestamps),
        np.concatenate([first.irradiance, second.irradiance]),
        np.concatenate([first.nwp, second.nwp]),
        np.concatenate([first.max_irradiance, second.max_irradiance]),
        np.concatenate([first.missing, second.missing]),
        first.site,
    )


def split_train_test(series: IrradianceSeries, boundary) -> tuple[IrradianceSeries, IrradianceSeries]:
    """Split into rows strictly before ``boundary`` and rows at/after it."""
    if len(series) == 0:
        raise DomainError("cannot split an empty series")
    b = pd.Timestamp(boundary)
    b = b.tz_localize("UTC") if b.tz is None else b.tz_convert("UTC")
    if b < series.timestamps[0] or b > series.timestamps[-1]:
        raise DomainError(
            f"boundary {b} outside series range [{series.timestamps[0]}, {series.timestamps[-1]}]"
        )
    cut = int(series.timestamps.searchsorted(b, side="left"))
    return series.take(slice(0, cut)), series.take(slice(cut, None))


def _parse_timestamp(text: str, row: int) -> pd.Timestamp:
    text = text.strip()
    if not text.endswith("Z"):
        raise ParseError(f"timestamp {text!r} lacks the 'Z' suffix", row)
    try:
        ts = pd.Timestamp(text[:-1])
    except (ValueError, TypeError) as exc:
        raise ParseError(f"malformed timestamp {text!r}", row) from exc
    if ts.tz is not None:
        raise ParseError(f"timestamp {text!r} carries an offset besides 'Z'", row)
    return ts.tz_localize("UTC")


def _parse_float(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"malformed {column} value {text!r}", row) from exc


def load_csv(path, site: SiteGeometry = DEFAULT_SITE, mask_negative: bool = True) -> IrradianceSeries:
    """Read a ``timestamp_utc,ghi_wm2,nwp_wm2`` file into a validated series.

    Rows with missing or negative irradiance are kept and flagged missing.
    Missing NWP values are carried forward from the previous row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: header must be {','.join(CSV_HEADER)}, got {header}")
        stamps, ghi, nwp = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", row_no)
            stamps.append(_parse_timestamp(row[0], row_no))
            ghi.append(_parse_float(row[1], row_no, "ghi_wm2"))
            nwp.append(_parse_float(row[2], row_no, "nwp_wm2"))

    ghi_arr = np.asarray(ghi, dtype=float)
    missing = ~np.isfinite(ghi_arr)
    negative = np.zeros_like(missing)
    if mask_negative:
        negative = np.isfinite(ghi_arr) & (ghi_arr < 0)
        if negative.any():
            logger.warning("%s: %d rows with negative irradiance flagged missing", path, int(negative.sum()))
    nwp_arr = pd.Series(nwp, dtype=float).ffill().bfill().to_numpy()
    if len(nwp_arr) and np.isnan(nwp_arr).any():
        raise DataError(f"{path}: nwp_wm2 column is entirely empty")
    if np.any(nwp_arr < 0):
        bad = int(np.argmax(nwp_arr < 0)) + 2
        raise ParseError("negative nwp_wm2", bad)
    try:
        return IrradianceSeries.from_arrays(
            pd.DatetimeIndex(stamps, tz="UTC") if stamps else pd.DatetimeIndex([], tz="UTC"),
            ghi_arr,
            nwp_arr,
            site,
            missing=missing | negative,
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _format_float(value: float) -> str:
    return "" if not np.isfinite(value) else repr(float(value))


def write_csv(series: IrradianceSeries, path) -> None:
    """Write a series in the canonical CSV schema (Max_t is not stored)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for ts, y, miss, u in zip(series.timestamps, series.irradiance, series.missing, series.nwp):
            writer.writerow([
                ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "" if miss else _format_float(y),
                _format_float(u),
            ])


def sample_path() -> Path:
    """Bundled 60-day synthetic M7 dataset (raw draws, including negative values)."""
    from importlib.resources import files

    return Path(str(files("solarsde") / "datasets" / "sample_M7.csv"))
