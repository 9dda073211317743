import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from solarsde.data import (
    DEFAULT_SITE, IrradianceSeries, SiteGeometry, extraterrestrial_irradiance, fractional_day_of_year,
    load_csv, solar_declination, solar_time, split_train_test, write_csv,
)
from solarsde.exceptions import DataError, DomainError, ParseError


def noaa_sun(ts: pd.Timestamp, lat, lon):
    """Solar position from the NOAA spreadsheet formulas (independent oracle).

    Returns (cos zenith, apparent solar time in hours, earth-sun distance in AU,
    declination in degrees).
    """
    jd = ts.to_julian_date()
    jc = (jd - 2451545.0) / 36525.0
    l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360
    m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    mr = math.radians(m)
    c = (math.sin(mr) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
         + math.sin(2 * mr) * (0.019993 - 0.000101 * jc) + math.sin(3 * mr) * 0.000289)
    true_long = l0 + c
    true_anom = m + c
    radius = 1.000001018 * (1 - e * e) / (1 + e * math.cos(math.radians(true_anom)))
    omega = 125.04 - 1934.136 * jc
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))
    mean_obliq = 23 + (26 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60) / 60
    obliq = mean_obliq + 0.00256 * math.cos(math.radians(omega))
    decl = math.asin(math.sin(math.radians(obliq)) * math.sin(math.radians(app_long)))
    y = math.tan(math.radians(obliq / 2)) ** 2
    l0r = math.radians(l0)
    eot = 4 * math.degrees(
        y * math.sin(2 * l0r) - 2 * e * math.sin(mr) + 4 * e * y * math.sin(mr) * math.cos(2 * l0r)
        - 0.5 * y * y * math.sin(4 * l0r) - 1.25 * e * e * math.sin(2 * mr)
    )
    minutes = ts.hour * 60 + ts.minute + ts.second / 60
    true_solar = (minutes + eot + 4 * lon) % 1440
    hour_angle = math.radians(true_solar / 4 - 180)
    latr = math.radians(lat)
    cosz = math.sin(latr) * math.sin(decl) + math.cos(latr) * math.cos(decl) * math.cos(hour_angle)
    return cosz, true_solar / 60, radius, math.degrees(decl)


def test_declination_within_cooper_accuracy():
    ts = pd.date_range("2009-01-01T12:00Z", periods=365, freq="D")
    ours = np.degrees(solar_declination(fractional_day_of_year(ts)))
    oracle = [noaa_sun(t, 0.0, 0.0)[3] for t in ts]
    assert np.max(np.abs(ours - oracle)) < 1.2


def test_extraterrestrial_matches_noaa_oracle():
    # Cooper's declination is good to about 1 degree; at most
    # 1361 * 1.035 * sin(1.2 deg) ~ 30 W/m^2 of Max, plus eccentricity slack.
    ts = pd.date_range("2009-01-01T00:30Z", periods=24 * 365, freq="7h")
    ours = extraterrestrial_irradiance(ts, DEFAULT_SITE)
    worst = 0.0
    for t, mx in zip(ts, ours):
        cosz, _, r, _ = noaa_sun(t, DEFAULT_SITE.latitude, DEFAULT_SITE.longitude)
        oracle = 1361.0 / r ** 2 * max(cosz, 0.0)
        worst = max(worst, abs(mx - oracle))
    assert worst < 35.0


def test_solar_time_matches_noaa_oracle():
    ts = pd.date_range("2010-01-01T00:00Z", periods=400, freq="22h")
    ours = solar_time(ts, DEFAULT_SITE)
    for t, h in zip(ts, ours):
        _, oracle, _, _ = noaa_sun(t, DEFAULT_SITE.latitude, DEFAULT_SITE.longitude)
        d = abs(h - oracle)
        assert min(d, 24 - d) < 1.0 / 60


def test_max_is_zero_at_night_and_positive_at_noon():
    site = SiteGeometry(56.0, 8.6)
    assert extraterrestrial_irradiance(pd.Timestamp("2009-06-21T23:00Z"), site) == 0.0
    noon = extraterrestrial_irradiance(pd.Timestamp("2009-06-21T11:25Z"), site)
    assert 1000 < noon < 1361 * 1.034


def test_site_validation():
    with pytest.raises(DomainError):
        SiteGeometry(91.0, 0.0)
    with pytest.raises(DomainError):
        SiteGeometry(0.0, -181.0)


def test_hour_of_day_is_cached_and_read_only(m7_month):
    h = m7_month.hour_of_day
    assert h is m7_month.hour_of_day
    with pytest.raises(ValueError):
        h[0] = 3.0


def _series(n=48, start="2011-03-01T01:00Z", y=None):
    ts = pd.date_range(start, periods=n, freq="h")
    y = np.arange(n, dtype=float) if y is None else y
    return IrradianceSeries.from_arrays(ts, y, np.full(n, 100.0))


def test_spacing_and_ordering_are_enforced():
    ts = pd.date_range("2011-03-01T01:00Z", periods=5, freq="h")
    with pytest.raises(DataError, match="one hour"):
        IrradianceSeries.from_arrays(ts.delete(2), np.zeros(4), np.zeros(4))
    with pytest.raises(DataError, match="increasing"):
        IrradianceSeries.from_arrays(ts[::-1], np.zeros(5), np.zeros(5))
    with pytest.raises(DataError):
        IrradianceSeries.from_arrays(ts, np.zeros(5), -np.ones(5))


def test_nan_irradiance_marked_missing():
    s = _series(y=np.r_[np.nan, np.ones(47)])
    assert s.missing[0] and not s.missing[1:].any()
    assert np.isnan(s.observed[0])


def test_split_train_test_boundaries():
    s = _series()
    train, test = split_train_test(s, "2011-03-02T01:00Z")
    assert len(train) == 24 and len(test) == 24
    assert test.timestamps[0] == pd.Timestamp("2011-03-02T01:00Z")
    with pytest.raises(DomainError):
        split_train_test(s, "2012-01-01T00:00Z")


def test_csv_round_trip(tmp_path):
    s = _series(y=np.r_[np.nan, np.linspace(0, 700, 47)])
    path = tmp_path / "d.csv"
    write_csv(s, path)
    back = load_csv(path)
    assert back.timestamps.equals(s.timestamps)
    np.testing.assert_array_equal(back.missing, s.missing)
    np.testing.assert_array_equal(back.irradiance[1:], s.irradiance[1:])
    np.testing.assert_allclose(back.max_irradiance, s.max_irradiance)


def test_negative_readings_masked_unless_kept(tmp_path):
    s = _series(y=np.r_[-5.0, np.ones(47)])
    path = tmp_path / "d.csv"
    write_csv(s, path)
    assert load_csv(path).missing[0]
    assert not load_csv(path, mask_negative=False).missing[0]


@pytest.mark.parametrize("line, message", [
    ("2011-03-01T01:00:00,1,2", "row 2"),
    ("2011-03-01T01:00:00Z,abc,2", "row 2"),
    ("2011-03-01T01:00:00Z,1", "row 2"),
    ("not-a-time Z,1,2", "row 2"),
])
def test_parse_errors_name_the_row(tmp_path, line, message):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp_utc,ghi_wm2,nwp_wm2\n" + line + "\n")
    with pytest.raises(ParseError, match=message):
        load_csv(path)


def test_wrong_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,ghi,nwp\n")
    with pytest.raises(DataError, match="header"):
        load_csv(path)


def test_missing_nwp_forward_filled(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("timestamp_utc,ghi_wm2,nwp_wm2\n"
                    "2011-03-01T01:00:00Z,1,5\n2011-03-01T02:00:00Z,2,\n2011-03-01T03:00:00Z,,7\n")
    s = load_csv(path)
    np.testing.assert_array_equal(s.nwp, [5, 5, 7])
    np.testing.assert_array_equal(s.missing, [False, False, True])


@given(st.integers(min_value=2, max_value=72), st.integers(min_value=0, max_value=10_000))
def test_take_preserves_alignment(n, offset_hours):
    start = pd.Timestamp("2009-01-01T01:00Z") + pd.Timedelta(hours=offset_hours)
    s = _series(n=n, start=start)
    sub = s.take(slice(1, None))
    assert len(sub) == n - 1
    np.testing.assert_array_equal(sub.max_irradiance, s.max_irradiance[1:])
    assert np.all(s.max_irradiance >= 0)


@given(
    st.integers(min_value=0, max_value=20 * 365 * 24),
    st.floats(min_value=-90, max_value=90),
    st.floats(min_value=-180, max_value=180),
)
def test_max_bounded_by_eccentric_solar_constant(hours, lat, lon):
    t = pd.Timestamp("2000-01-01T00:00Z") + pd.Timedelta(hours=hours)
    value = extraterrestrial_irradiance(t, SiteGeometry(lat, lon))
    assert 0.0 <= value <= 1361 * 1.035
