//! Position logs to receiver-relative range and range-rate profiles.
//!
//! Input CSV has a header naming at least `timestamp`, `lat` and `lon`;
//! `sog` (knots) and `mmsi` are optional. Timestamps are epoch seconds or
//! ISO-8601 (a missing offset is read as UTC).

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::striation::RateProfile;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Position gaps longer than this fall back to reported speed over ground.
pub const SPARSE_GAP_S: f64 = 60.0;
const KNOT_MPS: f64 = 1852.0 / 3600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
    pub sog: Option<f64>,
    pub mmsi: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRateProfile {
    pub times: Vec<f64>,
    pub ranges: Vec<f64>,
    pub rates: Vec<f64>,
}

impl RangeRateProfile {
    /// Rate samples usable as a known input to estimation.
    pub fn rate_profile(&self) -> RateProfile {
        RateProfile::Sampled { times: self.times.clone(), rates: self.rates.clone() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "time,range,rate")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.ranges[i], self.rates[i])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Great-circle distance in metres between two points given in degrees.
pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    // Absolute differences and a commutative product keep d(a, b) == d(b, a).
    let dphi = (lat2 - lat1).abs().to_radians();
    let dlam = (lon2 - lon1).abs().to_radians();
    let h = (dphi / 2.0).sin().powi(2) + (p1.cos() * p2.cos()) * (dlam / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial bearing from the first point to the second, radians clockwise
/// from north.
fn bearing(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    (dl.sin() * p2.cos()).atan2(p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos())
}

pub fn parse_timestamp(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Ok(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    invalid(format!("unrecognized timestamp {s:?}"))
}

pub fn read_track_csv(path: &Path) -> Result<Vec<TrackPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(crate::error::open(path)?);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(it), Some(ilat), Some(ilon)) = (col("timestamp"), col("lat"), col("lon")) else {
        return invalid("track CSV needs timestamp, lat and lon columns");
    };
    let (isog, immsi) = (col("sog"), col("mmsi"));
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let number = |i: usize, what: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::Invalid(format!("row {}: bad {what} {:?}", line + 1, field(i))))
        };
        let sog = match isog.map(field) {
            Some(s) if !s.is_empty() => Some(number(isog.unwrap(), "sog")?),
            _ => None,
        };
        let mmsi = immsi.map(field).filter(|s| !s.is_empty()).map(str::to_string);
        points.push(TrackPoint { timestamp: parse_timestamp(field(it))?, lat: number(ilat, "lat")?, lon: number(ilon, "lon")?, sog, mmsi });
    }
    Ok(points)
}

/// Drops non-finite or out-of-range positions, sorts by time and keeps the
/// first report of each duplicated timestamp.
pub fn clean_track(mut points: Vec<TrackPoint>) -> Vec<TrackPoint> {
    points.retain(|p| {
        p.timestamp.is_finite() && p.lat.abs() <= 90.0 && p.lon.abs() <= 180.0 && p.sog.is_none_or(|s| s.is_finite() && s >= 0.0)
    });
    points.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    points.dedup_by(|b, a| b.timestamp == a.timestamp);
    points
}

/// Piecewise-linear interpolation of `(xs, ys)` at `at`; `xs` increasing.
pub fn interp_linear(xs: &[f64], ys: &[f64], at: f64) -> f64 {
    let last = xs.len() - 1;
    if at <= xs[0] {
        return ys[0];
    }
    if at >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&x| x <= at) - 1;
    if xs[i] == at {
        return ys[i];
    }
    let w = (at - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Range and range-rate profile on a uniform time grid starting at the first
/// report.
pub fn track_profile(points: &[TrackPoint], receiver: Receiver, resample_dt: f64) -> Result<RangeRateProfile> {
    if !(resample_dt > 0.0) || !resample_dt.is_finite() {
        return invalid("resample interval must be positive");
    }
    if receiver.lat.abs() > 90.0 || receiver.lon.abs() > 180.0 {
        return invalid("receiver position out of range");
    }
    let points = clean_track(points.to_vec());
    if points.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: points.len() });
    }
    let ts: Vec<f64> = points.iter().map(|p| p.timestamp).collect();
    let rs: Vec<f64> = points.iter().map(|p| haversine(receiver.lat, receiver.lon, p.lat, p.lon)).collect();
    let (t0, t_end) = (ts[0], ts[ts.len() - 1]);
    let n = ((t_end - t0) / resample_dt + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * resample_dt).collect();
    let ranges: Vec<f64> = times.iter().map(|&t| interp_linear(&ts, &rs, t)).collect();

    let mut rates: Vec<f64> = (0..n)
        .map(|i| match (i, n) {
            (_, 1) => (rs[1] - rs[0]) / (ts[1] - ts[0]),
            (0, _) => (ranges[1] - ranges[0]) / resample_dt,
            (i, n) if i == n - 1 => (ranges[i] - ranges[i - 1]) / resample_dt,
            (i, _) => (ranges[i + 1] - ranges[i - 1]) / (2.0 * resample_dt),
        })
        .collect();

    // Inside long gaps the interpolated positions carry no range curvature;
    // project the reported speed onto the line of sight instead.
    for (i, &t) in times.iter().enumerate() {
        let j = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
        let (a, b) = (&points[j - 1], &points[j]);
        if b.timestamp - a.timestamp <= SPARSE_GAP_S {
            continue;
        }
        let (Some(sa), Some(sb)) = (a.sog, b.sog) else { continue };
        let w = ((t - a.timestamp) / (b.timestamp - a.timestamp)).clamp(0.0, 1.0);
        let sog = (sa + w * (sb - sa)) * KNOT_MPS;
        let lat = a.lat + w * (b.lat - a.lat);
        let lon = a.lon + w * (b.lon - a.lon);
        if haversine(receiver.lat, receiver.lon, lat, lon) == 0.0 {
            continue;
        }
        let course = bearing(a.lat, a.lon, b.lat, b.lon);
        let outward = bearing(receiver.lat, receiver.lon, lat, lon);
        rates[i] = sog * (course - outward).cos();
    }
    Ok(RangeRateProfile { times, ranges, rates })
}

pub fn ingest_track(csv_path: &Path, receiver: Receiver, resample_dt: f64) -> Result<RangeRateProfile> {
    track_profile(&read_track_csv(csv_path)?, receiver, resample_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(t: f64, lat: f64, lon: f64) -> TrackPoint {
        TrackPoint { timestamp: t, lat, lon, sog: None, mmsi: None }
    }

    #[test]
    fn ship_at_receiver_has_zero_range() {
        assert_eq!(haversine(32.5, -117.3, 32.5, -117.3), 0.0);
        let rx = Receiver { lat: 40.0, lon: -70.0 };
        let prof = track_profile(&[pt(0.0, 40.0, -70.0), pt(10.0, 40.0, -70.0)], rx, 5.0).unwrap();
        assert_eq!(prof.ranges, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_degree_of_latitude() {
        // R * pi / 180 with R = 6371 km.
        let expect = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let d = haversine(10.0, 20.0, 11.0, 20.0);
        assert!((d - expect).abs() < 1e-6);
        assert!((d / 1000.0 - 111.19).abs() < 0.01);
    }

    #[test]
    fn straight_constant_speed_track_has_constant_rate() {
        // Due north from the receiver at 10 m/s, reported every 30 s.
        let rx = Receiver { lat: 36.0, lon: -73.0 };
        let deg_per_s = 10.0 / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
        let pts: Vec<TrackPoint> = (0..60).map(|i| pt(i as f64 * 30.0, 36.1 + i as f64 * 30.0 * deg_per_s, -73.0)).collect();
        let prof = track_profile(&pts, rx, 10.0).unwrap();
        assert_eq!(prof.times.len(), 178);
        for &r in &prof.rates {
            assert!((r / 10.0 - 1.0).abs() < 1e-3, "{r}");
        }
    }

    #[test]
    fn sparse_gaps_use_speed_over_ground() {
        // Outbound along a meridian, 3 reports 5 min apart, plus a sog.
        let rx = Receiver { lat: 0.0, lon: 0.0 };
        let deg_per_s = 6.0 / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
        let pts: Vec<TrackPoint> = (0..3)
            .map(|i| TrackPoint { sog: Some(6.0 / KNOT_MPS), ..pt(i as f64 * 300.0, 0.1 + i as f64 * 300.0 * deg_per_s, 0.0) })
            .collect();
        let prof = track_profile(&pts, rx, 20.0).unwrap();
        for &r in &prof.rates {
            assert!((r - 6.0).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn duplicates_and_bad_rows_are_dropped() {
        let pts = vec![pt(5.0, 1.0, 1.0), pt(0.0, 0.0, 0.0), pt(5.0, 9.0, 9.0), pt(7.0, 95.0, 0.0)];
        let c = clean_track(pts);
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].lat, 1.0);
        let err = track_profile(&[pt(0.0, 0.0, 0.0), pt(0.0, 1.0, 0.0)], Receiver { lat: 0.0, lon: 0.0 }, 1.0);
        assert!(matches!(err, Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn timestamps_in_both_forms() {
        assert_eq!(parse_timestamp("1500000000").unwrap(), 1.5e9);
        assert_eq!(parse_timestamp("1970-01-01T00:01:00Z").unwrap(), 60.0);
        assert_eq!(parse_timestamp("1970-01-01 00:00:01.5").unwrap(), 1.5);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn csv_ingest_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.csv");
        std::fs::write(
            &path,
            "timestamp,lat,lon,sog,mmsi\n2017-03-20T18:58:00Z,32.60,-117.40,12.1,123\n2017-03-20T18:58:30Z,32.61,-117.40,,123\n",
        )
        .unwrap();
        let prof = ingest_track(&path, Receiver { lat: 32.5, lon: -117.4 }, 10.0).unwrap();
        assert_eq!(prof.times.len(), 4);
        assert!(prof.ranges.windows(2).all(|w| w[1] > w[0]));
        prof.write_csv(&dir.path().join("p.csv")).unwrap();
        prof.write_json(&dir.path().join("p.json")).unwrap();
        assert_eq!(RangeRateProfile::read_json(&dir.path().join("p.json")).unwrap(), prof);
        std::fs::write(&path, "time,lat\n0,1\n").unwrap();
        assert!(read_track_csv(&path).is_err());
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(a in -90.0f64..90.0, b in -180.0f64..180.0, c in -90.0f64..90.0, d in -180.0f64..180.0) {
            prop_assert_eq!(haversine(a, b, c, d), haversine(c, d, a, b));
        }

        #[test]
        fn resampling_at_report_times_is_exact(steps in prop::collection::vec(-0.01f64..0.01, 2..30), dt in 1.0f64..20.0) {
            let rx = Receiver { lat: 10.0, lon: 10.0 };
            let mut lat = 10.2;
            let pts: Vec<TrackPoint> = steps.iter().enumerate().map(|(i, s)| { lat += s; pt(i as f64 * dt, lat, 10.3) }).collect();
            let prof = track_profile(&pts, rx, dt).unwrap();
            prop_assert_eq!(prof.times.len(), pts.len());
            for (p, r) in pts.iter().zip(&prof.ranges) {
                let exact = haversine(rx.lat, rx.lon, p.lat, p.lon);
                prop_assert!((r - exact).abs() <= 1e-9 * exact);
            }
        }
    }
}
