//! Time-to-range mapping and resampling of the range-frequency surface along
//! projected striations `r(f) = r' (f/f')^(1/beta)`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{BandPartition, Spectrogram};

/// Range rate as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateProfile {
    /// Constant rate in m/s; positive means opening range.
    Constant(f64),
    /// Rate samples at strictly increasing times, linear in between and held
    /// constant outside the sampled span.
    Sampled { times: Vec<f64>, rates: Vec<f64> },
}

impl RateProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateProfile::Constant(v) if !v.is_finite() => invalid("range rate must be finite"),
            RateProfile::Constant(_) => Ok(()),
            RateProfile::Sampled { times, rates } => {
                if times.len() != rates.len() || times.is_empty() {
                    return invalid("rate profile needs equal, non-zero numbers of times and rates");
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return invalid("rate profile times must be strictly increasing");
                }
                if rates.iter().chain(times).any(|v| !v.is_finite()) {
                    return invalid("rate profile has non-finite values");
                }
                Ok(())
            }
        }
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            RateProfile::Constant(v) => *v,
            RateProfile::Sampled { times, rates } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return rates[0];
                }
                if t >= times[last] {
                    return rates[last];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                rates[i] + w * (rates[i + 1] - rates[i])
            }
        }
    }

    /// `integral_a^b rate(t) dt`, exact for the piecewise-linear profile.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        match self {
            RateProfile::Constant(v) => v * (b - a),
            RateProfile::Sampled { times, .. } => {
                // Breakpoints strictly inside (a, b), then trapezoids between
                // consecutive evaluation points; each piece is linear.
                let mut knots = vec![a];
                knots.extend(times.iter().copied().filter(|&t| t > a && t < b));
                knots.push(b);
                knots.windows(2).map(|w| 0.5 * (self.rate_at(w[0]) + self.rate_at(w[1])) * (w[1] - w[0])).sum()
            }
        }
    }
}

/// Candidate `q = [r, rate, beta]`; `r` is the range at the final snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub r: f64,
    pub rate: RateProfile,
    pub beta: f64,
}

impl ParamVector {
    pub fn new(r: f64, rate: RateProfile, beta: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return invalid(format!("range must be positive, got {r}"));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return invalid(format!("waveguide invariant must be positive, got {beta}"));
        }
        rate.validate()?;
        Ok(Self { r, rate, beta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeAxis {
    pub r_n: Vec<f64>,
}

impl RangeAxis {
    pub fn len(&self) -> usize {
        self.r_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_n.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.r_n.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.r_n.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// +1 for strictly increasing, -1 for strictly decreasing, 0 otherwise.
    pub fn direction(&self) -> i8 {
        if self.r_n.windows(2).all(|w| w[1] > w[0]) {
            1
        } else if self.r_n.windows(2).all(|w| w[1] < w[0]) {
            -1
        } else {
            0
        }
    }
}

/// `r_n = r - integral_{t_n}^{t_N} rate dt`, so the final snapshot sits at `q.r`.
pub fn map_time_to_range(times: &[f64], q: &ParamVector) -> Result<RangeAxis> {
    if times.is_empty() {
        return invalid("time axis is empty");
    }
    if !(q.r > 0.0) {
        return invalid(format!("range must be positive, got {}", q.r));
    }
    let t_end = *times.last().unwrap();
    let r_n: Vec<f64> = times.iter().map(|&t| q.r - q.rate.integral(t, t_end)).collect();
    if let Some((index, &range)) = r_n.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
        return Err(Error::TrackCrossesReceiver { index, range });
    }
    Ok(RangeAxis { r_n })
}

/// Ranges along the striation through `(r_prime, f_prime)` at each frequency.
pub fn project_striation(r_prime: f64, f_prime: f64, beta: f64, freqs: &[f64]) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return invalid(format!("waveguide invariant must be positive, got {beta}"));
    }
    if !(r_prime > 0.0) || !(f_prime > 0.0) || freqs.iter().any(|f| !(*f > 0.0)) {
        return invalid("striation projection needs positive ranges and frequencies");
    }
    let inv = 1.0 / beta;
    Ok(freqs.iter().map(|&f| r_prime * (f / f_prime).powf(inv)).collect())
}

/// Intensities resampled along `L` striations, rows ordered by reference range.
#[derive(Debug, Clone, PartialEq)]
pub struct StriationGrid {
    /// `L x |K^b|`, columns in the order of `BandPartition::broadband_bins`.
    pub x_b: Array2<f64>,
    /// `L x J`, columns in the order of `BandPartition::tonal_bins`.
    pub x_bt: Array2<f64>,
    pub ref_freq: f64,
    pub ref_ranges: Vec<f64>,
    /// Snapshot index each striation was seeded from.
    pub ref_snapshots: Vec<usize>,
    pub broadband_freqs: Vec<f64>,
    pub tonal_freqs: Vec<f64>,
}

impl StriationGrid {
    pub fn n_striations(&self) -> usize {
        self.ref_ranges.len()
    }

    /// The `len` rows centred in the grid.
    pub fn centered_subset(&self, len: usize) -> StriationGrid {
        let l = self.n_striations();
        let len = len.min(l);
        let start = (l - len) / 2;
        let rows = start..start + len;
        StriationGrid {
            x_b: self.x_b.slice(ndarray::s![rows.clone(), ..]).to_owned(),
            x_bt: self.x_bt.slice(ndarray::s![rows.clone(), ..]).to_owned(),
            ref_freq: self.ref_freq,
            ref_ranges: self.ref_ranges[rows.clone()].to_vec(),
            ref_snapshots: self.ref_snapshots[rows].to_vec(),
            broadband_freqs: self.broadband_freqs.clone(),
            tonal_freqs: self.tonal_freqs.clone(),
        }
    }

    /// Long-format dump with columns `l, r_ref, f, value, bin_class`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "l,r_ref,f,value,bin_class")?;
        for l in 0..self.n_striations() {
            let mut cells: Vec<(f64, f64, &str)> = self
                .broadband_freqs
                .iter()
                .zip(self.x_b.row(l))
                .map(|(f, v)| (*f, *v, "broadband"))
                .chain(self.tonal_freqs.iter().zip(self.x_bt.row(l)).map(|(f, v)| (*f, *v, "tonal")))
                .collect();
            cells.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (f, v, class) in cells {
                writeln!(w, "{l},{},{f},{v},{class}", self.ref_ranges[l])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shared setup for grid construction: range axis sorted ascending and the
/// processed frequency extremes.
struct Geometry {
    /// Snapshot indices sorted by increasing range.
    order: Vec<usize>,
    sorted_r: Vec<f64>,
    ref_freq: f64,
    f_lo: f64,
    f_hi: f64,
}

fn geometry(spec: &Spectrogram, q: &ParamVector, part: &BandPartition) -> Result<Geometry> {
    if !spec.shares_axis(&part.freqs) {
        return invalid("band partition and spectrogram have different frequency axes");
    }
    let axis = map_time_to_range(&spec.times(), q)?;
    let mut order: Vec<usize> = (0..axis.len()).collect();
    match axis.direction() {
        1 => {}
        -1 => order.reverse(),
        _ if axis.len() == 1 => {}
        _ => return invalid("range must be strictly monotone within one processing window"),
    }
    let sorted_r = order.iter().map(|&i| axis.r_n[i]).collect();
    let processed = part.processed_bins();
    if processed.is_empty() {
        return invalid("band partition has no processed bins");
    }
    Ok(Geometry {
        order,
        sorted_r,
        ref_freq: part.center_freq(),
        f_lo: part.freqs[processed[0]],
        f_hi: part.freqs[*processed.last().unwrap()],
    })
}

/// Snapshot-seeded striations (in ascending reference range) whose projection
/// stays inside the observed range span across the processed band.
fn valid_seeds(g: &Geometry, beta: f64) -> Vec<usize> {
    let (r_min, r_max) = (g.sorted_r[0], *g.sorted_r.last().unwrap());
    let tol = 1e-12 * r_max;
    let lo_fac = (g.f_lo / g.ref_freq).powf(1.0 / beta);
    let hi_fac = (g.f_hi / g.ref_freq).powf(1.0 / beta);
    (0..g.sorted_r.len())
        .filter(|&i| {
            let r = g.sorted_r[i];
            r * lo_fac >= r_min - tol && r * hi_fac <= r_max + tol
        })
        .collect()
}

/// Number of valid striations for candidate `q`, without resampling.
pub fn striation_count(spec: &Spectrogram, q: &ParamVector, part: &BandPartition) -> Result<usize> {
    let g = geometry(spec, q, part)?;
    Ok(valid_seeds(&g, q.beta).len())
}

fn interp(sorted_r: &[f64], column: &[f64], r: f64) -> f64 {
    let n = sorted_r.len();
    let i = sorted_r.partition_point(|&s| s <= r);
    if i == 0 {
        return column[0];
    }
    if i >= n {
        return column[n - 1];
    }
    let (r0, r1) = (sorted_r[i - 1], sorted_r[i]);
    if r == r0 {
        return column[i - 1];
    }
    let w = (r - r0) / (r1 - r0);
    column[i - 1] + w * (column[i] - column[i - 1])
}

/// Resamples the surface along every valid striation of candidate `q`.
///
/// Striations are seeded at every snapshot range with reference frequency at
/// the band centre; intensities are interpolated linearly in range within each
/// frequency column, and seeds whose projection would leave the observed range
/// span are discarded.
pub fn build_striation_grid(spec: &Spectrogram, q: &ParamVector, part: &BandPartition, l_min: usize) -> Result<StriationGrid> {
    let g = geometry(spec, q, part)?;
    let seeds = valid_seeds(&g, q.beta);
    if seeds.len() < l_min.max(1) {
        return Err(Error::WindowTooShort { found: seeds.len(), needed: l_min.max(1) });
    }
    let x = spec.intensities();
    let column = |k: usize| -> Vec<f64> { g.order.iter().map(|&n| x[[n, k]]).collect() };
    let fill = |bins: &[usize]| -> Array2<f64> {
        let mut out = Array2::zeros((seeds.len(), bins.len()));
        for (j, &k) in bins.iter().enumerate() {
            let col = column(k);
            let fac = (part.freqs[k] / g.ref_freq).powf(1.0 / q.beta);
            for (l, &i) in seeds.iter().enumerate() {
                out[[l, j]] = interp(&g.sorted_r, &col, g.sorted_r[i] * fac);
            }
        }
        out
    };
    Ok(StriationGrid {
        x_b: fill(&part.broadband_bins),
        x_bt: fill(&part.tonal_bins),
        ref_freq: g.ref_freq,
        ref_ranges: seeds.iter().map(|&i| g.sorted_r[i]).collect(),
        ref_snapshots: seeds.iter().map(|&i| g.order[i]).collect(),
        broadband_freqs: part.broadband_bins.iter().map(|&k| part.freqs[k]).collect(),
        tonal_freqs: part.tonal_freqs.clone(),
    })
}
