//! Spectrogram computation and the frequency-axis bookkeeping that every
//! estimator downstream depends on.
//!
//! Spectrograms are stored one-sided with power-density scaling: for a
//! complex cell `z`, `|z|^2` is a PSD estimate in `units^2/Hz`. With that
//! convention the mean intensity of a noise-only bin is directly the noise
//! variance used by the likelihoods, so [`noise_profile`] needs no extra
//! calibration constant.

pub mod io;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance used when comparing frequencies that should coincide.
const FREQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub start_time: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return invalid(format!("sample rate must be positive, got {sample_rate}"));
        }
        if samples.is_empty() {
            return invalid("time series has no samples");
        }
        Ok(Self { samples, sample_rate, start_time })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Complex,
    Intensity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Complex(Array2<Complex64>),
    Intensity(Array2<f64>),
}

/// An `N x K` matrix over (snapshot, frequency) on uniform axes.
///
/// Rows are snapshots ordered in time, columns are frequency bins in
/// ascending order. Axes are described by origin and spacing so that
/// uniform spacing holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Values,
    pub f0: f64,
    pub df: f64,
    pub t0: f64,
    pub dt: f64,
}

impl Spectrogram {
    pub fn new(values: Values, f0: f64, df: f64, t0: f64, dt: f64) -> Result<Self> {
        if !(df > 0.0) || !(dt > 0.0) {
            return invalid(format!("axis spacing must be positive (df={df}, dt={dt})"));
        }
        let (n, k) = match &values {
            Values::Complex(v) => v.dim(),
            Values::Intensity(v) => v.dim(),
        };
        if n == 0 || k == 0 {
            return invalid("spectrogram must have at least one snapshot and one bin");
        }
        if let Values::Intensity(v) = &values {
            if v.iter().any(|x| !(*x >= 0.0)) {
                return invalid("intensity spectrogram has negative or non-finite cells");
            }
        }
        Ok(Self { values, f0, df, t0, dt })
    }

    pub fn kind(&self) -> Kind {
        match self.values {
            Values::Complex(_) => Kind::Complex,
            Values::Intensity(_) => Kind::Intensity,
        }
    }

    pub fn n_times(&self) -> usize {
        match &self.values {
            Values::Complex(v) => v.nrows(),
            Values::Intensity(v) => v.nrows(),
        }
    }

    pub fn n_freqs(&self) -> usize {
        match &self.values {
            Values::Complex(v) => v.ncols(),
            Values::Intensity(v) => v.ncols(),
        }
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n_freqs()).map(|k| self.f0 + k as f64 * self.df).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|n| self.t0 + n as f64 * self.dt).collect()
    }

    /// `|z|^2` for complex spectrograms, a copy of the cells otherwise.
    pub fn intensities(&self) -> Array2<f64> {
        match &self.values {
            Values::Complex(v) => v.mapv(|z| z.norm_sqr()),
            Values::Intensity(v) => v.clone(),
        }
    }

    /// Converts a complex spectrogram to intensities `x = |z|^2`, axes preserved.
    pub fn to_intensity(&self) -> Result<Spectrogram> {
        match &self.values {
            Values::Complex(v) => Ok(Spectrogram { values: Values::Intensity(v.mapv(|z| z.norm_sqr())), ..*self }),
            Values::Intensity(_) => Err(Error::WrongKind { expected: "complex" }),
        }
    }

    /// Index of the bin whose center is closest to `f`.
    pub fn nearest_bin(&self, f: f64) -> Option<usize> {
        let idx = ((f - self.f0) / self.df).round();
        if idx < 0.0 || idx >= self.n_freqs() as f64 {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Keeps the bins whose centers fall in `[lo, hi]`.
    pub fn crop_band(&self, lo: f64, hi: f64) -> Result<Spectrogram> {
        let (a, b) = band_bins(self.f0, self.df, self.n_freqs(), lo, hi)?;
        let values = match &self.values {
            Values::Complex(v) => Values::Complex(v.slice(ndarray::s![.., a..=b]).to_owned()),
            Values::Intensity(v) => Values::Intensity(v.slice(ndarray::s![.., a..=b]).to_owned()),
        };
        Ok(Spectrogram { values, f0: self.f0 + a as f64 * self.df, ..*self })
    }

    /// Keeps snapshots in `range` (half-open).
    pub fn slice_times(&self, range: std::ops::Range<usize>) -> Result<Spectrogram> {
        if range.is_empty() || range.end > self.n_times() {
            return invalid(format!("snapshot range {range:?} out of bounds"));
        }
        let t0 = self.t0 + range.start as f64 * self.dt;
        let values = match &self.values {
            Values::Complex(v) => Values::Complex(v.slice(ndarray::s![range, ..]).to_owned()),
            Values::Intensity(v) => Values::Intensity(v.slice(ndarray::s![range, ..]).to_owned()),
        };
        Ok(Spectrogram { values, t0, ..*self })
    }

    /// Mean intensity per bin across snapshots.
    pub fn mean_psd(&self) -> Vec<f64> {
        self.intensities().mean_axis(Axis(0)).expect("spectrogram has at least one snapshot").to_vec()
    }

    /// True when `freqs` coincides with this spectrogram's frequency axis.
    pub fn shares_axis(&self, freqs: &[f64]) -> bool {
        freqs.len() == self.n_freqs() && freqs.iter().enumerate().all(|(k, f)| (f - (self.f0 + k as f64 * self.df)).abs() <= 1e-6 * self.df)
    }
}

fn band_bins(f0: f64, df: f64, n: usize, lo: f64, hi: f64) -> Result<(usize, usize)> {
    if !(hi > lo) {
        return Err(Error::EmptyBand { lo, hi });
    }
    let eps = 1e-6 * df;
    let a = ((lo - f0 - eps) / df).ceil().max(0.0) as usize;
    let b_f = ((hi - f0 + eps) / df).floor();
    if b_f < 0.0 {
        return Err(Error::EmptyBand { lo, hi });
    }
    let b = (b_f as usize).min(n.saturating_sub(1));
    if a > b || a >= n {
        return Err(Error::EmptyBand { lo, hi });
    }
    Ok((a, b))
}

/// Periodic Hamming taper of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Short-time Fourier transform with a Hamming taper.
///
/// Bin spacing is `1/window_s` and snapshot spacing `window_s * (1 - overlap_frac)`.
/// Output is one-sided with density scaling: `sum_k |z_k|^2 * df` equals the
/// tapered frame energy divided by the taper energy `sum w^2`.
pub fn stft(series: &TimeSeries, window_s: f64, overlap_frac: f64) -> Result<Spectrogram> {
    let fs = series.sample_rate;
    if !(0.0..1.0).contains(&overlap_frac) {
        return invalid(format!("overlap fraction must be in [0, 1), got {overlap_frac}"));
    }
    let n_win_f = window_s * fs;
    if !(n_win_f >= 2.0) {
        return invalid(format!("window of {window_s} s holds fewer than 2 samples"));
    }
    let n_win = n_win_f.round() as usize;
    let hop = ((n_win as f64) * (1.0 - overlap_frac)).round().max(1.0) as usize;
    let len = series.samples.len();
    if len < n_win {
        return Err(Error::InsufficientSamples { needed: n_win, got: len });
    }
    let n_frames = 1 + (len - n_win) / hop;
    let n_bins = n_win / 2 + 1;

    let taper = hamming(n_win);
    let taper_energy: f64 = taper.iter().map(|w| w * w).sum();
    let base = 1.0 / (fs * taper_energy);
    let edge_scale = base.sqrt();
    let interior_scale = (2.0 * base).sqrt();
    let has_nyquist = n_win.is_multiple_of(2);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_win);
    let rows: Vec<Vec<Complex64>> = (0..n_frames)
        .into_par_iter()
        .map(|frame| {
            let start = frame * hop;
            let mut buf: Vec<Complex64> =
                series.samples[start..start + n_win].iter().zip(&taper).map(|(x, w)| Complex64::new(x * w, 0.0)).collect();
            fft.process(&mut buf);
            buf.truncate(n_bins);
            for (k, z) in buf.iter_mut().enumerate() {
                let edge = k == 0 || (has_nyquist && k == n_bins - 1);
                *z *= if edge { edge_scale } else { interior_scale };
            }
            buf
        })
        .collect();

    let mut values = Array2::<Complex64>::zeros((n_frames, n_bins));
    for (n, row) in rows.into_iter().enumerate() {
        values.row_mut(n).assign(&ndarray::Array1::from(row));
    }
    let t0 = series.start_time + (n_win as f64 / 2.0) / fs;
    Spectrogram::new(Values::Complex(values), 0.0, fs / n_win as f64, t0, hop as f64 / fs)
}

/// Half-width of the local-median window used for tone prominence, Hz.
pub const TONE_MEDIAN_HALF_WIDTH_HZ: f64 = 1.0;
pub const DEFAULT_TONE_PROMINENCE_DB: f64 = 6.0;

/// Tonal lines inside `band`: local maxima of the mean-intensity PSD that rise
/// at least `min_prominence_db` above the median of a 2-Hz neighbourhood.
pub fn detect_tones(spec: &Spectrogram, band: (f64, f64), min_prominence_db: f64) -> Result<Vec<f64>> {
    let (lo, hi) = band;
    let (a, b) = band_bins(spec.f0, spec.df, spec.n_freqs(), lo, hi)?;
    let psd = spec.mean_psd();
    let n = psd.len();
    let half = (TONE_MEDIAN_HALF_WIDTH_HZ / spec.df).round().max(1.0) as usize;

    let mut tones = Vec::new();
    for k in a..=b {
        let left_ok = k == 0 || psd[k] > psd[k - 1];
        let right_ok = k + 1 >= n || psd[k] >= psd[k + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let mut local: Vec<f64> = psd[k.saturating_sub(half)..=(k + half).min(n - 1)].to_vec();
        local.sort_by(f64::total_cmp);
        let mid = local.len() / 2;
        let median = if local.len() % 2 == 1 { local[mid] } else { 0.5 * (local[mid - 1] + local[mid]) };
        if median <= 0.0 {
            continue;
        }
        if 10.0 * (psd[k] / median).log10() >= min_prominence_db {
            tones.push(spec.f0 + k as f64 * spec.df);
        }
    }
    Ok(tones)
}

/// Split of the processed bins into broadband-only and tonal bins.
///
/// Bins closer than `guard_hz` to a tone, other than the tone's own bin,
/// belong to neither set and are left out of inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPartition {
    pub band: (f64, f64),
    pub freqs: Vec<f64>,
    pub tonal_freqs: Vec<f64>,
    pub tonal_bins: Vec<usize>,
    pub broadband_bins: Vec<usize>,
    pub guard_hz: f64,
}

impl BandPartition {
    pub fn n_tones(&self) -> usize {
        self.tonal_bins.len()
    }

    /// All processed bins (broadband and tonal), ascending.
    pub fn processed_bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.broadband_bins.iter().chain(&self.tonal_bins).copied().collect();
        bins.sort_unstable();
        bins
    }

    pub fn center_freq(&self) -> f64 {
        0.5 * (self.band.0 + self.band.1)
    }

    /// Broadband bins used to interpolate the variance at bin `k`: the pair
    /// `k -/+ dk` for the smallest `dk` with both in the broadband set, or the
    /// nearest broadband bin on either side when no such pair exists.
    pub fn broadband_neighbours(&self, k: usize) -> Vec<usize> {
        let is_bb = |i: usize| self.broadband_bins.binary_search(&i).is_ok();
        let n = self.freqs.len();
        let mut dk = 1;
        while dk <= k && k + dk < n {
            if is_bb(k - dk) && is_bb(k + dk) {
                return vec![k - dk, k + dk];
            }
            dk += 1;
        }
        let below = self.broadband_bins.iter().rev().find(|&&i| i < k).copied();
        let above = self.broadband_bins.iter().find(|&&i| i > k).copied();
        match (below, above) {
            (Some(b), Some(a)) if k - b <= a - k => vec![b],
            (_, Some(a)) => vec![a],
            (Some(b), None) => vec![b],
            (None, None) => Vec::new(),
        }
    }
}

pub fn partition_band(freqs: &[f64], tones: &[f64], guard_hz: f64) -> Result<BandPartition> {
    if freqs.is_empty() {
        return Err(Error::EmptyBand { lo: f64::NAN, hi: f64::NAN });
    }
    if !(guard_hz >= 0.0) {
        return invalid(format!("guard must be non-negative, got {guard_hz}"));
    }
    if freqs.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("frequency axis must be strictly increasing");
    }
    let lo = freqs[0];
    let hi = *freqs.last().unwrap();
    let half_bin = if freqs.len() > 1 { 0.5 * (freqs[1] - freqs[0]) } else { 0.0 };

    let mut sorted: Vec<f64> = tones.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut tonal_bins = Vec::with_capacity(sorted.len());
    for &t in &sorted {
        if t < lo - half_bin - FREQ_TOL || t > hi + half_bin + FREQ_TOL {
            return invalid(format!("tone {t} Hz lies outside [{lo}, {hi}] Hz"));
        }
        let k = freqs.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map(|(k, _)| k).unwrap();
        tonal_bins.push(k);
    }
    for (i, w) in tonal_bins.windows(2).enumerate() {
        if w[0] == w[1] {
            return Err(Error::UnresolvableTones { a: sorted[i], b: sorted[i + 1] });
        }
    }

    let tol = FREQ_TOL * guard_hz.max(1.0);
    let broadband_bins = (0..freqs.len())
        .filter(|k| tonal_bins.binary_search(k).is_err())
        .filter(|&k| sorted.iter().all(|t| (freqs[k] - t).abs() >= guard_hz - tol))
        .collect();

    Ok(BandPartition { band: (lo, hi), freqs: freqs.to_vec(), tonal_freqs: sorted, tonal_bins, broadband_bins, guard_hz })
}

/// Per-bin background noise variance `(sigma_u_k)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub f0: f64,
    pub df: f64,
    pub variance_per_bin: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(f0: f64, df: f64, variance_per_bin: Vec<f64>) -> Result<Self> {
        if variance_per_bin.is_empty() {
            return invalid("noise profile has no bins");
        }
        if let Some((k, _)) = variance_per_bin.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::DegenerateNoiseBin { bin: k, freq: f0 + k as f64 * df });
        }
        Ok(Self { f0, df, variance_per_bin })
    }

    pub fn uniform(f0: f64, df: f64, n: usize, variance: f64) -> Result<Self> {
        Self::new(f0, df, vec![variance; n])
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.variance_per_bin.len()).map(|k| self.f0 + k as f64 * self.df).collect()
    }

    /// Variances for the bins of `freqs`, matched by frequency.
    pub fn on_axis(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        freqs
            .iter()
            .map(|&f| {
                let idx = (f - self.f0) / self.df;
                let k = idx.round();
                if (idx - k).abs() > 1e-3 || k < 0.0 || k as usize >= self.variance_per_bin.len() {
                    invalid(format!("noise profile has no bin at {f} Hz"))
                } else {
                    Ok(self.variance_per_bin[k as usize])
                }
            })
            .collect()
    }

    pub fn scaled(&self, c: f64) -> NoiseProfile {
        NoiseProfile { variance_per_bin: self.variance_per_bin.iter().map(|v| v * c).collect(), ..*self }
    }
}

pub const MIN_NOISE_SNAPSHOTS: usize = 10;

/// Background noise variance per bin from a ship-free recording: the mean
/// intensity across snapshots, which is the exponential-model scale.
pub fn noise_profile(quiet: &Spectrogram) -> Result<NoiseProfile> {
    if quiet.n_times() < MIN_NOISE_SNAPSHOTS {
        return Err(Error::InsufficientSamples { needed: MIN_NOISE_SNAPSHOTS, got: quiet.n_times() });
    }
    NoiseProfile::new(quiet.f0, quiet.df, quiet.mean_psd())
}
