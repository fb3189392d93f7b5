use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::Spectrogram;
use crate::striation::RangeAxis;

/// Peaks weaker than this, relative to the median spectral power, are treated
/// as noise.
pub const MIN_PEAK_SNR_DB: f64 = 12.0;
/// Shortest window the slope method will use, in snapshots.
pub const MIN_WINDOW_SNAPSHOTS: usize = 32;
const PAD_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeWindow {
    /// Range extent in metres, measured back from the final snapshot.
    pub range_extent: f64,
    /// Frequency extent in Hz, centred on the surface's band.
    pub freq_extent: f64,
    pub taper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeResult {
    /// Range estimate at the window centre.
    pub center_range: f64,
    /// Range estimate carried to the final snapshot.
    pub final_range: f64,
    /// Striation slope `df/dr` in Hz/m.
    pub slope: f64,
    pub peak_snr_db: f64,
    pub center_freq: f64,
    pub window: SlopeWindow,
    pub snapshots_used: usize,
}

/// Range extent over which a striation through `(r, f)` departs from its
/// tangent by less than one frequency bin. Infinite for `beta = 1`.
pub fn curvature_limited_extent(r: f64, f: f64, beta: f64, df: f64) -> f64 {
    let c = (beta * (beta - 1.0)).abs();
    if c < 1e-9 {
        f64::INFINITY
    } else {
        2.0 * r * (2.0 * df / (c * f)).sqrt()
    }
}

fn symmetric_hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()).collect()
}

fn fft2(data: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(cols);
    let col_fft = planner.plan_fft_forward(rows);
    let mut buf = Array2::<Complex64>::zeros((rows, cols));
    for ((i, j), v) in data.indexed_iter() {
        buf[[i, j]] = Complex64::new(*v, 0.0);
    }
    for mut row in buf.rows_mut() {
        let mut tmp: Vec<Complex64> = row.to_vec();
        row_fft.process(&mut tmp);
        row.assign(&ndarray::Array1::from(tmp));
    }
    for mut col in buf.columns_mut() {
        let mut tmp: Vec<Complex64> = col.to_vec();
        col_fft.process(&mut tmp);
        col.assign(&ndarray::Array1::from(tmp));
    }
    buf.mapv(|z| z.norm_sqr())
}

fn signed(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Parabolic vertex offset in `[-0.5, 0.5]` from three samples.
fn vertex(a: f64, b: f64, c: f64) -> f64 {
    let d = a - 2.0 * b + c;
    if d.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        (0.5 * (a - c) / d).clamp(-0.5, 0.5)
    }
}

/// Slope-based range estimate from the dominant 2-D Fourier component of a
/// range-frequency window, `r = beta f / (df/dr)`.
///
/// `axis` gives the range of every snapshot; only range differences matter,
/// so any anchor consistent with the track can be used.
pub fn slope_range(surface: &Spectrogram, axis: &RangeAxis, window: &SlopeWindow, beta: f64) -> Result<SlopeResult> {
    if axis.len() != surface.n_times() {
        return invalid("range axis length differs from the number of snapshots");
    }
    if !(beta > 0.0) || !(window.range_extent > 0.0) || !(window.freq_extent > 0.0) {
        return invalid("slope window extents and beta must be positive");
    }
    if axis.direction() == 0 {
        return invalid("range must be strictly monotone for the slope method");
    }
    let n = surface.n_times();
    let r_end = axis.r_n[n - 1];
    let first = (0..n).find(|&i| (axis.r_n[i] - r_end).abs() <= window.range_extent * (1.0 + 1e-12)).unwrap_or(n - 1);
    let rows: Vec<usize> = (first..n).collect();
    if rows.len() < 4 {
        return invalid(format!("slope window holds only {} snapshots", rows.len()));
    }
    let freqs = surface.freqs();
    let f_mid = 0.5 * (freqs[0] + freqs[freqs.len() - 1]);
    let cols: Vec<usize> = (0..freqs.len()).filter(|&k| (freqs[k] - f_mid).abs() <= 0.5 * window.freq_extent + 1e-9 * surface.df).collect();
    if cols.len() < 4 {
        return invalid(format!("slope window holds only {} frequency bins", cols.len()));
    }

    // Ascending uniform range grid, resampling each frequency column linearly.
    let mut pairs: Vec<(f64, usize)> = rows.iter().map(|&i| (axis.r_n[i], i)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pairs.len();
    let (r_lo, r_hi) = (pairs[0].0, pairs[m - 1].0);
    let dr = (r_hi - r_lo) / (m - 1) as f64;
    let x = surface.intensities();
    let mut win = Array2::<f64>::zeros((m, cols.len()));
    for (c, &k) in cols.iter().enumerate() {
        let col: Vec<f64> = pairs.iter().map(|&(_, i)| x[[i, k]]).collect();
        for a in 0..m {
            let r = r_lo + a as f64 * dr;
            let b = pairs.partition_point(|p| p.0 <= r).clamp(1, m - 1);
            let (r0, r1) = (pairs[b - 1].0, pairs[b].0);
            let w = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
            win[[a, c]] = col[b - 1] + w * (col[b] - col[b - 1]);
        }
    }
    let (lo, hi) = win.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs())) {
        return Err(Error::NoStriation);
    }
    let mean = win.mean().unwrap();
    win.mapv_inplace(|v| v - mean);
    if window.taper {
        let (tr, tf) = (symmetric_hamming(m), symmetric_hamming(cols.len()));
        for ((a, c), v) in win.indexed_iter_mut() {
            *v *= tr[a] * tf[c];
        }
    }

    let (nr, nf) = ((m * PAD_FACTOR).next_power_of_two(), (cols.len() * PAD_FACTOR).next_power_of_two());
    let power = fft2(&win, nr, nf);
    // Exclude one original-resolution bin around each axis through DC.
    let (guard_r, guard_f) = (nr as f64 / m as f64, nf as f64 / cols.len() as f64);
    let off_axis = |p: usize, q: usize| signed(p, nr).abs() > guard_r && signed(q, nf).abs() > guard_f;
    let mut best: Option<(usize, usize, f64)> = None;
    let mut values = Vec::with_capacity(nr * nf);
    for ((p, q), &v) in power.indexed_iter() {
        if !off_axis(p, q) {
            continue;
        }
        values.push(v);
        if best.is_none_or(|b| v > b.2) {
            best = Some((p, q, v));
        }
    }
    let Some((p, q, pk)) = best else {
        return Err(Error::NoStriation);
    };
    values.sort_by(f64::total_cmp);
    let median = values[values.len() / 2];
    let snr_db = if median > 0.0 {
        10.0 * (pk / median).log10()
    } else if pk > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    if !(snr_db >= MIN_PEAK_SNR_DB) {
        return Err(Error::NoStriation);
    }

    let at =
        |a: isize, b: isize| power[[(p as isize + a).rem_euclid(nr as isize) as usize, (q as isize + b).rem_euclid(nf as isize) as usize]];
    let dp = vertex(at(-1, 0), pk, at(1, 0));
    let dq = vertex(at(0, -1), pk, at(0, 1));
    let kappa_r = (signed(p, nr) + dp) / (nr as f64 * dr);
    let kappa_f = (signed(q, nf) + dq) / (nf as f64 * surface.df);
    let slope = -kappa_r / kappa_f;
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::NoStriation);
    }
    let center_freq = 0.5 * (freqs[cols[0]] + freqs[*cols.last().unwrap()]);
    let center_range = beta * center_freq / slope;
    let axis_center = 0.5 * (r_lo + r_hi);
    Ok(SlopeResult {
        center_range,
        final_range: center_range + (r_end - axis_center),
        slope,
        peak_snr_db: snr_db,
        center_freq,
        window: *window,
        snapshots_used: m,
    })
}

/// Slope estimate with the window chosen automatically: the full band in
/// frequency and, in range, the curvature-limited extent at `beta` evaluated
/// at a first-pass estimate (never fewer than [`MIN_WINDOW_SNAPSHOTS`]).
pub fn slope_range_auto(surface: &Spectrogram, axis: &RangeAxis, beta: f64, taper: bool) -> Result<SlopeResult> {
    let n = surface.n_times();
    let span = (axis.r_n[n - 1] - axis.r_n[0]).abs();
    let step = span / (n - 1).max(1) as f64;
    let band = surface.df * (surface.n_freqs() - 1) as f64;
    let full = SlopeWindow { range_extent: span, freq_extent: band, taper };
    let first = slope_range(surface, axis, &full, beta)?;
    let f_c = first.center_freq;
    let extent = curvature_limited_extent(first.final_range.abs(), f_c, beta, surface.df)
        .max(MIN_WINDOW_SNAPSHOTS.saturating_sub(1) as f64 * step)
        .min(span);
    slope_range(surface, axis, &SlopeWindow { range_extent: extent, ..full }, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Values;

    fn linear_striations(r_end: f64, beta: f64, n: usize, dr: f64, noise: bool) -> (Spectrogram, RangeAxis) {
        let df = 0.05;
        let freqs: Vec<f64> = (0..141).map(|k| 42.0 + k as f64 * df).collect();
        let r_n: Vec<f64> = (0..n).map(|i| r_end - (n - 1 - i) as f64 * dr).collect();
        let period = 600.0;
        let mut rng_state = 12345u64;
        let x = Array2::from_shape_fn((n, freqs.len()), |(i, k)| {
            // Phase constant on f/f_c = (r/r_c)^beta.
            let phase = 2.0 * std::f64::consts::PI * r_n[i] * (45.5 / freqs[k]).powf(1.0 / beta) / period;
            let mut v = 1.0 + 0.8 * phase.cos();
            if noise {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v *= 0.5 + (rng_state >> 11) as f64 / (1u64 << 53) as f64;
            }
            v
        });
        (Spectrogram::new(Values::Intensity(x), 42.0, df, 0.0, 10.0).unwrap(), RangeAxis { r_n })
    }

    #[test]
    fn recovers_range_of_straight_striations() {
        let (spec, axis) = linear_striations(23_000.0, 1.0, 130, 102.0, false);
        let res = slope_range_auto(&spec, &axis, 1.0, true).unwrap();
        assert!((res.final_range / 23_000.0 - 1.0).abs() < 0.03, "{res:?}");
    }

    #[test]
    fn curved_striations_with_noise_still_detected() {
        let (spec, axis) = linear_striations(23_000.0, 1.18, 130, 102.0, true);
        let res = slope_range_auto(&spec, &axis, 1.18, true).unwrap();
        assert!((res.final_range / 23_000.0 - 1.0).abs() < 0.1, "{res:?}");
    }

    #[test]
    fn constant_surface_has_no_striation() {
        let spec = Spectrogram::new(Values::Intensity(Array2::from_elem((64, 141), 3.0)), 42.0, 0.05, 0.0, 10.0).unwrap();
        let axis = RangeAxis { r_n: (0..64).map(|i| 20_000.0 + 100.0 * i as f64).collect() };
        let w = SlopeWindow { range_extent: 6300.0, freq_extent: 7.0, taper: true };
        assert!(matches!(slope_range(&spec, &axis, &w, 1.0), Err(Error::NoStriation)));
    }

    #[test]
    fn offset_invariance() {
        let (spec, axis) = linear_striations(23_000.0, 1.0, 80, 102.0, true);
        let shifted = Spectrogram::new(Values::Intensity(spec.intensities() + 7.5), spec.f0, spec.df, spec.t0, spec.dt).unwrap();
        let w = SlopeWindow { range_extent: 8000.0, freq_extent: 7.0, taper: false };
        let a = slope_range(&spec, &axis, &w, 1.0).unwrap();
        let b = slope_range(&shifted, &axis, &w, 1.0).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-9 * a.slope);
        assert!((a.peak_snr_db - b.peak_snr_db).abs() < 1e-6);
    }

    #[test]
    fn gain_invariance() {
        let (spec, axis) = linear_striations(23_000.0, 1.18, 130, 102.0, true);
        let scaled = Spectrogram::new(Values::Intensity(spec.intensities() * 1e4), spec.f0, spec.df, spec.t0, spec.dt).unwrap();
        let a = slope_range_auto(&spec, &axis, 1.18, true).unwrap();
        let b = slope_range_auto(&scaled, &axis, 1.18, true).unwrap();
        assert!((a.final_range - b.final_range).abs() < 1e-9 * a.final_range);
    }

    #[test]
    fn curvature_extent() {
        assert!(curvature_limited_extent(23_000.0, 45.5, 1.0, 0.05).is_infinite());
        let e = curvature_limited_extent(23_000.0, 45.5, 1.18, 0.05);
        assert!(e > 4000.0 && e < 5000.0, "{e}");
    }
}
