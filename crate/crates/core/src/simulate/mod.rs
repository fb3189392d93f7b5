//! Synthetic complex spectrograms for a moving source in a shallow-water
//! channel, generated cell by cell in the STFT domain:
//! `z = g (s_b + s_t) + u`.
//!
//! Every random draw comes from a ChaCha stream keyed by the configured seed,
//! the field (broadband, noise, tone phase) and the cell index, so output does
//! not depend on evaluation order or thread count.

mod channel;

pub use channel::{green_magnitude, modal_wavenumbers, ChannelModel, Envelope};

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{NoiseProfile, Spectrogram, Values};
use crate::striation::{map_time_to_range, ParamVector, RateProfile};

/// Default tonal set used by the examples and the benchmark scenario.
pub const DEFAULT_TONES_HZ: [f64; 5] = [42.8, 44.2, 45.5, 46.9, 48.3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum TonePhase {
    /// Independent uniform phase in every snapshot.
    #[default]
    Uniform,
    /// Zero phase throughout.
    Fixed,
    /// Uniform start, then Gaussian increments with standard deviation `step_rad`.
    RandomWalk { step_rad: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub tone_freqs: Vec<f64>,
    /// Complex-amplitude magnitudes `m_t`, one per tone.
    pub tone_mags: Vec<f64>,
    #[serde(default)]
    pub tone_phase: TonePhase,
    /// Broadband standard deviation `sigma_b(f)`; `E|s_b|^2 = sigma_b^2`.
    pub broadband_sigma: Envelope,
}

impl SourceModel {
    /// `eta_k = sigma_b(f_k) / sigma_b(f_ref)` on the given frequencies.
    pub fn eta(&self, freqs: &[f64], f_ref: f64) -> Vec<f64> {
        let denom = self.broadband_sigma.at(f_ref);
        freqs.iter().map(|&f| self.broadband_sigma.at(f) / denom).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.tone_freqs.len() != self.tone_mags.len() {
            return invalid("tone_freqs and tone_mags must have equal length");
        }
        if self.tone_mags.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return invalid("tone magnitudes must be finite and non-negative");
        }
        if let TonePhase::RandomWalk { step_rad } = self.tone_phase {
            if !(step_rad >= 0.0) {
                return invalid("random-walk phase step must be non-negative");
            }
        }
        self.broadband_sigma.validate("broadband", true)
    }
}

/// Source track. Exactly one of `r_start` (first snapshot) or `r_final`
/// (last snapshot) anchors the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_final: Option<f64>,
    pub rate: RateProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub channel: ChannelModel,
    pub source: SourceModel,
    pub track: TrackConfig,
    /// Background noise variance `(sigma_u)^2` per bin.
    pub noise_variance: Envelope,
    pub band: (f64, f64),
    pub df: f64,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub t0: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.source.validate()?;
        self.track.rate.validate()?;
        self.noise_variance.validate("noise", false)?;
        if !(self.df > 0.0) || !(self.dt > 0.0) {
            return invalid("df and dt must be positive");
        }
        if !(self.band.1 > self.band.0) || !(self.band.0 > 0.0) {
            return Err(Error::EmptyBand { lo: self.band.0, hi: self.band.1 });
        }
        if self.freqs().is_empty() {
            return Err(Error::EmptyBand { lo: self.band.0, hi: self.band.1 });
        }
        if self.n_snapshots() < 2 {
            return invalid("duration must cover at least two snapshots");
        }
        match (self.track.r_start, self.track.r_final) {
            (Some(r), None) | (None, Some(r)) if r > 0.0 => Ok(()),
            (Some(_), Some(_)) => invalid("set exactly one of track.r_start and track.r_final"),
            (None, None) => invalid("track needs r_start or r_final"),
            _ => invalid("track range must be positive"),
        }
    }

    pub fn n_snapshots(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn first_bin(&self) -> i64 {
        (self.band.0 / self.df - 1e-9).ceil() as i64
    }

    /// Bin centres: integer multiples of `df` inside the band.
    pub fn freqs(&self) -> Vec<f64> {
        let a = self.first_bin();
        let b = (self.band.1 / self.df + 1e-9).floor() as i64;
        (a..=b).map(|k| k as f64 * self.df).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_snapshots()).map(|n| self.t0 + n as f64 * self.dt).collect()
    }

    pub fn noise_profile(&self) -> Result<NoiseProfile> {
        let freqs = self.freqs();
        let f0 = self.first_bin() as f64 * self.df;
        NoiseProfile::new(f0, self.df, freqs.iter().map(|&f| self.noise_variance.at(f)).collect())
    }

    pub fn final_range(&self) -> f64 {
        let times = self.times();
        match (self.track.r_final, self.track.r_start) {
            (Some(r), _) => r,
            (None, Some(r0)) => r0 + self.track.rate.integral(times[0], *times.last().unwrap()),
            (None, None) => f64::NAN,
        }
    }

    /// Bin index of every tone on this configuration's axis, in tone order.
    pub fn tone_bins(&self) -> Result<Vec<usize>> {
        let n = self.freqs().len() as i64;
        let first = self.first_bin();
        let bins: Vec<usize> = self
            .source
            .tone_freqs
            .iter()
            .map(|&f| {
                let k = (f / self.df).round() as i64 - first;
                if k < 0 || k >= n {
                    invalid(format!("tone {f} Hz lies outside the simulated band"))
                } else {
                    Ok(k as usize)
                }
            })
            .collect::<Result<_>>()?;
        for i in 0..bins.len() {
            for j in i + 1..bins.len() {
                if bins[i] == bins[j] {
                    return Err(Error::UnresolvableTones { a: self.source.tone_freqs[i], b: self.source.tone_freqs[j] });
                }
            }
        }
        Ok(bins)
    }

    /// Snapped tone frequencies (bin centres) in tone order.
    pub fn tone_centers(&self) -> Result<Vec<f64>> {
        let first = self.first_bin();
        Ok(self.tone_bins()?.iter().map(|&k| (first + k as i64) as f64 * self.df).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub r_n: Vec<f64>,
    pub times: Vec<f64>,
    pub beta_true: Option<f64>,
    pub seed: u64,
    pub tone_freqs: Vec<f64>,
}

impl GroundTruth {
    pub fn final_range(&self) -> f64 {
        *self.r_n.last().expect("ground truth has snapshots")
    }
}

const FIELD_BROADBAND: u64 = 0;
const FIELD_NOISE: u64 = 1;
const FIELD_PHASE: u64 = 2;

fn cell_rng(seed: u64, field: u64, cell: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(field);
    rng.set_word_pos((cell as u128) << 8);
    rng
}

/// Circular complex Gaussian with `E|w|^2 = variance`.
fn circular(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn tone_phases(cfg: &SimConfig, n: usize, k: usize, bins: &[usize]) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = bins
        .par_iter()
        .map(|&b| {
            let draw = |i: usize| cell_rng(cfg.seed, FIELD_PHASE, (i * k + b) as u64);
            match cfg.source.tone_phase {
                TonePhase::Fixed => vec![0.0; n],
                TonePhase::Uniform => (0..n).map(|i| draw(i).random_range(0.0..2.0 * PI)).collect(),
                TonePhase::RandomWalk { step_rad } => {
                    let mut phase = draw(0).random_range(0.0..2.0 * PI);
                    let mut out = vec![phase; n];
                    for (i, slot) in out.iter_mut().enumerate().skip(1) {
                        let z: f64 = draw(i).sample(StandardNormal);
                        phase += step_rad * z;
                        *slot = phase;
                    }
                    out
                }
            }
        })
        .collect();
    Array2::from_shape_fn((n, bins.len()), |(i, j)| cols[j][i])
}

/// Complex spectrogram and ground truth for `cfg`.
pub fn synth_spectrogram(cfg: &SimConfig) -> Result<(Spectrogram, GroundTruth)> {
    cfg.validate()?;
    let freqs = cfg.freqs();
    let times = cfg.times();
    let (n, k) = (times.len(), freqs.len());
    let q = ParamVector::new(cfg.final_range(), cfg.track.rate.clone(), 1.0)?;
    let axis = map_time_to_range(&times, &q)?;
    let tone_bins = cfg.tone_bins()?;
    let phases = tone_phases(cfg, n, k, &tone_bins);

    let mut tone_mag = vec![0.0; k];
    let mut tone_col = vec![usize::MAX; k];
    for (j, &b) in tone_bins.iter().enumerate() {
        tone_mag[b] = cfg.source.tone_mags[j];
        tone_col[b] = j;
    }
    let sigma_b: Vec<f64> = freqs.iter().map(|&f| cfg.source.broadband_sigma.at(f)).collect();
    let noise_var: Vec<f64> = freqs.iter().map(|&f| cfg.noise_variance.at(f)).collect();

    let rows: Vec<Result<Vec<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    let cell = (i * k + j) as u64;
                    let g = green_magnitude(&cfg.channel, axis.r_n[i], freqs[j])?;
                    let s_b = circular(&mut cell_rng(cfg.seed, FIELD_BROADBAND, cell), sigma_b[j] * sigma_b[j]);
                    let s_t = if tone_col[j] == usize::MAX {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::from_polar(tone_mag[j], phases[[i, tone_col[j]]])
                    };
                    let u = circular(&mut cell_rng(cfg.seed, FIELD_NOISE, cell), noise_var[j]);
                    Ok((s_b + s_t) * g + u)
                })
                .collect()
        })
        .collect();
    let mut values = Array2::<Complex64>::zeros((n, k));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, z) in row?.into_iter().enumerate() {
            values[[i, j]] = z;
        }
    }
    let spec = Spectrogram::new(Values::Complex(values), freqs[0], cfg.df, cfg.t0, cfg.dt)?;
    let truth = GroundTruth { r_n: axis.r_n, times, beta_true: cfg.channel.beta_true(), seed: cfg.seed, tone_freqs: cfg.tone_centers()? };
    Ok((spec, truth))
}

/// `x = |z|^2` with axes preserved.
pub fn intensity(spec: &Spectrogram) -> Result<Spectrogram> {
    spec.to_intensity()
}
