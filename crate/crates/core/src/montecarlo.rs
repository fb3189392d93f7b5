//! Seeded Monte-Carlo trials comparing the ranging methods on synthetic data.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{slope_range_auto, tonal_only_range};
use crate::error::{invalid, Error, Result};
use crate::inference::{linear_grid, ml_estimate, MlOptions, Search};
use crate::simulate::{synth_spectrogram, ChannelModel, Envelope, SimConfig, SourceModel, TonePhase, TrackConfig, DEFAULT_TONES_HZ};
use crate::spectral::partition_band;
use crate::striation::{map_time_to_range, ParamVector, RateProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Broadband-plus-tonal likelihood.
    G,
    /// 2-D Fourier slope.
    S,
    /// Tonal-only likelihood.
    T,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "G" => Ok(Method::G),
            "S" => Ok(Method::S),
            "T" => Ok(Method::T),
            other => invalid(format!("unknown method {other:?}; expected G, S or T")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::G => "G",
            Method::S => "S",
            Method::T => "T",
        })
    }
}

/// A synthetic ranging scenario on the analytic channel. SNRs are per-bin
/// received power over the background noise variance at unit base gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub beta: f64,
    pub rate: f64,
    pub final_range: f64,
    pub n_snapshots: usize,
    pub dt: f64,
    pub band: (f64, f64),
    pub df: f64,
    pub tones: Vec<f64>,
    pub tone_snr_db: f64,
    pub broadband_snr_db: f64,
    pub noise_variance: f64,
    /// Interference period in range at the band centre, metres.
    pub period_m: f64,
    pub modulation_depth: f64,
    pub guard_hz: f64,
    /// Candidate grid as fractions of the true range, with a step in metres.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_step: f64,
    pub l_min: usize,
    pub slope_taper: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            beta: 1.18,
            rate: 10.2,
            final_range: 23_000.0,
            n_snapshots: 130,
            dt: 10.0,
            band: (42.0, 49.0),
            df: 0.05,
            tones: DEFAULT_TONES_HZ.to_vec(),
            tone_snr_db: 12.0,
            broadband_snr_db: 8.0,
            noise_variance: 1.0,
            period_m: 600.0,
            modulation_depth: 0.8,
            guard_hz: 0.35,
            grid_lo: 0.6,
            grid_hi: 1.4,
            grid_step: 10.0,
            l_min: 30,
            slope_taper: true,
        }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl Scenario {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let f_c = 0.5 * (self.band.0 + self.band.1);
        let sigma_b = if self.broadband_snr_db.is_finite() { (db(self.broadband_snr_db) * self.noise_variance).sqrt() } else { 0.0 };
        let tone_mag = if self.tone_snr_db.is_finite() { (db(self.tone_snr_db) * self.noise_variance).sqrt() } else { 0.0 };
        SimConfig {
            channel: ChannelModel::analytic_with_period(self.beta, f_c, self.period_m, self.modulation_depth, Envelope::constant(1.0)),
            source: SourceModel {
                tone_freqs: self.tones.clone(),
                tone_mags: vec![tone_mag; self.tones.len()],
                tone_phase: TonePhase::Uniform,
                broadband_sigma: Envelope::constant(sigma_b),
            },
            track: TrackConfig { r_start: None, r_final: Some(self.final_range), rate: RateProfile::Constant(self.rate) },
            noise_variance: Envelope::constant(self.noise_variance),
            band: self.band,
            df: self.df,
            dt: self.dt,
            duration: self.n_snapshots as f64 * self.dt,
            t0: 0.0,
            seed,
        }
    }

    pub fn candidates(&self) -> Result<Vec<f64>> {
        linear_grid(self.grid_lo * self.final_range, self.grid_hi * self.final_range, self.grid_step)
    }

    pub fn ml_options(&self) -> MlOptions {
        MlOptions { l_min: self.l_min, ..MlOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub truth: f64,
    pub estimate: f64,
    pub signed_error_pct: f64,
    pub runtime_s: f64,
}

/// Simulates one realization and applies `method` to it.
pub fn run_trial(scenario: &Scenario, method: Method, trial: usize, seed: u64) -> Result<TrialResult> {
    let start = Instant::now();
    let cfg = scenario.sim_config(seed);
    let (spec, truth) = synth_spectrogram(&cfg)?;
    let spec = spec.to_intensity()?;
    let r_true = truth.final_range();
    let estimate = match method {
        Method::G | Method::T => {
            let part = partition_band(&spec.freqs(), &truth.tone_freqs, scenario.guard_hz)?;
            let search = Search::Range { rate: RateProfile::Constant(scenario.rate), beta: scenario.beta };
            let cands = scenario.candidates()?;
            let res = if method == Method::G {
                ml_estimate(&spec, &part, &cfg.noise_profile()?, &search, &cands, &scenario.ml_options())?
            } else {
                tonal_only_range(&spec, &part, &search, &cands, &scenario.ml_options())?
            };
            res.argmax
        }
        Method::S => {
            // The slope estimate depends only on range differences along the
            // axis, so any positive anchor gives the same answer.
            let q = ParamVector::new(scenario.final_range, RateProfile::Constant(scenario.rate), scenario.beta)?;
            let axis = map_time_to_range(&spec.times(), &q)?;
            slope_range_auto(&spec, &axis, scenario.beta, scenario.slope_taper)?.final_range
        }
    };
    Ok(TrialResult {
        trial,
        seed,
        method,
        truth: r_true,
        estimate,
        signed_error_pct: 100.0 * (estimate - r_true) / r_true,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Seed for trial `i` of a sweep rooted at `base_seed`.
pub fn trial_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Runs `n` trials in parallel; results come back in trial order.
pub fn run_trials(scenario: &Scenario, method: Method, base_seed: u64, n: usize) -> Vec<Result<TrialResult>> {
    (0..n).into_par_iter().map(|i| run_trial(scenario, method, i, trial_seed(base_seed, i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub rmse_pct: f64,
    pub mean_pct: f64,
    pub median_pct: f64,
    pub iqr_pct: f64,
    /// Share of trials with |error| at most the tolerance.
    pub within_fraction: f64,
    pub tolerance_pct: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let (i, w) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + w * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn summarize(errors_pct: &[f64], tolerance_pct: f64) -> ErrorStats {
    let n = errors_pct.len();
    if n == 0 {
        return ErrorStats {
            n,
            rmse_pct: f64::NAN,
            mean_pct: f64::NAN,
            median_pct: f64::NAN,
            iqr_pct: f64::NAN,
            within_fraction: f64::NAN,
            tolerance_pct,
        };
    }
    let mut sorted = errors_pct.to_vec();
    sorted.sort_by(f64::total_cmp);
    ErrorStats {
        n,
        rmse_pct: (errors_pct.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt(),
        mean_pct: errors_pct.iter().sum::<f64>() / n as f64,
        median_pct: quantile(&sorted, 0.5),
        iqr_pct: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        within_fraction: errors_pct.iter().filter(|e| e.abs() <= tolerance_pct).count() as f64 / n as f64,
        tolerance_pct,
    }
}

/// Centred three-point moving average; end points average what is available.
pub fn moving_average3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}
