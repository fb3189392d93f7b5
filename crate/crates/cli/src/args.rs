use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "striate", version, about = "Waveguide-invariant ranging of moving acoustic sources")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a complex spectrogram and its ground truth.
    Simulate(SimulateArgs),
    /// Grid search over the source range at the final snapshot.
    EstimateRange(EstimateArgs),
    /// Grid search over the waveguide invariant.
    EstimateWi(EstimateArgs),
    /// Grid search over a constant range rate.
    EstimateRate(EstimateArgs),
    /// Run the slope (S) or tonal-only (T) comparison method.
    Baseline(EstimateArgs),
    /// Seeded Monte-Carlo trials with an error table.
    Sweep(SweepArgs),
    /// Convert a position log into range and range-rate profiles.
    Ais(AisArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON); defaults to the built-in ranging scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// FMIN:FMAX in Hz.
    #[arg(long)]
    pub band: Option<String>,
    /// Comma-separated tone frequencies in Hz.
    #[arg(long)]
    pub tones: Option<String>,
    /// True waveguide invariant of the analytic channel.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Constant range rate in m/s.
    #[arg(long, conflicts_with = "rate_profile")]
    pub rate: Option<f64>,
    /// Rate profile JSON (range-rate profile or rate profile).
    #[arg(long)]
    pub rate_profile: Option<PathBuf>,
    /// Also write the intensity as CSV.
    #[arg(long)]
    pub csv: bool,
}

/// Inputs shared by the estimators. Every field can come from `--config`;
/// flags given on the command line take precedence.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateArgs {
    /// JSON file with any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Spectrogram stem (STEM.json + STEM.bin).
    #[arg(long)]
    pub spectrogram: Option<PathBuf>,
    /// WAV or raw f32 recording to transform instead of a spectrogram.
    #[arg(long, conflicts_with = "spectrogram")]
    pub audio: Option<PathBuf>,
    /// STFT window length in seconds for audio input.
    #[arg(long)]
    pub stft_window: Option<f64>,
    /// STFT overlap fraction in [0, 1).
    #[arg(long)]
    pub stft_overlap: Option<f64>,
    /// FMIN:FMAX in Hz.
    #[arg(long)]
    pub band: Option<String>,
    /// Comma-separated tone frequencies, or "none"; detected when omitted.
    #[arg(long)]
    pub tones: Option<String>,
    #[arg(long)]
    pub tone_prominence_db: Option<f64>,
    /// Half-width in Hz around each tone excluded from the broadband set.
    #[arg(long)]
    pub guard: Option<f64>,
    /// MIN:MAX:STEP of the searched parameter.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Range at the final snapshot in m, when range is held fixed.
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long, conflicts_with = "rate_profile")]
    pub rate: Option<f64>,
    #[arg(long)]
    pub rate_profile: Option<PathBuf>,
    /// Uniform background noise variance per bin.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    /// Noise profile JSON.
    #[arg(long, conflicts_with = "noise_variance")]
    pub noise_profile: Option<PathBuf>,
    /// Ship-free spectrogram stem from which to estimate the noise profile.
    #[arg(long, conflicts_with_all = ["noise_variance", "noise_profile"])]
    pub quiet: Option<PathBuf>,
    #[arg(long)]
    pub l_min: Option<usize>,
    /// Evaluate every candidate on a common striation count (default true).
    #[arg(long)]
    pub equalize: Option<bool>,
    /// Baseline method, S or T.
    #[arg(long)]
    pub method: Option<String>,
    /// Hamming taper for the slope method (default true).
    #[arg(long)]
    pub taper: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario JSON; defaults to the built-in ranging scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; trial seeds derive from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Comma-separated methods among G, S, T.
    #[arg(long, default_value = "G")]
    pub method: String,
    /// Comma-separated true final ranges in m.
    #[arg(long)]
    pub ranges: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub band: Option<String>,
    #[arg(long)]
    pub tones: Option<String>,
    #[arg(long)]
    pub l_min: Option<usize>,
    /// Error tolerance in percent for the "within" column.
    #[arg(long, default_value_t = 4.0)]
    pub tolerance: f64,
    /// Add a three-point moving average of the mean error across ranges.
    #[arg(long)]
    pub smooth: bool,
}

#[derive(Debug, Args)]
pub struct AisArgs {
    /// CSV with timestamp, lat, lon and optional sog, mmsi columns.
    #[arg(long)]
    pub track: PathBuf,
    /// LAT,LON of the receiver in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub receiver: String,
    /// Resampling interval in s.
    #[arg(long, default_value_t = 10.0)]
    pub dt: f64,
    #[arg(long)]
    pub out: PathBuf,
}
