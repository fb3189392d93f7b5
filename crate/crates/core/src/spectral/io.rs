//! On-disk formats for time series and spectrograms.
//!
//! A spectrogram is stored as a pair of files sharing a stem: `<stem>.bin`
//! holds the row-major matrix in little-endian float32 (intensity) or
//! interleaved complex64 (complex), and `<stem>.json` holds a [`SpecHeader`].
//! Cells carry one-sided power-density scaling, so the mean intensity of a
//! noise-only bin is the noise variance in `units^2/Hz`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Kind, Spectrogram, TimeSeries, Values};
use crate::error::{invalid, open, Result};

pub const SPEC_FORMAT_VERSION: u32 = 1;
pub const SCALING: &str = "one-sided PSD: |z|^2 in units^2/Hz, Hamming taper normalized by fs*sum(w^2)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecHeader {
    pub n_times: usize,
    pub n_freqs: usize,
    pub f0: f64,
    pub df: f64,
    pub t0: f64,
    pub dt: f64,
    pub kind: Kind,
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default = "default_scaling")]
    pub scaling: String,
    #[serde(default = "default_version")]
    pub format_version: u32,
}

fn default_units() -> String {
    "uPa".into()
}
fn default_scaling() -> String {
    SCALING.into()
}
fn default_version() -> u32 {
    SPEC_FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub sample_rate: f64,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default = "default_units")]
    pub units: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Reads a single-channel WAV file (integer PCM or float) as a time series.
/// Integer samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<TimeSeries> {
    let mut reader = hound::WavReader::new(BufReader::new(open(path)?))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return invalid(format!("expected a single-channel WAV, found {} channels", spec.channels));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full_scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 / full_scale)).collect::<Result<_, _>>()?
        }
    };
    TimeSeries::new(samples, spec.sample_rate as f64, 0.0)
}

/// Reads raw little-endian float32 samples; metadata comes from the JSON
/// sidecar next to it (same path with a `.json` extension).
pub fn read_raw_f32(path: &Path) -> Result<TimeSeries> {
    let sidecar: RawSidecar = serde_json::from_reader(BufReader::new(open(&path.with_extension("json"))?))?;
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return invalid(format!("{} is not a whole number of float32 samples", path.display()));
    }
    let samples = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    TimeSeries::new(samples, sidecar.sample_rate, sidecar.start_time)
}

pub fn write_raw_f32(series: &TimeSeries, path: &Path, units: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in &series.samples {
        w.write_all(&(*s as f32).to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = RawSidecar { sample_rate: series.sample_rate, start_time: series.start_time, units: units.into() };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn header_of(spec: &Spectrogram) -> SpecHeader {
    SpecHeader {
        n_times: spec.n_times(),
        n_freqs: spec.n_freqs(),
        f0: spec.f0,
        df: spec.df,
        t0: spec.t0,
        dt: spec.dt,
        kind: spec.kind(),
        units: default_units(),
        scaling: default_scaling(),
        format_version: SPEC_FORMAT_VERSION,
    }
}

/// Writes `<stem>.bin` and `<stem>.json`. Returns the two paths.
pub fn write_spectrogram(spec: &Spectrogram, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let bin = with_ext(stem, "bin");
    let json = with_ext(stem, "json");
    let mut w = BufWriter::new(File::create(&bin)?);
    match &spec.values {
        Values::Complex(v) => {
            for z in v.iter() {
                w.write_all(&(z.re as f32).to_le_bytes())?;
                w.write_all(&(z.im as f32).to_le_bytes())?;
            }
        }
        Values::Intensity(v) => {
            for x in v.iter() {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    std::fs::write(&json, serde_json::to_string_pretty(&header_of(spec))?)?;
    Ok((bin, json))
}

pub fn read_spectrogram(stem: &Path) -> Result<Spectrogram> {
    let header: SpecHeader = serde_json::from_reader(BufReader::new(open(&with_ext(stem, "json"))?))?;
    let mut bytes = Vec::new();
    open(&with_ext(stem, "bin"))?.read_to_end(&mut bytes)?;
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let cells = header.n_times * header.n_freqs;
    let shape = (header.n_times, header.n_freqs);
    let values = match header.kind {
        Kind::Complex => {
            if floats.len() != 2 * cells || bytes.len() % 4 != 0 {
                return invalid(format!("expected {} complex cells, file holds {} floats", cells, floats.len()));
            }
            let z: Vec<Complex64> = floats.chunks_exact(2).map(|p| Complex64::new(p[0] as f64, p[1] as f64)).collect();
            Values::Complex(Array2::from_shape_vec(shape, z).expect("length checked"))
        }
        Kind::Intensity => {
            if floats.len() != cells || bytes.len() % 4 != 0 {
                return invalid(format!("expected {} intensity cells, file holds {} floats", cells, floats.len()));
            }
            let x: Vec<f64> = floats.into_iter().map(f64::from).collect();
            Values::Intensity(Array2::from_shape_vec(shape, x).expect("length checked"))
        }
    };
    Spectrogram::new(values, header.f0, header.df, header.t0, header.dt)
}

/// Intensity table with a `time,f1,f2,...` header row, one snapshot per line.
pub fn write_spectrogram_csv(spec: &Spectrogram, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(spec.freqs().iter().map(|f| format!("{f}")));
    w.write_record(&header)?;
    let x = spec.intensities();
    for (n, t) in spec.times().iter().enumerate() {
        let mut row = vec![format!("{t}")];
        row.extend(x.row(n).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
