use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use striate::spectral::io::SPEC_FORMAT_VERSION;
use striate::tracks::RangeRateProfile;
use striate::{Error, RateProfile, Result};

pub fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Overlays the non-null fields of `flags` on the JSON object in `config`.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let mut base: Value = read_json(path)?;
    let Value::Object(map) = &mut base else {
        return bad(format!("{}: expected a JSON object", path.display()));
    };
    if let Value::Object(over) = serde_json::to_value(flags)? {
        for (k, v) in over {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => bad(format!("{what}: {s:?} is not a finite number")),
    }
}

pub fn parse_pair(s: &str, sep: char, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(sep).collect();
    if parts.len() != 2 {
        return bad(format!("{what}: expected A{sep}B, got {s:?}"));
    }
    Ok((parse_f64(parts[0], what)?, parse_f64(parts[1], what)?))
}

pub fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = parse_pair(s, ':', "band")?;
    if !(lo > 0.0 && hi > lo) {
        return bad(format!("band: need 0 < FMIN < FMAX, got {s:?}"));
    }
    Ok((lo, hi))
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return bad(format!("grid: expected MIN:MAX:STEP, got {s:?}"));
    }
    let (lo, hi, step) = (parse_f64(parts[0], "grid")?, parse_f64(parts[1], "grid")?, parse_f64(parts[2], "grid")?);
    striate::inference::linear_grid(lo, hi, step)
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_f64(p, what)).collect()
}

/// Reads either a range-rate profile (as written by `ais`) or a bare rate
/// profile.
pub fn read_rate_profile(path: &Path) -> Result<RateProfile> {
    let value: Value = read_json(path)?;
    if let Ok(p) = serde_json::from_value::<RangeRateProfile>(value.clone()) {
        return Ok(p.rate_profile());
    }
    let p: RateProfile =
        serde_json::from_value(value).map_err(|e| Error::Invalid(format!("{}: not a rate profile ({e})", path.display())))?;
    p.validate()?;
    Ok(p)
}

pub fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Invalid(format!("cannot create {}: {e}", dir.display())))
}

/// Everything needed to repeat a run: the command line, the fully resolved
/// configuration and the format versions of what was written.
pub fn write_manifest(dir: &Path, subcommand: &str, config: &Value, outputs: &[PathBuf]) -> Result<()> {
    let names: Vec<String> =
        outputs.iter().map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())).collect();
    let manifest = json!({
        "tool": "striate",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": config,
        "formats": { "spectrogram": SPEC_FORMAT_VERSION },
        "outputs": names,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}
