use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A smooth positive function of frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Envelope {
    Constant {
        value: f64,
    },
    /// `value * (f / f_ref)^exponent`
    PowerLaw {
        value: f64,
        f_ref: f64,
        exponent: f64,
    },
    /// Linear interpolation through `(freqs, values)`, held flat beyond the ends.
    Table {
        freqs: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Envelope {
    pub fn constant(value: f64) -> Self {
        Envelope::Constant { value }
    }

    pub fn at(&self, f: f64) -> f64 {
        match self {
            Envelope::Constant { value } => *value,
            Envelope::PowerLaw { value, f_ref, exponent } => value * (f / f_ref).powf(*exponent),
            Envelope::Table { freqs, values } => {
                let last = freqs.len() - 1;
                if f <= freqs[0] {
                    return values[0];
                }
                if f >= freqs[last] {
                    return values[last];
                }
                let i = freqs.partition_point(|&x| x <= f) - 1;
                let w = (f - freqs[i]) / (freqs[i + 1] - freqs[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// Checks that the envelope is finite and, unless `allow_zero`, positive.
    pub fn validate(&self, what: &str, allow_zero: bool) -> Result<()> {
        let ok = |v: f64| v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
        let good = match self {
            Envelope::Constant { value } => ok(*value),
            Envelope::PowerLaw { value, f_ref, exponent } => ok(*value) && *f_ref > 0.0 && exponent.is_finite(),
            Envelope::Table { freqs, values } => {
                !freqs.is_empty() && freqs.len() == values.len() && freqs.windows(2).all(|w| w[1] > w[0]) && values.iter().all(|v| ok(*v))
            }
        };
        if good {
            Ok(())
        } else {
            invalid(format!("{what} envelope is malformed or has out-of-range values"))
        }
    }
}

/// Channel transfer magnitude `|g(r, f)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelModel {
    /// `|g|^2 = g0(f)^2 (1 + m cos(A w^(-1/beta) r))` with `w = 2 pi f`; the
    /// cosine phase is constant along `f ∝ r^beta`.
    AnalyticWi { beta_true: f64, delta_k_coeff: f64, modulation_depth: f64, base_gain: Envelope },
    /// Ideal isovelocity waveguide with a pressure-release surface and a rigid
    /// bottom, summed over the first `mode_count` propagating modes.
    IdealModes { depth: f64, sound_speed: f64, mode_count: usize, source_depth: f64, receiver_depth: f64 },
}

impl ChannelModel {
    /// Analytic channel whose interference period in range is `period_m` at
    /// frequency `f_ref`.
    pub fn analytic_with_period(beta_true: f64, f_ref: f64, period_m: f64, modulation_depth: f64, base_gain: Envelope) -> Self {
        let omega = 2.0 * PI * f_ref;
        ChannelModel::AnalyticWi {
            beta_true,
            delta_k_coeff: 2.0 * PI * omega.powf(1.0 / beta_true) / period_m,
            modulation_depth,
            base_gain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::AnalyticWi { beta_true, delta_k_coeff, modulation_depth, base_gain } => {
                if !(*beta_true > 0.0) || !delta_k_coeff.is_finite() {
                    return invalid("analytic channel needs beta_true > 0 and finite delta_k_coeff");
                }
                if !(0.0..=1.0).contains(modulation_depth) {
                    return invalid(format!("modulation depth must be in [0, 1], got {modulation_depth}"));
                }
                base_gain.validate("base gain", false)
            }
            ChannelModel::IdealModes { depth, sound_speed, mode_count, source_depth, receiver_depth } => {
                if !(*depth > 0.0) || !(*sound_speed > 0.0) || *mode_count == 0 {
                    return invalid("ideal waveguide needs positive depth, sound speed and mode count");
                }
                for z in [source_depth, receiver_depth] {
                    if !(*z > 0.0 && *z < *depth) {
                        return invalid(format!("source and receiver depths must lie in (0, {depth}) m"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Waveguide invariant the channel was built with, if it has one.
    pub fn beta_true(&self) -> Option<f64> {
        match self {
            ChannelModel::AnalyticWi { beta_true, .. } => Some(*beta_true),
            ChannelModel::IdealModes { .. } => None,
        }
    }
}

/// Horizontal wavenumbers of the propagating modes at frequency `f`, in mode
/// order; evanescent modes are dropped.
pub fn modal_wavenumbers(depth: f64, sound_speed: f64, mode_count: usize, f: f64) -> Vec<(usize, f64)> {
    let k = 2.0 * PI * f / sound_speed;
    (1..=mode_count)
        .filter_map(|m| {
            let kz = (m as f64 - 0.5) * PI / depth;
            let radicand = k * k - kz * kz;
            (radicand > 0.0).then(|| (m, radicand.sqrt()))
        })
        .collect()
}

pub fn green_magnitude(channel: &ChannelModel, r: f64, f: f64) -> Result<f64> {
    if !(r > 0.0) || !(f > 0.0) {
        return invalid(format!("green function needs r > 0 and f > 0 (r={r}, f={f})"));
    }
    match channel {
        ChannelModel::AnalyticWi { beta_true, delta_k_coeff, modulation_depth, base_gain } => {
            let omega = 2.0 * PI * f;
            let phase = delta_k_coeff * omega.powf(-1.0 / beta_true) * r;
            let g0 = base_gain.at(f);
            Ok(g0 * (1.0 + modulation_depth * phase.cos()).max(0.0).sqrt())
        }
        ChannelModel::IdealModes { depth, sound_speed, mode_count, source_depth, receiver_depth } => {
            let modes = modal_wavenumbers(*depth, *sound_speed, *mode_count, f);
            if modes.is_empty() {
                return Err(Error::NoPropagatingModes { freq: f });
            }
            let sum: Complex64 = modes
                .iter()
                .map(|&(m, km)| {
                    let kz = (m as f64 - 0.5) * PI / depth;
                    let shape = (kz * source_depth).sin() * (kz * receiver_depth).sin();
                    Complex64::from_polar(shape / (km * r).sqrt(), km * r)
                })
                .sum();
            // Unit-density point source with normalized mode functions sqrt(2/D) sin(.)
            Ok(sum.norm() * (2.0 / depth) * (2.0 * PI).sqrt() / (4.0 * PI))
        }
    }
}
