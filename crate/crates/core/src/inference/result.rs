use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How often each estimator clamp fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub alpha: usize,
    pub v: usize,
    pub theta: usize,
    pub lambda: usize,
}

impl ClampCounts {
    pub fn add(&mut self, other: &ClampCounts) {
        self.alpha += other.alpha;
        self.v += other.v;
        self.theta += other.theta;
        self.lambda += other.lambda;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partials {
    pub broadband: Vec<Option<f64>>,
    pub tonal: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Valid striations per candidate before equalization (`None` if the
    /// candidate could not be mapped to range at all).
    pub striations: Vec<Option<usize>>,
    /// Striations actually used per evaluated candidate.
    pub l_used: Vec<Option<usize>>,
    pub common_l: Option<usize>,
    pub skipped: usize,
    pub clamps: ClampCounts,
    pub no_tonal_excess: usize,
    /// Candidates whose broadband bins showed no excess over noise.
    #[serde(default)]
    pub no_broadband_excess: usize,
    /// Striations whose tonal-only noncentrality hit the top of its grid.
    pub lambda_saturated: usize,
    pub interpolation: String,
    pub striation_seeding: String,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            striations: Vec::new(),
            l_used: Vec::new(),
            common_l: None,
            skipped: 0,
            clamps: ClampCounts::default(),
            no_tonal_excess: 0,
            no_broadband_excess: 0,
            lambda_saturated: 0,
            interpolation: "linear in range per frequency bin".into(),
            striation_seeding: "one striation per snapshot, reference at band centre".into(),
        }
    }
}

/// Per-candidate log-likelihoods (nats) and the maximizing candidate.
/// Skipped candidates carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodResult {
    pub method: String,
    pub parameter: String,
    pub candidates: Vec<f64>,
    pub loglik: Vec<Option<f64>>,
    pub partials: Partials,
    pub argmax_index: usize,
    pub argmax: f64,
    pub diagnostics: Diagnostics,
}

impl LikelihoodResult {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// One row per candidate in grid order; empty cells for skipped ones.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "index,{},loglik,broadband,tonal,striations", self.parameter)?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for (i, c) in self.candidates.iter().enumerate() {
            writeln!(
                w,
                "{i},{c},{},{},{},{}",
                cell(self.loglik[i]),
                cell(self.partials.broadband.get(i).copied().flatten()),
                cell(self.partials.tonal.get(i).copied().flatten()),
                self.diagnostics.l_used.get(i).copied().flatten().map(|n| n.to_string()).unwrap_or_default()
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
