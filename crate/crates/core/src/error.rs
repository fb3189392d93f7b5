use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("empty band: no frequency bins in [{lo}, {hi}] Hz")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("unresolvable tones: {a} Hz and {b} Hz map to the same bin")]
    UnresolvableTones { a: f64, b: f64 },

    #[error("degenerate noise bin {bin} at {freq} Hz")]
    DegenerateNoiseBin { bin: usize, freq: f64 },

    #[error("no propagating modes at {freq} Hz")]
    NoPropagatingModes { freq: f64 },

    #[error("track crosses receiver: range {range} m at snapshot {index}")]
    TrackCrossesReceiver { index: usize, range: f64 },

    #[error("window too short for candidate range: {found} valid striations, need {needed}")]
    WindowTooShort { found: usize, needed: usize },

    #[error("reference bin at/below noise floor (excess {excess})")]
    ReferenceBelowNoise { excess: f64 },

    #[error("no feasible candidate among {0}")]
    NoFeasibleCandidate(usize),

    #[error("no striation detected")]
    NoStriation,

    #[error("wrong spectrogram kind: expected {expected}")]
    WrongKind { expected: &'static str },

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Failures of the numerics on otherwise well-formed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoFeasibleCandidate(_)
                | Error::ReferenceBelowNoise { .. }
                | Error::NoStriation
                | Error::WindowTooShort { .. }
                | Error::NoPropagatingModes { .. }
                | Error::TrackCrossesReceiver { .. }
        )
    }
}

/// Opens `path` for reading, naming it in the error.
pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| Error::File { path: path.display().to_string(), source })
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
