//! Comparison estimators: the 2-D Fourier slope method and the tonal-only
//! likelihood search.

mod slope;
mod tonal;

pub use slope::{curvature_limited_extent, slope_range, slope_range_auto, SlopeResult, SlopeWindow, MIN_PEAK_SNR_DB, MIN_WINDOW_SNAPSHOTS};
pub use tonal::{lambda_grid, tonal_background, tonal_only_range, LAMBDA_MAX, LAMBDA_STEP};
