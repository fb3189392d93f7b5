//! Striation-domain likelihoods and grid maximum-likelihood estimation.
//!
//! For a candidate `q` the spectrogram is resampled along projected
//! striations. Broadband-only bins are modelled as exponential with scale
//! `theta = alpha_k v_l + sigma_u^2`, and tonal bins, after normalizing by half
//! the interpolated broadband-plus-noise variance, as noncentral chi-squared
//! with two degrees of freedom. All nuisance parameters are replaced by their
//! moment estimates before the likelihood is evaluated.

mod result;
mod special;

pub use result::{ClampCounts, Diagnostics, LikelihoodResult, Partials};
pub(crate) use special::nc2_logpdf_unchecked;
pub use special::{exp_logpdf, ln_i0, nc2_logpdf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{BandPartition, NoiseProfile, Spectrogram};
use crate::striation::{build_striation_grid, striation_count, ParamVector, RateProfile, StriationGrid};

pub const ALPHA_FLOOR: f64 = 1e-6;
pub const THETA_FLOOR_FRACTION: f64 = 1e-3;
/// A grand mean of normalized tonal intensity within this many standard
/// errors of 2 (its value without tones) counts as no tonal excess.
pub const TONAL_EXCESS_STANDARD_ERRORS: f64 = 1.0;
/// A grand mean of `x / sigma_u^2 - 1` over the broadband cells within this
/// many standard errors of zero counts as no ship broadband component.
pub const BROADBAND_EXCESS_STANDARD_ERRORS: f64 = 3.0;
pub const DEFAULT_L_MIN: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct BroadbandEstimates {
    /// Absolute bin index of the reference bin `k'`.
    pub ref_bin: usize,
    /// One per broadband bin, in `BandPartition::broadband_bins` order.
    pub alpha: Vec<f64>,
    /// One per striation.
    pub v: Vec<f64>,
    /// `L x |K^b|`
    pub theta: Array2<f64>,
    /// `L x J` broadband-plus-noise variance at the tonal bins.
    pub sigma2_at_tones: Array2<f64>,
    pub clamps: ClampCounts,
    /// Broadband bins were indistinguishable from noise; `theta` is the noise.
    pub no_broadband_excess: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TonalEstimates {
    pub y_bt: Array2<f64>,
    pub lambda: Array2<f64>,
    pub clamped: usize,
    pub no_tonal_excess: bool,
}

/// Log-likelihood of one candidate split into its two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikParts {
    pub total: f64,
    pub broadband: f64,
    pub tonal: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn estimate_broadband_params(grid: &StriationGrid, noise: &NoiseProfile, part: &BandPartition) -> Result<BroadbandEstimates> {
    let (l, kb) = grid.x_b.dim();
    if l < 2 || kb < 2 {
        return invalid(format!("broadband estimation needs L >= 2 and at least 2 broadband bins (L={l}, bins={kb})"));
    }
    if kb != part.broadband_bins.len() || grid.x_bt.ncols() != part.tonal_bins.len() {
        return invalid("striation grid does not match the band partition");
    }
    let var_all = noise.on_axis(&part.freqs)?;
    let var_b: Vec<f64> = part.broadband_bins.iter().map(|&k| var_all[k]).collect();
    let mut clamps = ClampCounts::default();

    let col_mean: Vec<f64> = (0..kb).map(|j| mean(grid.x_b.column(j).iter().copied())).collect();
    let ref_col = col_mean.iter().enumerate().fold(0, |best, (j, m)| if *m > col_mean[best] { j } else { best });
    let neighbour_cols: Vec<Vec<usize>> = part
        .tonal_bins
        .iter()
        .map(|&k| {
            part.broadband_neighbours(k)
                .iter()
                .map(|b| part.broadband_bins.binary_search(b).expect("neighbours are broadband bins"))
                .collect()
        })
        .collect();
    let at_tones = |theta: &Array2<f64>| {
        Array2::from_shape_fn((l, part.tonal_bins.len()), |(i, j)| mean(neighbour_cols[j].iter().map(|&c| theta[[i, c]])))
    };

    // Exponential cells have unit relative variance under noise alone.
    let rel_excess = mean(grid.x_b.indexed_iter().map(|((_, j), x)| x / var_b[j] - 1.0));
    if !(rel_excess > BROADBAND_EXCESS_STANDARD_ERRORS / ((l * kb) as f64).sqrt()) {
        let theta = Array2::from_shape_fn((l, kb), |(_, j)| var_b[j]);
        let sigma2_at_tones = at_tones(&theta);
        return Ok(BroadbandEstimates {
            ref_bin: part.broadband_bins[ref_col],
            alpha: vec![0.0; kb],
            v: vec![0.0; l],
            theta,
            sigma2_at_tones,
            clamps,
            no_broadband_excess: true,
        });
    }
    let denom = col_mean[ref_col] - var_b[ref_col];
    if !(denom > 0.0) {
        return Err(Error::ReferenceBelowNoise { excess: denom });
    }

    let alpha: Vec<f64> = (0..kb)
        .map(|j| {
            let a = (col_mean[j] - var_b[j]) / denom;
            if a < ALPHA_FLOOR {
                clamps.alpha += 1;
                ALPHA_FLOOR
            } else {
                a
            }
        })
        .collect();
    let alpha_mean = mean(alpha.iter().copied());

    let v: Vec<f64> = (0..l)
        .map(|i| {
            let excess = mean((0..kb).map(|j| grid.x_b[[i, j]] - var_b[j]));
            let v = excess / alpha_mean;
            if v < 0.0 {
                clamps.v += 1;
                0.0
            } else {
                v
            }
        })
        .collect();

    let theta = Array2::from_shape_fn((l, kb), |(i, j)| {
        let t = alpha[j] * v[i] + var_b[j];
        let floor = THETA_FLOOR_FRACTION * var_b[j];
        if t < floor {
            floor
        } else {
            t
        }
    });
    clamps.theta += (0..l)
        .flat_map(|i| (0..kb).map(move |j| (i, j)))
        .filter(|&(i, j)| alpha[j] * v[i] + var_b[j] < THETA_FLOOR_FRACTION * var_b[j])
        .count();

    let sigma2_at_tones = at_tones(&theta);
    Ok(BroadbandEstimates { ref_bin: part.broadband_bins[ref_col], alpha, v, theta, sigma2_at_tones, clamps, no_broadband_excess: false })
}

/// `y = x / (sigma^2 / 2)` at the tonal bins.
pub fn normalize_tonal(grid: &StriationGrid, est: &BroadbandEstimates) -> Result<Array2<f64>> {
    if grid.x_bt.dim() != est.sigma2_at_tones.dim() {
        return invalid("tonal grid and variance estimates differ in shape");
    }
    Ok(ndarray::Zip::from(&grid.x_bt).and(&est.sigma2_at_tones).map_collect(|x, s| x / (0.5 * s)))
}

/// Rank-one moment estimate `lambda_lk = (row_l - 2)(col_k - 2)/(grand - 2)`,
/// clamped at zero. Returns all zeros, flagged, when the grand mean shows no
/// significant excess over 2.
pub fn estimate_noncentrality(y_bt: &Array2<f64>) -> Result<TonalEstimates> {
    let (l, j) = y_bt.dim();
    if l < 2 || j < 1 {
        return invalid(format!("noncentrality estimation needs L >= 2 and J >= 1 (L={l}, J={j})"));
    }
    let rows: Vec<f64> = (0..l).map(|i| mean(y_bt.row(i).iter().copied())).collect();
    let cols: Vec<f64> = (0..j).map(|c| mean(y_bt.column(c).iter().copied())).collect();
    let grand = mean(rows.iter().copied());
    // Under no tones y is central chi-squared with variance 4.
    let eps = TONAL_EXCESS_STANDARD_ERRORS * 2.0 / ((l * j) as f64).sqrt();
    if !(grand > 2.0 + eps) {
        return Ok(TonalEstimates { y_bt: y_bt.clone(), lambda: Array2::zeros((l, j)), clamped: 0, no_tonal_excess: true });
    }
    let mut clamped = 0;
    let lambda = Array2::from_shape_fn((l, j), |(i, c)| {
        let v = (rows[i] - 2.0) * (cols[c] - 2.0) / (grand - 2.0);
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    });
    Ok(TonalEstimates { y_bt: y_bt.clone(), lambda, clamped, no_tonal_excess: false })
}

/// Sum of exponential terms over broadband cells and noncentral chi-squared
/// terms over tonal cells, accumulated in a fixed order. Without a broadband
/// component the broadband term has no free parameter, so it is left out and
/// only the tonal cells against background noise remain.
pub fn joint_loglik(grid: &StriationGrid, est: &BroadbandEstimates, ton: &TonalEstimates) -> Result<LoglikParts> {
    if grid.x_b.dim() != est.theta.dim()
        || ton.y_bt.dim() != ton.lambda.dim()
        || (ton.y_bt.ncols() > 0 && ton.y_bt.nrows() != grid.x_b.nrows())
    {
        return invalid("likelihood inputs have inconsistent shapes");
    }
    let mut broadband = 0.0;
    if !est.no_broadband_excess {
        for (x, t) in grid.x_b.iter().zip(est.theta.iter()) {
            broadband += -t.ln() - x / t;
        }
    }
    let mut tonal = 0.0;
    for (y, lam) in ton.y_bt.iter().zip(ton.lambda.iter()) {
        tonal += nc2_logpdf_unchecked(*y, *lam);
    }
    let total = broadband + tonal;
    if !total.is_finite() {
        return invalid("non-finite log-likelihood");
    }
    Ok(LoglikParts { total, broadband, tonal })
}

/// Which element of `q` is searched; the other two are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "free")]
pub enum Search {
    Range { rate: RateProfile, beta: f64 },
    Beta { r: f64, rate: RateProfile },
    Rate { r: f64, beta: f64 },
}

impl Search {
    pub fn parameter(&self) -> &'static str {
        match self {
            Search::Range { .. } => "range",
            Search::Beta { .. } => "beta",
            Search::Rate { .. } => "rate",
        }
    }

    pub fn param_vector(&self, candidate: f64) -> Result<ParamVector> {
        match self {
            Search::Range { rate, beta } => ParamVector::new(candidate, rate.clone(), *beta),
            Search::Beta { r, rate } => ParamVector::new(*r, rate.clone(), candidate),
            Search::Rate { r, beta } => ParamVector::new(*r, RateProfile::Constant(candidate), *beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlOptions {
    pub l_min: usize,
    /// Evaluate every candidate on the same number of striations (the
    /// smallest count among feasible candidates, centred in each grid), so
    /// that log-likelihoods are sums over equally many cells.
    pub equalize_striations: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { l_min: DEFAULT_L_MIN, equalize_striations: true }
    }
}

/// Outcome of evaluating one candidate's striation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CandidateEval {
    pub parts: LoglikParts,
    pub clamps: ClampCounts,
    pub no_tonal_excess: bool,
    pub no_broadband_excess: bool,
    pub saturated: usize,
}

/// Shared candidate loop: feasibility, common striation count, parallel
/// evaluation, and argmax with ties going to the smallest candidate.
pub(crate) fn grid_search<F>(
    method: &str,
    spec: &Spectrogram,
    part: &BandPartition,
    search: &Search,
    candidates: &[f64],
    opts: &MlOptions,
    evaluate: F,
) -> Result<LikelihoodResult>
where
    F: Fn(&StriationGrid) -> Result<CandidateEval> + Sync,
{
    if candidates.is_empty() {
        return invalid("candidate grid is empty");
    }
    if !spec.shares_axis(&part.freqs) {
        return invalid("band partition and spectrogram have different frequency axes");
    }
    let intensity = match spec.kind() {
        crate::spectral::Kind::Intensity => spec.clone(),
        crate::spectral::Kind::Complex => spec.to_intensity()?,
    };
    let l_min = opts.l_min.max(2);

    let counts: Vec<Option<usize>> = candidates
        .par_iter()
        .map(|&c| {
            let q = search.param_vector(c).ok()?;
            striation_count(&intensity, &q, part).ok()
        })
        .collect();
    let feasible_min = counts.iter().flatten().filter(|&&n| n >= l_min).min().copied();
    let common = if opts.equalize_striations { feasible_min } else { None };

    let evals: Vec<Option<(CandidateEval, usize)>> = candidates
        .par_iter()
        .zip(&counts)
        .map(|(&c, count)| {
            if count.is_none_or(|n| n < l_min) {
                return None;
            }
            let q = search.param_vector(c).ok()?;
            let grid = build_striation_grid(&intensity, &q, part, l_min).ok()?;
            let grid = match common {
                Some(n) => grid.centered_subset(n),
                None => grid,
            };
            evaluate(&grid).ok().map(|e| (e, grid.n_striations()))
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        if let Some((e, _)) = e {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let eb = evals[b].as_ref().unwrap().0.parts.total;
                    let better = e.parts.total > eb || (e.parts.total == eb && candidates[i] < candidates[b]);
                    Some(if better { i } else { b })
                }
            };
        }
    }
    let Some(best) = best else {
        return Err(Error::NoFeasibleCandidate(candidates.len()));
    };

    let mut diagnostics = Diagnostics {
        striations: counts.clone(),
        l_used: evals.iter().map(|e| e.as_ref().map(|(_, n)| *n)).collect(),
        common_l: common,
        skipped: evals.iter().filter(|e| e.is_none()).count(),
        ..Diagnostics::default()
    };
    for (e, _) in evals.iter().flatten() {
        diagnostics.clamps.add(&e.clamps);
        diagnostics.no_tonal_excess += e.no_tonal_excess as usize;
        diagnostics.no_broadband_excess += e.no_broadband_excess as usize;
        diagnostics.lambda_saturated += e.saturated;
    }
    Ok(LikelihoodResult {
        method: method.to_string(),
        parameter: search.parameter().to_string(),
        candidates: candidates.to_vec(),
        loglik: evals.iter().map(|e| e.as_ref().map(|(e, _)| e.parts.total)).collect(),
        partials: Partials {
            broadband: evals.iter().map(|e| e.as_ref().map(|(e, _)| e.parts.broadband)).collect(),
            tonal: evals.iter().map(|e| e.as_ref().map(|(e, _)| e.parts.tonal)).collect(),
        },
        argmax_index: best,
        argmax: candidates[best],
        diagnostics,
    })
}

/// Likelihood of one striation grid under the full broadband-plus-tonal model.
pub fn evaluate_grid(
    grid: &StriationGrid,
    noise: &NoiseProfile,
    part: &BandPartition,
) -> Result<(LoglikParts, BroadbandEstimates, Option<TonalEstimates>)> {
    let est = estimate_broadband_params(grid, noise, part)?;
    let ton = if part.n_tones() > 0 { Some(estimate_noncentrality(&normalize_tonal(grid, &est)?)?) } else { None };
    let empty = TonalEstimates {
        y_bt: Array2::zeros((grid.n_striations(), 0)),
        lambda: Array2::zeros((grid.n_striations(), 0)),
        clamped: 0,
        no_tonal_excess: false,
    };
    let parts = joint_loglik(grid, &est, ton.as_ref().unwrap_or(&empty))?;
    Ok((parts, est, ton))
}

/// Grid ML estimate of the free element of `q`.
pub fn ml_estimate(
    spec: &Spectrogram,
    part: &BandPartition,
    noise: &NoiseProfile,
    search: &Search,
    candidates: &[f64],
    opts: &MlOptions,
) -> Result<LikelihoodResult> {
    // Fail early on a noise profile that does not cover the band.
    noise.on_axis(&part.freqs)?;
    grid_search("G", spec, part, search, candidates, opts, |grid| {
        let (parts, est, ton) = evaluate_grid(grid, noise, part)?;
        let mut clamps = est.clamps;
        let (mut no_excess, mut lam) = (false, 0);
        if let Some(t) = &ton {
            no_excess = t.no_tonal_excess;
            lam = t.clamped;
        }
        clamps.lambda += lam;
        Ok(CandidateEval { parts, clamps, no_tonal_excess: no_excess, no_broadband_excess: est.no_broadband_excess, saturated: 0 })
    })
}

/// Inclusive arithmetic grid `min, min + step, ...` not exceeding `max`.
pub fn linear_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return invalid(format!("bad grid {min}:{max}:{step}"));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

#[cfg(test)]
mod tests;
