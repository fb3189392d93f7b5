use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::inference::{grid_search, nc2_logpdf_unchecked, CandidateEval, ClampCounts, LikelihoodResult, LoglikParts, MlOptions, Search};
use crate::spectral::{BandPartition, Spectrogram};
use crate::striation::StriationGrid;

pub const LAMBDA_STEP: f64 = 2.5;
pub const LAMBDA_MAX: f64 = 100.0;

/// Noncentrality values searched per striation: `0, 2.5, ..., 100`.
pub fn lambda_grid() -> Vec<f64> {
    (0..=(LAMBDA_MAX / LAMBDA_STEP).round() as usize).map(|i| i as f64 * LAMBDA_STEP).collect()
}

/// Range-independent background intensity for each tonal bin: the mean, over
/// all snapshots, of the broadband bins flanking the tone.
pub fn tonal_background(spec: &Spectrogram, part: &BandPartition) -> Result<Vec<f64>> {
    let psd = spec.mean_psd();
    part.tonal_bins
        .iter()
        .map(|&k| {
            let nb = part.broadband_neighbours(k);
            if nb.is_empty() {
                return invalid(format!("tone at bin {k} has no broadband neighbours"));
            }
            let bg = nb.iter().map(|&b| psd[b]).sum::<f64>() / nb.len() as f64;
            if bg > 0.0 {
                Ok(bg)
            } else {
                invalid(format!("background next to tonal bin {k} is zero"))
            }
        })
        .collect()
}

fn row_loglik(row: ndarray::ArrayView1<f64>, lam: f64) -> f64 {
    row.iter().map(|&v| nc2_logpdf_unchecked(v, lam)).sum()
}

/// Grid argmax of the row log-likelihood, smallest index on ties. The
/// log-likelihood is concave in the noncentrality, so a hill climb from the
/// moment estimate reaches the same point as an exhaustive scan.
fn best_on_grid(row: ndarray::ArrayView1<f64>, lambdas: &[f64]) -> (f64, usize) {
    let moment = (row.mean().unwrap_or(0.0) - 2.0).max(0.0);
    let mut i = lambdas.partition_point(|&l| l < moment).min(lambdas.len() - 1);
    let mut ll = row_loglik(row, lambdas[i]);
    while i > 0 {
        let left = row_loglik(row, lambdas[i - 1]);
        if left < ll {
            break;
        }
        i -= 1;
        ll = left;
    }
    while i + 1 < lambdas.len() {
        let right = row_loglik(row, lambdas[i + 1]);
        if !(right > ll) {
            break;
        }
        i += 1;
        ll = right;
    }
    (ll, i)
}

/// Per-striation noncentrality chosen on the grid by maximum likelihood,
/// shared across tones. Returns the maximized log-likelihood, the chosen
/// values and how many striations hit the top of the grid.
pub(crate) fn tonal_only_loglik(y: &Array2<f64>, lambdas: &[f64]) -> (f64, Vec<f64>, usize) {
    let mut total = 0.0;
    let mut saturated = 0;
    let mut chosen = Vec::with_capacity(y.nrows());
    for row in y.rows() {
        let (ll, i) = best_on_grid(row, lambdas);
        if lambdas[i] >= LAMBDA_MAX {
            saturated += 1;
        }
        total += ll;
        chosen.push(lambdas[i]);
    }
    (total, chosen, saturated)
}

/// Tonal-only ML search: tonal bins normalized by a fixed background, with the
/// noncentrality of each striation fitted on a grid and broadband bins ignored.
pub fn tonal_only_range(
    spec: &Spectrogram,
    part: &BandPartition,
    search: &Search,
    candidates: &[f64],
    opts: &MlOptions,
) -> Result<LikelihoodResult> {
    if part.n_tones() == 0 {
        return invalid("tonal-only estimation needs at least one tone");
    }
    let bg = tonal_background(spec, part)?;
    let lambdas = lambda_grid();
    grid_search("T", spec, part, search, candidates, opts, |grid: &StriationGrid| {
        let y = Array2::from_shape_fn(grid.x_bt.dim(), |(l, j)| grid.x_bt[[l, j]] / (0.5 * bg[j]));
        let (tonal, _, saturated) = tonal_only_loglik(&y, &lambdas);
        if !tonal.is_finite() {
            return invalid("non-finite log-likelihood");
        }
        Ok(CandidateEval {
            parts: LoglikParts { total: tonal, broadband: 0.0, tonal },
            clamps: ClampCounts::default(),
            no_tonal_excess: false,
            no_broadband_excess: false,
            saturated,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_has_41_points() {
        let g = lambda_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[1], 2.5);
        assert_eq!(*g.last().unwrap(), 100.0);
    }

    #[test]
    fn saturation_is_flagged_and_capped() {
        let y = Array2::from_elem((3, 2), 500.0);
        let (_, chosen, sat) = tonal_only_loglik(&y, &lambda_grid());
        assert_eq!(sat, 3);
        assert!(chosen.iter().all(|&l| l == LAMBDA_MAX));
    }

    #[test]
    fn chosen_lambda_tracks_row_excess() {
        let y = Array2::from_shape_vec((2, 2), vec![2.0, 2.0, 22.0, 22.0]).unwrap();
        let (_, chosen, sat) = tonal_only_loglik(&y, &lambda_grid());
        assert_eq!(sat, 0);
        assert_eq!(chosen[0], 0.0);
        assert!((chosen[1] - 20.0).abs() <= 5.0, "{}", chosen[1]);
    }

    proptest::proptest! {
        #[test]
        fn hill_climb_matches_exhaustive_scan(vals in proptest::collection::vec(0.0f64..150.0, 1..6)) {
            let row = ndarray::Array1::from(vals);
            let lambdas = lambda_grid();
            let mut brute = (f64::NEG_INFINITY, 0);
            for (i, &l) in lambdas.iter().enumerate() {
                let ll = row_loglik(row.view(), l);
                if ll > brute.0 {
                    brute = (ll, i);
                }
            }
            let (ll, i) = best_on_grid(row.view(), &lambdas);
            proptest::prop_assert_eq!(i, brute.1);
            proptest::prop_assert_eq!(ll, brute.0);
        }
    }
}
