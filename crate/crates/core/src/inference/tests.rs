use super::*;
use crate::simulate::{
    green_magnitude, synth_spectrogram, ChannelModel, Envelope, SimConfig, SourceModel, TonePhase, TrackConfig, DEFAULT_TONES_HZ,
};
use crate::spectral::{partition_band, Values};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn toy_grid(x_b: Array2<f64>, x_bt: Array2<f64>) -> StriationGrid {
    let l = x_b.nrows();
    StriationGrid {
        broadband_freqs: (0..x_b.ncols()).map(|k| k as f64).collect(),
        tonal_freqs: (0..x_bt.ncols()).map(|k| 100.0 + k as f64).collect(),
        x_b,
        x_bt,
        ref_freq: 1.0,
        ref_ranges: (0..l).map(|i| 1000.0 + i as f64).collect(),
        ref_snapshots: (0..l).collect(),
    }
}

fn all_broadband(k: usize) -> BandPartition {
    let freqs: Vec<f64> = (0..k).map(|i| 40.0 + i as f64 * 0.05).collect();
    partition_band(&freqs, &[], 0.35).unwrap()
}

#[test]
fn constant_noiseless_surface() {
    let part = all_broadband(6);
    let noise = NoiseProfile::uniform(40.0, 0.05, 6, 1e-30).unwrap();
    let grid = toy_grid(Array2::from_elem((4, 6), 2.5), Array2::zeros((4, 0)));
    let est = estimate_broadband_params(&grid, &noise, &part).unwrap();
    assert!(est.alpha.iter().all(|a| (a - 1.0).abs() < 1e-12));
    assert!(est.v.iter().all(|v| (v - 2.5).abs() < 1e-12));
    assert!(est.theta.iter().all(|t| (t - 2.5).abs() < 1e-12));
}

#[test]
fn surface_at_noise_floor_has_no_broadband_parameters() {
    let part = all_broadband(4);
    let noise = NoiseProfile::uniform(40.0, 0.05, 4, 3.0).unwrap();
    let grid = toy_grid(Array2::from_elem((5, 4), 2.0), Array2::zeros((5, 0)));
    let est = estimate_broadband_params(&grid, &noise, &part).unwrap();
    assert!(est.no_broadband_excess);
    assert!(est.theta.iter().all(|&t| t == 3.0));
    assert!(est.alpha.iter().chain(&est.v).all(|&a| a == 0.0));
}

#[test]
fn reference_at_noise_floor_is_rejected() {
    // The loudest column sits below its own noise level while the band as a
    // whole is well above noise.
    let part = all_broadband(4);
    let noise = NoiseProfile::new(40.0, 0.05, vec![10.0, 1.0, 1.0, 1.0]).unwrap();
    let x = Array2::from_shape_fn((5, 4), |(_, k)| if k == 0 { 9.0 } else { 5.0 });
    let grid = toy_grid(x, Array2::zeros((5, 0)));
    let err = estimate_broadband_params(&grid, &noise, &part).unwrap_err();
    assert!(err.to_string().contains("reference bin at/below noise floor"));
}

#[test]
fn alpha_recovers_known_ratio() {
    // Column 0 carries twice the power of the others and becomes the reference.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let l = 500;
    let scale = [2.0, 1.0, 1.0, 1.0];
    let x = Array2::from_shape_fn((l, 4), |(_, k)| {
        let e: f64 = Exp1.sample(&mut rng);
        scale[k] * 5.0 * e
    });
    let part = all_broadband(4);
    let noise = NoiseProfile::uniform(40.0, 0.05, 4, 1e-30).unwrap();
    let grid = toy_grid(x, Array2::zeros((l, 0)));
    let est = estimate_broadband_params(&grid, &noise, &part).unwrap();
    assert_eq!(est.ref_bin, 0);
    // alpha_k relative to the reference column; ratios of exponential means
    // have relative sd about sqrt(2/L).
    let sd = (2.0 / l as f64).sqrt();
    for k in 1..4 {
        assert!((est.alpha[k] - 0.5).abs() < 3.0 * 0.5 * sd, "alpha[{k}] = {}", est.alpha[k]);
    }
}

#[test]
fn constant_tonal_field() {
    let y = Array2::from_elem((10, 3), 7.0);
    let ton = estimate_noncentrality(&y).unwrap();
    assert!(ton.lambda.iter().all(|v| (v - 5.0).abs() < 1e-12));
    let flat = estimate_noncentrality(&Array2::from_elem((10, 3), 2.0)).unwrap();
    assert!(flat.no_tonal_excess);
    assert!(flat.lambda.iter().all(|v| *v == 0.0));
}

fn nc2_draw(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    let mu = lambda.sqrt();
    let a: f64 = mu + rng.sample::<f64, _>(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    a * a + b * b
}

#[test]
fn central_field_gives_small_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0.0;
    let reps = 50;
    for _ in 0..reps {
        let y = Array2::from_shape_fn((200, 5), |_| nc2_draw(&mut rng, 0.0));
        let ton = estimate_noncentrality(&y).unwrap();
        total += ton.lambda.mean().unwrap();
    }
    assert!(total / (reps as f64) < 0.5, "{}", total / reps as f64);
}

#[test]
fn rank_one_lambda_is_nearly_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<f64> = (0..200).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
    let b = [5.0, 8.0, 12.0, 20.0, 30.0];
    let truth = Array2::from_shape_fn((200, 5), |(l, k)| a[l] * b[k]);
    let reps = 40;
    let mut mean_est = Array2::<f64>::zeros((200, 5));
    for _ in 0..reps {
        let y = truth.mapv(|lam| nc2_draw(&mut rng, lam));
        mean_est = mean_est + estimate_noncentrality(&y).unwrap().lambda;
    }
    mean_est /= reps as f64;
    let bias = ((&mean_est - &truth).sum() / truth.sum()).abs();
    assert!(bias < 0.1, "relative bias {bias}");
}

#[test]
fn single_cell_and_broadband_only_likelihoods() {
    let grid = toy_grid(Array2::from_elem((1, 1), 3.0), Array2::zeros((1, 0)));
    let est = BroadbandEstimates {
        ref_bin: 0,
        alpha: vec![1.0],
        v: vec![1.0],
        theta: Array2::from_elem((1, 1), 2.0),
        sigma2_at_tones: Array2::zeros((1, 0)),
        clamps: ClampCounts::default(),
        no_broadband_excess: false,
    };
    let ton = TonalEstimates { y_bt: Array2::zeros((1, 0)), lambda: Array2::zeros((1, 0)), clamped: 0, no_tonal_excess: false };
    let parts = joint_loglik(&grid, &est, &ton).unwrap();
    assert_eq!(parts.total, exp_logpdf(3.0, 2.0).unwrap());
    assert_eq!(parts.tonal, 0.0);
    assert_eq!(parts.total, parts.broadband);

    // Without a broadband excess the broadband term has nothing to fit.
    let flat = BroadbandEstimates { no_broadband_excess: true, ..est };
    let parts = joint_loglik(&grid, &flat, &ton).unwrap();
    assert_eq!((parts.broadband, parts.total), (0.0, 0.0));
}

#[test]
fn toy_grid_matches_product_form() {
    let x_b = Array2::from_shape_vec((3, 3), vec![0.5, 1.2, 3.1, 0.1, 2.2, 0.9, 4.0, 0.3, 1.7]).unwrap();
    let theta = Array2::from_shape_vec((3, 3), vec![1.0, 1.5, 2.0, 0.8, 1.1, 1.3, 2.5, 0.6, 1.9]).unwrap();
    let y = Array2::from_shape_vec((3, 3), vec![1.0, 9.0, 30.0, 0.2, 4.0, 11.0, 6.0, 7.0, 0.0]).unwrap();
    let lambda = Array2::from_shape_vec((3, 3), vec![0.0, 5.0, 20.0, 1.0, 3.0, 9.0, 4.0, 6.0, 0.5]).unwrap();
    let grid = toy_grid(x_b.clone(), Array2::zeros((3, 3)));
    let est = BroadbandEstimates {
        ref_bin: 0,
        alpha: vec![1.0; 3],
        v: vec![1.0; 3],
        theta: theta.clone(),
        sigma2_at_tones: Array2::ones((3, 3)),
        clamps: ClampCounts::default(),
        no_broadband_excess: false,
    };
    let ton = TonalEstimates { y_bt: y.clone(), lambda: lambda.clone(), clamped: 0, no_tonal_excess: false };
    let parts = joint_loglik(&grid, &est, &ton).unwrap();

    // Direct product of densities, with I0 by its defining series.
    let i0 = |z: f64| {
        (0..200)
            .fold((0.0, 1.0), |(s, t), k| {
                let next = if k == 0 { 1.0 } else { t * (z * z / 4.0) / ((k * k) as f64) };
                (s + next, next)
            })
            .0
    };
    let mut product = 1.0;
    for (x, t) in x_b.iter().zip(theta.iter()) {
        product *= (-x / t).exp() / t;
    }
    for (y, l) in y.iter().zip(lambda.iter()) {
        product *= 0.5 * (-(y + l) / 2.0).exp() * i0((y * l).sqrt());
    }
    assert!((parts.total - product.ln()).abs() < 1e-12, "{} vs {}", parts.total, product.ln());
}

fn sim_config(seed: u64, sigma_b: f64, tone_mag: f64) -> SimConfig {
    SimConfig {
        channel: ChannelModel::analytic_with_period(1.18, 45.5, 600.0, 0.8, Envelope::constant(1.0)),
        source: SourceModel {
            tone_freqs: DEFAULT_TONES_HZ.to_vec(),
            tone_mags: vec![tone_mag; 5],
            tone_phase: TonePhase::Uniform,
            broadband_sigma: Envelope::constant(sigma_b),
        },
        track: TrackConfig { r_start: None, r_final: Some(23_000.0), rate: RateProfile::Constant(10.2) },
        noise_variance: Envelope::constant(1.0),
        band: (42.0, 49.0),
        df: 0.05,
        dt: 10.0,
        duration: 1300.0,
        t0: 0.0,
        seed,
    }
}

#[test]
fn theta_tracks_true_variance() {
    let mut cfg = sim_config(12, 2.5, 0.0);
    cfg.duration = 8000.0;
    cfg.track.rate = RateProfile::Constant(2.0);
    let (spec, truth) = synth_spectrogram(&cfg).unwrap();
    let part = partition_band(&spec.freqs(), &[], 0.35).unwrap();
    let q = ParamVector::new(truth.final_range(), RateProfile::Constant(2.0), 1.18).unwrap();
    let grid = build_striation_grid(&spec.to_intensity().unwrap(), &q, &part, 30).unwrap();
    assert!(grid.n_striations() >= 500);
    let noise = cfg.noise_profile().unwrap();
    let est = estimate_broadband_params(&grid, &noise, &part).unwrap();
    let mut rel = 0.0;
    for (l, &r) in grid.ref_ranges.iter().enumerate() {
        let g = green_magnitude(&cfg.channel, r, 45.5).unwrap();
        let truth = 6.25 * g * g + 1.0;
        rel += (est.theta.row(l).mean().unwrap() - truth).abs() / truth;
    }
    rel /= grid.n_striations() as f64;
    assert!(rel < 0.1, "mean relative error {rel}");
}

#[test]
fn matched_candidate_beats_displaced_ones_on_noiseless_data() {
    let mut cfg = sim_config(0, 1.0, 0.0);
    cfg.noise_variance = Envelope::constant(1e-6);
    // Deterministic intensity: replace the random field by its expectation.
    let times = cfg.times();
    let freqs = cfg.freqs();
    let q_true = ParamVector::new(23_000.0, RateProfile::Constant(10.2), 1.18).unwrap();
    let axis = crate::striation::map_time_to_range(&times, &q_true).unwrap();
    let x = Array2::from_shape_fn((times.len(), freqs.len()), |(n, k)| {
        let g = green_magnitude(&cfg.channel, axis.r_n[n], freqs[k]).unwrap();
        g * g + 1e-6
    });
    let spec = Spectrogram::new(Values::Intensity(x), freqs[0], cfg.df, 0.0, cfg.dt).unwrap();
    let part = partition_band(&freqs, &[], 0.35).unwrap();
    let noise = cfg.noise_profile().unwrap();
    let search = Search::Range { rate: RateProfile::Constant(10.2), beta: 1.18 };
    let cands = [0.9 * 23_000.0, 0.95 * 23_000.0, 23_000.0, 1.05 * 23_000.0, 1.1 * 23_000.0];
    let res = ml_estimate(&spec, &part, &noise, &search, &cands, &MlOptions::default()).unwrap();
    assert_eq!(res.argmax, 23_000.0);
    let best = res.loglik[2].unwrap();
    for (i, v) in res.loglik.iter().enumerate() {
        if i != 2 {
            assert!(v.unwrap() < best);
        }
    }
}

#[test]
fn single_candidate_and_empty_grid() {
    let cfg = sim_config(5, 2.0, 3.0);
    let (spec, _) = synth_spectrogram(&cfg).unwrap();
    let part = partition_band(&spec.freqs(), &cfg.tone_centers().unwrap(), 0.35).unwrap();
    let noise = cfg.noise_profile().unwrap();
    let search = Search::Range { rate: RateProfile::Constant(10.2), beta: 1.18 };
    let res = ml_estimate(&spec, &part, &noise, &search, &[23_000.0], &MlOptions::default()).unwrap();
    assert_eq!(res.argmax, 23_000.0);
    assert!(ml_estimate(&spec, &part, &noise, &search, &[], &MlOptions::default()).is_err());
    let err = ml_estimate(&spec, &part, &noise, &search, &[1e7], &MlOptions::default()).unwrap_err();
    assert!(err.to_string().contains("no feasible candidate"));
}

#[test]
fn argmax_is_scale_equivariant_and_ties_go_low() {
    let cfg = sim_config(6, 2.0, 3.0);
    let (spec, _) = synth_spectrogram(&cfg).unwrap();
    let part = partition_band(&spec.freqs(), &cfg.tone_centers().unwrap(), 0.35).unwrap();
    let noise = cfg.noise_profile().unwrap();
    let search = Search::Range { rate: RateProfile::Constant(10.2), beta: 1.18 };
    let cands = linear_grid(20_000.0, 26_000.0, 100.0).unwrap();
    let a = ml_estimate(&spec, &part, &noise, &search, &cands, &MlOptions::default()).unwrap();
    let x = spec.intensities() * 7.5;
    let scaled = Spectrogram::new(Values::Intensity(x), spec.f0, spec.df, spec.t0, spec.dt).unwrap();
    let b = ml_estimate(&scaled, &part, &noise.scaled(7.5), &search, &cands, &MlOptions::default()).unwrap();
    assert_eq!(a.argmax, b.argmax);

    // Duplicated candidates tie exactly; the smaller value wins regardless of order.
    let rev = [23_000.0, 23_000.0];
    let r = ml_estimate(&spec, &part, &noise, &search, &rev, &MlOptions::default()).unwrap();
    assert_eq!(r.argmax_index, 0);
}

#[test]
fn result_serializes() {
    let cfg = sim_config(7, 2.0, 3.0);
    let (spec, _) = synth_spectrogram(&cfg).unwrap();
    let part = partition_band(&spec.freqs(), &cfg.tone_centers().unwrap(), 0.35).unwrap();
    let noise = cfg.noise_profile().unwrap();
    let search = Search::Beta { r: 23_000.0, rate: RateProfile::Constant(10.2) };
    let res = ml_estimate(&spec, &part, &noise, &search, &linear_grid(1.0, 1.4, 0.05).unwrap(), &MlOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    res.write_json(&dir.path().join("r.json")).unwrap();
    res.write_csv(&dir.path().join("r.csv")).unwrap();
    assert_eq!(LikelihoodResult::read_json(&dir.path().join("r.json")).unwrap(), res);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("index,beta,loglik"));
    assert_eq!(csv.lines().count(), res.candidates.len() + 1);
}

#[test]
fn linear_grid_is_inclusive() {
    let g = linear_grid(0.6 * 23_000.0, 1.4 * 23_000.0, 10.0).unwrap();
    assert_eq!(g.len(), 1841);
    assert!(linear_grid(1.0, 0.0, 1.0).is_err());
    assert!(linear_grid(0.0, 1.0, 0.0).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lambda_is_nonnegative(vals in proptest::collection::vec(0.0f64..50.0, 12)) {
            let y = Array2::from_shape_vec((4, 3), vals).unwrap();
            let ton = estimate_noncentrality(&y).unwrap();
            prop_assert!(ton.lambda.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn theta_respects_noise_floor(vals in proptest::collection::vec(0.0f64..10.0, 20), noise in 0.1f64..3.0) {
            let part = all_broadband(5);
            let np = NoiseProfile::uniform(40.0, 0.05, 5, noise).unwrap();
            let mut x = Array2::from_shape_vec((4, 5), vals).unwrap();
            x[[0, 0]] += 50.0;
            let grid = toy_grid(x, Array2::zeros((4, 0)));
            let est = estimate_broadband_params(&grid, &np, &part).unwrap();
            prop_assert!(est.theta.iter().all(|t| *t >= noise * (1.0 - 1e-12)));
        }
    }
}
