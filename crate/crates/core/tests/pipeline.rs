use proptest::prelude::*;
use striate::montecarlo::Scenario;
use striate::spectral::io::{read_spectrogram, write_spectrogram};
use striate::spectral::Values;
use striate::{ml_estimate, partition_band, synth_spectrogram, NoiseProfile, RateProfile, Search, Spectrogram};

fn scenario() -> Scenario {
    Scenario { grid_lo: 0.9, grid_hi: 1.1, grid_step: 50.0, ..Scenario::default() }
}

fn scaled(spec: &Spectrogram, c: f64) -> Spectrogram {
    let Values::Intensity(x) = &spec.values else { panic!("expected intensity") };
    Spectrogram::new(Values::Intensity(x.mapv(|v| v * c)), spec.f0, spec.df, spec.t0, spec.dt).unwrap()
}

#[test]
fn estimate_survives_a_disk_round_trip() {
    let sc = scenario();
    let cfg = sc.sim_config(42);
    let (spec, truth) = synth_spectrogram(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("spec");
    write_spectrogram(&spec, &stem).unwrap();
    let spec = read_spectrogram(&stem).unwrap().to_intensity().unwrap();

    let part = partition_band(&spec.freqs(), &truth.tone_freqs, sc.guard_hz).unwrap();
    let search = Search::Range { rate: RateProfile::Constant(sc.rate), beta: sc.beta };
    let res = ml_estimate(&spec, &part, &cfg.noise_profile().unwrap(), &search, &sc.candidates().unwrap(), &sc.ml_options()).unwrap();
    let err = (res.argmax - truth.final_range()).abs() / truth.final_range();
    assert!(err < 0.02, "argmax {} vs {}", res.argmax, truth.final_range());
    assert_eq!(res.diagnostics.skipped, 0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    /// A receiver gain applied to both the data and the noise level cannot
    /// move the estimate.
    #[test]
    fn estimate_is_gain_invariant(log_gain in -6.0f64..6.0, seed in 0u64..1000) {
        let sc = scenario();
        let cfg = sc.sim_config(seed);
        let (spec, truth) = synth_spectrogram(&cfg).unwrap();
        let spec = spec.to_intensity().unwrap();
        let part = partition_band(&spec.freqs(), &truth.tone_freqs, sc.guard_hz).unwrap();
        let search = Search::Range { rate: RateProfile::Constant(sc.rate), beta: sc.beta };
        let cands = sc.candidates().unwrap();
        let noise = cfg.noise_profile().unwrap();
        let base = ml_estimate(&spec, &part, &noise, &search, &cands, &sc.ml_options()).unwrap();

        let c = 10f64.powf(log_gain);
        let noise_c = NoiseProfile::new(noise.f0, noise.df, noise.variance_per_bin.iter().map(|v| v * c).collect()).unwrap();
        let gained = ml_estimate(&scaled(&spec, c), &part, &noise_c, &search, &cands, &sc.ml_options()).unwrap();
        prop_assert_eq!(base.argmax_index, gained.argmax_index);
    }
}
