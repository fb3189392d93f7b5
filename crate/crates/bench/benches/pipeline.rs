use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use striate::baselines::{slope_range_auto, tonal_only_range};
use striate::montecarlo::Scenario;
use striate::spectral::stft;
use striate::striation::{build_striation_grid, map_time_to_range};
use striate::{ml_estimate, partition_band, synth_spectrogram, BandPartition, ParamVector, RateProfile, Search, Spectrogram, TimeSeries};

fn fixture() -> (Scenario, Spectrogram, BandPartition) {
    let sc = Scenario::default();
    let (spec, truth) = synth_spectrogram(&sc.sim_config(1)).unwrap();
    let spec = spec.to_intensity().unwrap();
    let part = partition_band(&spec.freqs(), &truth.tone_freqs, sc.guard_hz).unwrap();
    (sc, spec, part)
}

fn spectral(c: &mut Criterion) {
    let fs = 200.0;
    let samples: Vec<f64> = (0..(fs as usize) * 600).map(|i| (2.0 * std::f64::consts::PI * 45.0 * i as f64 / fs).sin()).collect();
    let series = TimeSeries::new(samples, fs, 0.0).unwrap();
    c.bench_function("stft 600 s at 200 Hz, 20 s window", |b| b.iter(|| stft(black_box(&series), 20.0, 0.5).unwrap()));

    let sc = Scenario::default();
    c.bench_function("synthesize default scenario", |b| b.iter(|| synth_spectrogram(black_box(&sc.sim_config(1))).unwrap()));
}

fn striations(c: &mut Criterion) {
    let (sc, spec, part) = fixture();
    let q = ParamVector::new(sc.final_range, RateProfile::Constant(sc.rate), sc.beta).unwrap();
    c.bench_function("striation grid, one candidate", |b| b.iter(|| build_striation_grid(&spec, black_box(&q), &part, sc.l_min).unwrap()));
}

fn estimators(c: &mut Criterion) {
    let (sc, spec, part) = fixture();
    let noise = sc.sim_config(1).noise_profile().unwrap();
    let search = Search::Range { rate: RateProfile::Constant(sc.rate), beta: sc.beta };
    let cands: Vec<f64> = (0..101).map(|i| 20_000.0 + 60.0 * i as f64).collect();
    let opts = sc.ml_options();
    let mut group = c.benchmark_group("estimators, 101 candidates");
    group.sample_size(10);
    group.bench_function("G", |b| b.iter(|| ml_estimate(&spec, &part, &noise, &search, black_box(&cands), &opts).unwrap()));
    group.bench_function("T", |b| b.iter(|| tonal_only_range(&spec, &part, &search, black_box(&cands), &opts).unwrap()));
    group.finish();

    let q = ParamVector::new(sc.final_range, RateProfile::Constant(sc.rate), sc.beta).unwrap();
    let axis = map_time_to_range(&spec.times(), &q).unwrap();
    c.bench_function("slope estimate", |b| b.iter(|| slope_range_auto(black_box(&spec), &axis, sc.beta, true).unwrap()));
}

criterion_group!(benches, spectral, striations, estimators);
criterion_main!(benches);
