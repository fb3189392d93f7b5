use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use striate::baselines::{slope_range_auto, tonal_only_range};
use striate::montecarlo::{moving_average3, run_trials, summarize, Method, Scenario, TrialResult};
use striate::simulate::ChannelModel;
use striate::spectral::io::{read_raw_f32, read_spectrogram, read_wav, write_spectrogram, write_spectrogram_csv};
use striate::spectral::{detect_tones, noise_profile, stft, DEFAULT_TONE_PROMINENCE_DB};
use striate::striation::map_time_to_range;
use striate::tracks::{ingest_track, Receiver};
use striate::{
    ml_estimate, partition_band, synth_spectrogram, BandPartition, MlOptions, NoiseProfile, ParamVector, RateProfile, Result, Search,
    SimConfig, Spectrogram,
};

use crate::args::{AisArgs, EstimateArgs, SimulateArgs, SweepArgs};
use crate::config::{
    bad, merge, parse_band, parse_grid, parse_list, parse_pair, prepare_out, read_json, read_rate_profile, write_json, write_manifest,
};

const DEFAULT_GUARD_HZ: f64 = 0.35;
const DEFAULT_STFT_WINDOW_S: f64 = 20.0;
const DEFAULT_STFT_OVERLAP: f64 = 0.5;

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => Scenario::default().sim_config(a.seed.unwrap_or(1)),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = &a.band {
        cfg.band = parse_band(b)?;
    }
    if let Some(t) = &a.tones {
        let freqs = parse_list(t, "tones")?;
        let mag = cfg.source.tone_mags.first().copied().unwrap_or(1.0);
        if freqs.len() != cfg.source.tone_mags.len() {
            cfg.source.tone_mags = vec![mag; freqs.len()];
        }
        cfg.source.tone_freqs = freqs;
    }
    if let Some(beta) = a.beta {
        match &mut cfg.channel {
            ChannelModel::AnalyticWi { beta_true, .. } => *beta_true = beta,
            ChannelModel::IdealModes { .. } => return bad("--beta applies only to the analytic_wi channel"),
        }
    }
    if let Some(r) = a.rate {
        cfg.track.rate = RateProfile::Constant(r);
    }
    if let Some(p) = &a.rate_profile {
        cfg.track.rate = read_rate_profile(p)?;
    }
    cfg.validate()?;

    let (spec, truth) = synth_spectrogram(&cfg)?;
    prepare_out(&a.out)?;
    let (bin, header) = write_spectrogram(&spec, &a.out.join("spectrogram"))?;
    let mut outputs = vec![bin, header, a.out.join("truth.json"), a.out.join("config.json")];
    write_json(&outputs[2], &truth)?;
    write_json(&outputs[3], &cfg)?;
    if a.csv {
        let path = a.out.join("intensity.csv");
        write_spectrogram_csv(&spec.to_intensity()?, &path)?;
        outputs.push(path);
    }
    write_manifest(&a.out, "simulate", &serde_json::to_value(&cfg)?, &outputs)?;
    println!(
        "simulated {} snapshots x {} bins, final range {:.1} m, seed {}",
        spec.n_times(),
        spec.n_freqs(),
        truth.final_range(),
        cfg.seed
    );
    Ok(())
}

/// Strips a `.json` or `.bin` suffix so either file names the spectrogram.
fn stem_of(p: &Path) -> PathBuf {
    match p.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => p.with_extension(""),
        _ => p.to_path_buf(),
    }
}

fn load_spectrogram(p: &Path) -> Result<Spectrogram> {
    read_spectrogram(&stem_of(p))
}

struct Inputs {
    spec: Spectrogram,
    part: BandPartition,
}

fn load_inputs(a: &EstimateArgs) -> Result<Inputs> {
    let spec = if let Some(p) = &a.spectrogram {
        load_spectrogram(p)?
    } else if let Some(p) = &a.audio {
        let series = match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("wav") => read_wav(p)?,
            _ => read_raw_f32(p)?,
        };
        stft(&series, a.stft_window.unwrap_or(DEFAULT_STFT_WINDOW_S), a.stft_overlap.unwrap_or(DEFAULT_STFT_OVERLAP))?
    } else {
        return bad("an input is required: --spectrogram STEM or --audio PATH");
    };
    let spec = spec.to_intensity()?;
    let spec = match &a.band {
        Some(b) => {
            let (lo, hi) = parse_band(b)?;
            spec.crop_band(lo, hi)?
        }
        None => spec,
    };
    let freqs = spec.freqs();
    let band = (freqs[0], freqs[freqs.len() - 1]);
    let tones = match a.tones.as_deref().map(str::trim) {
        Some("none") | Some("") => Vec::new(),
        Some(list) => parse_list(list, "tones")?,
        None => {
            let db = a.tone_prominence_db.unwrap_or(DEFAULT_TONE_PROMINENCE_DB);
            let found = detect_tones(&spec, band, db)?;
            if found.is_empty() {
                eprintln!("note: no tones stand {db} dB above the local median; set them with --tones or lower --tone-prominence-db");
            }
            found
        }
    };
    let part = partition_band(&freqs, &tones, a.guard.unwrap_or(DEFAULT_GUARD_HZ))?;
    Ok(Inputs { spec, part })
}

fn load_noise(a: &EstimateArgs, spec: &Spectrogram) -> Result<NoiseProfile> {
    if let Some(v) = a.noise_variance {
        NoiseProfile::uniform(spec.f0, spec.df, spec.n_freqs(), v)
    } else if let Some(p) = &a.noise_profile {
        let n: NoiseProfile = read_json(p)?;
        NoiseProfile::new(n.f0, n.df, n.variance_per_bin)
    } else if let Some(p) = &a.quiet {
        noise_profile(&load_spectrogram(p)?.to_intensity()?)
    } else {
        bad("method G needs a noise estimate: --noise-variance, --noise-profile or --quiet")
    }
}

fn rate_of(a: &EstimateArgs) -> Result<RateProfile> {
    match (a.rate, &a.rate_profile) {
        (Some(r), _) => Ok(RateProfile::Constant(r)),
        (None, Some(p)) => read_rate_profile(p),
        (None, None) => bad("a range rate is required: --rate X or --rate-profile PATH"),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
    v.map_or_else(|| bad(format!("{flag} is required")), Ok)
}

fn options(a: &EstimateArgs) -> Result<MlOptions> {
    let l_min = a.l_min.unwrap_or(striate::inference::DEFAULT_L_MIN);
    if l_min < 2 {
        return bad("--l-min must be at least 2");
    }
    Ok(MlOptions { l_min, equalize_striations: a.equalize.unwrap_or(true) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Free {
    Range,
    Beta,
    Rate,
}

fn search_for(free: Free, a: &EstimateArgs) -> Result<Search> {
    Ok(match free {
        Free::Range => Search::Range { rate: rate_of(a)?, beta: need(a.beta, "--beta")? },
        Free::Beta => Search::Beta { r: need(a.range, "--range")?, rate: rate_of(a)? },
        Free::Rate => {
            if a.rate.is_some() || a.rate_profile.is_some() {
                return bad("the rate is the searched parameter; drop --rate/--rate-profile");
            }
            Search::Rate { r: need(a.range, "--range")?, beta: need(a.beta, "--beta")? }
        }
    })
}

fn out_dir(a: &EstimateArgs) -> Result<PathBuf> {
    a.out.clone().map_or_else(|| bad("--out DIR is required"), Ok)
}

fn write_result(dir: &Path, sub: &str, cfg: &EstimateArgs, res: &striate::LikelihoodResult) -> Result<()> {
    prepare_out(dir)?;
    let outputs = vec![dir.join("result.json"), dir.join("result.csv"), dir.join("config.json")];
    res.write_json(&outputs[0])?;
    res.write_csv(&outputs[1])?;
    write_json(&outputs[2], cfg)?;
    write_manifest(dir, sub, &serde_json::to_value(cfg)?, &outputs)?;
    println!(
        "{} {}: argmax {} = {} ({} candidates, {} skipped)",
        sub,
        res.method,
        res.parameter,
        res.argmax,
        res.candidates.len(),
        res.diagnostics.skipped
    );
    Ok(())
}

pub fn estimate(sub: &str, free: Free, flags: &EstimateArgs) -> Result<()> {
    let cfg = merge(flags, flags.config.as_deref())?;
    let dir = out_dir(flags)?;
    let inputs = load_inputs(&cfg)?;
    let candidates = parse_grid(need(cfg.grid.as_deref(), "--grid")?)?;
    let search = search_for(free, &cfg)?;
    let noise = load_noise(&cfg, &inputs.spec)?;
    let res = ml_estimate(&inputs.spec, &inputs.part, &noise, &search, &candidates, &options(&cfg)?)?;
    write_result(&dir, sub, &cfg, &res)
}

pub fn baseline(flags: &EstimateArgs) -> Result<()> {
    let cfg = merge(flags, flags.config.as_deref())?;
    let dir = out_dir(flags)?;
    let method: Method = need(cfg.method.as_deref(), "--method")?.parse()?;
    let inputs = load_inputs(&cfg)?;
    match method {
        Method::T => {
            let candidates = parse_grid(need(cfg.grid.as_deref(), "--grid")?)?;
            let search = search_for(Free::Range, &cfg)?;
            let res = tonal_only_range(&inputs.spec, &inputs.part, &search, &candidates, &options(&cfg)?)?;
            write_result(&dir, "baseline", &cfg, &res)
        }
        Method::S => {
            let beta = need(cfg.beta, "--beta")?;
            let rate = rate_of(&cfg)?;
            // Only range differences matter; anchor far enough out that the
            // whole window stays at positive range.
            let times = inputs.spec.times();
            let t_end = times[times.len() - 1];
            let reach = times.iter().map(|&t| rate.integral(t, t_end)).fold(0.0, f64::max);
            let q = ParamVector::new(reach + 1_000.0, rate, beta)?;
            let axis = map_time_to_range(&times, &q)?;
            let res = slope_range_auto(&inputs.spec, &axis, beta, cfg.taper.unwrap_or(true))?;
            prepare_out(&dir)?;
            let outputs = vec![dir.join("slope.json"), dir.join("config.json")];
            write_json(&outputs[0], &res)?;
            write_json(&outputs[1], &cfg)?;
            write_manifest(&dir, "baseline", &serde_json::to_value(&cfg)?, &outputs)?;
            println!(
                "baseline S: final range {:.1} m (slope {:.4e} Hz/m, peak {:.1} dB over median)",
                res.final_range, res.slope, res.peak_snr_db
            );
            Ok(())
        }
        Method::G => bad("baseline runs S or T; use estimate-range for G"),
    }
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let mut sc: Scenario = match &a.config {
        Some(p) => read_json(p)?,
        None => Scenario::default(),
    };
    if let Some(b) = a.beta {
        sc.beta = b;
    }
    if let Some(r) = a.rate {
        sc.rate = r;
    }
    if let Some(b) = &a.band {
        sc.band = parse_band(b)?;
    }
    if let Some(t) = &a.tones {
        sc.tones = parse_list(t, "tones")?;
    }
    if let Some(l) = a.l_min {
        sc.l_min = l;
    }
    let methods: Vec<Method> = a.method.split(',').map(str::parse).collect::<Result<_>>()?;
    let ranges = match &a.ranges {
        Some(r) => parse_list(r, "ranges")?,
        None => vec![sc.final_range],
    };
    if a.trials == 0 || ranges.is_empty() || methods.is_empty() {
        return bad("sweep needs at least one trial, range and method");
    }
    if ranges.iter().any(|r| !(*r > 0.0)) {
        return bad("sweep ranges must be positive");
    }
    // Validate once up front so a bad scenario is a usage error.
    sc.sim_config(a.seed).validate()?;

    prepare_out(&a.out)?;
    let mut trials = csv_out(&a.out.join("trials.csv"), "method,range_index,final_range,trial,seed,estimate,signed_error_pct,status")?;
    let mut timing = csv_out(&a.out.join("timing.csv"), "method,range_index,trial,runtime_s")?;
    let mut summary = Vec::new();
    for &method in &methods {
        let mut means = Vec::new();
        for (ri, &r) in ranges.iter().enumerate() {
            let scenario = Scenario { final_range: r, ..sc.clone() };
            // Same seeds for every method, so methods see the same data.
            let base = a.seed.wrapping_add((ri as u64) << 32);
            let results = run_trials(&scenario, method, base, a.trials);
            let mut errors = Vec::new();
            for (i, res) in results.iter().enumerate() {
                let seed = striate::montecarlo::trial_seed(base, i);
                match res {
                    Ok(TrialResult { estimate, signed_error_pct, runtime_s, .. }) => {
                        errors.push(*signed_error_pct);
                        writeln!(trials, "{method},{ri},{r},{i},{seed},{estimate},{signed_error_pct},ok")?;
                        writeln!(timing, "{method},{ri},{i},{runtime_s}")?;
                    }
                    Err(e) => {
                        let msg = e.to_string().replace([',', '\n'], ";");
                        writeln!(trials, "{method},{ri},{r},{i},{seed},,,{msg}")?;
                    }
                }
            }
            let stats = summarize(&errors, a.tolerance);
            means.push(stats.mean_pct);
            summary.push(json!({
                "method": method.to_string(),
                "final_range": r,
                "failed": a.trials - errors.len(),
                "stats": stats,
            }));
            println!(
                "sweep {method} r={r:.0} m: RMSE {:.3}%, mean {:+.3}%, IQR {:.3}%, within {:.0}% ({} failed)",
                stats.rmse_pct,
                stats.mean_pct,
                stats.iqr_pct,
                100.0 * stats.within_fraction,
                a.trials - errors.len()
            );
        }
        if a.smooth {
            let smoothed = moving_average3(&means);
            let first = summary.len() - means.len();
            for (s, m) in summary[first..].iter_mut().zip(smoothed) {
                s["smoothed_mean_pct"] = json!(m);
            }
        }
    }
    trials.flush()?;
    timing.flush()?;

    let mut table = csv_out(
        &a.out.join("summary.csv"),
        "method,final_range,n,failed,rmse_pct,mean_pct,median_pct,iqr_pct,within_fraction,smoothed_mean_pct",
    )?;
    for s in &summary {
        let st = &s["stats"];
        let smoothed = s.get("smoothed_mean_pct").map_or(String::new(), |v| v.to_string());
        writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{}",
            s["method"].as_str().unwrap_or(""),
            s["final_range"],
            st["n"],
            s["failed"],
            st["rmse_pct"],
            st["mean_pct"],
            st["median_pct"],
            st["iqr_pct"],
            st["within_fraction"],
            smoothed
        )?;
    }
    table.flush()?;
    write_json(&a.out.join("summary.json"), &summary)?;
    let config = json!({
        "scenario": sc,
        "seed": a.seed,
        "trials": a.trials,
        "methods": methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "ranges": ranges,
        "tolerance_pct": a.tolerance,
        "smooth": a.smooth,
    });
    write_json(&a.out.join("config.json"), &config)?;
    let outputs: Vec<PathBuf> =
        ["trials.csv", "timing.csv", "summary.csv", "summary.json", "config.json"].iter().map(|n| a.out.join(n)).collect();
    write_manifest(&a.out, "sweep", &config, &outputs)
}

fn csv_out(path: &Path, header: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

pub fn ais(a: &AisArgs) -> Result<()> {
    let (lat, lon) = parse_pair(&a.receiver, ',', "receiver")?;
    let profile = ingest_track(&a.track, Receiver { lat, lon }, a.dt)?;
    prepare_out(&a.out)?;
    let outputs = vec![a.out.join("profile.csv"), a.out.join("profile.json")];
    profile.write_csv(&outputs[0])?;
    profile.write_json(&outputs[1])?;
    let config = json!({ "track": a.track, "receiver": { "lat": lat, "lon": lon }, "dt": a.dt });
    write_manifest(&a.out, "ais", &config, &outputs)?;
    println!(
        "ais: {} samples over {:.0} s, range {:.1} -> {:.1} m",
        profile.times.len(),
        profile.times[profile.times.len() - 1] - profile.times[0],
        profile.ranges[0],
        profile.ranges[profile.ranges.len() - 1]
    );
    Ok(())
}
