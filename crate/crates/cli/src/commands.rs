//! The four subcommands. Each prepares a target, runs its experiment, and
//! writes every output (images, CSVs, manifest) under the configured
//! directory; identical configurations produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use holomux::{
    convergence_series, diffraction_stats, expected_mse_formula, generate_hybrid, generate_ospr,
    generate_sttm, inverse_transform, monte_carlo_quant_error, mse, perceived_amplitude,
    quantization_scatter, randomize_phase, simulate_replay, symmetrize_target, synthesize,
    asymptotic_ratio, Algorithm, DeviceSpec, DistributionTestResult, GenerationPlan, Grid,
    RandomStream, ReplayAccumulator, SubframeSet,
};

use crate::imageio::{load_image, resize_area, save_intensity, write_pgm, Scaling};
use crate::{AlgorithmArg, CliError, RunConfig};

/// Seed of the built-in test image; fixed so `--seed` sweeps vary the
/// generation randomness while the target stays put.
const SYNTHETIC_IMAGE_SEED: u64 = 7;
/// Monte Carlo sample count for the theory table.
const THEORY_MC_SAMPLES: usize = 1_000_000;
/// Default target edge when neither an input image nor a size is given.
const DEFAULT_SIZE: usize = 512;

/// Nine significant digits; fixed so reruns are byte-identical.
fn f9(x: f64) -> String {
    format!("{x:.8e}")
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn algorithm_of(cfg: &RunConfig) -> Algorithm {
    match cfg.algorithm {
        AlgorithmArg::Ospr => Algorithm::Ospr,
        AlgorithmArg::Sttm => Algorithm::Sttm,
        AlgorithmArg::Hybrid => Algorithm::Hybrid,
    }
}

fn plan_of(cfg: &RunConfig) -> Result<GenerationPlan, CliError> {
    Ok(match cfg.algorithm {
        AlgorithmArg::Ospr => GenerationPlan::ospr(cfg.n, cfg.seed)?,
        AlgorithmArg::Sttm => GenerationPlan::sttm(cfg.n, cfg.seed)?,
        AlgorithmArg::Hybrid => GenerationPlan::hybrid(cfg.sets, cfg.n, cfg.seed)?,
    })
}

fn device_of(cfg: &RunConfig) -> Result<DeviceSpec, CliError> {
    Ok(DeviceSpec::with_level_count(cfg.levels)?)
}

/// Loads or synthesizes the target amplitude grid, resizing as requested,
/// and symmetrizes it for binary devices (whose real-valued subframes force
/// point-symmetric replay intensities). Returns the grid and a description
/// for the manifest.
fn prepare_target(cfg: &RunConfig) -> Result<(Grid, String), CliError> {
    let (grid, desc) = match &cfg.input {
        Some(path) => {
            let loaded = load_image(path)?;
            let grid = match cfg.size {
                Some((w, h)) if (w, h) != (loaded.width(), loaded.height()) => {
                    resize_area(&loaded, w, h)?
                }
                _ => loaded,
            };
            (grid, path.display().to_string())
        }
        None => {
            let (w, h) = cfg.size.unwrap_or((DEFAULT_SIZE, DEFAULT_SIZE));
            (
                synthesize(w, h, SYNTHETIC_IMAGE_SEED)?,
                format!("synthetic(seed={SYNTHETIC_IMAGE_SEED})"),
            )
        }
    };
    if cfg.levels == 2 {
        Ok((symmetrize_target(&grid)?, desc))
    } else {
        Ok((grid, desc))
    }
}

/// Ordered key=value manifest lines shared by every command.
struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(cfg: &RunConfig, input_desc: &str, width: usize, height: usize) -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.push("command", cfg.command);
        m.push("input", input_desc);
        m.push("out", cfg.out.display().to_string());
        m.push("width", width);
        m.push("height", height);
        m.push(
            "algorithm",
            match cfg.algorithm {
                AlgorithmArg::Ospr => "OSPR",
                AlgorithmArg::Sttm => "STTM",
                AlgorithmArg::Hybrid => "HYBRID",
            },
        );
        m.push("n", cfg.n);
        m.push("sets", cfg.sets);
        m.push("levels", cfg.levels);
        m.push("runs", cfg.runs);
        m.push("seed", cfg.seed);
        m.push("apply_gain", cfg.apply_gain);
        m.push("check", cfg.check);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn write(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let mut text = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(text, "{k}={v}");
        }
        write_text(&out_path(cfg, "manifest.txt"), &text)
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))
}

fn generate_set(cfg: &RunConfig, target: &Grid, device: &DeviceSpec) -> Result<SubframeSet, CliError> {
    Ok(match cfg.algorithm {
        AlgorithmArg::Ospr => generate_ospr(target, device, cfg.n, cfg.seed)?,
        AlgorithmArg::Sttm => generate_sttm(target, device, cfg.n, cfg.seed)?,
        AlgorithmArg::Hybrid => generate_hybrid(target, device, cfg.sets, cfg.n, cfg.seed)?,
    })
}

pub fn generate(cfg: RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_out_dir(&cfg)?;
    let (target, input_desc) = prepare_target(&cfg)?;
    let device = device_of(&cfg)?;
    // The prepared target (resized and, for binary devices, symmetrized) is
    // what the generator actually optimizes; keep it next to the replay.
    save_intensity(&out_path(&cfg, "target.pgm"), &target, Scaling::Linear)?;
    let set = generate_set(&cfg, &target, &device)?;

    let mut acc = ReplayAccumulator::new(target.width(), target.height());
    for (i, holo) in set.subframes().iter().enumerate() {
        let indices = holo.level_indices();
        let bytes: Vec<u8> = indices
            .iter()
            .map(|&k| (k * 255 / (cfg.levels - 1)) as u8)
            .collect();
        write_pgm(
            &out_path(&cfg, &format!("subframe_{i:03}.pgm")),
            target.width(),
            target.height(),
            &bytes,
        )?;
        acc.accumulate(&simulate_replay(holo))?;
    }
    let amp = perceived_amplitude(&acc)?;
    // The replay image shows perceived amplitude: sqrt scaling of the
    // eye-averaged intensity.
    let intensity = Grid::new(
        target.width(),
        target.height(),
        amp.values().iter().map(|&v| v * v).collect(),
    )?;
    save_intensity(&out_path(&cfg, "replay.pgm"), &intensity, Scaling::Sqrt)?;

    let total = set.subframes().len();
    let report = mse(&target, &amp, cfg.apply_gain)?.with_subframes(total);
    let raw = mse(&target, &amp, false)?;

    if cfg.check {
        // Unit-magnitude subframes put exactly one unit of energy per pixel
        // into each replay, so the eye-averaged intensity sums to the pixel
        // count.
        let energy: f64 = amp.values().iter().map(|&a| a * a).sum();
        let pixels = target.len() as f64;
        if ((energy - pixels) / pixels).abs() > 1e-9 {
            return Err(CliError::Check(format!(
                "replay energy {energy} deviates from pixel count {pixels}"
            )));
        }
        if !report.mse.is_finite() || report.mse < 0.0 {
            return Err(CliError::Check(format!("mse {} is not usable", report.mse)));
        }
    }

    let mut manifest = Manifest::new(&cfg, &input_desc, target.width(), target.height());
    manifest.push("subframes", total);
    manifest.push("mse", f9(report.mse));
    manifest.push("mse_raw", f9(raw.mse));
    manifest.push("gain", f9(report.gain));
    manifest.push("elapsed_generate_ms", f9(set.elapsed().as_secs_f64() * 1e3));
    manifest.push(
        "elapsed_total_ms",
        f9(started.elapsed().as_secs_f64() * 1e3),
    );
    manifest.write(&cfg)?;
    println!(
        "wrote {total} subframes + replay to {} (mse {})",
        cfg.out.display(),
        f9(report.mse)
    );
    Ok(())
}

pub fn convergence(cfg: RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_out_dir(&cfg)?;
    let (target, input_desc) = prepare_target(&cfg)?;
    let device = device_of(&cfg)?;
    let plan = plan_of(&cfg)?;
    let series = convergence_series(&target, &device, &plan, cfg.runs, cfg.apply_gain)?;

    let algorithm = algorithm_of(&cfg);
    let mut csv = String::from("algorithm,N,mean_mse,std_mse,runs,seed\n");
    for p in &series.points {
        let _ = writeln!(
            csv,
            "{algorithm},{},{},{},{},{}",
            p.n,
            f9(p.mean_mse),
            f9(p.std_mse),
            p.runs,
            cfg.seed
        );
    }
    write_text(&out_path(&cfg, "convergence.csv"), &csv)?;

    if cfg.check {
        let total = plan.total_subframes();
        if series.points.len() != total {
            return Err(CliError::Check(format!(
                "series has {} points, expected {total}",
                series.points.len()
            )));
        }
        for p in &series.points {
            if !p.mean_mse.is_finite() || p.mean_mse <= 0.0 || !p.std_mse.is_finite() || p.std_mse < 0.0
            {
                return Err(CliError::Check(format!(
                    "point N={} has unusable statistics (mean {}, std {})",
                    p.n, p.mean_mse, p.std_mse
                )));
            }
        }
    }

    let mut manifest = Manifest::new(&cfg, &input_desc, target.width(), target.height());
    manifest.push("csv", "convergence.csv");
    manifest.push("points", series.points.len());
    manifest.push(
        "elapsed_total_ms",
        f9(started.elapsed().as_secs_f64() * 1e3),
    );
    manifest.write(&cfg)?;
    println!(
        "wrote convergence.csv ({} points) to {}",
        series.points.len(),
        cfg.out.display()
    );
    Ok(())
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("durations are finite"));
    samples[samples.len() / 2]
}

pub fn bench(cfg: RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_out_dir(&cfg)?;
    let (target, input_desc) = prepare_target(&cfg)?;
    let device = device_of(&cfg)?;

    // One warm-up absorbs first-touch costs (allocator growth, FFT plan
    // construction); the median then summarizes steady-state repeats. Each
    // result is dropped before the next repeat so the allocator sees the
    // same state every time.
    let mut times_ms = Vec::with_capacity(cfg.runs);
    for repeat in 0..=cfg.runs {
        let set = generate_set(&cfg, &target, &device)?;
        if repeat > 0 {
            times_ms.push(set.elapsed().as_secs_f64() * 1e3);
        }
    }
    let median_ms = median(times_ms);

    let algorithm = algorithm_of(&cfg);
    let mut csv = String::from("algorithm,N,width,height,median_ms,repeats\n");
    let _ = writeln!(
        csv,
        "{algorithm},{},{},{},{},{}",
        cfg.n * cfg.sets,
        target.width(),
        target.height(),
        f9(median_ms),
        cfg.runs
    );
    write_text(&out_path(&cfg, "bench.csv"), &csv)?;

    if cfg.check && !(median_ms.is_finite() && median_ms > 0.0) {
        return Err(CliError::Check(format!("median {median_ms} is not usable")));
    }

    let mut manifest = Manifest::new(&cfg, &input_desc, target.width(), target.height());
    manifest.push("csv", "bench.csv");
    manifest.push("median_ms", f9(median_ms));
    manifest.push(
        "elapsed_total_ms",
        f9(started.elapsed().as_secs_f64() * 1e3),
    );
    manifest.write(&cfg)?;
    println!(
        "median generation time {} ms over {} repeats ({})",
        f9(median_ms),
        cfg.runs,
        cfg.out.display()
    );
    Ok(())
}

fn histogram_csv(result: &DistributionTestResult) -> String {
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (i, &count) in result.counts.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{count}",
            f9(result.bin_edges[i]),
            f9(result.bin_edges[i + 1])
        );
    }
    csv
}

pub fn theory(cfg: RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_out_dir(&cfg)?;
    let (target, input_desc) = prepare_target(&cfg)?;
    let device = device_of(&cfg)?;

    // (a) closed-form table with the Monte Carlo oracle alongside. The
    // alternative column restores the sector-probability normalization
    // 1/(2*pi*N) that a direct evaluation of the underlying integral
    // carries; the ratio column tracks the primary form, whose N-dependence
    // the Monte Carlo mean reproduces.
    let closed_1 = expected_mse_formula(1, 1.0, 1)?;
    let mut csv = String::from("N,closed_form,closed_form_alt,mc_mean,mc_stderr,ratio\n");
    let mut mc_table = Vec::with_capacity(cfg.n);
    for n in 1..=cfg.n {
        let closed = expected_mse_formula(n, 1.0, 1)?;
        let alt = closed / (std::f64::consts::TAU * n as f64);
        let (mc_mean, mc_stderr) =
            monte_carlo_quant_error(n, THEORY_MC_SAMPLES, cfg.seed.wrapping_add(n as u64))?;
        mc_table.push((n, closed, mc_mean, mc_stderr));
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{}",
            f9(closed),
            f9(alt),
            f9(mc_mean),
            f9(mc_stderr),
            f9(closed / closed_1)
        );
    }
    write_text(&out_path(&cfg, "theory.csv"), &csv)?;

    // (b) diffraction statistics of the phase-randomized target.
    let (mags, phases) = diffraction_stats(&target, cfg.seed)?;
    write_text(&out_path(&cfg, "hist_magnitude.csv"), &histogram_csv(&mags))?;
    write_text(&out_path(&cfg, "hist_phase.csv"), &histogram_csv(&phases))?;

    // (c) full quantization scatter of the same aperture.
    let aperture = inverse_transform(&randomize_phase(&target, &RandomStream::new(cfg.seed, 1))?);
    let (points, model) = quantization_scatter(&aperture, &target, &device)?;
    let mut scatter = String::from("x,y,dh_sq,delta_e\n");
    for p in &points {
        let _ = writeln!(scatter, "{},{},{},{}", p.x, p.y, f9(p.dh_sq), f9(p.delta_e));
    }
    write_text(&out_path(&cfg, "scatter.csv"), &scatter)?;

    if cfg.check {
        theory_checks(&cfg, &target, &mc_table, &mags, &phases, model.c_mse, &points)?;
    }

    let mut manifest = Manifest::new(&cfg, &input_desc, target.width(), target.height());
    manifest.push("csv", "theory.csv");
    manifest.push("mc_samples", THEORY_MC_SAMPLES);
    manifest.push("asymptotic_ratio", f9(asymptotic_ratio()));
    manifest.push("ks_magnitude", f9(mags.ks_statistic));
    manifest.push("ks_phase", f9(phases.ks_statistic));
    manifest.push("c_mse", f9(model.c_mse));
    manifest.push(
        "elapsed_total_ms",
        f9(started.elapsed().as_secs_f64() * 1e3),
    );
    manifest.write(&cfg)?;
    println!(
        "wrote theory.csv, histograms, scatter.csv to {} (KS mag {}, c {})",
        cfg.out.display(),
        f9(mags.ks_statistic),
        f9(model.c_mse)
    );
    Ok(())
}

/// Validity assertions for `theory --check`: the Monte Carlo oracle must
/// reproduce the closed-form ratios, the asymptote must round to its quoted
/// value, the diffraction fits must hold at sample-size precision, and the
/// scatter must show the quadratic law.
fn theory_checks(
    cfg: &RunConfig,
    target: &Grid,
    mc_table: &[(usize, f64, f64, f64)],
    mags: &DistributionTestResult,
    phases: &DistributionTestResult,
    c_mse: f64,
    points: &[holomux::ScatterPoint],
) -> Result<(), CliError> {
    let (_, closed_1, mc_1, se_1) = mc_table[0];
    for &(n, closed, mc_mean, mc_stderr) in mc_table {
        let ratio = mc_mean / mc_1;
        let closed_ratio = closed / closed_1;
        let se_ratio = ratio * ((se_1 / mc_1).powi(2) + (mc_stderr / mc_mean).powi(2)).sqrt();
        // +1e-12 keeps the self-comparison row (se exactly 0) well-posed.
        if (ratio - closed_ratio).abs() > 3.0 * se_ratio + 1e-12 {
            return Err(CliError::Check(format!(
                "Monte Carlo ratio at N={n} is {ratio}, closed form {closed_ratio} (se {se_ratio})"
            )));
        }
    }
    let asym = asymptotic_ratio();
    if ((asym * 1e4).round() / 1e4 - 0.2611).abs() > 1e-12 {
        return Err(CliError::Check(format!(
            "asymptotic ratio {asym} does not round to 0.2611"
        )));
    }

    // 3/sqrt(P) sits well above the expected KS fluctuation scale; the
    // 0.01 floor is the contractual bound for 512x512 and larger targets.
    let ks_bound = (3.0 / (target.len() as f64).sqrt()).max(0.01);
    if mags.ks_statistic >= ks_bound || phases.ks_statistic >= ks_bound {
        return Err(CliError::Check(format!(
            "KS statistics {} / {} exceed {ks_bound}",
            mags.ks_statistic, phases.ks_statistic
        )));
    }

    if !(0.0..1.0).contains(&c_mse) {
        return Err(CliError::Check(format!("fitted c_mse {c_mse} outside [0, 1)")));
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.dh_sq, p.delta_e)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let bins = 8;
    let per = sorted.len() / bins;
    if per == 0 {
        return Err(CliError::Check(format!(
            "{} scatter points cannot fill {bins} bins",
            sorted.len()
        )));
    }
    // Equal-population bin means must rise with |dH|^2 up to sampling
    // noise; adjacent bins may invert only within 3 combined standard
    // errors, so small targets do not trip the check spuriously.
    let mut prev_mean = f64::NEG_INFINITY;
    let mut prev_se = 0.0;
    for b in 0..bins {
        let lo = b * per;
        let hi = if b == bins - 1 { sorted.len() } else { lo + per };
        let count = (hi - lo) as f64;
        let mean = sorted[lo..hi].iter().map(|p| p.1).sum::<f64>() / count;
        let var = sorted[lo..hi].iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>()
            / (count - 1.0);
        let se = (var / count).sqrt();
        let slack = 3.0 * (prev_se * prev_se + se * se).sqrt();
        if mean < prev_mean - slack {
            return Err(CliError::Check(format!(
                "scatter bin {b} mean {mean} breaks monotonicity (previous {prev_mean}, slack {slack})"
            )));
        }
        prev_mean = mean;
        prev_se = se;
    }
    let _ = cfg;
    Ok(())
}
