//! End-to-end tests of the `holomux` binary: file formats, exit codes,
//! reproducibility, and the cross-algorithm quality contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_holomux")
}

fn work_dir(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("holomux-cli-itest").join(test);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "holomux {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn generate_writes_subframes_replay_and_manifest() {
    let dir = work_dir("generate");
    let out = dir.join("run");
    run_ok(&[
        "generate", "--out", out.to_str().unwrap(), "--size", "64", "64", "--algorithm", "sttm",
        "--n", "4", "--seed", "3", "--check",
    ]);
    for i in 0..4 {
        assert!(out.join(format!("subframe_{i:03}.pgm")).exists());
    }
    assert!(!out.join("subframe_004.pgm").exists());
    assert!(out.join("replay.pgm").exists());
    assert!(out.join("target.pgm").exists());
    let m = manifest(&out);
    assert_eq!(m["algorithm"], "STTM");
    assert_eq!(m["width"], "64");
    assert_eq!(m["subframes"], "4");
    assert!(m["mse"].parse::<f64>().unwrap() > 0.0);
    assert!(m["mse_raw"].parse::<f64>().unwrap() > 0.0);
    assert!(m.contains_key("version"));
}

#[test]
fn pgm_input_round_trips_through_generate() {
    let dir = work_dir("pgm-input");
    let input = dir.join("input.pgm");
    let mut data = b"P5\n16 16\n255\n".to_vec();
    data.extend((0..256u32).map(|i| (i % 251) as u8));
    fs::write(&input, data).unwrap();
    let out = dir.join("run");
    run_ok(&[
        "generate", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--n", "2", "--seed", "1",
    ]);
    let m = manifest(&out);
    assert_eq!(m["width"], "16");
    assert_eq!(m["height"], "16");
    assert!(m["input"].ends_with("input.pgm"));
}

#[test]
fn png_input_is_accepted_and_resized() {
    let dir = work_dir("png-input");
    let input = dir.join("input.png");
    let img = image::GrayImage::from_fn(24, 24, |x, y| image::Luma([((x * 7 + y * 11) % 256) as u8]));
    img.save(&input).unwrap();
    let out = dir.join("run");
    run_ok(&[
        "generate", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--size", "16", "16", "--n", "2",
    ]);
    let m = manifest(&out);
    assert_eq!(m["width"], "16");
    assert_eq!(m["height"], "16");
}

#[test]
fn csv_headers_are_exact() {
    let dir = work_dir("headers");
    let conv = dir.join("conv");
    run_ok(&[
        "convergence", "--out", conv.to_str().unwrap(), "--size", "32", "32", "--algorithm",
        "sttm", "--n", "4", "--runs", "3", "--seed", "2",
    ]);
    assert_eq!(
        first_line(&conv.join("convergence.csv")),
        "algorithm,N,mean_mse,std_mse,runs,seed"
    );

    let bench = dir.join("bench");
    run_ok(&[
        "bench", "--out", bench.to_str().unwrap(), "--size", "32", "32", "--n", "2", "--runs",
        "5",
    ]);
    assert_eq!(
        first_line(&bench.join("bench.csv")),
        "algorithm,N,width,height,median_ms,repeats"
    );

    let theory = dir.join("theory");
    run_ok(&[
        "theory", "--out", theory.to_str().unwrap(), "--size", "16", "16", "--n", "2", "--seed",
        "4",
    ]);
    assert_eq!(
        first_line(&theory.join("theory.csv")),
        "N,closed_form,closed_form_alt,mc_mean,mc_stderr,ratio"
    );
    assert_eq!(
        first_line(&theory.join("scatter.csv")),
        "x,y,dh_sq,delta_e"
    );
    assert_eq!(
        first_line(&theory.join("hist_magnitude.csv")),
        "bin_lo,bin_hi,count"
    );
    assert_eq!(
        first_line(&theory.join("hist_phase.csv")),
        "bin_lo,bin_hi,count"
    );
}

#[test]
fn identical_configs_rerun_to_byte_identical_csvs() {
    let dir = work_dir("rerun");
    let args = |out: &Path| {
        vec![
            "convergence".to_string(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--size".into(),
            "32".into(),
            "32".into(),
            "--algorithm".into(),
            "hybrid".into(),
            "--sets".into(),
            "2".into(),
            "--n".into(),
            "3".into(),
            "--runs".into(),
            "4".into(),
            "--seed".into(),
            "9".into(),
        ]
    };
    let (a, b) = (dir.join("a"), dir.join("b"));
    run_ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        fs::read(a.join("convergence.csv")).unwrap(),
        fs::read(b.join("convergence.csv")).unwrap()
    );

    let (c, d) = (dir.join("c"), dir.join("d"));
    for out in [&c, &d] {
        run_ok(&[
            "theory", "--out", out.to_str().unwrap(), "--size", "16", "16", "--n", "3",
            "--seed", "11",
        ]);
    }
    for file in ["theory.csv", "scatter.csv", "hist_magnitude.csv", "hist_phase.csv"] {
        assert_eq!(
            fs::read(c.join(file)).unwrap(),
            fs::read(d.join(file)).unwrap(),
            "{file} differs between identical reruns"
        );
    }
}

#[test]
fn exit_codes_distinguish_config_io_and_parse_errors() {
    let dir = work_dir("exit-codes");
    // unknown flag: clap parse error
    let out = run(&["generate", "--out", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    // config error: non-power-of-two size
    let out = run(&[
        "generate", "--out", dir.join("a").to_str().unwrap(), "--size", "100", "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // config error: hybrid without --sets
    let out = run(&[
        "generate", "--out", dir.join("b").to_str().unwrap(), "--algorithm", "hybrid",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // io error: missing input file
    let out = run(&[
        "generate", "--input", dir.join("missing.pgm").to_str().unwrap(), "--out",
        dir.join("c").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // help goes to stdout and succeeds
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("generate"));
}

#[test]
fn single_subframe_ospr_and_sttm_coincide_byte_for_byte() {
    let dir = work_dir("coincide");
    let (a, b) = (dir.join("ospr"), dir.join("sttm"));
    for (alg, out) in [("ospr", &a), ("sttm", &b)] {
        run_ok(&[
            "generate", "--out", out.to_str().unwrap(), "--size", "64", "64", "--algorithm",
            alg, "--n", "1", "--seed", "5",
        ]);
    }
    assert_eq!(
        fs::read(a.join("subframe_000.pgm")).unwrap(),
        fs::read(b.join("subframe_000.pgm")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("replay.pgm")).unwrap(),
        fs::read(b.join("replay.pgm")).unwrap()
    );
}

#[test]
fn sttm_raw_error_stays_within_a_fifth_of_ospr() {
    // Mean over 20 seeds at 256x256, N=12, unit gain: the rotation-
    // multiplexed generator may trade at most 20% replay error for its
    // single-transform cost.
    let dir = work_dir("quality-ratio");
    let mut means = Vec::new();
    for alg in ["ospr", "sttm"] {
        let mut total = 0.0;
        for seed in 1..=20u32 {
            let out = dir.join(format!("{alg}-{seed}"));
            run_ok(&[
                "generate", "--out", out.to_str().unwrap(), "--size", "256", "256",
                "--algorithm", alg, "--n", "12", "--seed", &seed.to_string(),
            ]);
            total += manifest(&out)["mse_raw"].parse::<f64>().unwrap();
        }
        means.push(total / 20.0);
    }
    let ratio = means[1] / means[0];
    assert!(
        ratio <= 1.20,
        "raw MSE ratio sttm/ospr = {ratio:.4} exceeds 1.20 (ospr {}, sttm {})",
        means[0],
        means[1]
    );
}

#[test]
fn theory_check_passes_at_small_scale() {
    let dir = work_dir("theory-check");
    let out = dir.join("run");
    run_ok(&[
        "theory", "--out", out.to_str().unwrap(), "--size", "64", "64", "--n", "8", "--seed",
        "6", "--check",
    ]);
    let m = manifest(&out);
    let ks: f64 = m["ks_magnitude"].parse().unwrap();
    assert!(ks > 0.0 && ks < 0.375, "ks {ks}");
    let c: f64 = m["c_mse"].parse().unwrap();
    assert!(c > 0.0 && c < 1.0, "c {c}");
    // one scatter row per pixel plus the header
    let rows = fs::read_to_string(out.join("scatter.csv")).unwrap().lines().count();
    assert_eq!(rows, 64 * 64 + 1);
}
