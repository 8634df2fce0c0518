//! Replay simulation, eye-model intensity averaging, gain-normalized MSE,
//! and multi-run convergence experiments.
//!
//! The eye model is intensity-domain: subframe intensities are accumulated
//! with equal weight and the perceived amplitude is the square root of their
//! mean. Scoring uses the phase-insensitive MSE between target and replay
//! amplitudes; by default the replay is scaled by the least-squares optimal
//! gain so structural error is not confounded with overall brightness.

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{forward_transform, Grid};
use crate::hologen::{stream_subframes, GenError, GenerationPlan, Hologram};
use crate::DeviceSpec;

/// Errors for accumulation and scoring.
#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: expected {expected_width}x{expected_height}, got {got_width}x{got_height}")]
    ShapeMismatch {
        expected_width: usize,
        expected_height: usize,
        got_width: usize,
        got_height: usize,
    },
    #[error("intensity at index {index} is negative ({value})")]
    NegativeIntensity { index: usize, value: f64 },
    #[error("accumulator holds no subframes")]
    EmptyAccumulator,
    #[error("replay is identically zero; gain is undefined")]
    DegenerateGain,
    #[error("run count must be at least 1")]
    InvalidRuns,
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Equal-weight intensity accumulator emulating the eye's integration
/// window. Sums stay non-negative because only validated non-negative
/// intensity grids are accepted.
#[derive(Debug, Clone)]
pub struct ReplayAccumulator {
    width: usize,
    height: usize,
    intensity_sum: Vec<f64>,
    count: usize,
}

impl ReplayAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "accumulator needs nonzero dimensions");
        Self {
            width,
            height,
            intensity_sum: vec![0.0; width * height],
            count: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn intensity_sum(&self) -> &[f64] {
        &self.intensity_sum
    }

    /// Adds one subframe's intensity; rejects shape mismatches and negative
    /// intensities without modifying the accumulator.
    pub fn accumulate(&mut self, intensity: &Grid) -> Result<(), MetricsError> {
        if intensity.width() != self.width || intensity.height() != self.height {
            return Err(MetricsError::ShapeMismatch {
                expected_width: self.width,
                expected_height: self.height,
                got_width: intensity.width(),
                got_height: intensity.height(),
            });
        }
        if let Some(index) = intensity.values().iter().position(|&v| v < 0.0) {
            return Err(MetricsError::NegativeIntensity {
                index,
                value: intensity.values()[index],
            });
        }
        for (s, &v) in self.intensity_sum.iter_mut().zip(intensity.values()) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    /// Merges another accumulator (elementwise sums, counts added); the
    /// merge of per-thread accumulators equals sequential accumulation up to
    /// floating-point reassociation.
    pub fn merge(&mut self, other: &ReplayAccumulator) -> Result<(), MetricsError> {
        if other.width != self.width || other.height != self.height {
            return Err(MetricsError::ShapeMismatch {
                expected_width: self.width,
                expected_height: self.height,
                got_width: other.width,
                got_height: other.height,
            });
        }
        for (s, &v) in self.intensity_sum.iter_mut().zip(&other.intensity_sum) {
            *s += v;
        }
        self.count += other.count;
        Ok(())
    }
}

/// Replay intensity of one subframe: `|forward_transform(field)|^2`
/// pointwise.
pub fn simulate_replay(hologram: &Hologram) -> Grid {
    let spectrum = forward_transform(hologram.field());
    Grid::from_parts(
        spectrum.width(),
        spectrum.height(),
        spectrum.values().iter().map(|v| v.norm_sqr()).collect(),
    )
}

/// Perceived amplitude after equal-weight integration:
/// `sqrt(intensity_sum / count)` pointwise.
pub fn perceived_amplitude(acc: &ReplayAccumulator) -> Result<Grid, MetricsError> {
    if acc.count == 0 {
        return Err(MetricsError::EmptyAccumulator);
    }
    let inv = 1.0 / acc.count as f64;
    Ok(Grid::from_parts(
        acc.width,
        acc.height,
        acc.intensity_sum.iter().map(|&s| (s * inv).sqrt()).collect(),
    ))
}

/// The scalar `g` minimizing `mean((target - g*replay)^2)`:
/// `g = sum(target*replay) / sum(replay^2)`.
pub fn optimal_gain(replay_amp: &Grid, target: &Grid) -> Result<f64, MetricsError> {
    check_shapes(target, replay_amp)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &r) in target.values().iter().zip(replay_amp.values()) {
        num += t * r;
        den += r * r;
    }
    if den == 0.0 {
        return Err(MetricsError::DegenerateGain);
    }
    Ok(num / den)
}

/// Scored comparison of a replay against its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Mean over pixels of `(target - gain*replay)^2`.
    pub mse: f64,
    /// Gain applied to the replay (1 when gain correction is disabled).
    pub gain: f64,
    /// Subframes behind the replay; [`mse`](Self::mse) itself scores one
    /// amplitude grid, so this is 1 unless set via
    /// [`with_subframes`](Self::with_subframes).
    pub n_subframes: usize,
}

impl ErrorReport {
    pub fn with_subframes(self, n_subframes: usize) -> Self {
        Self { n_subframes, ..self }
    }
}

/// Phase-insensitive MSE: `mean((target - g*replay)^2)` with `g` the
/// least-squares gain when `apply_gain` is set, else 1.
pub fn mse(target: &Grid, replay_amp: &Grid, apply_gain: bool) -> Result<ErrorReport, MetricsError> {
    check_shapes(target, replay_amp)?;
    let gain = if apply_gain {
        optimal_gain(replay_amp, target)?
    } else {
        1.0
    };
    let sum: f64 = target
        .values()
        .iter()
        .zip(replay_amp.values())
        .map(|(&t, &r)| {
            let d = t - gain * r;
            d * d
        })
        .sum();
    Ok(ErrorReport {
        mse: sum / target.len() as f64,
        gain,
        n_subframes: 1,
    })
}

fn check_shapes(target: &Grid, replay: &Grid) -> Result<(), MetricsError> {
    if target.width() != replay.width() || target.height() != replay.height() {
        return Err(MetricsError::ShapeMismatch {
            expected_width: target.width(),
            expected_height: target.height(),
            got_width: replay.width(),
            got_height: replay.height(),
        });
    }
    Ok(())
}

/// One averaged-replay score at a given subframe count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    /// Subframes accumulated into this score.
    pub n: usize,
    /// Mean MSE across runs.
    pub mean_mse: f64,
    /// Sample standard deviation across runs (0 when runs == 1).
    pub std_mse: f64,
    /// Independent runs behind the statistics.
    pub runs: usize,
}

/// Per-N convergence records for one algorithm and target.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSeries {
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceSeries {
    /// The record at `n` subframes, if within the generated range.
    pub fn at(&self, n: usize) -> Option<&ConvergencePoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

/// Per-run seeds must be decorrelated but reproducible; splitmix64 of the
/// base seed and run index is the conventional way to get both.
fn run_seed(base: u64, run: u64) -> u64 {
    let mut z = base.wrapping_add((run + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scores the averaged replay at every prefix length `1..=total_subframes`
/// of the plan, across `runs` independent runs (run r re-seeds the plan with
/// splitmix64(seed, r)).
///
/// Within a run, the score at N reuses the first N subframes of the single
/// full-length generation, so the series is internally consistent: each
/// point is a true prefix of the same subframe sequence, and for OSPR a
/// prefix is bit-identical to a fresh N-subframe generation (substream
/// convention). For STTM the rotation schedule depends on the total count,
/// so a fresh N-subframe STTM series requires its own call with that total.
///
/// Runs execute in parallel when a rayon pool is available; results are
/// collected in run order, so statistics are identical for any thread count.
pub fn convergence_series(
    target: &Grid,
    device: &DeviceSpec,
    plan: &GenerationPlan,
    runs: usize,
    apply_gain: bool,
) -> Result<ConvergenceSeries, MetricsError> {
    if runs < 1 {
        return Err(MetricsError::InvalidRuns);
    }
    let total = plan.total_subframes();
    let per_run: Vec<Result<Vec<f64>, MetricsError>> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let run_plan = plan.with_seed(run_seed(plan.seed(), run));
            let mut acc = ReplayAccumulator::new(target.width(), target.height());
            let mut scores = Vec::with_capacity(total);
            let mut failure = None;
            stream_subframes(target, device, &run_plan, |_, _, holo| {
                if failure.is_some() {
                    return;
                }
                let result = acc
                    .accumulate(&simulate_replay(&holo))
                    .and_then(|()| perceived_amplitude(&acc))
                    .and_then(|amp| mse(target, &amp, apply_gain));
                match result {
                    Ok(report) => scores.push(report.mse),
                    Err(e) => failure = Some(e),
                }
            })?;
            match failure {
                Some(e) => Err(e),
                None => Ok(scores),
            }
        })
        .collect();

    let mut all_scores = Vec::with_capacity(runs);
    for r in per_run {
        all_scores.push(r?);
    }

    let points = (0..total)
        .map(|i| {
            let mean = all_scores.iter().map(|s| s[i]).sum::<f64>() / runs as f64;
            let std = if runs > 1 {
                let var = all_scores
                    .iter()
                    .map(|s| {
                        let d = s[i] - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / (runs - 1) as f64;
                var.sqrt()
            } else {
                0.0
            };
            ConvergencePoint {
                n: i + 1,
                mean_mse: mean,
                std_mse: std,
                runs,
            }
        })
        .collect();
    Ok(ConvergenceSeries { points })
}
