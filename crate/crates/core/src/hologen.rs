//! Target preprocessing, phase randomization, quantization onto device
//! levels, and the three subframe generators.
//!
//! Generator randomness follows a fixed substream convention so that
//! coincidence cases are bit-exact across algorithms: OSPR subframe n draws
//! from stream n (1-based), hybrid restart set m draws from stream m, and
//! STTM draws from stream 1 only. Hence OSPR(N=1) and STTM(N=1) produce the
//! same subframe, and hybrid with one-subframe sets reproduces OSPR.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use thiserror::Error;

use crate::field::{inverse_transform, ComplexField, FieldError, Grid, RandomStream};

const TAU: f64 = std::f64::consts::TAU;

/// Errors for target preparation and subframe generation.
#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("device needs at least 2 phase levels, got {got}")]
    InvalidLevelCount { got: usize },
    #[error("symmetrization needs even dimensions, got {width}x{height}")]
    OddDimensions { width: usize, height: usize },
    #[error("target amplitude at index {index} is negative ({value})")]
    NegativeAmplitude { index: usize, value: f64 },
    #[error("invalid generation plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A phase-only modulator with `M >= 2` equally spaced levels `2*pi*k/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    level_count: usize,
    level_phases: Vec<f64>,
    levels: Vec<Complex64>,
}

impl DeviceSpec {
    /// Device with `m` equally spaced unit-magnitude levels.
    pub fn with_level_count(m: usize) -> Result<Self, GenError> {
        if m < 2 {
            return Err(GenError::InvalidLevelCount { got: m });
        }
        let level_phases: Vec<f64> = (0..m).map(|k| TAU * k as f64 / m as f64).collect();
        let levels = level_phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        Ok(Self {
            level_count: m,
            level_phases,
            levels,
        })
    }

    /// The binary phase device: levels 0 and pi (pixel values +/-1).
    pub fn binary() -> Self {
        Self::with_level_count(2).expect("2 is a valid level count")
    }

    pub fn level_count(&self) -> usize {
        self.level_count
    }

    pub fn level_phases(&self) -> &[f64] {
        &self.level_phases
    }

    /// The level constants `exp(i*2*pi*k/M)`; quantized pixels equal one of
    /// these bit-exactly.
    pub fn levels(&self) -> &[Complex64] {
        &self.levels
    }

    /// Index of the level whose phase sector contains `v`'s phase.
    ///
    /// Sectors are half-open, `[2*pi*k/M - pi/M, 2*pi*k/M + pi/M)`, so an
    /// exact boundary phase belongs to the higher level. Zero-amplitude
    /// pixels map to level 0. The binary branch is a sign test; it agrees
    /// with the generic sector rule bit-for-bit (property-tested).
    pub fn level_index(&self, v: Complex64) -> usize {
        if self.level_count == 2 {
            if v.re < 0.0 || (v.re == 0.0 && v.im > 0.0) {
                1
            } else {
                0
            }
        } else {
            generic_level_index(v, self.level_count)
        }
    }

    /// The level constant nearest in phase to `v` (see [`Self::level_index`]).
    pub fn quantize_value(&self, v: Complex64) -> Complex64 {
        self.levels[self.level_index(v)]
    }
}

/// Sector rule without the binary fast path; the tie-break at an exact
/// sector boundary relies on `(boundary + pi/M) / (2*pi/M)` evaluating to an
/// exact integer, which holds for the boundaries representable in an f64
/// phase (e.g. pi/2 for the binary device).
fn generic_level_index(v: Complex64, m: usize) -> usize {
    if v.re == 0.0 && v.im == 0.0 {
        return 0;
    }
    let sector = TAU / m as f64;
    let k = ((v.arg() + 0.5 * sector) / sector).floor() as i64;
    k.rem_euclid(m as i64) as usize
}

/// A field whose every pixel is exactly one of the device's level constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Hologram {
    field: ComplexField,
    device: DeviceSpec,
}

impl Hologram {
    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    /// Per-pixel level indices, recovered from the level constants.
    pub fn level_indices(&self) -> Vec<usize> {
        self.field
            .values()
            .iter()
            .map(|&v| self.device.level_index(v))
            .collect()
    }
}

/// Maps every pixel to its nearest device level (unit amplitude out; input
/// amplitude is ignored except that zero maps to level 0).
pub fn quantize(field: &ComplexField, device: &DeviceSpec) -> Hologram {
    let values = field
        .values()
        .iter()
        .map(|&v| device.levels[device.level_index(v)])
        .collect();
    Hologram {
        field: ComplexField::from_parts(field.width(), field.height(), values),
        device: device.clone(),
    }
}

/// Fused rotate-then-quantize. Produces the same hologram as
/// `quantize(&rotate_field(aperture, angle), device)` (the rotated product
/// is computed with the identical expression, so the chosen level index
/// matches bit-for-bit) without materializing the rotated field.
fn quantize_rotated(aperture: &ComplexField, angle: f64, device: &DeviceSpec) -> Hologram {
    let rot = Complex64::from_polar(1.0, angle);
    let values = if device.level_count == 2 {
        // Branchless form of the binary sector test applied to `v * rot`,
        // with the product spelled out exactly as the complex multiply
        // (bit-identical outputs are contractual).
        let l0 = device.levels[0];
        let l1 = device.levels[1];
        aperture
            .values()
            .iter()
            .map(|&v| {
                let re = v.re * rot.re - v.im * rot.im;
                let im = v.re * rot.im + v.im * rot.re;
                let upper = (re < 0.0) | ((re == 0.0) & (im > 0.0));
                Complex64::new(
                    if upper { l1.re } else { l0.re },
                    if upper { l1.im } else { l0.im },
                )
            })
            .collect()
    } else {
        aperture
            .values()
            .iter()
            .map(|&v| device.levels[device.level_index(v * rot)])
            .collect()
    };
    Hologram {
        field: ComplexField::from_parts(aperture.width(), aperture.height(), values),
        device: device.clone(),
    }
}

/// Supported subframe generation algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Independent randomize/transform/quantize per subframe.
    Ospr,
    /// One transform; subframes are quantized rotations of one aperture.
    Sttm,
    /// STTM restarted with fresh randomization every set.
    Hybrid,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ospr => "OSPR",
            Algorithm::Sttm => "STTM",
            Algorithm::Hybrid => "HYBRID",
        })
    }
}

/// A validated generation request: algorithm, subframe count per set,
/// restart count (1 unless hybrid), and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationPlan {
    algorithm: Algorithm,
    subframes: usize,
    restarts: usize,
    seed: u64,
}

impl GenerationPlan {
    pub fn ospr(subframes: usize, seed: u64) -> Result<Self, GenError> {
        Self::validated(Algorithm::Ospr, subframes, 1, seed)
    }

    pub fn sttm(subframes: usize, seed: u64) -> Result<Self, GenError> {
        Self::validated(Algorithm::Sttm, subframes, 1, seed)
    }

    /// Hybrid plan: `restarts` independent sets of `per_set` subframes.
    pub fn hybrid(restarts: usize, per_set: usize, seed: u64) -> Result<Self, GenError> {
        Self::validated(Algorithm::Hybrid, per_set, restarts, seed)
    }

    fn validated(
        algorithm: Algorithm,
        subframes: usize,
        restarts: usize,
        seed: u64,
    ) -> Result<Self, GenError> {
        if subframes < 1 {
            return Err(GenError::InvalidPlan(
                "subframe count must be at least 1".into(),
            ));
        }
        if restarts < 1 {
            return Err(GenError::InvalidPlan(
                "restart count must be at least 1".into(),
            ));
        }
        Ok(Self {
            algorithm,
            subframes,
            restarts,
            seed,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Subframes per set (the total for OSPR and STTM).
    pub fn subframes(&self) -> usize {
        self.subframes
    }

    /// Independent restart sets; 1 unless hybrid.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Plan copy with a different seed (used for multi-run experiments).
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn total_subframes(&self) -> usize {
        self.restarts * self.subframes
    }
}

/// An ordered set of generated subframes plus everything needed to audit it:
/// the plan, the rotation angle applied to each subframe, the stored
/// aperture per restart set (empty for OSPR, whose subframes have no shared
/// aperture), and the wall-clock generation time.
#[derive(Debug, Clone)]
pub struct SubframeSet {
    subframes: Vec<Hologram>,
    plan: GenerationPlan,
    rotation_angles: Vec<f64>,
    apertures: Vec<ComplexField>,
    elapsed: Duration,
}

impl SubframeSet {
    pub fn subframes(&self) -> &[Hologram] {
        &self.subframes
    }

    pub fn plan(&self) -> &GenerationPlan {
        &self.plan
    }

    /// Rotation angle applied to subframe i (0 for OSPR subframes).
    pub fn rotation_angles(&self) -> &[f64] {
        &self.rotation_angles
    }

    /// Stored apertures, one per restart set: STTM keeps 1, hybrid keeps
    /// `restarts`, OSPR keeps none. Subframe `i` of a set reconstructs as
    /// `quantize(&rotate_field(aperture, rotation_angles[i]), device)`.
    pub fn apertures(&self) -> &[ComplexField] {
        &self.apertures
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed
    }
}

/// Symmetrizes a non-negative target so `T[u,v] = T[(-u) mod W, (-v) mod H]`.
///
/// Rows `1..H/2` keep the input content; the self-paired rows 0 and `H/2`
/// keep their left half and mirror it into the right; rows below the middle
/// are point reflections of the preserved top half. Binary phase holograms
/// produce point-symmetric replay intensities, so an asymmetric target
/// carries unreproducible content; symmetrizing first puts all error where
/// the generator can act on it. Idempotent.
pub fn symmetrize_target(image: &Grid) -> Result<Grid, GenError> {
    let (w, h) = (image.width(), image.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(GenError::OddDimensions {
            width: w,
            height: h,
        });
    }
    let mut out = image.values().to_vec();
    // Self-paired rows mirror within themselves: out[v][u] = out[v][(W-u)%W].
    for v in [0, h / 2] {
        let row = v * w;
        for u in w / 2 + 1..w {
            out[row + u] = out[row + (w - u)];
        }
    }
    // Bottom rows are point reflections of the (preserved) top rows.
    for v in h / 2 + 1..h {
        let src = (h - v) * w;
        let dst = v * w;
        out[dst] = out[src];
        for u in 1..w {
            out[dst + u] = out[src + (w - u)];
        }
    }
    Ok(Grid::from_parts(w, h, out))
}

/// Attaches i.i.d. uniform phases to the target amplitudes: output pixel
/// `(x, y)` is `T[x,y] * exp(i*phi)` with phases drawn row-major from the
/// stream (one draw per pixel).
pub fn randomize_phase(target: &Grid, stream: &RandomStream) -> Result<ComplexField, GenError> {
    if let Some(index) = target.values().iter().position(|&t| t < 0.0) {
        return Err(GenError::NegativeAmplitude {
            index,
            value: target.values()[index],
        });
    }
    let mut rng = stream.rng();
    let values = target
        .values()
        .iter()
        .map(|&t| {
            let phi = rand::Rng::gen::<f64>(&mut rng) * TAU;
            Complex64::from_polar(t, phi)
        })
        .collect();
    Ok(ComplexField::from_parts(
        target.width(),
        target.height(),
        values,
    ))
}

/// Rotation angles `alpha_n = 2*pi*(n-1)/(M*N)` for `n = 1..=N`.
///
/// Rotating the device constellation by these angles makes the union over
/// subframes an `M*N`-level constellation, so N binary subframes emulate a
/// `2N`-level device. Steps of `2*pi*(n-1)/N` would map the constellation
/// onto itself instead of interleaving it.
pub fn sttm_angles(device: &DeviceSpec, n: usize) -> Result<Vec<f64>, GenError> {
    if n < 1 {
        return Err(GenError::InvalidPlan(
            "subframe count must be at least 1".into(),
        ));
    }
    let step = TAU / (device.level_count * n) as f64;
    Ok((0..n).map(|k| k as f64 * step).collect())
}

/// Drives `visit(index, rotation_angle, subframe)` over every subframe of
/// the plan in order, returning the per-set apertures. Streaming lets
/// convergence experiments score running prefixes without holding a full
/// subframe set in memory.
pub(crate) fn stream_subframes(
    target: &Grid,
    device: &DeviceSpec,
    plan: &GenerationPlan,
    mut visit: impl FnMut(usize, f64, Hologram),
) -> Result<Vec<ComplexField>, GenError> {
    match plan.algorithm {
        Algorithm::Ospr => {
            for n in 1..=plan.subframes {
                let stream = RandomStream::new(plan.seed, n as u64);
                let aperture = inverse_transform(&randomize_phase(target, &stream)?);
                visit(n - 1, 0.0, quantize(&aperture, device));
            }
            Ok(Vec::new())
        }
        Algorithm::Sttm => {
            let stream = RandomStream::new(plan.seed, 1);
            let aperture = inverse_transform(&randomize_phase(target, &stream)?);
            let angles = sttm_angles(device, plan.subframes)?;
            for (i, &alpha) in angles.iter().enumerate() {
                visit(i, alpha, quantize_rotated(&aperture, alpha, device));
            }
            Ok(vec![aperture])
        }
        Algorithm::Hybrid => {
            let angles = sttm_angles(device, plan.subframes)?;
            let mut apertures = Vec::with_capacity(plan.restarts);
            for m in 1..=plan.restarts {
                let stream = RandomStream::new(plan.seed, m as u64);
                let aperture = inverse_transform(&randomize_phase(target, &stream)?);
                for (i, &alpha) in angles.iter().enumerate() {
                    visit(
                        (m - 1) * plan.subframes + i,
                        alpha,
                        quantize_rotated(&aperture, alpha, device),
                    );
                }
                apertures.push(aperture);
            }
            Ok(apertures)
        }
    }
}

fn generate(target: &Grid, device: &DeviceSpec, plan: GenerationPlan) -> Result<SubframeSet, GenError> {
    let start = Instant::now();
    let mut subframes = Vec::with_capacity(plan.total_subframes());
    let mut rotation_angles = Vec::with_capacity(plan.total_subframes());
    let apertures = stream_subframes(target, device, &plan, |_, alpha, holo| {
        rotation_angles.push(alpha);
        subframes.push(holo);
    })?;
    let elapsed = start.elapsed();
    Ok(SubframeSet {
        subframes,
        plan,
        rotation_angles,
        apertures,
        elapsed,
    })
}

/// One-step phase retrieval: N independent randomize/transform/quantize
/// passes (N inverse transforms), subframe n on stream n.
pub fn generate_ospr(
    target: &Grid,
    device: &DeviceSpec,
    n: usize,
    seed: u64,
) -> Result<SubframeSet, GenError> {
    generate(target, device, GenerationPlan::ospr(n, seed)?)
}

/// Single-transform time multiplexing: one randomization (stream 1) and one
/// inverse transform; subframe n quantizes the aperture rotated by
/// `alpha_n`.
pub fn generate_sttm(
    target: &Grid,
    device: &DeviceSpec,
    n: usize,
    seed: u64,
) -> Result<SubframeSet, GenError> {
    generate(target, device, GenerationPlan::sttm(n, seed)?)
}

/// Periodically restarted STTM: `m_sets` independent STTM sets of `n_per`
/// subframes (set m on stream m), concatenated in set order; `m_sets`
/// inverse transforms total.
pub fn generate_hybrid(
    target: &Grid,
    device: &DeviceSpec,
    m_sets: usize,
    n_per: usize,
    seed: u64,
) -> Result<SubframeSet, GenError> {
    generate(target, device, GenerationPlan::hybrid(m_sets, n_per, seed)?)
}
