//! Complex field containers, unitary discrete Fourier transforms, and
//! deterministic random phase streams.
//!
//! Conventions fixed here and relied on by every other module:
//!
//! * the forward transform uses the kernel `exp(-2*pi*i*(u*x/Nx + v*y/Ny))`,
//!   the inverse uses the conjugated kernel;
//! * both directions carry a `1/sqrt(Nx*Ny)` normalization, so each is
//!   unitary and `inverse(forward(f)) = f` with energy preserved exactly;
//! * all randomness comes from ChaCha8 keyed by a `(seed, stream_index)`
//!   pair, which produces the same sample sequence on every platform and
//!   under any thread schedule.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

/// Largest pixel count `reference_dft` accepts; the brute-force sum is
/// quadratic and exists only to cross-check the fast transforms.
pub const REFERENCE_DFT_MAX_PIXELS: usize = 4096;

/// Errors for field construction and the brute-force oracle.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("field dimensions must be nonzero, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("expected {expected} values for a {width}x{height} field, got {got}")]
    CountMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error(
        "reference DFT is limited to {REFERENCE_DFT_MAX_PIXELS} pixels, got {got}; \
         use forward_transform/inverse_transform for production sizes"
    )]
    OracleSizeExceeded { got: usize },
}

/// A dense row-major grid of complex values with nonzero dimensions.
///
/// Validity (nonzero dimensions, all values finite) is enforced at
/// construction, so operations on an existing field cannot fail.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
}

impl ComplexField {
    /// Builds a field from row-major values, validating shape and finiteness.
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self, FieldError> {
        check_dims(width, height)?;
        let expected = width * height;
        if values.len() != expected {
            return Err(FieldError::CountMismatch {
                width,
                height,
                expected,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(FieldError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-zero field.
    pub fn zeros(width: usize, height: usize) -> Result<Self, FieldError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            values: vec![Complex64::new(0.0, 0.0); width * height],
        })
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self, FieldError> {
        let mut values = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Construction path for values already known finite (library internal).
    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonzero dimensions are a construction invariant
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Value at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.width + x]
    }

    /// Total energy `sum |v|^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// A dense row-major grid of real values with nonzero dimensions.
///
/// Used for amplitude targets and replay intensities; all values are finite
/// by construction. Non-negativity demands are checked by the operations
/// that require them.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    /// Builds a grid from row-major values, validating shape and finiteness.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        check_dims(width, height)?;
        let expected = width * height;
        if values.len() != expected {
            return Err(FieldError::CountMismatch {
                width,
                height,
                expected,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-zero grid.
    pub fn zeros(width: usize, height: usize) -> Result<Self, FieldError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            values: vec![0.0; width * height],
        })
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, FieldError> {
        let mut values = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), FieldError> {
    if width == 0 || height == 0 {
        return Err(FieldError::ZeroDimension { width, height });
    }
    Ok(())
}

/// Identity of one deterministic random sequence.
///
/// The generator is ChaCha8: `seed` keys it via `seed_from_u64` and
/// `stream_index` selects an independent substream. Identical pairs yield
/// identical sequences on every platform, which is what makes subframe
/// generation schedule-independent and cross-algorithm coincidence cases
/// bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    seed: u64,
    stream_index: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Instantiates the generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Draws `count` i.i.d. phases uniform on `[0, 2*pi)`.
pub fn uniform_phase_samples(stream: &RandomStream, count: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..count)
        .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
        .collect()
}

static FORWARD_CALLS: AtomicU64 = AtomicU64::new(0);
static INVERSE_CALLS: AtomicU64 = AtomicU64::new(0);

/// Running totals of `(forward_transform, inverse_transform)` invocations in
/// this process. The brute-force `reference_dft` is not counted.
pub fn transform_counts() -> (u64, u64) {
    (
        FORWARD_CALLS.load(Ordering::Relaxed),
        INVERSE_CALLS.load(Ordering::Relaxed),
    )
}

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.lock().unwrap().plan_fft(len, direction)
}

/// Unitary forward DFT, kernel `exp(-2*pi*i*(u*x/Nx + v*y/Ny))`,
/// normalization `1/sqrt(Nx*Ny)`.
pub fn forward_transform(field: &ComplexField) -> ComplexField {
    FORWARD_CALLS.fetch_add(1, Ordering::Relaxed);
    fft2(field, FftDirection::Forward)
}

/// Unitary inverse DFT, the adjoint of [`forward_transform`] (kernel sign
/// `+2*pi*i`, same normalization).
pub fn inverse_transform(field: &ComplexField) -> ComplexField {
    INVERSE_CALLS.fetch_add(1, Ordering::Relaxed);
    fft2(field, FftDirection::Inverse)
}

fn fft2(field: &ComplexField, direction: FftDirection) -> ComplexField {
    let (w, h) = (field.width, field.height);
    let mut values = field.values.clone();

    let row_fft = plan(w, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); row_fft.get_inplace_scratch_len()];
    for row in values.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut transposed = transpose(&values, w, h);
    let col_fft = plan(h, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
    for col in transposed.chunks_exact_mut(h) {
        col_fft.process_with_scratch(col, &mut scratch);
    }
    let mut values = transpose(&transposed, h, w);

    let norm = 1.0 / ((w * h) as f64).sqrt();
    for v in &mut values {
        *v *= norm;
    }
    ComplexField::from_parts(w, h, values)
}

fn transpose(values: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = values[y * width + x];
        }
    }
    out
}

/// Direction selector for [`reference_dft`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Direct double-sum evaluation of the unitary DFT. Test oracle only: the
/// cost is quadratic in the pixel count, so inputs are capped at
/// [`REFERENCE_DFT_MAX_PIXELS`] pixels.
pub fn reference_dft(field: &ComplexField, direction: Direction) -> Result<ComplexField, FieldError> {
    let (w, h) = (field.width, field.height);
    if w * h > REFERENCE_DFT_MAX_PIXELS {
        return Err(FieldError::OracleSizeExceeded { got: w * h });
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let norm = 1.0 / ((w * h) as f64).sqrt();
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let mut sum = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let angle = sign
                        * std::f64::consts::TAU
                        * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    sum += field.values[y * w + x] * Complex64::from_polar(1.0, angle);
                }
            }
            out.push(sum * norm);
        }
    }
    Ok(ComplexField::from_parts(w, h, out))
}

/// Multiplies every value by `exp(i*angle)`. Transform magnitudes are
/// invariant under this rotation (DFT linearity).
pub fn rotate_field(field: &ComplexField, angle: f64) -> ComplexField {
    assert!(angle.is_finite(), "rotation angle must be finite");
    let rot = Complex64::from_polar(1.0, angle);
    let values = field.values.iter().map(|v| v * rot).collect();
    ComplexField::from_parts(field.width, field.height, values)
}
