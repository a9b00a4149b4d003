//! Grayscale image container, error metrics, intensity rescaling and the
//! Shepp-Logan phantom.
//!
//! Pixels live in one flat row-major buffer; pixel `(i, j)` is at
//! `i * cols + j`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A `rows × cols` grid of finite real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidImage(format!(
                "{rows}x{cols} image needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite value {} at pixel {idx}",
                data[idx]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Builds an image without the finiteness scan. Callers guarantee the
    /// invariants; used on hot paths where values come from finite maps.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Applies `f` to every pixel. Fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    /// Clamps every pixel into `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        Image::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        )
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error `‖estimate − truth‖₂ / ‖truth‖₂`.
pub fn rmse_relative(estimate: &Image, truth: &Image) -> Result<f64> {
    estimate.same_dims(truth)?;
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "relative RMSE is undefined for an all-zero reference".into(),
        ));
    }
    let num = estimate
        .data
        .iter()
        .zip(&truth.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Closed intensity interval with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityRange {
    lo: f64,
    hi: f64,
}

impl IntensityRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "intensity range needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

/// How ground-truth images are brought to an experiment's intensity scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Affine map of `[min, max]` onto the range.
    Range(IntensityRange),
    /// Multiplicative rescale to the target mean; zeros stay zero.
    Mean(f64),
}

pub fn scale_to(image: &Image, mode: ScaleMode) -> Result<Image> {
    match mode {
        ScaleMode::Range(range) => {
            let (min, max) = (image.min(), image.max());
            if max <= min {
                return Err(Error::InvalidArgument(
                    "cannot range-scale a constant image".into(),
                ));
            }
            let gain = range.span() / (max - min);
            image.map(|v| range.lo + (v - min) * gain)
        }
        ScaleMode::Mean(target) => {
            if !(target.is_finite() && target > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "target mean must be positive, got {target}"
                )));
            }
            let mean = image.mean();
            if mean <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "mean scaling needs a positive image mean, got {mean}"
                )));
            }
            let gain = target / mean;
            image.map(|v| v * gain)
        }
    }
}

/// Intensity table of the phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomVariant {
    /// Toft's higher-contrast table (MATLAB's `phantom` default), values in `[0, 1]`.
    #[default]
    Modified,
    /// The original Shepp-Logan gray levels, divided by the peak level 2 so
    /// values land in `[0, 1]`.
    Original,
}

/// One ellipse: gray-level increment, semi-axes `(a, b)`, centre `(x0, y0)`
/// and rotation in degrees, all in normalized `[-1, 1]` coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Self {
            intensity,
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * cos + dy * sin;
        let v = dy * cos - dx * sin;
        u * u / (self.a * self.a) + v * v / (self.b * self.b) <= 1.0
    }
}

const GEOMETRY: [(f64, f64, f64, f64, f64); 10] = [
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0),
    (0.11, 0.31, 0.22, 0.0, -18.0),
    (0.16, 0.41, -0.22, 0.0, 18.0),
    (0.21, 0.25, 0.0, 0.35, 0.0),
    (0.046, 0.046, 0.0, 0.1, 0.0),
    (0.046, 0.046, 0.0, -0.1, 0.0),
    (0.046, 0.023, -0.08, -0.605, 0.0),
    (0.023, 0.023, 0.0, -0.606, 0.0),
    (0.023, 0.046, 0.06, -0.605, 0.0),
];

const MODIFIED_LEVELS: [f64; 10] = [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
const ORIGINAL_LEVELS: [f64; 10] = [2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];

impl PhantomVariant {
    pub fn ellipses(self) -> [Ellipse; 10] {
        let levels = match self {
            PhantomVariant::Modified => MODIFIED_LEVELS,
            PhantomVariant::Original => ORIGINAL_LEVELS,
        };
        std::array::from_fn(|n| {
            let (a, b, x0, y0, phi) = GEOMETRY[n];
            Ellipse::new(levels[n], a, b, x0, y0, phi)
        })
    }

    fn peak(self) -> f64 {
        match self {
            PhantomVariant::Modified => 1.0,
            PhantomVariant::Original => 2.0,
        }
    }
}

/// Normalized coordinate of pixel `(i, j)`: `x` runs left to right and `y`
/// bottom to top, both spanning `[-1, 1]` across the grid.
pub fn normalized_coords(rows: usize, cols: usize, i: usize, j: usize) -> (f64, f64) {
    let axis = |n: usize, k: usize| {
        if n == 1 {
            0.0
        } else {
            let half = (n as f64 - 1.0) / 2.0;
            (k as f64 - half) / half
        }
    };
    (axis(cols, j), -axis(rows, i))
}

/// Shepp-Logan phantom (modified contrast) on a `rows × cols` grid.
pub fn shepp_logan(rows: usize, cols: usize) -> Result<Image> {
    shepp_logan_variant(rows, cols, PhantomVariant::default())
}

pub fn shepp_logan_variant(rows: usize, cols: usize, variant: PhantomVariant) -> Result<Image> {
    if rows < 16 || cols < 16 {
        return Err(Error::InvalidArgument(format!(
            "phantom needs at least 16x16 pixels, got {rows}x{cols}"
        )));
    }
    let ellipses = variant.ellipses();
    let peak = variant.peak();
    Image::from_fn(rows, cols, |i, j| {
        let (x, y) = normalized_coords(rows, cols, i, j);
        let v: f64 = ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum();
        (v / peak).clamp(0.0, 1.0)
    })
}
