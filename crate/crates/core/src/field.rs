use crate::error::{Error, Result};

/// A real-valued function sampled on a uniform pixel grid, row-major.
///
/// Pixel `(i, j)` sits at the physical point `(i * spacing, j * spacing)`,
/// so a `width x height` field covers the rectangle
/// `[0, (width-1) h] x [0, (height-1) h]` with the grid nodes on the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if spacing <= 0.0 || !spacing.is_finite() {
            return Err(Error::NonPositiveSpacing(spacing));
        }
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                got: values.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            spacing,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, spacing: f64, value: f64) -> Result<Self> {
        Self::new(width, height, spacing, vec![value; width * height])
    }

    /// Builds a field from a function of the physical coordinates `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: f64,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        if spacing <= 0.0 || !spacing.is_finite() {
            return Err(Error::NonPositiveSpacing(spacing));
        }
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i as f64 * spacing, j as f64 * spacing));
            }
        }
        Self::new(width, height, spacing, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.width && j < self.height);
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.values[k] = v;
    }

    /// Physical x coordinate of column `i`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Physical y coordinate of row `j`.
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.spacing
    }

    pub fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                got_w: other.width,
                got_h: other.height,
                want_w: self.width,
                want_h: self.height,
            });
        }
        Ok(())
    }

    /// Clamps all values into `[0, 1]`; used for image-role fields before output.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A boolean per-pixel mask with the same layout as [`ScalarField`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolField {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BoolField {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                got: values.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i, j));
            }
        }
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

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let k = self.idx(i, j);
        self.values[k] = v;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}
