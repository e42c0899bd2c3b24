//! Real-valued image fields and the rectangular windows signatures are
//! computed over.
//!
//! An [`ImageField`] is a `rows x cols` grid of `channels` real values,
//! normalized to `[0, 1]`. Pixels are addressed as `(row, col, channel)` with
//! row 0 at the top. Data is stored row-major with interleaved channels; the
//! same order is used when an image is flattened to a vector for PCA.

use crate::error::{Error, Result};

/// Finite difference scheme used for the directional (hat) differentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceScheme {
    /// One-sided differences `x[k+1] - x[k]`; works on any valid window.
    Forward,
    /// Half central differences `(x[k+1] - x[k-1]) / 2`; the window must
    /// leave a one-pixel margin inside the image.
    Central,
}

impl std::fmt::Display for DifferenceScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DifferenceScheme::Forward => write!(f, "forward"),
            DifferenceScheme::Central => write!(f, "central"),
        }
    }
}

impl std::str::FromStr for DifferenceScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(DifferenceScheme::Forward),
            "central" => Ok(DifferenceScheme::Central),
            other => Err(Error::Param(format!(
                "unknown difference scheme `{other}` (expected `forward` or `central`)"
            ))),
        }
    }
}

/// A grid of real-valued pixels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageField {
    /// Builds a field from raw values laid out row-major with interleaved
    /// channels. Values must be finite and in `[0, 1]`.
    pub fn from_values(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::InvalidField(format!(
                "dimensions must be positive, got {rows}x{cols}x{channels}"
            )));
        }
        if data.len() != rows * cols * channels {
            return Err(Error::InvalidField(format!(
                "expected {} values for {rows}x{cols}x{channels}, got {}",
                rows * cols * channels,
                data.len()
            )));
        }
        for &v in &data {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidField(format!(
                    "value {v} outside [0, 1]"
                )));
            }
        }
        Ok(ImageField {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// Builds a field by evaluating `f(row, col, channel)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols * channels);
        for r in 0..rows {
            for c in 0..cols {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::from_values(rows, cols, channels, data)
    }

    /// Builds a field from interleaved 8-bit samples, normalizing by 255.
    pub fn from_bytes(rows: usize, cols: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * cols * channels {
            return Err(Error::InvalidField(format!(
                "expected {} bytes for {rows}x{cols}x{channels}, got {}",
                rows * cols * channels,
                bytes.len()
            )));
        }
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(ImageField {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// A field with every value equal to `value`.
    pub fn constant(rows: usize, cols: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_values(rows, cols, channels, vec![value; rows * cols * channels])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols && channel < self.channels);
        self.data[(row * self.cols + col) * self.channels + channel]
    }

    /// Raw values, row-major with interleaved channels.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Flattens to a vector in the canonical order (row-major, channels
    /// interleaved). This is the order PCA operates in.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Quantizes to 8-bit samples (`round(v * 255)`), interleaved.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Copies the `size x size` patch whose top-left pixel is `(row, col)`.
    pub fn patch(&self, row: usize, col: usize, size: usize) -> Result<ImageField> {
        if row + size > self.rows || col + size > self.cols {
            return Err(Error::Param(format!(
                "patch {size}x{size} at ({row},{col}) exceeds {}x{} image",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(size * size * self.channels);
        for r in row..row + size {
            let start = (r * self.cols + col) * self.channels;
            data.extend_from_slice(&self.data[start..start + size * self.channels]);
        }
        Ok(ImageField {
            rows: size,
            cols: size,
            channels: self.channels,
            data,
        })
    }

    pub(crate) fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.channels {
            return Err(Error::InvalidChannel {
                channel,
                channels: self.channels,
            });
        }
        Ok(())
    }
}

/// A rectangular window given by corner pixel indices.
///
/// `(row0, row1; col0, col1)` addresses the pixels at the window corners;
/// the unit cells covered by the window span `[row0, row1-1] x [col0, col1-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Window {
    pub fn new(row0: usize, row1: usize, col0: usize, col1: usize) -> Self {
        Window {
            row0,
            row1,
            col0,
            col1,
        }
    }

    /// The full window of a field: `(0, rows-1; 0, cols-1)`.
    pub fn full(field: &ImageField) -> Self {
        Window {
            row0: 0,
            row1: field.rows().saturating_sub(1),
            col0: 0,
            col1: field.cols().saturating_sub(1),
        }
    }

    /// The largest window valid under the central scheme: the full window
    /// inset by one pixel on every side.
    pub fn inset(field: &ImageField) -> Self {
        Window {
            row0: 1,
            row1: field.rows().saturating_sub(2),
            col0: 1,
            col1: field.cols().saturating_sub(2),
        }
    }

    /// The largest window usable with the given scheme.
    pub fn full_for_scheme(field: &ImageField, scheme: DifferenceScheme) -> Self {
        match scheme {
            DifferenceScheme::Forward => Self::full(field),
            DifferenceScheme::Central => Self::inset(field),
        }
    }

    /// Number of cell rows spanned.
    pub fn cell_rows(&self) -> usize {
        self.row1 - self.row0
    }

    /// Number of cell columns spanned.
    pub fn cell_cols(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn validate(&self, field: &ImageField) -> Result<()> {
        let ok = self.row0 < self.row1
            && self.row1 < field.rows()
            && self.col0 < self.col1
            && self.col1 < field.cols();
        if !ok {
            return Err(Error::InvalidWindow {
                row0: self.row0,
                row1: self.row1,
                col0: self.col0,
                col1: self.col1,
                rows: field.rows(),
                cols: field.cols(),
            });
        }
        Ok(())
    }

    /// Validates the window for the scheme; the central scheme additionally
    /// requires a one-pixel margin on every side.
    pub fn validate_for_scheme(&self, field: &ImageField, scheme: DifferenceScheme) -> Result<()> {
        self.validate(field)?;
        if scheme == DifferenceScheme::Central {
            let ok = self.row0 >= 1
                && self.row1 + 2 <= field.rows()
                && self.col0 >= 1
                && self.col1 + 2 <= field.cols();
            if !ok {
                return Err(Error::MarginViolation {
                    row0: self.row0,
                    row1: self.row1,
                    col0: self.col0,
                    col1: self.col1,
                    rows: field.rows(),
                    cols: field.cols(),
                });
            }
        }
        Ok(())
    }
}
