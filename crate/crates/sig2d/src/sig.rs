//! Discrete first- and second-order 2-d signature increments of an image
//! window.
//!
//! The basic differentials live on unit cells `[k, k+1] x [l, l+1]` of the
//! pixel grid:
//!
//! * the box increment `x[k+1,l+1] - x[k,l+1] - x[k+1,l] + x[k,l]`
//!   (discrete mixed second partial), and
//! * the hat product `(x[k+1,l] - x[k,l]) * (x[k,l+1] - x[k,l])`
//!   (product of directional first differences; a central variant is
//!   available via [`DifferenceScheme::Central`]).
//!
//! First-order increments sum one differential over all cells of a window.
//! Second-order increments sum, over every cell, the outer differential
//! times the sum of the inner differential over cells strictly preceding it
//! in both coordinates (a discrete simplex). The fast path evaluates this
//! in O(#cells) with a 2-d prefix sum; [`brute_force_second`] is the
//! quadratic-time transcription kept as an independent oracle.

use crate::error::{Error, Result};
use crate::field::{DifferenceScheme, ImageField, Window};

/// Number of channels a full signature vector is defined over.
pub const SIGNATURE_CHANNELS: usize = 3;

/// The six increment kinds, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignatureKind {
    /// First order, box differential.
    First12,
    /// First order, hat differential.
    FirstHat,
    /// Second order, box inner and box outer.
    Second1122,
    /// Second order, hat inner and hat outer.
    SecondHatHat,
    /// Second order, box inner and hat outer.
    SecondMix1Hat,
    /// Second order, hat inner and box outer.
    SecondMixHat1,
}

impl SignatureKind {
    pub const ALL: [SignatureKind; 6] = [
        SignatureKind::First12,
        SignatureKind::FirstHat,
        SignatureKind::Second1122,
        SignatureKind::SecondHatHat,
        SignatureKind::SecondMix1Hat,
        SignatureKind::SecondMixHat1,
    ];

    pub const SECOND_ORDER: [SignatureKind; 4] = [
        SignatureKind::Second1122,
        SignatureKind::SecondHatHat,
        SignatureKind::SecondMix1Hat,
        SignatureKind::SecondMixHat1,
    ];

    pub fn order(self) -> u8 {
        match self {
            SignatureKind::First12 | SignatureKind::FirstHat => 1,
            _ => 2,
        }
    }

    /// Stable name used in feature-table headers.
    pub fn feature_name(self) -> &'static str {
        match self {
            SignatureKind::First12 => "sig1.12",
            SignatureKind::FirstHat => "sig1.hat",
            SignatureKind::Second1122 => "sig2.1122",
            SignatureKind::SecondHatHat => "sig2.hathat",
            SignatureKind::SecondMix1Hat => "sig2.mix1hat",
            SignatureKind::SecondMixHat1 => "sig2.mixhat1",
        }
    }

    fn index(self) -> usize {
        match self {
            SignatureKind::First12 => 0,
            SignatureKind::FirstHat => 1,
            SignatureKind::Second1122 => 2,
            SignatureKind::SecondHatHat => 3,
            SignatureKind::SecondMix1Hat => 4,
            SignatureKind::SecondMixHat1 => 5,
        }
    }
}

/// The 18 increments of one window: 6 kinds x 3 channels, kind-major in the
/// order of [`SignatureKind::ALL`], channels 0..3 within each kind. This
/// ordering is the contract for feature CSV columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureVector {
    entries: [f64; 18],
}

impl SignatureVector {
    pub fn zero() -> Self {
        SignatureVector { entries: [0.0; 18] }
    }

    pub fn get(&self, kind: SignatureKind, channel: usize) -> f64 {
        self.entries[kind.index() * SIGNATURE_CHANNELS + channel]
    }

    fn set(&mut self, kind: SignatureKind, channel: usize, value: f64) {
        self.entries[kind.index() * SIGNATURE_CHANNELS + channel] = value;
    }

    pub fn as_slice(&self) -> &[f64; 18] {
        &self.entries
    }

    /// Entrywise mean of a non-empty list of vectors, accumulated in the
    /// given order.
    pub fn mean(vectors: &[SignatureVector]) -> SignatureVector {
        let mut acc = [0.0f64; 18];
        for v in vectors {
            for (a, &e) in acc.iter_mut().zip(v.entries.iter()) {
                *a += e;
            }
        }
        let n = vectors.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        SignatureVector { entries: acc }
    }
}

#[inline]
fn box_at(x: &ImageField, channel: usize, row: usize, col: usize) -> f64 {
    x.get(row + 1, col + 1, channel) - x.get(row, col + 1, channel)
        - x.get(row + 1, col, channel)
        + x.get(row, col, channel)
}

#[inline]
fn hat_at(
    x: &ImageField,
    channel: usize,
    row: usize,
    col: usize,
    scheme: DifferenceScheme,
) -> f64 {
    match scheme {
        DifferenceScheme::Forward => {
            let d_row = x.get(row + 1, col, channel) - x.get(row, col, channel);
            let d_col = x.get(row, col + 1, channel) - x.get(row, col, channel);
            d_row * d_col
        }
        DifferenceScheme::Central => {
            let d_row = (x.get(row + 1, col, channel) - x.get(row - 1, col, channel)) / 2.0;
            let d_col = (x.get(row, col + 1, channel) - x.get(row, col - 1, channel)) / 2.0;
            d_row * d_col
        }
    }
}

/// Per-cell values of one differential over a window, row-major.
fn box_cells(x: &ImageField, channel: usize, w: Window) -> Vec<f64> {
    let mut cells = Vec::with_capacity(w.cell_rows() * w.cell_cols());
    for r in w.row0..w.row1 {
        for c in w.col0..w.col1 {
            cells.push(box_at(x, channel, r, c));
        }
    }
    cells
}

fn hat_cells(x: &ImageField, channel: usize, w: Window, scheme: DifferenceScheme) -> Vec<f64> {
    let mut cells = Vec::with_capacity(w.cell_rows() * w.cell_cols());
    for r in w.row0..w.row1 {
        for c in w.col0..w.col1 {
            cells.push(hat_at(x, channel, r, c, scheme));
        }
    }
    cells
}

/// Strict-simplex double sum via a running 2-d prefix of `inner`:
/// `sum over (r,c) of outer[r,c] * sum over (r'<r, c'<c) of inner[r',c']`.
///
/// Row-major accumulation throughout; O(rows*cols) time and one prefix
/// array of the same size.
fn simplex_sum_fast(inner: &[f64], outer: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(inner.len(), rows * cols);
    debug_assert_eq!(outer.len(), rows * cols);
    let mut prefix = vec![0.0f64; rows * cols];
    let mut acc = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let mut p = inner[i];
            if r > 0 {
                p += prefix[i - cols];
            }
            if c > 0 {
                p += prefix[i - 1];
            }
            if r > 0 && c > 0 {
                p -= prefix[i - cols - 1];
            }
            prefix[i] = p;
            // Strictly-preceding sum for (r, c) is the prefix at (r-1, c-1).
            if r > 0 && c > 0 {
                acc += outer[i] * prefix[i - cols - 1];
            }
        }
    }
    acc
}

/// Rectangular (corner-formula) increment of one channel over a window.
pub fn rect_increment(x: &ImageField, channel: usize, w: Window) -> Result<f64> {
    x.check_channel(channel)?;
    w.validate(x)?;
    Ok(x.get(w.row1, w.col1, channel) - x.get(w.row0, w.col1, channel)
        - x.get(w.row1, w.col0, channel)
        + x.get(w.row0, w.col0, channel))
}

/// First-order box increment: the sum of unit-cell box increments over the
/// window. Telescopes to [`rect_increment`].
pub fn sig_first_12(x: &ImageField, channel: usize, w: Window) -> Result<f64> {
    x.check_channel(channel)?;
    w.validate(x)?;
    Ok(box_cells(x, channel, w).iter().sum())
}

/// First-order hat increment: the sum over cells of the product of
/// directional differences.
pub fn sig_first_hat(
    x: &ImageField,
    channel: usize,
    w: Window,
    scheme: DifferenceScheme,
) -> Result<f64> {
    x.check_channel(channel)?;
    w.validate_for_scheme(x, scheme)?;
    Ok(hat_cells(x, channel, w, scheme).iter().sum())
}

fn second_order_maps(
    x: &ImageField,
    kind: SignatureKind,
    inner_channel: usize,
    outer_channel: usize,
    w: Window,
    scheme: DifferenceScheme,
) -> Result<(Vec<f64>, Vec<f64>)> {
    x.check_channel(inner_channel)?;
    x.check_channel(outer_channel)?;
    match kind {
        SignatureKind::Second1122 => {
            w.validate(x)?;
            Ok((
                box_cells(x, inner_channel, w),
                box_cells(x, outer_channel, w),
            ))
        }
        SignatureKind::SecondHatHat => {
            w.validate_for_scheme(x, scheme)?;
            Ok((
                hat_cells(x, inner_channel, w, scheme),
                hat_cells(x, outer_channel, w, scheme),
            ))
        }
        SignatureKind::SecondMix1Hat => {
            w.validate_for_scheme(x, scheme)?;
            Ok((
                box_cells(x, inner_channel, w),
                hat_cells(x, outer_channel, w, scheme),
            ))
        }
        SignatureKind::SecondMixHat1 => {
            w.validate_for_scheme(x, scheme)?;
            Ok((
                hat_cells(x, inner_channel, w, scheme),
                box_cells(x, outer_channel, w),
            ))
        }
        _ => Err(Error::Param(format!(
            "{} is not a second-order kind",
            kind.feature_name()
        ))),
    }
}

/// Second-order increment over the strict discrete simplex, prefix-sum fast
/// path. `inner_channel` feeds the inner differential, `outer_channel` the
/// outer one.
pub fn sig_second(
    x: &ImageField,
    kind: SignatureKind,
    inner_channel: usize,
    outer_channel: usize,
    w: Window,
    scheme: DifferenceScheme,
) -> Result<f64> {
    let (inner, outer) = second_order_maps(x, kind, inner_channel, outer_channel, w, scheme)?;
    Ok(simplex_sum_fast(
        &inner,
        &outer,
        w.cell_rows(),
        w.cell_cols(),
    ))
}

/// Quadratic-time transcription of the second-order double sum, evaluated
/// cell by cell with an explicit quadruple loop. Independent oracle for
/// [`sig_second`]; intended for small windows.
pub fn brute_force_second(
    x: &ImageField,
    kind: SignatureKind,
    inner_channel: usize,
    outer_channel: usize,
    w: Window,
    scheme: DifferenceScheme,
) -> Result<f64> {
    x.check_channel(inner_channel)?;
    x.check_channel(outer_channel)?;
    let inner_is_box = match kind {
        SignatureKind::Second1122 => {
            w.validate(x)?;
            (true, true)
        }
        SignatureKind::SecondHatHat => {
            w.validate_for_scheme(x, scheme)?;
            (false, false)
        }
        SignatureKind::SecondMix1Hat => {
            w.validate_for_scheme(x, scheme)?;
            (true, false)
        }
        SignatureKind::SecondMixHat1 => {
            w.validate_for_scheme(x, scheme)?;
            (false, true)
        }
        _ => {
            return Err(Error::Param(format!(
                "{} is not a second-order kind",
                kind.feature_name()
            )))
        }
    };
    let (a_box, b_box) = inner_is_box;
    let eval = |is_box: bool, ch: usize, r: usize, c: usize| -> f64 {
        if is_box {
            box_at(x, ch, r, c)
        } else {
            hat_at(x, ch, r, c, scheme)
        }
    };
    let mut acc = 0.0f64;
    for r2 in w.row0..w.row1 {
        for c2 in w.col0..w.col1 {
            let mut simplex = 0.0f64;
            for r1 in w.row0..r2 {
                for c1 in w.col0..c2 {
                    simplex += eval(a_box, inner_channel, r1, c1);
                }
            }
            acc += simplex * eval(b_box, outer_channel, r2, c2);
        }
    }
    Ok(acc)
}

/// The 18-entry signature of a 3-channel window: per channel, both
/// first-order increments and the four diagonal second-order increments.
///
/// The per-channel differential maps and their prefix sums are built once
/// and shared across kinds; every entry is bit-identical to the
/// corresponding single-kind operation.
pub fn signature_vector(x: &ImageField, w: Window, scheme: DifferenceScheme) -> Result<SignatureVector> {
    if x.channels() != SIGNATURE_CHANNELS {
        return Err(Error::DimensionMismatch(format!(
            "signature vector requires {} channels, image has {}",
            SIGNATURE_CHANNELS,
            x.channels()
        )));
    }
    w.validate_for_scheme(x, scheme)?;
    let rows = w.cell_rows();
    let cols = w.cell_cols();
    let mut out = SignatureVector::zero();
    for ch in 0..SIGNATURE_CHANNELS {
        let boxes = box_cells(x, ch, w);
        let hats = hat_cells(x, ch, w, scheme);
        out.set(SignatureKind::First12, ch, boxes.iter().sum());
        out.set(SignatureKind::FirstHat, ch, hats.iter().sum());
        out.set(
            SignatureKind::Second1122,
            ch,
            simplex_sum_fast(&boxes, &boxes, rows, cols),
        );
        out.set(
            SignatureKind::SecondHatHat,
            ch,
            simplex_sum_fast(&hats, &hats, rows, cols),
        );
        out.set(
            SignatureKind::SecondMix1Hat,
            ch,
            simplex_sum_fast(&boxes, &hats, rows, cols),
        );
        out.set(
            SignatureKind::SecondMixHat1,
            ch,
            simplex_sum_fast(&hats, &boxes, rows, cols),
        );
    }
    Ok(out)
}
