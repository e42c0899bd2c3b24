//! The dihedral group of the square acting on images, and orientation
//! averaging of signature vectors.
//!
//! Conventions: row 0 is the top of the image, rotations are
//! counter-clockwise on that display. Rotations by 90/270 degrees and the
//! two diagonal reflections swap the image dimensions.

use crate::field::{DifferenceScheme, ImageField, Window};
use crate::sig::{signature_vector, SignatureVector};
use crate::Result;

/// The eight elements of the dihedral group D4, in the fixed order used for
/// orientation averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum D4Element {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    /// Left-right mirror (columns reversed).
    FlipH,
    /// Top-bottom mirror (rows reversed).
    FlipV,
    Transpose,
    /// Reflection across the anti-diagonal.
    AntiTranspose,
}

impl D4Element {
    pub const ALL: [D4Element; 8] = [
        D4Element::Identity,
        D4Element::Rot90,
        D4Element::Rot180,
        D4Element::Rot270,
        D4Element::FlipH,
        D4Element::FlipV,
        D4Element::Transpose,
        D4Element::AntiTranspose,
    ];

    /// Signed permutation matrix of the action on (row, col) displacements
    /// from the image center; rows are the target axes.
    fn matrix(self) -> [[i8; 2]; 2] {
        match self {
            D4Element::Identity => [[1, 0], [0, 1]],
            D4Element::Rot90 => [[0, -1], [1, 0]],
            D4Element::Rot180 => [[-1, 0], [0, -1]],
            D4Element::Rot270 => [[0, 1], [-1, 0]],
            D4Element::FlipH => [[1, 0], [0, -1]],
            D4Element::FlipV => [[-1, 0], [0, 1]],
            D4Element::Transpose => [[0, 1], [1, 0]],
            D4Element::AntiTranspose => [[0, -1], [-1, 0]],
        }
    }

    fn from_matrix(m: [[i8; 2]; 2]) -> D4Element {
        for g in D4Element::ALL {
            if g.matrix() == m {
                return g;
            }
        }
        unreachable!("not a signed permutation of rank 2")
    }

    /// Group product: `g.compose(h)` acts as `h` first, then `g`.
    pub fn compose(self, other: D4Element) -> D4Element {
        let a = self.matrix();
        let b = other.matrix();
        let mut m = [[0i8; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        D4Element::from_matrix(m)
    }

    pub fn inverse(self) -> D4Element {
        let m = self.matrix();
        // Orthogonal matrix: inverse is the transpose.
        D4Element::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// Whether this element swaps the row and column axes.
    pub fn swaps_axes(self) -> bool {
        self.matrix()[0][0] == 0
    }
}

/// The transformed image `g . x`. Pixel values are moved, never changed, so
/// the result is bit-identical to the source up to reindexing.
pub fn apply_d4(g: D4Element, x: &ImageField) -> ImageField {
    let rows = x.rows();
    let cols = x.cols();
    let ch = x.channels();
    let build = |f: &dyn Fn(usize, usize) -> (usize, usize), out_rows: usize, out_cols: usize| {
        ImageField::from_fn(out_rows, out_cols, ch, |r, c, k| {
            let (sr, sc) = f(r, c);
            x.get(sr, sc, k)
        })
        .expect("reindexing preserves validity")
    };
    match g {
        D4Element::Identity => x.clone(),
        D4Element::Rot90 => build(&|r, c| (c, cols - 1 - r), cols, rows),
        D4Element::Rot180 => build(&|r, c| (rows - 1 - r, cols - 1 - c), rows, cols),
        D4Element::Rot270 => build(&|r, c| (rows - 1 - c, r), cols, rows),
        D4Element::FlipH => build(&|r, c| (r, cols - 1 - c), rows, cols),
        D4Element::FlipV => build(&|r, c| (rows - 1 - r, c), rows, cols),
        D4Element::Transpose => build(&|r, c| (c, r), cols, rows),
        D4Element::AntiTranspose => build(&|r, c| (rows - 1 - c, cols - 1 - r), cols, rows),
    }
}

/// Entrywise mean of the signature vector over the eight orientations of
/// the image, each taken over its own full window. Invariant (up to
/// floating-point reordering) under any D4 transform of the input.
pub fn symmetrized_signature(x: &ImageField, scheme: DifferenceScheme) -> Result<SignatureVector> {
    let mut vectors = Vec::with_capacity(8);
    for g in D4Element::ALL {
        let y = apply_d4(g, x);
        let w = Window::full_for_scheme(&y, scheme);
        vectors.push(signature_vector(&y, w, scheme)?);
    }
    Ok(SignatureVector::mean(&vectors))
}
