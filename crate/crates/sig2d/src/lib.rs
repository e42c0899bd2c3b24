//! Iterated-integral (signature) features of 2-d images, with a small
//! texture-classification pipeline built on top: synthetic texture
//! generation, patch sampling, feature extraction (signatures + PCA),
//! a random-forest classifier, and a CLI tying them together.

pub mod dataset;
pub mod error;
pub mod features;
pub mod field;
pub mod forest;
pub mod io;
pub mod pca;
pub mod pipeline;
pub mod sig;
pub mod symmetry;
pub mod texture;

pub use error::{Error, Result};
pub use field::{DifferenceScheme, ImageField, Window};
pub use sig::{
    brute_force_second, rect_increment, sig_first_12, sig_first_hat, sig_second,
    signature_vector, SignatureKind, SignatureVector, SIGNATURE_CHANNELS,
};
pub use symmetry::{apply_d4, symmetrized_signature, D4Element};
