//! Principal components of flattened images, eigenfaces style: center the
//! N x P matrix of flattened pixels (no per-pixel scaling), factorize it
//! with an SVD, and keep the top right-singular vectors as components.
//!
//! The factorization route keeps the fit deterministic; sign ambiguity is
//! removed by forcing each component's largest-magnitude entry positive.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ImageField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Source patch shape [rows, cols, channels]; flattening is the
    /// row-major interleaved order of [`ImageField::values`].
    pub dims: [usize; 3],
    pub mean: Vec<f64>,
    /// Orthonormal rows of length P, descending eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    /// Set when the data rank was below the requested component count and
    /// fewer components were returned. Not persisted.
    #[serde(skip)]
    pub rank_deficient: bool,
}

fn check_dims(images: &[ImageField]) -> Result<[usize; 3]> {
    let first = &images[0];
    let dims = [first.rows(), first.cols(), first.channels()];
    for (i, im) in images.iter().enumerate() {
        if [im.rows(), im.cols(), im.channels()] != dims {
            return Err(Error::DimensionMismatch(format!(
                "image {} is {}x{}x{}, expected {}x{}x{}",
                i,
                im.rows(),
                im.cols(),
                im.channels(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
    }
    Ok(dims)
}

/// Fit up to `n_components` principal components on the flattened images.
///
/// If the centered data has numerical rank below `n_components`, the
/// usable components are returned and `rank_deficient` is set.
pub fn pca_fit(images: &[ImageField], n_components: usize) -> Result<PcaModel> {
    if images.len() < 2 {
        return Err(Error::Param(format!(
            "PCA needs at least 2 images, got {}",
            images.len()
        )));
    }
    let dims = check_dims(images)?;
    let n = images.len();
    let p = dims[0] * dims[1] * dims[2];
    if n_components == 0 || n_components > (n - 1).min(p) {
        return Err(Error::Param(format!(
            "n_components must be in 1..={} (min of #images - 1 and pixel count), got {}",
            (n - 1).min(p),
            n_components
        )));
    }

    let mut data = DMatrix::<f64>::zeros(n, p);
    for (i, im) in images.iter().enumerate() {
        for (j, &v) in im.values().iter().enumerate() {
            data[(i, j)] = v;
        }
    }
    let mean: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| data[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    for i in 0..n {
        for (j, &m) in mean.iter().enumerate() {
            data[(i, j)] -= m;
        }
    }
    // Total variance over all directions; denominator N-1 throughout.
    let total_variance = data.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;

    let svd = data.svd(false, true);
    let v_t = svd
        .v_t
        .expect("right singular vectors were requested");
    let sigma = svd.singular_values;

    // Explicit descending order; do not rely on the factorization's output
    // ordering.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());

    let eps = f64::EPSILON;
    let sigma_max = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    let tol = sigma_max * n.max(p) as f64 * eps;

    let mut components = Vec::new();
    let mut ratios = Vec::new();
    for &idx in order.iter().take(n_components) {
        let s = sigma[idx];
        if s <= tol || total_variance == 0.0 {
            break;
        }
        let mut comp: Vec<f64> = (0..p).map(|j| v_t[(idx, j)]).collect();
        // Sign convention: first entry of largest magnitude made positive.
        let mut best = 0usize;
        for (j, &v) in comp.iter().enumerate() {
            if v.abs() > comp[best].abs() {
                best = j;
            }
        }
        if comp[best] < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        ratios.push(s * s / (n - 1) as f64 / total_variance);
        components.push(comp);
    }

    let rank_deficient = components.len() < n_components;
    Ok(PcaModel {
        dims,
        mean,
        components,
        explained_variance_ratio: ratios,
        rank_deficient,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// The model restricted to its first `k` components. Identical, bit for
    /// bit, to refitting with `n_components = k` on the same data, which is
    /// what makes component-count sweeps cacheable.
    pub fn truncated(&self, k: usize) -> PcaModel {
        let k = k.min(self.components.len());
        PcaModel {
            dims: self.dims,
            mean: self.mean.clone(),
            components: self.components[..k].to_vec(),
            explained_variance_ratio: self.explained_variance_ratio[..k].to_vec(),
            rank_deficient: false,
        }
    }
}

/// Projection coordinates of an image in the component basis.
pub fn pca_transform(model: &PcaModel, x: &ImageField) -> Result<Vec<f64>> {
    if [x.rows(), x.cols(), x.channels()] != model.dims {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}x{}, model expects {}x{}x{}",
            x.rows(),
            x.cols(),
            x.channels(),
            model.dims[0],
            model.dims[1],
            model.dims[2]
        )));
    }
    let values = x.values();
    Ok(model
        .components
        .iter()
        .map(|comp| {
            values
                .iter()
                .zip(&model.mean)
                .zip(comp)
                .map(|((&v, &m), &c)| (v - m) * c)
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_images(n: usize, rows: usize, cols: usize, ch: usize, seed: u64) -> Vec<ImageField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                ImageField::from_fn(rows, cols, ch, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
            })
            .collect()
    }

    // Two orthogonal 3x3 patterns; images are 0.5 + 0.2*(a*p1 + b*p2) with
    // amplitudes (a, b) running over (+-1, +-0.5).
    const P1: [f64; 9] = [1.0, 1.0, 1.0, 1.0, 0.0, -1.0, -1.0, -1.0, -1.0];
    const P2: [f64; 9] = [1.0, -1.0, 1.0, -1.0, 0.0, 1.0, -1.0, 1.0, -1.0];
    const AMPS: [(f64, f64); 4] = [(1.0, 0.5), (1.0, -0.5), (-1.0, 0.5), (-1.0, -0.5)];
    const SCALE: f64 = 0.2;

    fn two_pattern_images() -> Vec<ImageField> {
        AMPS.iter()
            .map(|&(a, b)| {
                let values = P1
                    .iter()
                    .zip(&P2)
                    .map(|(&u, &v)| 0.5 + SCALE * (a * u + b * v))
                    .collect();
                ImageField::from_values(3, 3, 1, values).unwrap()
            })
            .collect()
    }

    #[test]
    fn two_pattern_ratios_match_hand_covariance() {
        // In the orthonormal pattern basis the centered coordinates are
        // (0.2*sqrt(8)*a, 0.2*sqrt(8)*b); eigenvalues are proportional to
        // mean(a^2) = 1 and mean(b^2) = 0.25, so the ratios are 0.8 / 0.2.
        let model = pca_fit(&two_pattern_images(), 2).unwrap();
        assert_eq!(model.n_components(), 2);
        assert!(!model.rank_deficient);
        assert!((model.explained_variance_ratio[0] - 0.8).abs() <= 1e-10);
        assert!((model.explained_variance_ratio[1] - 0.2).abs() <= 1e-10);

        let norm = 8f64.sqrt();
        for (comp, pattern) in model.components.iter().zip([&P1, &P2]) {
            // Component equals the normalized pattern up to the sign fixed
            // by the convention; the first max-magnitude entry is positive,
            // and both patterns start at +1, so the sign is +.
            for (got, want) in comp.iter().zip(pattern.iter()) {
                assert!((got - want / norm).abs() <= 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn two_pattern_projections_recover_amplitudes() {
        let images = two_pattern_images();
        let model = pca_fit(&images, 2).unwrap();
        let norm = SCALE * 8f64.sqrt();
        for (im, &(a, b)) in images.iter().zip(&AMPS) {
            let proj = pca_transform(&model, im).unwrap();
            assert!((proj[0] - a * norm).abs() <= 1e-8, "{proj:?}");
            assert!((proj[1] - b * norm).abs() <= 1e-8, "{proj:?}");
        }
    }

    #[test]
    fn identical_images_flag_rank_deficiency() {
        let images = vec![ImageField::constant(3, 3, 1, 0.4).unwrap(); 4];
        let model = pca_fit(&images, 2).unwrap();
        assert_eq!(model.n_components(), 0);
        assert!(model.rank_deficient);
        assert!(model.explained_variance_ratio.is_empty());
    }

    #[test]
    fn two_distinct_images_single_component() {
        let a = ImageField::from_values(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = ImageField::from_values(2, 2, 1, vec![0.5, 0.2, 0.1, 0.8]).unwrap();
        let model = pca_fit(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(model.n_components(), 1);
        assert!((model.explained_variance_ratio[0] - 1.0).abs() <= 1e-12);
        // Component is parallel to the difference of the two images.
        let diff: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x - y)
            .collect();
        let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let comp = &model.components[0];
        let dot: f64 = comp.iter().zip(&diff).map(|(c, d)| c * d).sum();
        assert!((dot.abs() - norm).abs() <= 1e-10);
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let images = random_images(6, 3, 4, 1, 5);
        let model = pca_fit(&images, 3).unwrap();
        let mean_im = ImageField::from_values(3, 4, 1, model.mean.clone()).unwrap();
        for v in pca_transform(&model, &mean_im).unwrap() {
            assert!(v.abs() <= 1e-12);
        }
    }

    #[test]
    fn full_rank_reconstruction_round_trips() {
        let images = random_images(5, 2, 3, 1, 9);
        let model = pca_fit(&images, 4).unwrap();
        assert_eq!(model.n_components(), 4);
        for im in &images {
            let proj = pca_transform(&model, im).unwrap();
            let mut recon = model.mean.clone();
            for (coord, comp) in proj.iter().zip(&model.components) {
                for (r, c) in recon.iter_mut().zip(comp) {
                    *r += coord * c;
                }
            }
            for (got, want) in recon.iter().zip(im.values()) {
                assert!((got - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn components_are_orthonormal_and_ratios_ordered() {
        let images = random_images(12, 4, 4, 1, 11);
        let model = pca_fit(&images, 6).unwrap();
        let k = model.n_components();
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-8, "gram[{i}][{j}] = {dot}");
            }
        }
        let ratios = &model.explained_variance_ratio;
        for w in ratios.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-8);

        // At full rank the kept ratios account for all the variance.
        let full = pca_fit(&images, 11).unwrap();
        assert!((full.explained_variance_ratio.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn fit_is_deterministic_and_truncation_equals_refit() {
        let images = random_images(10, 3, 3, 2, 21);
        let a = pca_fit(&images, 5).unwrap();
        let b = pca_fit(&images, 5).unwrap();
        assert_eq!(a, b);
        let small = pca_fit(&images, 2).unwrap();
        assert_eq!(a.truncated(2), small);
    }

    #[test]
    fn parameter_validation() {
        let images = random_images(4, 2, 2, 1, 1);
        assert!(matches!(pca_fit(&images[..1], 1), Err(Error::Param(_))));
        // n_components capped by #images - 1.
        assert!(matches!(pca_fit(&images, 4), Err(Error::Param(_))));
        assert!(matches!(pca_fit(&images, 0), Err(Error::Param(_))));

        let model = pca_fit(&images, 2).unwrap();
        let wrong = ImageField::constant(3, 2, 1, 0.5).unwrap();
        assert!(matches!(
            pca_transform(&model, &wrong),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let images = random_images(6, 3, 3, 1, 33);
        let model = pca_fit(&images, 3).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: PcaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model.dims, back.dims);
        assert_eq!(model.mean, back.mean);
        assert_eq!(model.components, back.components);
        assert_eq!(
            model.explained_variance_ratio,
            back.explained_variance_ratio
        );
    }
}
