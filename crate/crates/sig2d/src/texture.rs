//! Procedural texture sheets: four parameterized families (oriented
//! stripes, checkerboards, low-pass-filtered noise, radial blobs), each
//! variant with a class-specific RGB tint. Sheets are deterministic given
//! (class, sheet size, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ImageField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Sinusoidal stripes: value depends on k*cos(angle) + l*sin(angle)
    /// modulo the period, so angle 0 varies along rows only.
    Stripes { period: f64, angle_deg: f64 },
    Checker { cell: usize },
    /// White noise blurred by a Gaussian with sigma = 1/(2*cutoff), then
    /// rescaled to mean 0.5, sd 0.25, clamped to [0,1].
    Noise { cutoff: f64 },
    /// Gaussian bumps at seeded positions; density is bumps per 1024 px.
    Blobs { density: f64, radius: f64 },
}

#[derive(Debug, Clone)]
pub struct TextureClass {
    pub name: &'static str,
    pub family: Family,
    /// Per-channel contrast weights: channel = 0.5 + tint*(pattern - 0.5).
    pub tint: [f64; 3],
}

/// The built-in catalog, interleaved by family so a prefix of any length
/// covers a spread of families.
pub fn catalog() -> Vec<TextureClass> {
    use Family::*;
    let specs: [(&'static str, Family); 16] = [
        ("stripes_p8_a0", Stripes { period: 8.0, angle_deg: 0.0 }),
        ("checker_c4", Checker { cell: 4 }),
        ("noise_f010", Noise { cutoff: 0.10 }),
        ("blobs_sparse", Blobs { density: 0.35, radius: 6.0 }),
        ("stripes_p12_a45", Stripes { period: 12.0, angle_deg: 45.0 }),
        ("checker_c9", Checker { cell: 9 }),
        ("noise_f040", Noise { cutoff: 0.40 }),
        ("blobs_dense", Blobs { density: 1.9, radius: 2.5 }),
        ("stripes_p5_a90", Stripes { period: 5.0, angle_deg: 90.0 }),
        ("checker_c6", Checker { cell: 6 }),
        ("noise_f025", Noise { cutoff: 0.25 }),
        ("blobs_mid", Blobs { density: 0.9, radius: 4.0 }),
        ("stripes_p16_a30", Stripes { period: 16.0, angle_deg: 30.0 }),
        ("checker_c12", Checker { cell: 12 }),
        ("noise_f055", Noise { cutoff: 0.55 }),
        ("blobs_large", Blobs { density: 0.18, radius: 9.0 }),
    ];
    const TINTS: [[f64; 3]; 16] = [
        [0.95, 0.55, 0.45],
        [0.45, 0.90, 0.55],
        [0.50, 0.60, 0.95],
        [0.90, 0.85, 0.40],
        [0.85, 0.45, 0.85],
        [0.40, 0.85, 0.85],
        [0.95, 0.70, 0.50],
        [0.55, 0.95, 0.75],
        [0.70, 0.50, 0.90],
        [0.90, 0.60, 0.60],
        [0.60, 0.80, 0.45],
        [0.45, 0.65, 0.85],
        [0.95, 0.50, 0.70],
        [0.50, 0.90, 0.90],
        [0.75, 0.75, 0.55],
        [0.65, 0.55, 0.95],
    ];
    specs
        .into_iter()
        .zip(TINTS)
        .map(|((name, family), tint)| TextureClass { name, family, tint })
        .collect()
}

fn class_rng(seed: u64, class_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream namespace for texture synthesis, one stream per class.
    rng.set_stream(0x7465_0000 + class_idx as u64);
    rng
}

fn stripes_pattern(size: usize, period: f64, angle_deg: f64) -> Vec<f64> {
    let theta = angle_deg.to_radians();
    let (s, c) = theta.sin_cos();
    let mut out = Vec::with_capacity(size * size);
    for k in 0..size {
        for l in 0..size {
            // Reduce modulo the period before the sinusoid so integer
            // translations by the period reproduce values exactly.
            let t = (k as f64 * c + l as f64 * s).rem_euclid(period);
            out.push(0.5 + 0.5 * (std::f64::consts::TAU * t / period).sin());
        }
    }
    out
}

fn checker_pattern(size: usize, cell: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for k in 0..size {
        for l in 0..size {
            out.push(if (k / cell + l / cell).is_multiple_of(2) { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Separable Gaussian blur with wrap-around borders, in place per axis.
fn blur_wrap(values: &mut [f64], size: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for d in -radius..=radius {
        kernel.push((-0.5 * (d as f64 / sigma).powi(2)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let n = size as i64;
    let mut tmp = vec![0.0f64; size * size];
    for k in 0..size {
        for l in 0..n {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                let ll = (l + d).rem_euclid(n) as usize;
                acc += kernel[ki] * values[k * size + ll];
            }
            tmp[k * size + l as usize] = acc;
        }
    }
    for l in 0..size {
        for k in 0..n {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                let kk = (k + d).rem_euclid(n) as usize;
                acc += kernel[ki] * tmp[kk * size + l];
            }
            values[k as usize * size + l] = acc;
        }
    }
}

fn noise_pattern(size: usize, cutoff: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut values: Vec<f64> = (0..size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
    blur_wrap(&mut values, size, 1.0 / (2.0 * cutoff));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for v in &mut values {
        *v = (0.5 + 0.25 * (*v - mean) / sd).clamp(0.0, 1.0);
    }
    values
}

fn blobs_pattern(size: usize, density: f64, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let count = ((density * (size * size) as f64 / 1024.0).round() as usize).max(1);
    let mut field = vec![0.0f64; size * size];
    let reach = (4.0 * radius).ceil() as i64;
    let n = size as i64;
    for _ in 0..count {
        let cy: f64 = rng.gen_range(0.0..size as f64);
        let cx: f64 = rng.gen_range(0.0..size as f64);
        let k0 = (cy as i64 - reach).max(0);
        let k1 = (cy as i64 + reach).min(n - 1);
        let l0 = (cx as i64 - reach).max(0);
        let l1 = (cx as i64 + reach).min(n - 1);
        for k in k0..=k1 {
            for l in l0..=l1 {
                let d2 = (k as f64 - cy).powi(2) + (l as f64 - cx).powi(2);
                field[k as usize * size + l as usize] +=
                    (-d2 / (2.0 * radius * radius)).exp();
            }
        }
    }
    let min = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    for v in &mut field {
        *v = (*v - min) / span;
    }
    field
}

fn render_class(class: &TextureClass, class_idx: usize, size: usize, seed: u64) -> ImageField {
    let pattern = match class.family {
        Family::Stripes { period, angle_deg } => stripes_pattern(size, period, angle_deg),
        Family::Checker { cell } => checker_pattern(size, cell),
        Family::Noise { cutoff } => noise_pattern(size, cutoff, &mut class_rng(seed, class_idx)),
        Family::Blobs { density, radius } => {
            blobs_pattern(size, density, radius, &mut class_rng(seed, class_idx))
        }
    };
    let mut data = Vec::with_capacity(size * size * 3);
    for &p in &pattern {
        for &w in &class.tint {
            data.push(0.5 + w * (p - 0.5));
        }
    }
    ImageField::from_values(size, size, 3, data).expect("generated sheet is valid")
}

/// Deterministic texture sheets for the first `n_classes` catalog entries.
pub fn synth_textures(
    n_classes: usize,
    sheet_size: usize,
    seed: u64,
) -> Result<Vec<(String, ImageField)>> {
    let catalog = catalog();
    if n_classes < 2 {
        return Err(Error::Param(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    if n_classes > catalog.len() {
        return Err(Error::Param(format!(
            "{} classes requested, only {} variants available",
            n_classes,
            catalog.len()
        )));
    }
    if sheet_size < 2 {
        return Err(Error::Param("sheet size must be at least 2".into()));
    }
    Ok(catalog
        .into_iter()
        .take(n_classes)
        .enumerate()
        .map(|(i, class)| (class.name.to_string(), render_class(&class, i, sheet_size, seed)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DifferenceScheme;
    use crate::sig::SignatureKind;
    use crate::symmetry::symmetrized_signature;

    #[test]
    fn stripes_angle_zero_is_row_constant_and_column_periodic() {
        let sheets = synth_textures(2, 64, 5).unwrap();
        let (name, sheet) = &sheets[0];
        assert_eq!(name, "stripes_p8_a0");
        for k in 0..64 {
            for l in 1..64 {
                for ch in 0..3 {
                    assert_eq!(sheet.get(k, l, ch), sheet.get(k, 0, ch), "row {k}");
                }
            }
        }
        for k in 0..64 - 8 {
            for ch in 0..3 {
                assert_eq!(sheet.get(k, 0, ch), sheet.get(k + 8, 0, ch), "period at row {k}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synth_textures(8, 48, 123).unwrap();
        let b = synth_textures(8, 48, 123).unwrap();
        for ((na, fa), (nb, fb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(fa.values(), fb.values());
        }
        let c = synth_textures(8, 48, 124).unwrap();
        // Seed only enters the stochastic families.
        assert_ne!(a[2].1.values(), c[2].1.values());
        assert_ne!(a[3].1.values(), c[3].1.values());
        assert_eq!(a[0].1.values(), c[0].1.values());
        assert_eq!(a[1].1.values(), c[1].1.values());
    }

    #[test]
    fn class_count_limits() {
        assert!(synth_textures(1, 32, 0).is_err());
        assert!(synth_textures(17, 32, 0).is_err());
        assert_eq!(synth_textures(16, 16, 0).unwrap().len(), 16);
    }

    #[test]
    fn catalog_classes_are_distinct() {
        let cat = catalog();
        for i in 0..cat.len() {
            for j in i + 1..cat.len() {
                assert_ne!(cat[i].name, cat[j].name);
                assert!(cat[i].family != cat[j].family || cat[i].tint != cat[j].tint);
            }
        }
    }

    #[test]
    fn noise_cutoffs_separate_in_hathat_signature() {
        use rand::{Rng, SeedableRng};
        // Catalog indices 2 and 6 are the cutoff-0.10 and cutoff-0.40
        // noise classes; 50 patches each must separate by more than 5
        // within-class standard deviations in the mean symmetrized
        // hat-hat entry. 128-px patches: the second-order sum concentrates
        // with patch area, and this margin needs the larger window.
        let sheets = synth_textures(8, 256, 77).unwrap();
        let mut stats = Vec::new();
        for idx in [2usize, 6] {
            let sheet = &sheets[idx].1;
            let mut rng = ChaCha8Rng::seed_from_u64(900 + idx as u64);
            let mut samples = Vec::new();
            for _ in 0..50 {
                let r = rng.gen_range(0..256 - 128 + 1);
                let c = rng.gen_range(0..256 - 128 + 1);
                let patch = sheet.patch(r, c, 128).unwrap();
                let sig = symmetrized_signature(&patch, DifferenceScheme::Forward).unwrap();
                let hathat: f64 = (0..3)
                    .map(|ch| sig.get(SignatureKind::SecondHatHat, ch))
                    .sum::<f64>()
                    / 3.0;
                samples.push(hathat);
            }
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            stats.push((mean, sd));
        }
        let (m1, s1) = stats[0];
        let (m2, s2) = stats[1];
        let sep = (m1 - m2).abs() / s1.max(s2);
        assert!(sep > 5.0, "separation {sep} (means {m1} vs {m2}, sds {s1} vs {s2})");
    }
}
