//! Image file IO: binary PPM (P6) read/write implemented natively, PNG
//! read via a standard decoder. Only 8-bit data is accepted; loaded values
//! are scaled to [0,1] and grayscale is replicated to three channels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ImageField;

fn is_ppm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

/// PPM header tokenizer: whitespace separated, `#` starts a comment that
/// runs to end of line.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && is_ppm_space(bytes[*pos]) {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !is_ppm_space(bytes[*pos]) && bytes[*pos] != b'#' {
        *pos += 1;
    }
    Some(&bytes[start..*pos])
}

fn parse_ppm(path: &Path, bytes: &[u8]) -> Result<ImageField> {
    let mut pos = 0usize;
    let bad = |msg: &str| Error::Io {
        path: path.to_path_buf(),
        message: msg.to_string(),
    };
    let magic = next_token(bytes, &mut pos).ok_or_else(|| bad("empty file"))?;
    if magic != b"P6" {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "not a binary PPM (P6) file".into(),
        });
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| bad("truncated header"))?;
        *d = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed header number"))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: format!("maxval {maxval} unsupported, only 8-bit (255)"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !is_ppm_space(bytes[pos]) {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let expected = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(bad(&format!(
            "truncated raster: {} bytes, expected {}",
            raster.len(),
            expected
        )));
    }
    ImageField::from_bytes(height, width, 3, &raster[..expected])
}

fn load_png(path: &Path) -> Result<ImageField> {
    use image::DynamicImage;
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = match img {
        DynamicImage::ImageRgb8(im) => im,
        DynamicImage::ImageRgba8(im) => DynamicImage::ImageRgba8(im).to_rgb8(),
        DynamicImage::ImageLuma8(im) => DynamicImage::ImageLuma8(im).to_rgb8(),
        DynamicImage::ImageLumaA8(im) => DynamicImage::ImageLumaA8(im).to_rgb8(),
        _ => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                message: "only 8-bit PNG images are supported".into(),
            })
        }
    };
    ImageField::from_bytes(h, w, 3, rgb.as_raw())
}

/// Load a PNG or binary PPM image as a 3-channel field in [0,1].
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageField> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("ppm") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_ppm(path, &bytes)
        }
        Some("png") => load_png(path),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: "expected a .ppm or .png file".into(),
        }),
    }
}

/// Write a 3-channel field as binary PPM, quantizing values to 8 bits.
pub fn save_ppm(x: &ImageField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if x.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "PPM output requires 3 channels, field has {}",
            x.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", x.cols(), x.rows()).into_bytes();
    out.extend_from_slice(&x.to_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
