use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::pnm::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceView {
    Ap,
    Pa,
    Synthetic,
}

/// Preprocessed image: row-major intensities in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChestImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub source_view: SourceView,
}

fn bilinear_axis(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    // half-pixel centres, so equal sizes map exactly onto the source grid
    let scale = src_len as f64 / dst_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = x.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, x - lo as f64)
}

/// Centre-crops `raw` (row-major, `height x width`) to its largest square,
/// resizes bilinearly to `target` and min-max normalizes. A constant image
/// becomes all zeros.
pub fn preprocess_image(
    raw: &[f64],
    height: usize,
    width: usize,
    target: (usize, usize),
    source_view: SourceView,
) -> Result<ChestImage, FusionError> {
    if height == 0 || width == 0 || raw.is_empty() || target.0 == 0 || target.1 == 0 {
        return Err(FusionError::EmptyImage);
    }
    if raw.len() != height * width {
        return Err(FusionError::Dimension {
            what: "image pixels",
            expected: height * width,
            got: raw.len(),
        });
    }
    let side = height.min(width);
    let (y0, x0) = ((height - side) / 2, (width - side) / 2);
    let at = |y: usize, x: usize| raw[(y0 + y) * width + x0 + x];
    let (th, tw) = target;
    let mut pixels = Vec::with_capacity(th * tw);
    for ty in 0..th {
        let (ya, yb, fy) = bilinear_axis(ty, th, side);
        for tx in 0..tw {
            let (xa, xb, fx) = bilinear_axis(tx, tw, side);
            let top = at(ya, xa) * (1.0 - fx) + at(ya, xb) * fx;
            let bottom = at(yb, xa) * (1.0 - fx) + at(yb, xb) * fx;
            pixels.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi > lo {
        let range = hi - lo;
        for p in &mut pixels {
            *p = (*p - lo) / range;
        }
    } else {
        pixels.iter_mut().for_each(|p| *p = 0.0);
    }
    Ok(ChestImage {
        height: th,
        width: tw,
        pixels,
        source_view,
    })
}

/// [`preprocess_image`] for an 8-bit image.
pub fn preprocess_gray(raw: &GrayImage, target: (usize, usize), source_view: SourceView) -> Result<ChestImage, FusionError> {
    let px: Vec<f64> = raw.pixels().iter().map(|&v| v as f64 / 255.0).collect();
    preprocess_image(&px, raw.height(), raw.width(), target, source_view)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_case() {
        let n = 224;
        let raw: Vec<f64> = (0..n * n).map(|i| (i % 97) as f64 / 96.0).collect();
        let img = preprocess_image(&raw, n, n, (n, n), SourceView::Synthetic).unwrap();
        assert_eq!(img.pixels, raw);
    }

    #[test]
    fn constant_maps_to_zero() {
        let img = preprocess_image(&[0.3; 20], 4, 5, (8, 8), SourceView::Ap).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn non_square_input() {
        let raw: Vec<f64> = (0..64 * 48).map(|i| ((i * 31) % 255) as f64).collect();
        let img = preprocess_image(&raw, 48, 64, (32, 32), SourceView::Pa).unwrap();
        assert_eq!((img.height, img.width, img.pixels.len()), (32, 32, 1024));
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn centre_crop_discards_margins() {
        // left and right thirds are bright, centre square is a gradient
        let (h, w) = (3, 9);
        let mut raw = vec![1.0; h * w];
        for y in 0..h {
            for x in 3..6 {
                raw[y * w + x] = (x - 3) as f64 * 0.1;
            }
        }
        let img = preprocess_image(&raw, h, w, (3, 3), SourceView::Synthetic).unwrap();
        assert_eq!(img.pixels[..3], [0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            preprocess_image(&[], 0, 0, (8, 8), SourceView::Ap),
            Err(FusionError::EmptyImage)
        ));
    }
}
