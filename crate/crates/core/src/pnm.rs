//! 8-bit grayscale images and their binary portable graymap (P5) encoding.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{width}x{height} image needs {expected} pixels, got {got}")]
    Size {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PnmError> {
        if pixels.len() != width * height {
            return Err(PnmError::Size {
                width,
                height,
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Decodes any PNM payload and converts it to 8-bit luma.
    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Self, PnmError> {
        let img = image::load(Cursor::new(bytes), ImageFormat::Pnm)?.to_luma8();
        let (w, h) = img.dimensions();
        GrayImage::new(w as usize, h as usize, img.pixels().map(|Luma([v])| *v).collect())
    }

    pub fn read(path: &Path) -> Result<Self, PnmError> {
        GrayImage::from_pnm_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), PnmError> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}
