//! Composite ("quad") images: four generated variants in a 2x2 grid.

use std::io::Cursor;

use image::{imageops, ImageFormat, RgbaImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("composite is {width}x{height}; both dimensions must be even")]
    OddDimensions { width: u32, height: u32 },
    #[error("composite is empty")]
    Empty,
    #[error("cannot decode composite: {0}")]
    Decode(#[from] image::ImageError),
}

/// A composite with even width and height.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadImage {
    pixels: RgbaImage,
}

impl QuadImage {
    pub fn new(pixels: RgbaImage) -> Result<Self, QuadError> {
        let (width, height) = pixels.dimensions();
        if width == 0 || height == 0 {
            return Err(QuadError::Empty);
        }
        if width % 2 != 0 || height % 2 != 0 {
            return Err(QuadError::OddDimensions { width, height });
        }
        Ok(Self { pixels })
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, QuadError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Self::new(img.to_rgba8())
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn pixels(&self) -> &RgbaImage {
        &self.pixels
    }
}

/// Cuts the composite into four `(w/2) x (h/2)` tiles ordered top-left,
/// top-right, bottom-left, bottom-right.
pub fn split_quad(image: &QuadImage) -> [RgbaImage; 4] {
    let (tw, th) = (image.width() / 2, image.height() / 2);
    let tile = |col: u32, row: u32| imageops::crop_imm(&image.pixels, col * tw, row * th, tw, th).to_image();
    [tile(0, 0), tile(1, 0), tile(0, 1), tile(1, 1)]
}

/// Inverse of [`split_quad`]; tiles must share one size.
pub fn reassemble(tiles: &[RgbaImage; 4]) -> RgbaImage {
    let (tw, th) = tiles[0].dimensions();
    let mut out = RgbaImage::new(tw * 2, th * 2);
    for (i, tile) in tiles.iter().enumerate() {
        let (col, row) = ((i % 2) as i64, (i / 2) as i64);
        imageops::replace(&mut out, tile, col * tw as i64, row * th as i64);
    }
    out
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>, image::ImageError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    fn patterned(w: u32, h: u32) -> RgbaImage {
        RgbaImage::from_fn(w, h, |x, y| Rgba([(x % 251) as u8, (y % 241) as u8, ((x * y) % 256) as u8, 255]))
    }

    #[test]
    fn splits_into_four_halves() {
        let quad = QuadImage::new(patterned(2048, 2048)).unwrap();
        let tiles = split_quad(&quad);
        assert!(tiles.iter().all(|t| t.dimensions() == (1024, 1024)));
        assert_eq!(tiles[1].get_pixel(0, 0), quad.pixels().get_pixel(1024, 0));
        assert_eq!(tiles[2].get_pixel(0, 0), quad.pixels().get_pixel(0, 1024));
        assert_eq!(tiles[3].get_pixel(5, 7), quad.pixels().get_pixel(1029, 1031));
    }

    #[test]
    fn reassembly_is_identity() {
        let original = patterned(64, 38);
        let quad = QuadImage::new(original.clone()).unwrap();
        assert_eq!(reassemble(&split_quad(&quad)).as_raw(), original.as_raw());
    }

    #[test]
    fn odd_dimensions_rejected() {
        assert!(matches!(
            QuadImage::new(RgbaImage::new(1023, 1024)),
            Err(QuadError::OddDimensions { width: 1023, height: 1024 })
        ));
        assert!(matches!(QuadImage::new(RgbaImage::new(0, 0)), Err(QuadError::Empty)));
    }

    #[test]
    fn png_round_trip() {
        let img = patterned(16, 10);
        let quad = QuadImage::from_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(quad.pixels(), &img);
        assert!(QuadImage::from_png(b"not a png").is_err());
    }
}
