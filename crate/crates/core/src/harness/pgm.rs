//! Grayscale PGM input and output. Pixel values are kept on the 0–255
//! scale as `f64`, stored `rows × cols`.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use nalgebra::DMatrix;

use crate::error::Result;

pub fn read_pgm(path: &Path) -> Result<DMatrix<f64>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(DMatrix::from_fn(h as usize, w as usize, |r, c| img.get_pixel(c as u32, r as u32)[0] as f64))
}

/// Writes binary PGM (P5), rounding and clamping to `0..=255`.
pub fn write_pgm(path: &Path, img: &DMatrix<f64>) -> Result<()> {
    let (rows, cols) = img.shape();
    let mut buf = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            buf.push(img[(r, c)].round().clamp(0.0, 255.0) as u8);
        }
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    PnmEncoder::new(file).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary)).write_image(
        &buf,
        cols as u32,
        rows as u32,
        ExtendedColorType::L8,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = DMatrix::from_fn(4, 8, |r, c| (r * 8 + c) as f64 * 7.0);
        write_pgm(&path, &img).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    #[test]
    fn reads_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, "P2\n2 2\n255\n0 10\n20 255\n").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img[(0, 1)], 10.0);
        assert_eq!(img[(1, 0)], 20.0);
    }
}
