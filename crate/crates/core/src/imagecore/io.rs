use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use thiserror::Error;

use super::{LabelMap, Raster8};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("image decode failed: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("label map has {0} instances, which does not fit a 16-bit PNG")]
    TooManyLabels(u32),
    #[error("label image must be single-channel")]
    NotGray,
}

/// Decodes PNG/JPEG/... bytes to an 8-bit gray or RGB raster. Alpha is
/// dropped; 16-bit inputs are reduced to 8 bits.
pub fn decode_raster(bytes: &[u8]) -> Result<Raster8, IoError> {
    let img = image::load_from_memory(bytes)?;
    Ok(from_dynamic(img))
}

fn from_dynamic(img: DynamicImage) -> Raster8 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Raster8::from_vec(w, h, 3, img.into_rgb8().into_raw()).expect("rgb buffer")
    } else {
        Raster8::from_vec(w, h, 1, img.into_luma8().into_raw()).expect("gray buffer")
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster8, IoError> {
    Ok(from_dynamic(image::open(path)?))
}

pub fn encode_raster_png(r: &Raster8) -> Result<Vec<u8>, IoError> {
    let (w, h) = (r.width() as u32, r.height() as u32);
    let img = if r.channels() == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, r.data().to_vec()).expect("gray"))
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, r.data().to_vec()).expect("rgb"))
    };
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_raster(r: &Raster8, path: impl AsRef<Path>) -> Result<(), IoError> {
    std::fs::write(path, encode_raster_png(r)?)?;
    Ok(())
}

/// Encodes a label map as a single-channel 16-bit PNG (value = id).
pub fn encode_labels_png(lm: &LabelMap) -> Result<Vec<u8>, IoError> {
    let max = lm.max_id();
    if max > u16::MAX as u32 {
        return Err(IoError::TooManyLabels(max));
    }
    let data: Vec<u16> = lm.labels().iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(lm.width() as u32, lm.height() as u32, data).expect("label buffer");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_labels_png(bytes: &[u8]) -> Result<LabelMap, IoError> {
    let img = image::load_from_memory(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        _ => return Err(IoError::NotGray),
    };
    Ok(LabelMap::from_vec(w, h, labels).expect("label dims"))
}

pub fn read_labels_png(path: impl AsRef<Path>) -> Result<LabelMap, IoError> {
    decode_labels_png(&std::fs::read(path)?)
}

pub fn write_labels_png(lm: &LabelMap, path: impl AsRef<Path>) -> Result<(), IoError> {
    std::fs::write(path, encode_labels_png(lm)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_png_round_trip() {
        let mut lm = LabelMap::new(7, 5);
        lm.set(1, 1, 1);
        lm.set(6, 4, 65535);
        let back = decode_labels_png(&encode_labels_png(&lm).unwrap()).unwrap();
        assert_eq!(back, lm);
    }

    #[test]
    fn too_many_labels() {
        let mut lm = LabelMap::new(2, 1);
        lm.set(0, 0, 70_000);
        assert!(matches!(encode_labels_png(&lm), Err(IoError::TooManyLabels(70_000))));
    }

    #[test]
    fn raster_round_trip() {
        let mut r = Raster8::filled(5, 3, 3, 10);
        r.set(4, 2, 1, 200);
        let back = decode_raster(&encode_raster_png(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let g = Raster8::filled(5, 3, 1, 99);
        assert_eq!(decode_raster(&encode_raster_png(&g).unwrap()).unwrap(), g);
    }
}
