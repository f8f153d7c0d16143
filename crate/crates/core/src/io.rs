//! Image file reading and writing.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use thiserror::Error;

use crate::raster::{BinaryMask, RgbImage};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Codec { path: String, message: String },
}

impl IoError {
    fn codec(path: &Path, e: impl std::fmt::Display) -> Self {
        IoError::Codec {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Reads any PNG or PNM image, converting it to 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<RgbImage, IoError> {
    let img = image::open(path).map_err(|e| IoError::codec(path, e))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    RgbImage::new(w, h, img.into_raw()).map_err(|e| IoError::codec(path, e))
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer sized from dims");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::codec(path, e))
}

/// 8-bit grayscale PNG, 255 for set pixels.
pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), IoError> {
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf =
        image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data).expect("buffer sized from dims");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::codec(path, e))
}

/// 16-bit grayscale PNG of a label map; labels above 65535 saturate.
pub fn write_labels_png16(path: &Path, width: usize, height: usize, labels: &[u32]) -> Result<(), IoError> {
    let data = labels.iter().map(|&l| l.min(u16::MAX as u32) as u16).collect();
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(width as u32, height as u32, data).expect("buffer sized from dims");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::codec(path, e))
}

/// 8-bit palette PNG with one palette entry per class index.
pub fn write_indexed_png(
    path: &Path,
    width: usize,
    height: usize,
    indices: &[u8],
    palette: &[[u8; 3]],
) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette.iter().flatten().copied().collect::<Vec<u8>>());
    let mut writer = enc.write_header().map_err(|e| IoError::codec(path, e))?;
    writer.write_image_data(indices).map_err(|e| IoError::codec(path, e))?;
    writer.finish().map_err(|e| IoError::codec(path, e))
}

/// Reads an 8-bit palette PNG back as raw indices.
pub fn read_indexed_png(path: &Path) -> Result<(usize, usize, Vec<u8>), IoError> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| IoError::codec(path, e))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::codec(path, "expected an 8-bit indexed PNG"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().expect("size fits memory")];
    let frame = reader.next_frame(&mut buf).map_err(|e| IoError::codec(path, e))?;
    buf.truncate(frame.buffer_size());
    Ok((w, h, buf))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))
}
