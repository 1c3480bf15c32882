use std::path::Path;

use super::TensorError;
use crate::grid::ImageRgb;
use crate::scalar::Scalar;

/// Reads any PNG and converts it to 8-bit RGB, scaled to `[0, 1]`.
pub fn read_png<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageRgb<T>, TensorError> {
    let img = image::ImageReader::open(path.as_ref())?
        .with_guessed_format()?
        .decode()
        .map_err(|e| TensorError::Image(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let scale = T::lit(1.0 / 255.0);
    let pixels = img
        .pixels()
        .map(|p| {
            [
                T::lit(p[0] as f64) * scale,
                T::lit(p[1] as f64) * scale,
                T::lit(p[2] as f64) * scale,
            ]
        })
        .collect();
    Ok(ImageRgb::from_vec(h as usize, w as usize, pixels).expect("decoder returns h*w pixels"))
}

pub fn write_png<T: Scalar>(img: &ImageRgb<T>, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let raw: Vec<u8> = img.pixels().iter().flat_map(|p| p.map(to_u8)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer sized from image dims");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| TensorError::Image(e.to_string()))
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    (v.clamp_to(T::zero(), T::one()).to_f64_lossy() * 255.0).round() as u8
}
