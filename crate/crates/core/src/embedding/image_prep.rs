use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use super::{DecodedImage, EmbeddingError, Result};

/// Image normalisation constants for a vision encoder. Defaults are the
/// published CLIP values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePreprocess {
    /// Target length of the shorter side after resizing.
    pub resize_shorter: u32,
    /// Side of the square center crop.
    pub crop: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for ImagePreprocess {
    fn default() -> Self {
        Self {
            resize_shorter: 224,
            crop: 224,
            mean: [0.481_454_66, 0.457_827_5, 0.408_210_73],
            std: [0.268_629_54, 0.261_302_58, 0.275_777_11],
        }
    }
}

/// Decodes any supported container (PNG, JPEG, GIF, WebP, BMP) to RGB8.
pub fn decode_image(bytes: &[u8]) -> Result<DecodedImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| EmbeddingError::ImageDecode(e.to_string()))
}

/// Resize shorter side, center-crop, scale to [0,1] and standardise each
/// channel. Returns a CHW tensor of `3 * crop * crop` floats.
pub fn preprocess_image(image: &DecodedImage, cfg: &ImagePreprocess) -> Result<Vec<f32>> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(EmbeddingError::ImageDecode("image has zero area".into()));
    }
    let scale = cfg.resize_shorter as f64 / w.min(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).max(cfg.crop);
    let nh = ((h as f64 * scale).round() as u32).max(cfg.crop);
    let resized = imageops::resize(image, nw, nh, FilterType::CatmullRom);
    let left = (nw - cfg.crop) / 2;
    let top = (nh - cfg.crop) / 2;
    let cropped = imageops::crop_imm(&resized, left, top, cfg.crop, cfg.crop).to_image();

    let plane = (cfg.crop * cfg.crop) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, px) in cropped.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = (px[c] as f32 / 255.0 - cfg.mean[c]) / cfg.std[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn solid_colour_maps_to_standardised_constant() {
        let img = DecodedImage::from_pixel(300, 224, Rgb([255, 0, 128]));
        let cfg = ImagePreprocess::default();
        let t = preprocess_image(&img, &cfg).unwrap();
        assert_eq!(t.len(), 3 * 224 * 224);
        let plane = 224 * 224;
        let expect = [
            (1.0 - cfg.mean[0]) / cfg.std[0],
            (0.0 - cfg.mean[1]) / cfg.std[1],
            (128.0 / 255.0 - cfg.mean[2]) / cfg.std[2],
        ];
        for c in 0..3 {
            assert!((t[c * plane] - expect[c]).abs() < 1e-5);
            assert!((t[c * plane + plane - 1] - expect[c]).abs() < 1e-5);
        }
    }

    #[test]
    fn crop_is_centered() {
        // 448x224: left quarter red, middle half green, right quarter blue.
        // After resizing (already 224 tall) the 224 center crop is all green.
        let img = DecodedImage::from_fn(448, 224, |x, _| {
            if x < 112 {
                Rgb([255, 0, 0])
            } else if x < 336 {
                Rgb([0, 255, 0])
            } else {
                Rgb([0, 0, 255])
            }
        });
        let cfg = ImagePreprocess { mean: [0.0; 3], std: [1.0; 3], ..Default::default() };
        let t = preprocess_image(&img, &cfg).unwrap();
        let plane = 224 * 224;
        assert!(t[..plane].iter().all(|&r| r < 0.01));
        assert!(t[plane..2 * plane].iter().all(|&g| g > 0.99));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(decode_image(b"not an image"), Err(EmbeddingError::ImageDecode(_))));
        let mut png = Vec::new();
        DecodedImage::from_pixel(3, 2, Rgb([1, 2, 3]))
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        let back = decode_image(&png).unwrap();
        assert_eq!(back.dimensions(), (3, 2));
        assert_eq!(back.get_pixel(2, 1), &Rgb([1, 2, 3]));
    }
}
