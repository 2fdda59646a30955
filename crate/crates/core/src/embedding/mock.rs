use image::imageops::{self, FilterType};

use super::{DecodedImage, EmbeddingBackend, Modality};
use crate::par::prelude::*;

/// Side length of the grid an image is pooled to before hashing.
const IMAGE_GRID: u32 = 16;
/// Colour quantisation levels per channel.
const COLOUR_LEVELS: u32 = 4;

/// Deterministic stand-in for a real vision-language model.
///
/// Text is lowercased, padded with boundary markers and split into character
/// 3-grams; each 3-gram is hashed (FNV-1a) into one of `dim` buckets. Strings
/// that share most of their 3-grams therefore land close together in cosine
/// space. Images are pooled to a 16x16 grid, quantised to 4 levels per channel
/// and hashed the same way, so both modalities share one `dim`-wide space.
#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "mock backend dim must be positive");
        Self { dim }
    }

    pub fn embed_raw_text(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let lowered = text.to_lowercase();
        let chars: Vec<char> = "^^".chars().chain(lowered.chars()).chain("$$".chars()).collect();
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            v[self.bucket(&buf[..n])] += 1.0;
        }
        v
    }

    pub fn embed_raw_image(&self, image: &DecodedImage) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let small = imageops::resize(image, IMAGE_GRID, IMAGE_GRID, FilterType::Triangle);
        let step = 256 / COLOUR_LEVELS;
        for (x, y, px) in small.enumerate_pixels() {
            let token = [
                b'I',
                (x / 4) as u8,
                (y / 4) as u8,
                (px[0] as u32 / step) as u8,
                (px[1] as u32 / step) as u8,
                (px[2] as u32 / step) as u8,
            ];
            v[self.bucket(&token)] += 1.0;
        }
        v
    }

    fn bucket(&self, bytes: &[u8]) -> usize {
        (fnv1a(bytes) % self.dim as u64) as usize
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn modalities(&self) -> &[Modality] {
        &[Modality::Text, Modality::Image]
    }

    fn text_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, (usize, String)> {
        Ok(texts.par_iter().map(|t| self.embed_raw_text(t)).collect())
    }

    fn image_batch(&self, images: &[&DecodedImage]) -> Result<Vec<Vec<f32>>, (usize, String)> {
        if let Some(i) = images.iter().position(|im| im.width() == 0 || im.height() == 0) {
            return Err((i, "image has zero area".to_string()));
        }
        Ok(images.par_iter().map(|im| self.embed_raw_image(im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_images, embed_texts, l2_norm};
    use crate::textprep::clean_text;
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_text_is_unit_norm_and_reproducible() {
        let backend = MockBackend::new(8);
        let texts = vec![clean_text("a")];
        let a = embed_texts(&backend, &texts, 32).unwrap();
        let b = embed_texts(&backend, &texts, 32).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].dim(), 8);
        assert!((l2_norm(a[0].as_slice()) - 1.0).abs() < 1e-5);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a[0].as_slice()), bits(b[0].as_slice()));
    }

    #[test]
    fn identical_texts_give_identical_vectors() {
        let backend = MockBackend::new(64);
        let v = embed_texts(&backend, &[clean_text("x"), clean_text("x")], 1).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn black_image_twice_and_shared_space() {
        let backend = MockBackend::new(768);
        let black = DecodedImage::from_pixel(224, 224, Rgb([0, 0, 0]));
        let v = embed_images(&backend, &[black.clone(), black], 32).unwrap();
        assert_eq!(v[0], v[1]);
        let t = embed_texts(&backend, &[clean_text("some caption")], 32).unwrap();
        assert_eq!(v[0].dim(), t[0].dim());
        assert!((l2_norm(v[0].as_slice()) - 1.0).abs() < 1e-5);
        assert!((l2_norm(t[0].as_slice()) - 1.0).abs() < 1e-5);
    }

    fn random_string(rng: &mut ChaCha8Rng, len: usize) -> String {
        const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ";
        (0..len)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
            .collect()
    }

    #[test]
    fn locality_one_appended_char() {
        let backend = MockBackend::new(768);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 1000;
        let mut wins = 0;
        for _ in 0..trials {
            let len = rng.random_range(5..40);
            let s = random_string(&mut rng, len);
            let extra = random_string(&mut rng, 1);
            let other_len = rng.random_range(5..40);
            let other = random_string(&mut rng, other_len);
            let e = |t: &str| crate::embedding::normalize(&backend.embed_raw_text(t)).unwrap();
            let base = e(&s);
            if base.cosine(&e(&format!("{s}{extra}"))) > base.cosine(&e(&other)) {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64, "wins = {wins}");
    }
}
