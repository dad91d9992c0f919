//! Shared geometric transform plus per-image crop, blur, jitter and normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::FloatImage;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];
pub const INPUT_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    pub enabled: bool,
    pub geometric_p: f64,
    pub crop_ratio: f64,
    pub crop_p: f64,
    pub output_size: usize,
    pub blur_p: f64,
    /// Open interval for the odd kernel size.
    pub blur_kernel: (usize, usize),
    pub blur_sigma: (f64, f64),
    pub jitter_p: f64,
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            geometric_p: 0.5,
            crop_ratio: 0.8,
            crop_p: 1.0,
            output_size: INPUT_SIZE,
            blur_p: 0.4,
            blur_kernel: (3, 11),
            blur_sigma: (2.0, 10.0),
            jitter_p: 0.4,
            brightness: (0.7, 1.3),
            contrast: (0.9, 1.1),
            saturation: (0.95, 1.05),
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }
}

impl AugConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("augmentation: {m}")));
        for p in [self.geometric_p, self.crop_p, self.blur_p, self.jitter_p] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return bad("crop ratio must lie in (0, 1]");
        }
        if self.blur_kernel_sizes().is_empty() {
            return bad("no odd kernel size inside the blur interval");
        }
        if self.std.iter().any(|&s| s <= 0.0) || self.output_size == 0 {
            return bad("std and output size must be positive");
        }
        Ok(())
    }

    /// Odd sizes strictly inside `blur_kernel`.
    pub fn blur_kernel_sizes(&self) -> Vec<usize> {
        (self.blur_kernel.0 + 1..self.blur_kernel.1).filter(|k| k % 2 == 1).collect()
    }
}

/// Exact dihedral transforms of a square image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometric {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

impl Geometric {
    pub fn draw<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Self {
        if !rng.random_bool(p) {
            return Geometric::Identity;
        }
        [Geometric::Rot90, Geometric::Rot180, Geometric::Rot270, Geometric::FlipH, Geometric::FlipV][rng.random_range(0..5)]
    }

    pub fn apply(self, img: &FloatImage) -> FloatImage {
        if self == Geometric::Identity {
            return img.clone();
        }
        let (w, h) = (img.width, img.height);
        let (ow, oh) = match self {
            Geometric::Rot90 | Geometric::Rot270 => (h, w),
            _ => (w, h),
        };
        let mut out = FloatImage::zeros(ow, oh);
        for c in 0..3 {
            let src = img.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..oh {
                for x in 0..ow {
                    // Clockwise rotations.
                    let (sx, sy) = match self {
                        Geometric::Identity => (x, y),
                        Geometric::Rot90 => (y, h - 1 - x),
                        Geometric::Rot180 => (w - 1 - x, h - 1 - y),
                        Geometric::Rot270 => (w - 1 - y, x),
                        Geometric::FlipH => (w - 1 - x, y),
                        Geometric::FlipV => (x, h - 1 - y),
                    };
                    dst[y * ow + x] = src[sy * w + sx];
                }
            }
        }
        out
    }
}

/// Augments one `[0, 1]` image after the shared geometric transform.
pub fn augment_image<R: Rng + ?Sized>(img: &FloatImage, cfg: &AugConfig, rng: &mut R) -> FloatImage {
    let out_size = cfg.output_size;
    if !cfg.enabled {
        let mut out = img.resize(out_size, out_size);
        normalize(&mut out, cfg);
        return out;
    }
    let mut out = if rng.random_bool(cfg.crop_p) {
        let cw = (img.width as f64 * cfg.crop_ratio).round().max(1.0) as usize;
        let ch = (img.height as f64 * cfg.crop_ratio).round().max(1.0) as usize;
        let x0 = rng.random_range(0..=img.width - cw);
        let y0 = rng.random_range(0..=img.height - ch);
        img.crop_resize(x0 as f64, y0 as f64, cw as f64, ch as f64, out_size, out_size)
    } else {
        img.resize(out_size, out_size)
    };
    if rng.random_bool(cfg.blur_p) {
        let sizes = cfg.blur_kernel_sizes();
        let k = sizes[rng.random_range(0..sizes.len())];
        let sigma = rng.random_range(cfg.blur_sigma.0..cfg.blur_sigma.1);
        gaussian_blur(&mut out, k, sigma);
    }
    if rng.random_bool(cfg.jitter_p) {
        let b = rng.random_range(cfg.brightness.0..=cfg.brightness.1) as f32;
        let c = rng.random_range(cfg.contrast.0..=cfg.contrast.1) as f32;
        let s = rng.random_range(cfg.saturation.0..=cfg.saturation.1) as f32;
        color_jitter(&mut out, b, c, s);
    }
    normalize(&mut out, cfg);
    out
}

pub fn normalize(img: &mut FloatImage, cfg: &AugConfig) {
    for c in 0..3 {
        let (m, s) = (cfg.mean[c], cfg.std[c]);
        img.plane_mut(c).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
}

fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f32> {
    let half = (k / 2) as f64;
    let w: Vec<f64> = (0..k).map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter().map(|v| (v / sum) as f32).collect()
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &mut FloatImage, k: usize, sigma: f64) {
    let kernel = gaussian_kernel(k, sigma);
    let r = (k / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut tmp = vec![0.0f32; w * h];
    for c in 0..3 {
        let plane = img.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * plane[y * w + reflect(x as isize + i as isize - r, w)])
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp[reflect(y as isize + i as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
}

/// Brightness, contrast, then saturation, clamped to `[0, 1]`.
pub fn color_jitter(img: &mut FloatImage, brightness: f32, contrast: f32, saturation: f32) {
    let n = img.width * img.height;
    img.data.iter_mut().for_each(|v| *v = (*v * brightness).clamp(0.0, 1.0));
    let gray = |d: &[f32], i: usize| 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i];
    let mean = (0..n).map(|i| gray(&img.data, i)).sum::<f32>() / n as f32;
    img.data.iter_mut().for_each(|v| *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0));
    for i in 0..n {
        let g = gray(&img.data, i);
        for c in 0..3 {
            let v = &mut img.data[c * n + i];
            *v = ((*v - g) * saturation + g).clamp(0.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn asymmetric(n: usize) -> FloatImage {
        let mut img = FloatImage::zeros(n, n);
        for c in 0..3 {
            for (i, v) in img.plane_mut(c).iter_mut().enumerate() {
                *v = ((i * (c + 3)) % 17) as f32 / 17.0;
            }
        }
        img
    }

    #[test]
    fn kernel_sizes_are_odd_and_inside_interval() {
        assert_eq!(AugConfig::default().blur_kernel_sizes(), vec![5, 7, 9]);
    }

    #[test]
    fn dihedral_transforms_compose() {
        let img = asymmetric(5);
        let r90 = Geometric::Rot90.apply(&img);
        assert_ne!(r90, img);
        assert_eq!(Geometric::Rot90.apply(&r90), Geometric::Rot180.apply(&img));
        assert_eq!(Geometric::Rot270.apply(&r90), img);
        assert_eq!(Geometric::FlipH.apply(&Geometric::FlipH.apply(&img)), img);
        assert_eq!(Geometric::FlipV.apply(&Geometric::FlipH.apply(&img)), Geometric::Rot180.apply(&img));
    }

    #[test]
    fn rot90_is_clockwise() {
        let mut img = FloatImage::zeros(3, 3);
        img.plane_mut(0)[0] = 1.0;
        let r = Geometric::Rot90.apply(&img);
        assert_eq!(r.plane(0)[2], 1.0);
    }

    #[test]
    fn normalization_of_constant_image() {
        let mut img = FloatImage::zeros(256, 256);
        img.data.fill(0.5);
        let out = augment_image(&img, &AugConfig::disabled(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((out.width, out.height), (224, 224));
        for c in 0..3 {
            let expected = (0.5 - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
            assert!(out.plane(c).iter().all(|v| (v - expected).abs() < 1e-6));
        }
    }

    #[test]
    fn blur_preserves_constant_images_and_mass() {
        let mut img = FloatImage::zeros(20, 20);
        img.data.fill(0.3);
        gaussian_blur(&mut img, 7, 3.0);
        assert!(img.data.iter().all(|v| (v - 0.3).abs() < 1e-6));
        let k = gaussian_kernel(9, 2.5);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_jitter_is_a_no_op() {
        let mut img = asymmetric(8);
        let before = img.clone();
        color_jitter(&mut img, 1.0, 1.0, 1.0);
        for (a, b) in img.data.iter().zip(&before.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn validation_rejects_bad_probabilities() {
        let cfg = AugConfig { blur_p: 1.5, ..AugConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = AugConfig { crop_ratio: 0.0, ..AugConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(AugConfig::default().validate().is_ok());
    }
}
