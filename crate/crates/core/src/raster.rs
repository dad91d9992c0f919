//! Raster helpers shared by rectification, augmentation and rendering.
//!
//! Sampling uses pixel-center coordinates: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and its center is at `(i + 0.5, j + 0.5)`.

use image::{Rgb, RgbImage};

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear sample at continuous pixel-center coordinates, clamped to the border.
#[inline]
pub fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let p00 = img.get_pixel(x0 as u32, y0 as u32).0;
    let p10 = img.get_pixel(x1 as u32, y0 as u32).0;
    let p01 = img.get_pixel(x0 as u32, y1 as u32).0;
    let p11 = img.get_pixel(x1 as u32, y1 as u32).0;
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        let top = p00[c] as f32 * (1.0 - fx) + p10[c] as f32 * fx;
        let bot = p01[c] as f32 * (1.0 - fx) + p11[c] as f32 * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Bilinear resize (half-pixel centers, edge clamping).
pub fn resize_bilinear(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    RgbImage::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) * sx - 0.5;
        let v = (y as f64 + 0.5) * sy - 0.5;
        Rgb(sample_bilinear(img, u, v).map(to_u8))
    })
}

pub fn crop(img: &RgbImage, x: u32, y: u32, width: u32, height: u32) -> RgbImage {
    image::imageops::crop_imm(img, x, y, width, height).to_image()
}

/// HSV saturation scaled to `[0, 255]`.
#[inline]
pub fn saturation(p: [u8; 3]) -> u8 {
    let max = p[0].max(p[1]).max(p[2]);
    if max == 0 {
        return 0;
    }
    let min = p[0].min(p[1]).min(p[2]);
    ((max - min) as u32 * 255 / max as u32) as u8
}

/// Planar (CHW) floating-point RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    /// Converts an 8-bit image to `[0, 1]` floats.
    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::zeros(w, h);
        let plane = w * h;
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                out.data[c * plane + i] = p.0[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn to_rgb(&self) -> RgbImage {
        let plane = self.width * self.height;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let i = y as usize * self.width + x as usize;
            Rgb(std::array::from_fn(|c| to_u8(self.data[c * plane + i] * 255.0)))
        })
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Bilinear resize of the sub-window `[x0, x0+w) x [y0, y0+h)` to `out_w x out_h`.
    pub fn crop_resize(&self, x0: f64, y0: f64, w: f64, h: f64, out_w: usize, out_h: usize) -> Self {
        let mut out = Self::zeros(out_w, out_h);
        let sx = w / out_w as f64;
        let sy = h / out_h as f64;
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        // Precompute taps per column and row; they are shared by all channels.
        let cols: Vec<(usize, usize, f32)> = (0..out_w)
            .map(|i| {
                let u = (x0 + (i as f64 + 0.5) * sx - 0.5).clamp(0.0, maxx);
                let a = u.floor() as usize;
                (a, (a + 1).min(self.width - 1), (u - a as f64) as f32)
            })
            .collect();
        let rows: Vec<(usize, usize, f32)> = (0..out_h)
            .map(|j| {
                let v = (y0 + (j as f64 + 0.5) * sy - 0.5).clamp(0.0, maxy);
                let a = v.floor() as usize;
                (a, (a + 1).min(self.height - 1), (v - a as f64) as f32)
            })
            .collect();
        for c in 0..3 {
            let src = self.plane(c);
            let sw = self.width;
            let dst = out.plane_mut(c);
            for (j, &(r0, r1, fy)) in rows.iter().enumerate() {
                for (i, &(c0, c1, fx)) in cols.iter().enumerate() {
                    let top = src[r0 * sw + c0] * (1.0 - fx) + src[r0 * sw + c1] * fx;
                    let bot = src[r1 * sw + c0] * (1.0 - fx) + src[r1 * sw + c1] * fx;
                    dst[j * out_w + i] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        out
    }

    pub fn resize(&self, out_w: usize, out_h: usize) -> Self {
        self.crop_resize(0.0, 0.0, self.width as f64, self.height as f64, out_w, out_h)
    }
}
