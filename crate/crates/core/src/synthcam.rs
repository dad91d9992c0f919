//! Procedural ID-document clips with dynamic or static pseudo-holographic
//! overlays, written in the MIDV-Holo layout.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AttackKind, ClipMarkup, FrameMarkup, RoiConfig, RoiRect, CANONICAL_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, Quad};
use crate::raster::to_u8;

pub const SPEC_FILE: &str = "synth_spec.toml";
pub const ROI_FILE: &str = "roi.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayKind {
    DynamicHolo,
    None,
    StaticHolo,
    DesaturatedCopy,
    PhotoReplacement,
}

impl OverlayKind {
    pub fn for_attack(kind: AttackKind) -> Self {
        match kind {
            AttackKind::None => OverlayKind::DynamicHolo,
            AttackKind::CopyWithoutHolo => OverlayKind::None,
            AttackKind::PseudoHoloCopy => OverlayKind::StaticHolo,
            AttackKind::PhotoHoloCopy => OverlayKind::DesaturatedCopy,
            AttackKind::PhotoReplacement => OverlayKind::PhotoReplacement,
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, OverlayKind::DynamicHolo | OverlayKind::PhotoReplacement)
    }
}

/// Optional per-frame lighting nuisance shared by every clip kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lighting {
    /// Peak deviation of the global gain from 1.
    pub gain_amplitude: f64,
    /// Peak additive intensity (in `[0, 1]` units) of a specular spot sweeping across the document.
    pub glare_amplitude: f64,
    /// Glare radius in canonical pixels.
    pub glare_radius: f64,
}

impl Default for Lighting {
    fn default() -> Self {
        Self { gain_amplitude: 0.0, glare_amplitude: 0.0, glare_radius: 140.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_models: usize,
    pub n_identities: usize,
    pub originals_per_identity: usize,
    pub attack_kinds: Vec<AttackKind>,
    pub frames_per_clip: usize,
    pub fps: f64,
    pub frame_size: (u32, u32),
    /// ROI written to `roi.toml`, shared by all models.
    pub roi: RoiRect,
    pub face_rect: RoiRect,
    pub overlay_region: RoiRect,
    /// Overlay hue speed range, in turns per frame.
    pub hue_speed: (f64, f64),
    pub overlay_alpha: f64,
    /// Per-frame random displacement of each document corner, in frame pixels.
    pub camera_jitter: f64,
    pub lighting: Lighting,
    pub noise_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_models: 4,
            n_identities: 5,
            originals_per_identity: 3,
            attack_kinds: AttackKind::FRAUD_KINDS.to_vec(),
            frames_per_clip: 10,
            fps: 5.0,
            frame_size: (640, 480),
            roi: RoiRect { x: 40, y: 120, w: 400, h: 500 },
            face_rect: RoiRect { x: 70, y: 160, w: 240, h: 320 },
            overlay_region: RoiRect { x: 200, y: 330, w: 220, h: 260 },
            hue_speed: (0.08, 0.2),
            overlay_alpha: 0.6,
            camera_jitter: 6.0,
            lighting: Lighting::default(),
            noise_sigma: 0.0,
        }
    }
}

fn inside(inner: &RoiRect, outer: &RoiRect) -> bool {
    inner.x >= outer.x && inner.y >= outer.y && inner.x + inner.w <= outer.x + outer.w && inner.y + inner.h <= outer.y + outer.h
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if self.n_models == 0 || self.n_identities == 0 || self.frames_per_clip == 0 {
            return bad("counts must be positive");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if self.attack_kinds.contains(&AttackKind::None) {
            return bad("attack kinds cannot include 'none'");
        }
        self.roi.validate(CANONICAL_SIZE)?;
        if !inside(&self.overlay_region, &self.roi) || !inside(&self.face_rect, &self.roi) {
            return bad("overlay region and face must lie inside the ROI");
        }
        if !(0.0..=1.0).contains(&self.overlay_alpha) || self.noise_sigma < 0.0 {
            return bad("alpha must lie in [0, 1] and noise must be >= 0");
        }
        if self.frame_size.0 < 64 || self.frame_size.1 < 64 {
            return bad("frame size too small");
        }
        Ok(())
    }

    pub fn n_clips(&self) -> usize {
        self.n_models * self.n_identities * (self.originals_per_identity + self.attack_kinds.len())
    }

    pub fn roi_config(&self) -> Result<RoiConfig> {
        RoiConfig::new(Default::default(), Some(self.roi))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse { what: "synth spec".into(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything needed to render one clip.
#[derive(Debug, Clone)]
pub struct ClipPlan {
    pub model: String,
    pub identity: String,
    pub take: String,
    pub attack_kind: AttackKind,
    pub overlay: OverlayKind,
    pub seed: u64,
}

impl ClipPlan {
    pub fn clip_id(&self) -> String {
        match self.attack_kind {
            AttackKind::None => format!("origins/{}/{}/{}", self.model, self.identity, self.take),
            k => format!("fraud/{}/{}/{}/{}", k.as_str(), self.model, self.identity, self.take),
        }
    }
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

pub fn plan_clips(spec: &SynthSpec, seed: u64) -> Vec<ClipPlan> {
    let mut out = Vec::new();
    for m in 0..spec.n_models {
        for i in 0..spec.n_identities {
            let (model, identity) = (format!("model{m:02}"), format!("id{i:02}"));
            for t in 0..spec.originals_per_identity {
                out.push(ClipPlan {
                    model: model.clone(),
                    identity: identity.clone(),
                    take: format!("{t:02}"),
                    attack_kind: AttackKind::None,
                    overlay: OverlayKind::DynamicHolo,
                    seed: mix(seed, &[m as u64, i as u64, 0, t as u64]),
                });
            }
            for &k in &spec.attack_kinds {
                out.push(ClipPlan {
                    model: model.clone(),
                    identity: identity.clone(),
                    take: "00".into(),
                    attack_kind: k,
                    overlay: OverlayKind::for_attack(k),
                    seed: mix(seed, &[m as u64, i as u64, 1 + k as u64, 0]),
                });
            }
        }
    }
    out
}

type Canvas = Vec<[f32; 3]>;

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as i32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Static document content of one identity: background, text bars and face.
fn render_base(spec: &SynthSpec, model_seed: u64, identity_seed: u64) -> Canvas {
    let (w, h) = (CANONICAL_SIZE.0 as usize, CANONICAL_SIZE.1 as usize);
    let mut mrng = ChaCha8Rng::seed_from_u64(model_seed);
    let base_hue: f64 = mrng.random();
    let stock = hsv_to_rgb(base_hue, 0.18, 0.93);
    let ink = hsv_to_rgb(base_hue + 0.5, 0.5, 0.3);
    let freq: f64 = mrng.random_range(0.02..0.05);
    let mut canvas = vec![[0f32; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = 0.04 * ((x as f64 * freq).sin() * (y as f64 * freq * 0.7).cos());
            canvas[y * w + x] = std::array::from_fn(|c| (stock[c] + g) as f32);
        }
    }
    let mut irng = ChaCha8Rng::seed_from_u64(identity_seed);
    // Text bars to the right of the ROI.
    for row in 0..9 {
        let y0 = 130 + row * 55;
        let len = irng.random_range(150..520);
        for y in y0..y0 + 18 {
            for x in 480..480 + len {
                if (x / 9 + row) % 7 != 0 {
                    canvas[y * w + x] = ink.map(|v| v as f32);
                }
            }
        }
    }
    draw_face(&mut canvas, w, &spec.face_rect, &mut irng);
    canvas
}

/// Smooth random texture with an oval head, eyes and mouth.
fn draw_face(canvas: &mut Canvas, width: usize, r: &RoiRect, rng: &mut ChaCha8Rng) {
    let bg = hsv_to_rgb(rng.random_range(0.5..0.7), 0.25, 0.8);
    let skin = hsv_to_rgb(rng.random_range(0.03..0.1), rng.random_range(0.3..0.6), rng.random_range(0.55..0.9));
    let hair = hsv_to_rgb(rng.random_range(0.0..0.15), 0.5, rng.random_range(0.1..0.4));
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (rng.random_range(0.01..0.05), rng.random_range(0.01..0.05), rng.random_range(0.0..TAU), rng.random_range(0.02..0.06)))
        .collect();
    let (cx, cy) = (r.w as f64 / 2.0, r.h as f64 * 0.55);
    let (ax, ay) = (r.w as f64 * rng.random_range(0.3..0.38), r.h as f64 * rng.random_range(0.33..0.4));
    let eye_dx = ax * rng.random_range(0.35..0.5);
    let eye_y = cy - ay * rng.random_range(0.15..0.3);
    let mouth_y = cy + ay * rng.random_range(0.4..0.55);
    for y in 0..r.h as usize {
        for x in 0..r.w as usize {
            let (fx, fy) = (x as f64, y as f64);
            let tex: f64 = waves.iter().map(|&(kx, ky, ph, a)| a * (kx * fx + ky * fy + ph).sin()).sum();
            let d = ((fx - cx) / ax).powi(2) + ((fy - cy) / ay).powi(2);
            let mut col = if d < 1.0 {
                skin
            } else if fy < cy && ((fx - cx) / (ax * 1.15)).powi(2) + ((fy - cy + ay * 0.1) / (ay * 1.1)).powi(2) < 1.0 {
                hair
            } else {
                bg
            };
            let blob = |bx: f64, by: f64, sx: f64, sy: f64| (-(((fx - bx) / sx).powi(2) + ((fy - by) / sy).powi(2))).exp();
            let dark = blob(cx - eye_dx, eye_y, 14.0, 8.0) + blob(cx + eye_dx, eye_y, 14.0, 8.0) + blob(cx, mouth_y, 30.0, 7.0);
            for c in &mut col {
                *c = (*c * (1.0 - 0.8 * dark.min(1.0)) + tex).clamp(0.0, 1.0);
            }
            canvas[(r.y as usize + y) * width + r.x as usize + x] = col.map(|v| v as f32);
        }
    }
}

/// Per-clip overlay and lighting parameters.
#[derive(Debug, Clone, Copy)]
struct Dynamics {
    hue_phase: f64,
    hue_speed: f64,
    ring_phase: f64,
    ring_speed: f64,
    gain_phase: f64,
    glare_start: (f64, f64),
    glare_end: (f64, f64),
}

impl Dynamics {
    fn draw(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (w, h) = (CANONICAL_SIZE.0 as f64, CANONICAL_SIZE.1 as f64);
        Self {
            hue_phase: rng.random(),
            hue_speed: sign * rng.random_range(spec.hue_speed.0..spec.hue_speed.1),
            ring_phase: rng.random_range(0.0..TAU),
            ring_speed: rng.random_range(0.3..0.8),
            gain_phase: rng.random_range(0.0..TAU),
            glare_start: (rng.random_range(0.0..w * 0.4), rng.random_range(0.0..h)),
            glare_end: (rng.random_range(w * 0.1..w * 0.6), rng.random_range(0.0..h)),
        }
    }
}

/// Overlay coverage at canonical `(x, y)`: ring pattern inside a soft ellipse.
fn overlay_mask(r: &RoiRect, x: f64, y: f64, ring_phase: f64) -> f64 {
    let (cx, cy) = (r.x as f64 + r.w as f64 / 2.0, r.y as f64 + r.h as f64 / 2.0);
    let (ax, ay) = (r.w as f64 / 2.0, r.h as f64 / 2.0);
    let d = ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2);
    if d >= 1.0 {
        return 0.0;
    }
    let envelope = ((1.0 - d) * 6.0).min(1.0);
    let rad = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    let ang = (y - cy).atan2(x - cx);
    let rings = 0.5 + 0.5 * (rad / 9.0 + 2.0 * (5.0 * ang).sin() + ring_phase).cos();
    envelope * rings
}

/// Document-plane rendering of frame `t` (no camera), values in `[0, 1]`.
fn render_document(spec: &SynthSpec, base: &Canvas, overlay: OverlayKind, dynamics: &Dynamics, t: usize, gain: f64) -> Canvas {
    let (w, _) = (CANONICAL_SIZE.0 as usize, CANONICAL_SIZE.1 as usize);
    let mut canvas = base.clone();
    let r = &spec.overlay_region;
    let face = &spec.face_rect;
    let frame_t = if overlay.is_dynamic() { t as f64 } else { 0.0 };
    let ring_phase = dynamics.ring_phase + dynamics.ring_speed * frame_t;
    let hue_t = dynamics.hue_phase + dynamics.hue_speed * frame_t;
    if overlay != OverlayKind::None {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                if overlay == OverlayKind::PhotoReplacement
                    && x >= face.x
                    && x < face.x + face.w
                    && y >= face.y
                    && y < face.y + face.h
                {
                    continue;
                }
                let m = overlay_mask(r, fx, fy, ring_phase);
                if m <= 0.0 {
                    continue;
                }
                let hue = hue_t + 0.002 * (fx + fy);
                let mut col = hsv_to_rgb(hue, 1.0, 1.0);
                let mut alpha = spec.overlay_alpha * m;
                if overlay == OverlayKind::DesaturatedCopy {
                    let l = 0.299 * col[0] + 0.587 * col[1] + 0.114 * col[2];
                    col = [l * 0.8; 3];
                    alpha *= 0.7;
                }
                let px = &mut canvas[y as usize * w + x as usize];
                for c in 0..3 {
                    px[c] = (px[c] as f64 * (1.0 - alpha) + col[c] * alpha) as f32;
                }
            }
        }
    }
    let l = spec.lighting;
    if l.glare_amplitude > 0.0 || gain != 1.0 {
        let n = spec.frames_per_clip.max(2) - 1;
        let s = t as f64 / n as f64;
        let gx = dynamics.glare_start.0 + s * (dynamics.glare_end.0 - dynamics.glare_start.0);
        let gy = dynamics.glare_start.1 + s * (dynamics.glare_end.1 - dynamics.glare_start.1);
        let r2 = 2.0 * l.glare_radius * l.glare_radius;
        for (i, px) in canvas.iter_mut().enumerate() {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let glare = if l.glare_amplitude > 0.0 {
                l.glare_amplitude * (-((x - gx).powi(2) + (y - gy).powi(2)) / r2).exp()
            } else {
                0.0
            };
            for c in px.iter_mut() {
                *c = ((*c as f64) * gain + glare) as f32;
            }
        }
    }
    canvas
}

fn canvas_to_rgb(canvas: &Canvas, width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| Rgb(canvas[(y * width + x) as usize].map(|v| to_u8(v.clamp(0.0, 1.0) * 255.0))))
}

/// Document-plane frames of a clip, as 8-bit images at the canonical size.
pub fn render_document_frames(spec: &SynthSpec, plan: &ClipPlan, dataset_seed: u64) -> Vec<RgbImage> {
    let (base, dynamics, gains) = clip_state(spec, plan, dataset_seed);
    (0..spec.frames_per_clip)
        .map(|t| {
            let c = render_document(spec, &base, plan.overlay, &dynamics, t, gains[t]);
            canvas_to_rgb(&c, CANONICAL_SIZE.0, CANONICAL_SIZE.1)
        })
        .collect()
}

fn clip_state(spec: &SynthSpec, plan: &ClipPlan, dataset_seed: u64) -> (Canvas, Dynamics, Vec<f64>) {
    let model_seed = mix(dataset_seed, &[0xd0c, plan.model.bytes().map(u64::from).sum()]);
    let identity_seed = mix(model_seed, &[0x1d, plan.identity.bytes().map(u64::from).sum()]);
    let base = render_base(spec, model_seed, identity_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let dynamics = Dynamics::draw(spec, &mut rng);
    let gains = (0..spec.frames_per_clip)
        .map(|t| 1.0 + spec.lighting.gain_amplitude * (dynamics.gain_phase + 1.3 * t as f64).sin())
        .collect();
    (base, dynamics, gains)
}

/// Document placement in the frame, jittered per frame; vertex 0 is the top-left corner.
fn frame_quad(spec: &SynthSpec, rng: &mut ChaCha8Rng, center: (f64, f64)) -> Quad {
    let (fw, fh) = (spec.frame_size.0 as f64, spec.frame_size.1 as f64);
    let (dw, dh) = (CANONICAL_SIZE.0 as f64, CANONICAL_SIZE.1 as f64);
    let scale = (0.85 * fw / dw).min(0.85 * fh / dh);
    let (hw, hh) = (dw * scale / 2.0, dh * scale / 2.0);
    let j = spec.camera_jitter;
    let mut jit = || if j > 0.0 { rng.random_range(-j..j) } else { 0.0 };
    Quad::from_xy([
        (center.0 - hw + jit(), center.1 - hh + jit()),
        (center.0 + hw + jit(), center.1 - hh + jit()),
        (center.0 + hw + jit(), center.1 + hh + jit()),
        (center.0 - hw + jit(), center.1 + hh + jit()),
    ])
}

/// Projects a document-plane canvas into a camera frame through `quad`.
fn project(spec: &SynthSpec, canvas: &Canvas, quad: &Quad, noise: &mut Option<(Normal<f64>, ChaCha8Rng)>) -> Result<RgbImage> {
    let (dw, dh) = CANONICAL_SIZE;
    let frame_to_doc = Homography::from_correspondences(quad, &Quad::rect(dw as f64, dh as f64))?;
    let (fw, fh) = spec.frame_size;
    let sample = |x: f64, y: f64| -> [f32; 3] {
        let x = (x - 0.5).clamp(0.0, dw as f64 - 1.0);
        let y = (y - 0.5).clamp(0.0, dh as f64 - 1.0);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(dw as usize - 1), (y0 + 1).min(dh as usize - 1));
        let (ax, ay) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let at = |xx: usize, yy: usize| canvas[yy * dw as usize + xx];
        std::array::from_fn(|c| {
            let top = at(x0, y0)[c] * (1.0 - ax) + at(x1, y0)[c] * ax;
            let bot = at(x0, y1)[c] * (1.0 - ax) + at(x1, y1)[c] * ax;
            top * (1.0 - ay) + bot * ay
        })
    };
    let mut img = RgbImage::new(fw, fh);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let p = frame_to_doc.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
        let mut v = if p.x >= 0.0 && p.y >= 0.0 && p.x < dw as f64 && p.y < dh as f64 {
            sample(p.x, p.y)
        } else {
            // Desk: dark gradient.
            let g = 0.15 + 0.1 * (x as f32 / fw as f32) + 0.05 * (y as f32 / fh as f32);
            [g, g * 0.95, g * 0.9]
        };
        if let Some((dist, rng)) = noise.as_mut() {
            for c in &mut v {
                *c += dist.sample(rng) as f32;
            }
        }
        *px = Rgb(v.map(|c| to_u8(c.clamp(0.0, 1.0) * 255.0)));
    }
    Ok(img)
}

/// Renders every camera frame and its quad.
pub fn render_clip(spec: &SynthSpec, plan: &ClipPlan, dataset_seed: u64) -> Result<Vec<(RgbImage, Quad)>> {
    let (base, dynamics, gains) = clip_state(spec, plan, dataset_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0xca3e_5a11);
    let (fw, fh) = (spec.frame_size.0 as f64, spec.frame_size.1 as f64);
    let center = (fw / 2.0 + rng.random_range(-0.03..0.03) * fw, fh / 2.0 + rng.random_range(-0.03..0.03) * fh);
    let mut noise = (spec.noise_sigma > 0.0).then(|| (Normal::new(0.0, spec.noise_sigma).unwrap(), ChaCha8Rng::seed_from_u64(plan.seed ^ 0x0015e)));
    (0..spec.frames_per_clip)
        .map(|t| {
            let quad = frame_quad(spec, &mut rng, center);
            let canvas = render_document(spec, &base, plan.overlay, &dynamics, t, gains[t]);
            Ok((project(spec, &canvas, &quad, &mut noise)?, quad))
        })
        .collect()
}

/// Writes the whole dataset under `out`, plus `roi.toml` and the spec.
pub fn generate_dataset(spec: &SynthSpec, out: &Path, seed: u64) -> Result<usize> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let plans = plan_clips(spec, seed);
    plans.par_iter().try_for_each(|plan| write_clip(spec, plan, out, seed))?;
    spec.roi_config()?.save(&out.join(ROI_FILE))?;
    let spec_text = format!("# seed = {seed}\n# config_hash = {}\n{}", crate::config::hash_of(spec), spec.to_toml());
    fs::write(out.join(SPEC_FILE), spec_text).map_err(|e| Error::io(out, e))?;
    log::info!("wrote {} synthetic clips to {}", plans.len(), out.display());
    Ok(plans.len())
}

fn write_clip(spec: &SynthSpec, plan: &ClipPlan, root: &Path, seed: u64) -> Result<()> {
    let rel = plan.clip_id();
    let (kind_dir, rest) = rel.split_at(rel.rfind('/').unwrap());
    let take = &rest[1..];
    let img_dir = root.join("images").join(&rel);
    let markup_dir = root.join("markup").join(kind_dir);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    fs::create_dir_all(&markup_dir).map_err(|e| Error::io(&markup_dir, e))?;
    let mut frames = Vec::new();
    for (t, (img, quad)) in render_clip(spec, plan, seed)?.into_iter().enumerate() {
        let file = format!("{t:04}.png");
        let path = img_dir.join(&file);
        img.save(&path).map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
        frames.push(FrameMarkup { file, quad: quad.0.map(|p| [p.x, p.y]) });
    }
    let markup = ClipMarkup { fps: spec.fps, frames };
    let path = markup_dir.join(format!("{take}.json"));
    fs::write(&path, serde_json::to_string_pretty(&markup).expect("markup serializes")).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { n_models: 1, n_identities: 1, frames_per_clip: 3, frame_size: (200, 150), ..SynthSpec::default() }
    }

    #[test]
    fn default_spec_is_valid() {
        SynthSpec::default().validate().unwrap();
        assert_eq!(SynthSpec { n_models: 2, ..SynthSpec::default() }.n_clips(), 70);
    }

    #[test]
    fn overlay_outside_roi_is_rejected() {
        let spec = SynthSpec { overlay_region: RoiRect { x: 500, y: 100, w: 50, h: 50 }, ..SynthSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dynamic_documents_change_and_static_ones_do_not() {
        let spec = small();
        for plan in plan_clips(&spec, 3) {
            let frames = render_document_frames(&spec, &plan, 3);
            let r = spec.roi;
            let roi = |img: &RgbImage| image::imageops::crop_imm(img, r.x, r.y, r.w, r.h).to_image();
            let changed = roi(&frames[0]) != roi(&frames[1]);
            assert_eq!(changed, plan.overlay.is_dynamic(), "{:?}", plan.overlay);
        }
    }

    #[test]
    fn photo_replacement_leaves_face_untouched() {
        let spec = small();
        let plans = plan_clips(&spec, 1);
        let pr = plans.iter().find(|p| p.overlay == OverlayKind::PhotoReplacement).unwrap();
        let none = plans.iter().find(|p| p.overlay == OverlayKind::None).unwrap();
        let a = render_document_frames(&spec, pr, 1);
        let b = render_document_frames(&spec, none, 1);
        let f = spec.face_rect;
        let face = |img: &RgbImage| image::imageops::crop_imm(img, f.x, f.y, f.w, f.h).to_image();
        assert_eq!(face(&a[0]), face(&b[0]));
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn rendered_quads_are_clockwise_from_top_left() {
        let spec = small();
        let plan = &plan_clips(&spec, 0)[0];
        for (_, q) in render_clip(&spec, plan, 0).unwrap() {
            assert!(q.signed_area() > 0.0);
            assert!(q.0[0].x < q.0[1].x && q.0[0].y < q.0[3].y);
        }
    }
}
