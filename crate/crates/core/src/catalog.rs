//! Dataset ingestion: clip records, rectification, ROI extraction and
//! frame-rate normalization.
//!
//! MIDV-Holo style layout (also produced by [`crate::synthcam`]):
//!
//! ```text
//! <root>/images/origins/<model>/<identity>/<take>/<frame files>
//! <root>/images/fraud/<attack_kind>/<model>/<identity>/<take>/<frame files>
//! <root>/markup/origins/<model>/<identity>/<take>.json
//! <root>/markup/fraud/<attack_kind>/<model>/<identity>/<take>.json
//! ```
//!
//! MIDV-2020 "clips" layout:
//!
//! ```text
//! <root>/images/<model>/<NN>/<frame>.jpg
//! <root>/annotations/<model>/<NN>.json      (VIA project, "doc_quad" polygon)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2, Quad};
use crate::raster::{self, sample_bilinear, to_u8};

/// Canonical rectified document size (width, height).
pub const CANONICAL_SIZE: (u32, u32) = (1123, 709);
/// Side of the square ROI image handed to augmentation.
pub const ROI_SIZE: u32 = 256;
/// Frame rate of MIDV-Holo clips.
pub const HOLO_FPS: f64 = 5.0;
/// Frame rate of MIDV-2020 clips.
pub const MIDV2020_FPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Original,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    CopyWithoutHolo,
    PseudoHoloCopy,
    PhotoHoloCopy,
    PhotoReplacement,
}

impl AttackKind {
    pub const FRAUD_KINDS: [AttackKind; 4] = [
        AttackKind::CopyWithoutHolo,
        AttackKind::PseudoHoloCopy,
        AttackKind::PhotoHoloCopy,
        AttackKind::PhotoReplacement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::CopyWithoutHolo => "copy_without_holo",
            AttackKind::PseudoHoloCopy => "pseudo_holo_copy",
            AttackKind::PhotoHoloCopy => "photo_holo_copy",
            AttackKind::PhotoReplacement => "photo_replacement",
        }
    }

    pub fn label(self) -> Label {
        match self {
            AttackKind::None => Label::Original,
            _ => Label::Attack,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "copy_without_holo" => Ok(AttackKind::CopyWithoutHolo),
            "pseudo_holo_copy" => Ok(AttackKind::PseudoHoloCopy),
            "photo_holo_copy" => Ok(AttackKind::PhotoHoloCopy),
            "photo_replacement" => Ok(AttackKind::PhotoReplacement),
            other => Err(Error::UnknownAttackKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    MidvHolo,
    Midv2020,
    Synthetic,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midv_holo" | "midv-holo" => Ok(DatasetKind::MidvHolo),
            "midv_2020" | "midv-2020" | "midv2020" => Ok(DatasetKind::Midv2020),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub path: PathBuf,
    pub quad: Quad,
}

impl FrameRecord {
    pub fn load(&self) -> Result<RgbImage> {
        image::open(&self.path)
            .map(|img| img.to_rgb8())
            .map_err(|e| Error::Image {
                path: self.path.clone(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub document_model: String,
    pub identity: String,
    pub label: Label,
    pub attack_kind: AttackKind,
    pub fps: f64,
    pub frames: Vec<FrameRecord>,
}

impl ClipRecord {
    pub fn validate(&self) -> Result<()> {
        if (self.label == Label::Original) != (self.attack_kind == AttackKind::None) {
            return Err(Error::Config(format!(
                "clip {}: label {:?} inconsistent with attack kind {}",
                self.clip_id, self.label, self.attack_kind
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config(format!("clip {}: fps must be > 0", self.clip_id)));
        }
        if self.frames.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(Error::Config(format!("clip {}: frames out of order", self.clip_id)));
        }
        Ok(())
    }

    /// Identity key unique across document models.
    pub fn identity_key(&self) -> (String, String) {
        (self.document_model.clone(), self.identity.clone())
    }

    /// Metadata without frame paths, used for layout round-trip checks.
    pub fn metadata(&self) -> (String, String, String, Label, AttackKind, u64, Vec<Quad>) {
        (
            self.clip_id.clone(),
            self.document_model.clone(),
            self.identity.clone(),
            self.label,
            self.attack_kind,
            self.fps.to_bits(),
            self.frames.iter().map(|f| f.quad).collect(),
        )
    }
}

/// Per-clip annotation file used by the MIDV-Holo style layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMarkup {
    pub fps: f64,
    pub frames: Vec<FrameMarkup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMarkup {
    pub file: String,
    pub quad: [[f64; 2]; 4],
}

impl FrameMarkup {
    pub fn quad(&self) -> Quad {
        Quad::from_xy(self.quad.map(|[x, y]| (x, y)))
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadAnnotation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn check_quad(quad: Quad, path: &Path) -> Result<Quad> {
    if quad.0.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) || !quad.is_simple() {
        return Err(Error::BadAnnotation {
            path: path.to_path_buf(),
            message: "quad is not a simple polygon".into(),
        });
    }
    Ok(quad.to_clockwise())
}

/// Lists every clip under `root`, sorted by `clip_id`.
pub fn scan_dataset(root: &Path, kind: DatasetKind) -> Result<Vec<ClipRecord>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let mut clips = match kind {
        DatasetKind::MidvHolo | DatasetKind::Synthetic => scan_holo_layout(root)?,
        DatasetKind::Midv2020 => scan_midv2020(root)?,
    };
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    if clips.is_empty() {
        log::warn!("no clips found under {}", root.display());
    } else {
        for ((model, identity, kind), n) in count_clips(&clips) {
            log::debug!("{model}/{identity}/{kind}: {n} clip(s)");
        }
        log::info!("scanned {} clips under {}", clips.len(), root.display());
    }
    Ok(clips)
}

/// Clip counts per (document model, identity, attack kind).
pub fn count_clips(clips: &[ClipRecord]) -> BTreeMap<(String, String, AttackKind), usize> {
    let mut counts = BTreeMap::new();
    for c in clips {
        *counts
            .entry((c.document_model.clone(), c.identity.clone(), c.attack_kind))
            .or_insert(0) += 1;
    }
    counts
}

fn scan_holo_layout(root: &Path) -> Result<Vec<ClipRecord>> {
    let images = root.join("images");
    let markup = root.join("markup");
    let mut clips = Vec::new();
    if !images.is_dir() {
        return Ok(clips);
    }
    let origins = images.join("origins");
    if origins.is_dir() {
        scan_kind_tree(&origins, &markup.join("origins"), "origins", AttackKind::None, &mut clips)?;
    }
    let fraud = images.join("fraud");
    if fraud.is_dir() {
        for (name, dir) in sorted_subdirs(&fraud)? {
            let kind: AttackKind = name.parse()?;
            if kind == AttackKind::None {
                return Err(Error::UnknownAttackKind(name));
            }
            let prefix = format!("fraud/{name}");
            scan_kind_tree(&dir, &markup.join("fraud").join(&name), &prefix, kind, &mut clips)?;
        }
    }
    Ok(clips)
}

fn scan_kind_tree(
    images: &Path,
    markup: &Path,
    prefix: &str,
    kind: AttackKind,
    out: &mut Vec<ClipRecord>,
) -> Result<()> {
    for (model, model_dir) in sorted_subdirs(images)? {
        for (identity, id_dir) in sorted_subdirs(&model_dir)? {
            for (take, clip_dir) in sorted_subdirs(&id_dir)? {
                let clip_id = format!("{prefix}/{model}/{identity}/{take}");
                let markup_path = markup.join(&model).join(&identity).join(format!("{take}.json"));
                if !markup_path.is_file() {
                    return Err(Error::MissingAnnotation {
                        clip: clip_dir.display().to_string(),
                        path: markup_path,
                    });
                }
                let ann: ClipMarkup = read_json(&markup_path)?;
                let mut frames = Vec::with_capacity(ann.frames.len());
                for (index, fm) in ann.frames.iter().enumerate() {
                    let path = clip_dir.join(&fm.file);
                    if !path.is_file() {
                        return Err(Error::BadAnnotation {
                            path: markup_path.clone(),
                            message: format!("frame file {} does not exist", path.display()),
                        });
                    }
                    frames.push(FrameRecord {
                        index,
                        path,
                        quad: check_quad(fm.quad(), &markup_path)?,
                    });
                }
                let clip = ClipRecord {
                    clip_id,
                    document_model: model.clone(),
                    identity: identity.clone(),
                    label: kind.label(),
                    attack_kind: kind,
                    fps: ann.fps,
                    frames,
                };
                clip.validate()?;
                out.push(clip);
            }
        }
    }
    Ok(())
}

fn scan_midv2020(root: &Path) -> Result<Vec<ClipRecord>> {
    let images = root.join("images");
    let annotations = root.join("annotations");
    let mut clips = Vec::new();
    if !images.is_dir() {
        return Ok(clips);
    }
    for (model, model_dir) in sorted_subdirs(&images)? {
        for (identity, clip_dir) in sorted_subdirs(&model_dir)? {
            let ann_path = annotations.join(&model).join(format!("{identity}.json"));
            if !ann_path.is_file() {
                return Err(Error::MissingAnnotation {
                    clip: clip_dir.display().to_string(),
                    path: ann_path,
                });
            }
            let quads = parse_via_quads(&ann_path)?;
            let frames = quads
                .into_iter()
                .enumerate()
                .map(|(index, (file, quad))| FrameRecord {
                    index,
                    path: clip_dir.join(file),
                    quad,
                })
                .collect();
            let clip = ClipRecord {
                clip_id: format!("midv2020/{model}/{identity}"),
                document_model: model.clone(),
                identity,
                label: Label::Attack,
                attack_kind: AttackKind::CopyWithoutHolo,
                fps: MIDV2020_FPS,
                frames,
            };
            clip.validate()?;
            clips.push(clip);
        }
    }
    Ok(clips)
}

/// Reads `doc_quad` polygons from a VIA project file, sorted by file name.
fn parse_via_quads(path: &Path) -> Result<Vec<(String, Quad)>> {
    let bad = |message: &str| Error::BadAnnotation {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let doc: serde_json::Value = read_json(path)?;
    let meta = doc
        .get("_via_img_metadata")
        .and_then(|m| m.as_object())
        .ok_or_else(|| bad("missing _via_img_metadata"))?;
    let mut out = Vec::new();
    for entry in meta.values() {
        let file = entry
            .get("filename")
            .and_then(|f| f.as_str())
            .ok_or_else(|| bad("entry without filename"))?;
        let regions = entry
            .get("regions")
            .and_then(|r| r.as_array())
            .ok_or_else(|| bad("entry without regions"))?;
        let quad_region = regions.iter().find(|r| {
            r.pointer("/region_attributes/field_name").and_then(|v| v.as_str()) == Some("doc_quad")
        });
        let Some(region) = quad_region else {
            return Err(bad(&format!("no doc_quad region for {file}")));
        };
        let coords = |key: &str| -> Result<Vec<f64>> {
            region
                .pointer(&format!("/shape_attributes/{key}"))
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
                .ok_or_else(|| bad("doc_quad without points"))
        };
        let (xs, ys) = (coords("all_points_x")?, coords("all_points_y")?);
        if xs.len() != 4 || ys.len() != 4 {
            return Err(bad("doc_quad must have 4 vertices"));
        }
        let quad = Quad(std::array::from_fn(|i| Point2::new(xs[i], ys[i])));
        out.push((file.to_string(), check_quad(quad, path)?));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Perspective-unwarps the document delimited by `quad` to `canonical_size`.
pub fn rectify_frame(image: &RgbImage, quad: &Quad, canonical_size: (u32, u32)) -> Result<RgbImage> {
    if quad.area() < 1.0 || !quad.is_simple() {
        return Err(Error::DegenerateQuad);
    }
    let (w, h) = canonical_size;
    let h_map = Homography::from_correspondences(&Quad::rect(w as f64, h as f64), quad)?;
    Ok(warp(image, &h_map, w, h))
}

/// Output pixel centers are mapped through `dst_to_src` and sampled bilinearly.
pub(crate) fn warp(src: &RgbImage, dst_to_src: &Homography, width: u32, height: u32) -> RgbImage {
    warp_window(src, dst_to_src, (0, 0), width, height)
}

fn warp_window(src: &RgbImage, dst_to_src: &Homography, origin: (u32, u32), width: u32, height: u32) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let p = dst_to_src.apply(Point2::new((origin.0 + x) as f64 + 0.5, (origin.1 + y) as f64 + 0.5));
        Rgb(sample_bilinear(src, p.x - 0.5, p.y - 0.5).map(to_u8))
    })
}

/// Same pixels as `extract_roi(rectify_frame(..))`, warping only the ROI window.
pub fn rectify_roi(image: &RgbImage, quad: &Quad, canonical_size: (u32, u32), roi: &RoiSpec) -> Result<RgbImage> {
    if quad.area() < 1.0 || !quad.is_simple() {
        return Err(Error::DegenerateQuad);
    }
    let r = roi.rect;
    r.validate(canonical_size)?;
    let (w, h) = canonical_size;
    let h_map = Homography::from_correspondences(&Quad::rect(w as f64, h as f64), quad)?;
    let sub = warp_window(image, &h_map, (r.x, r.y), r.w, r.h);
    Ok(raster::resize_bilinear(&sub, ROI_SIZE, ROI_SIZE))
}

/// Rectangle in canonical rectified coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl RoiRect {
    pub fn validate(&self, canonical: (u32, u32)) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::Config(format!("ROI {self:?} has zero width or height")));
        }
        if self.x + self.w > canonical.0 || self.y + self.h > canonical.1 {
            return Err(Error::Config(format!(
                "ROI {self:?} exceeds canonical size {}x{}",
                canonical.0, canonical.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub document_model: String,
    pub rect: RoiRect,
}

/// Versioned table of ROI rectangles, keyed by document model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub version: u32,
    pub canonical_width: u32,
    pub canonical_height: u32,
    /// Fallback for models without an explicit entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<RoiRect>,
    #[serde(default)]
    pub models: BTreeMap<String, RoiRect>,
}

impl RoiConfig {
    pub const VERSION: u32 = 1;

    pub fn new(models: BTreeMap<String, RoiRect>, default: Option<RoiRect>) -> Result<Self> {
        let cfg = Self {
            version: Self::VERSION,
            canonical_width: CANONICAL_SIZE.0,
            canonical_height: CANONICAL_SIZE.1,
            default,
            models,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn canonical_size(&self) -> (u32, u32) {
        (self.canonical_width, self.canonical_height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(Error::Config(format!("unsupported ROI config version {}", self.version)));
        }
        let size = self.canonical_size();
        self.default.iter().try_for_each(|r| r.validate(size))?;
        self.models.values().try_for_each(|r| r.validate(size))
    }

    pub fn spec_for(&self, model: &str) -> Result<RoiSpec> {
        let rect = self
            .models
            .get(model)
            .or(self.default.as_ref())
            .copied()
            .ok_or_else(|| Error::Config(format!("no ROI configured for model '{model}'")))?;
        Ok(RoiSpec {
            document_model: model.to_string(),
            rect,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            what: "ROI config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ROI config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Crops `roi` out of a rectified document and resizes it to 256x256.
pub fn extract_roi(rectified: &RgbImage, roi: &RoiSpec) -> Result<RgbImage> {
    let r = roi.rect;
    r.validate((rectified.width(), rectified.height()))?;
    let sub = raster::crop(rectified, r.x, r.y, r.w, r.h);
    Ok(raster::resize_bilinear(&sub, ROI_SIZE, ROI_SIZE))
}

/// Keeps every k-th frame, `k = source_fps / target_fps`.
pub fn resample_fps<T: Clone>(frames: &[T], source_fps: f64, target_fps: f64) -> Result<Vec<T>> {
    let unsupported = Error::UnsupportedResampling {
        source_fps,
        target_fps,
    };
    if !(target_fps > 0.0) || source_fps < target_fps {
        return Err(unsupported);
    }
    let ratio = source_fps / target_fps;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 {
        return Err(unsupported);
    }
    Ok(frames.iter().step_by(k as usize).cloned().collect())
}

/// Loads, rectifies and crops every frame of `clip`, resampled to `target_fps`.
pub fn clip_roi_frames(clip: &ClipRecord, rois: &RoiConfig, target_fps: f64) -> Result<Vec<RgbImage>> {
    let roi = rois.spec_for(&clip.document_model)?;
    let frames = resample_fps(&clip.frames, clip.fps, target_fps)?;
    frames
        .iter()
        .map(|f| {
            let img = f.load()?;
            rectify_roi(&img, &f.quad, rois.canonical_size(), &roi)
        })
        .collect()
}

/// Loads and rectifies every frame of `clip` at `size`, resampled to `target_fps`.
pub fn clip_rectified_frames(clip: &ClipRecord, size: (u32, u32), target_fps: f64) -> Result<Vec<RgbImage>> {
    resample_fps(&clip.frames, clip.fps, target_fps)?
        .iter()
        .map(|f| rectify_frame(&f.load()?, &f.quad, size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x ^ y) % 256) as u8]))
    }

    #[test]
    fn identity_rectification_is_exact() {
        let img = pattern(60, 40);
        let out = rectify_frame(&img, &Quad::rect(60.0, 40.0), (60, 40)).unwrap();
        for (a, b) in out.pixels().zip(img.pixels()) {
            for c in 0..3 {
                assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn windowed_roi_matches_full_rectification() {
        let img = pattern(200, 150);
        let quad = Quad::from_xy([(20.0, 15.0), (180.0, 25.0), (170.0, 140.0), (10.0, 120.0)]);
        let roi = RoiSpec {
            document_model: "m".into(),
            rect: RoiRect { x: 30, y: 20, w: 50, h: 40 },
        };
        let full = extract_roi(&rectify_frame(&img, &quad, (112, 71)).unwrap(), &roi).unwrap();
        assert_eq!(rectify_roi(&img, &quad, (112, 71), &roi).unwrap(), full);
    }

    #[test]
    fn rotated_quad_rotates_document() {
        let img = pattern(32, 32);
        let q = Quad::rect(32.0, 32.0).rotated(1);
        let out = rectify_frame(&img, &q, (32, 32)).unwrap();
        // Canonical top-left now samples the source top-right corner region.
        let rotated = image::imageops::rotate270(&img);
        for (a, b) in out.pixels().zip(rotated.pixels()) {
            for c in 0..3 {
                assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn degenerate_quad_is_rejected() {
        let img = pattern(10, 10);
        let q = Quad::from_xy([(1.0, 1.0), (1.5, 1.0), (1.5, 1.5), (1.0, 1.5)]);
        assert!(matches!(rectify_frame(&img, &q, (10, 10)), Err(Error::DegenerateQuad)));
    }

    #[test]
    fn resample_examples() {
        let frames: Vec<usize> = (0..40).collect();
        let out = resample_fps(&frames, 10.0, 5.0).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().enumerate().all(|(i, &f)| f == 2 * i));
        assert_eq!(resample_fps(&frames, 5.0, 5.0).unwrap(), frames);
        let nine: Vec<usize> = (0..9).collect();
        assert_eq!(resample_fps(&nine, 15.0, 5.0).unwrap(), vec![0, 3, 6]);
        assert!(matches!(
            resample_fps(&nine, 10.0, 4.0),
            Err(Error::UnsupportedResampling { .. })
        ));
        assert!(resample_fps(&nine, 5.0, 10.0).is_err());
    }

    #[test]
    fn roi_config_rejects_empty_rects() {
        let mut models = BTreeMap::new();
        models.insert("m".to_string(), RoiRect { x: 0, y: 0, w: 0, h: 10 });
        assert!(RoiConfig::new(models, None).is_err());
        let text = "version = 1\ncanonical_width = 1123\ncanonical_height = 709\n[models.a]\nx = 1000\ny = 0\nw = 200\nh = 10\n";
        assert!(RoiConfig::parse(text).is_err());
    }

    #[test]
    fn roi_config_round_trips() {
        let mut models = BTreeMap::new();
        models.insert("passport_a".to_string(), RoiRect { x: 10, y: 20, w: 300, h: 400 });
        let cfg = RoiConfig::new(models, Some(RoiRect { x: 0, y: 0, w: 100, h: 100 })).unwrap();
        assert_eq!(RoiConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.spec_for("other").unwrap().rect.w, 100);
    }

    #[test]
    fn unknown_attack_folder_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images/fraud/mystery/m/i/t")).unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), DatasetKind::MidvHolo),
            Err(Error::UnknownAttackKind(_))
        ));
    }

    #[test]
    fn missing_markup_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images/origins/m/i/t")).unwrap();
        let err = scan_dataset(dir.path(), DatasetKind::MidvHolo).unwrap_err();
        assert!(matches!(err, Error::MissingAnnotation { .. }));
        assert!(err.to_string().contains("images/origins/m/i/t"));
    }

    #[test]
    fn empty_directory_gives_empty_catalog() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_dataset(dir.path(), DatasetKind::MidvHolo).unwrap().is_empty());
        assert!(scan_dataset(dir.path(), DatasetKind::Midv2020).unwrap().is_empty());
    }

    #[test]
    fn via_annotations_are_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("images/alb_id/00")).unwrap();
        fs::create_dir_all(root.join("annotations/alb_id")).unwrap();
        for name in ["000002.jpg", "000001.jpg"] {
            pattern(20, 20).save(root.join("images/alb_id/00").join(name)).unwrap();
        }
        let via = serde_json::json!({"_via_img_metadata": {
            "b": {"filename": "000002.jpg", "regions": [{"shape_attributes": {"name": "polygon",
                "all_points_x": [1, 19, 19, 1], "all_points_y": [1, 1, 19, 19]},
                "region_attributes": {"field_name": "doc_quad"}}]},
            "a": {"filename": "000001.jpg", "regions": [{"shape_attributes": {"name": "polygon",
                "all_points_x": [0, 20, 20, 0], "all_points_y": [0, 0, 20, 20]},
                "region_attributes": {"field_name": "doc_quad"}}]}
        }});
        fs::write(root.join("annotations/alb_id/00.json"), via.to_string()).unwrap();
        let clips = scan_dataset(root, DatasetKind::Midv2020).unwrap();
        assert_eq!(clips.len(), 1);
        let c = &clips[0];
        assert_eq!(c.clip_id, "midv2020/alb_id/00");
        assert_eq!(c.label, Label::Attack);
        assert_eq!(c.fps, MIDV2020_FPS);
        assert!(c.frames[0].path.ends_with("000001.jpg"));
        assert_eq!(c.frames[0].quad, Quad::rect(20.0, 20.0));
    }
}
