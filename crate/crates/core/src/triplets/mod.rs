//! Weak-label triplet sampling and epoch assembly.

pub mod augment;

use std::collections::BTreeMap;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{AugConfig, Geometric};

use crate::catalog::{clip_roi_frames, AttackKind, ClipRecord, Label, RoiConfig};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::raster::FloatImage;

/// Decoded ROI frames of one clip.
#[derive(Debug, Clone)]
pub struct ClipFrames {
    pub clip_id: String,
    pub document_model: String,
    pub identity: String,
    pub label: Label,
    pub attack_kind: AttackKind,
    pub frames: Vec<RgbImage>,
}

impl ClipFrames {
    pub fn load(clip: &ClipRecord, rois: &RoiConfig, target_fps: f64) -> Result<Self> {
        Ok(Self {
            clip_id: clip.clip_id.clone(),
            document_model: clip.document_model.clone(),
            identity: clip.identity.clone(),
            label: clip.label,
            attack_kind: clip.attack_kind,
            frames: clip_roi_frames(clip, rois, target_fps)?,
        })
    }

    /// Loads many clips, in parallel, preserving order.
    pub fn load_all(clips: &[&ClipRecord], rois: &RoiConfig, target_fps: f64) -> Result<Vec<Self>> {
        clips.par_iter().map(|c| Self::load(c, rois, target_fps)).collect()
    }

    pub fn identity_key(&self) -> (String, String) {
        (self.document_model.clone(), self.identity.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub clip_id: String,
    pub frame: usize,
}

/// Un-augmented triplet of 256x256 ROI images.
#[derive(Debug, Clone)]
pub struct RawTriplet<'a> {
    pub anchor: &'a RgbImage,
    pub positive: &'a RgbImage,
    pub negative: &'a RgbImage,
    pub source_label: Label,
    pub provenance: [FrameRef; 3],
}

/// Augmented, normalized triplet ready for the encoder.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub anchor: FloatImage,
    pub positive: FloatImage,
    pub negative: FloatImage,
    pub source_label: Label,
    pub provenance: [FrameRef; 3],
}

fn frame_ref(clip: &ClipFrames, frame: usize) -> FrameRef {
    FrameRef { clip_id: clip.clip_id.clone(), frame }
}

/// Anchor and positive from frame `t`, negative from frame `t + 1`.
pub fn sample_original_triplet(clip: &ClipFrames, t: usize) -> Result<RawTriplet<'_>> {
    if clip.label != Label::Original {
        return Err(Error::Config(format!("clip {} is not an original", clip.clip_id)));
    }
    if t + 1 >= clip.frames.len() {
        return Err(Error::ClipTooShort(clip.clip_id.clone()));
    }
    Ok(RawTriplet {
        anchor: &clip.frames[t],
        positive: &clip.frames[t],
        negative: &clip.frames[t + 1],
        source_label: Label::Original,
        provenance: [frame_ref(clip, t), frame_ref(clip, t), frame_ref(clip, t + 1)],
    })
}

/// Draws `t` uniformly over the valid indices, then calls [`sample_original_triplet`].
pub fn sample_original_triplet_random<'a, R: Rng + ?Sized>(clip: &'a ClipFrames, rng: &mut R) -> Result<RawTriplet<'a>> {
    if clip.frames.len() < 2 {
        return Err(Error::ClipTooShort(clip.clip_id.clone()));
    }
    let t = rng.random_range(0..clip.frames.len() - 1);
    sample_original_triplet(clip, t)
}

/// Anchor and positive drawn uniformly (with replacement) from one clip, negative
/// from a different clip of the same identity.
pub fn sample_attack_triplet<'a, R: Rng + ?Sized>(identity_clips: &[&'a ClipFrames], rng: &mut R) -> Result<RawTriplet<'a>> {
    check_attack_group(identity_clips)?;
    let a = rng.random_range(0..identity_clips.len());
    sample_attack_triplet_from(identity_clips, a, rng)
}

fn check_attack_group(clips: &[&ClipFrames]) -> Result<()> {
    let first = clips.first().ok_or_else(|| Error::InsufficientClips("<none>".into()))?;
    let key = first.identity_key();
    if clips.len() < 2 {
        return Err(Error::InsufficientClips(format!("{}/{}", key.0, key.1)));
    }
    for c in clips {
        if c.label != Label::Attack || c.attack_kind == AttackKind::PhotoReplacement {
            return Err(Error::Config(format!("clip {} cannot source an attack triplet", c.clip_id)));
        }
        if c.identity_key() != key {
            return Err(Error::Config(format!("clip {} belongs to another identity", c.clip_id)));
        }
        if c.frames.is_empty() {
            return Err(Error::ClipTooShort(c.clip_id.clone()));
        }
    }
    Ok(())
}

fn sample_attack_triplet_from<'a, R: Rng + ?Sized>(clips: &[&'a ClipFrames], a: usize, rng: &mut R) -> Result<RawTriplet<'a>> {
    let mut n = rng.random_range(0..clips.len() - 1);
    if n >= a {
        n += 1;
    }
    let (ca, cn) = (clips[a], clips[n]);
    let ia = rng.random_range(0..ca.frames.len());
    let ip = rng.random_range(0..ca.frames.len());
    let ineg = rng.random_range(0..cn.frames.len());
    Ok(RawTriplet {
        anchor: &ca.frames[ia],
        positive: &ca.frames[ip],
        negative: &cn.frames[ineg],
        source_label: Label::Attack,
        provenance: [frame_ref(ca, ia), frame_ref(ca, ip), frame_ref(cn, ineg)],
    })
}

/// One shared geometric draw, then independent photometric draws per image.
pub fn augment_triplet<R: Rng + ?Sized>(t: &RawTriplet, cfg: &AugConfig, rng: &mut R) -> Triplet {
    let geo = if cfg.enabled { Geometric::draw(cfg.geometric_p, rng) } else { Geometric::Identity };
    let mut one = |img: &RgbImage| augment::augment_image(&geo.apply(&FloatImage::from_rgb(img)), cfg, rng);
    let anchor = one(t.anchor);
    let positive = one(t.positive);
    let negative = one(t.negative);
    Triplet {
        anchor,
        positive,
        negative,
        source_label: t.source_label,
        provenance: t.provenance.clone(),
    }
}

/// A planned triplet: which source, plus a private seed for its frame and augmentation draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletDraw {
    source: Source,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Original { clip: usize },
    Attack { group: usize, anchor: usize },
}

/// Triplet sources of a training set: one per eligible clip.
pub struct TripletPool<'a> {
    clips: &'a [ClipFrames],
    originals: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl<'a> TripletPool<'a> {
    /// `originals_only` drops every attack source before any triplet is built.
    pub fn new(clips: &'a [ClipFrames], originals_only: bool) -> Result<Self> {
        let originals: Vec<usize> = clips
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == Label::Original && c.frames.len() >= 2)
            .map(|(i, _)| i)
            .collect();
        let mut by_identity: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        if !originals_only {
            for (i, c) in clips.iter().enumerate() {
                if c.label == Label::Attack && c.attack_kind != AttackKind::PhotoReplacement && !c.frames.is_empty() {
                    by_identity.entry(c.identity_key()).or_default().push(i);
                }
            }
        }
        let groups: Vec<Vec<usize>> = by_identity.into_values().filter(|g| g.len() >= 2).collect();
        let pool = Self { clips, originals, groups };
        if pool.len() == 0 {
            return Err(Error::EmptyTrainSet);
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.originals.len() + self.groups.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_original_sources(&self) -> usize {
        self.originals.len()
    }

    /// Shuffled batches of planned triplets; deterministic per `rng` state.
    pub fn plan_epoch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<Vec<TripletDraw>> {
        let mut sources: Vec<Source> = self.originals.iter().map(|&clip| Source::Original { clip }).collect();
        for (group, members) in self.groups.iter().enumerate() {
            sources.extend((0..members.len()).map(|anchor| Source::Attack { group, anchor }));
        }
        sources.shuffle(rng);
        let draws: Vec<TripletDraw> = sources.into_iter().map(|source| TripletDraw { source, seed: rng.random() }).collect();
        draws.chunks(batch_size.max(1)).map(<[_]>::to_vec).collect()
    }

    pub fn raw(&self, draw: &TripletDraw, rng: &mut ChaCha8Rng) -> Result<RawTriplet<'a>> {
        match draw.source {
            Source::Original { clip } => sample_original_triplet_random(&self.clips[clip], rng),
            Source::Attack { group, anchor } => {
                let members: Vec<&ClipFrames> = self.groups[group].iter().map(|&i| &self.clips[i]).collect();
                sample_attack_triplet_from(&members, anchor, rng)
            }
        }
    }

    /// Builds and augments one planned triplet.
    pub fn materialize(&self, draw: &TripletDraw, cfg: &AugConfig) -> Result<Triplet> {
        let mut rng = ChaCha8Rng::seed_from_u64(draw.seed);
        let raw = self.raw(draw, &mut rng)?;
        Ok(augment_triplet(&raw, cfg, &mut rng))
    }

    pub fn materialize_batch(&self, batch: &[TripletDraw], cfg: &AugConfig) -> Result<Vec<Triplet>> {
        batch.par_iter().map(|d| self.materialize(d, cfg)).collect()
    }
}

/// Plans one epoch and materializes every batch.
pub fn build_epoch<R: Rng + ?Sized>(
    train_clips: &[ClipFrames],
    cfg: &AugConfig,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Triplet>>> {
    let pool = TripletPool::new(train_clips, false)?;
    pool.plan_epoch(batch_size, rng)
        .iter()
        .map(|b| pool.materialize_batch(b, cfg))
        .collect()
}

/// Stacks `[anchors; positives; negatives]` into a `[3b, 3, h, w]` tensor.
pub fn stack_triplets(batch: &[Triplet]) -> Tensor {
    let images: Vec<&FloatImage> = batch
        .iter()
        .map(|t| &t.anchor)
        .chain(batch.iter().map(|t| &t.positive))
        .chain(batch.iter().map(|t| &t.negative))
        .collect();
    stack_images(&images)
}

pub fn stack_images(images: &[&FloatImage]) -> Tensor {
    let (w, h) = images.first().map_or((0, 0), |i| (i.width, i.height));
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        assert_eq!((img.width, img.height), (w, h), "images must share a size");
        data.extend_from_slice(&img.data);
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    pub(crate) fn clip(id: &str, identity: &str, kind: AttackKind, n: usize) -> ClipFrames {
        let seed = id.bytes().map(u32::from).sum::<u32>();
        ClipFrames {
            clip_id: id.into(),
            document_model: "m".into(),
            identity: identity.into(),
            label: kind.label(),
            attack_kind: kind,
            frames: (0..n)
                .map(|f| {
                    RgbImage::from_fn(256, 256, |x, y| {
                        Rgb([(x + f as u32 * 13) as u8, (y * 3 + seed) as u8, ((x * y) >> 4) as u8])
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn original_triplet_uses_t_and_t_plus_one() {
        let c = clip("o", "i", AttackKind::None, 3);
        let t = sample_original_triplet(&c, 0).unwrap();
        assert_eq!(t.provenance.iter().map(|f| f.frame).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert!(std::ptr::eq(t.anchor, &c.frames[0]) && std::ptr::eq(t.negative, &c.frames[1]));
        assert!(matches!(sample_original_triplet(&c, 2), Err(Error::ClipTooShort(_))));
        let single = clip("s", "i", AttackKind::None, 1);
        assert!(matches!(sample_original_triplet_random(&single, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::ClipTooShort(_))));
    }

    #[test]
    fn attack_triplet_negative_comes_from_another_clip() {
        let a = clip("a", "i", AttackKind::CopyWithoutHolo, 10);
        let b = clip("b", "i", AttackKind::PseudoHoloCopy, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = sample_attack_triplet(&[&a, &b], &mut rng).unwrap();
            assert_eq!(t.provenance[0].clip_id, t.provenance[1].clip_id);
            assert_ne!(t.provenance[0].clip_id, t.provenance[2].clip_id);
        }
        assert!(matches!(sample_attack_triplet(&[&a], &mut rng), Err(Error::InsufficientClips(_))));
    }

    #[test]
    fn disabled_augmentation_keeps_anchor_equal_to_positive() {
        let c = clip("o", "i", AttackKind::None, 4);
        let raw = sample_original_triplet(&c, 1).unwrap();
        let t = augment_triplet(&raw, &AugConfig::disabled(), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(t.anchor.data, t.positive.data);
        assert_ne!(t.anchor.data, t.negative.data);
        assert_eq!((t.anchor.width, t.anchor.height), (224, 224));
    }

    #[test]
    fn pool_counts_and_batches() {
        let clips: Vec<ClipFrames> = (0..64).map(|i| clip(&format!("o{i}"), &format!("i{}", i % 8), AttackKind::None, 2)).collect();
        let pool = TripletPool::new(&clips, false).unwrap();
        let batches = pool.plan_epoch(32, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(batches.len(), 2);
        assert!(matches!(TripletPool::new(&[], false), Err(Error::EmptyTrainSet)));
    }
}
