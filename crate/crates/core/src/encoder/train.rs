//! Contrastive training loop, epoch selection and the classifier ablation.

use std::path::PathBuf;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::triplet_loss;
use super::model::{eval_inputs, EncoderModel, InitKind};
use crate::catalog::{AttackKind, Label};
use crate::decision::{calibrate_classifier, calibrate_threshold, mean_probability, video_score, Strategy};
use crate::error::{Error, Result};
use crate::nn::{AdamW, Architecture, Graph, Mode, ParamStore};
use crate::raster::FloatImage;
use crate::triplets::augment::{augment_image, Geometric};
use crate::triplets::{stack_images, stack_triplets, AugConfig, ClipFrames, TripletPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Contrastive,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainData {
    Full,
    OriginalsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Fscore,
    OriginalsLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub init: InitKind,
    /// Weights loaded when `init = pretrained`.
    pub pretrained_path: Option<PathBuf>,
    pub margin: f32,
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub bn_momentum: f32,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub train_data: TrainData,
    /// Epoch-selection criterion; chosen from `train_data` when unset.
    pub selection: Option<SelectionMode>,
    /// Frames drawn per clip per epoch by the classifier ablation.
    pub classifier_frames_per_clip: usize,
    pub augmentation: AugConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::MobileNetV3Small050,
            init: InitKind::Scratch,
            pretrained_path: None,
            margin: 1.0,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            bn_momentum: 0.1,
            max_epochs: 20,
            batch_size: 32,
            seed: 0,
            mode: TrainMode::Contrastive,
            train_data: TrainData::Full,
            selection: None,
            classifier_frames_per_clip: 3,
            augmentation: AugConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be >= 0".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be >= 1".into()));
        }
        self.augmentation.validate()
    }

    pub fn selection_mode(&self) -> SelectionMode {
        self.selection.unwrap_or(match self.train_data {
            TrainData::Full => SelectionMode::Fscore,
            TrainData::OriginalsOnly => SelectionMode::OriginalsLoss,
        })
    }

    pub fn hash(&self) -> String {
        crate::config::hash_of(self)
    }

    /// Initial model: seeded scratch weights or a user-supplied checkpoint.
    pub fn initial_model(&self) -> Result<EncoderModel> {
        match self.init {
            InitKind::Scratch => Ok(EncoderModel::scratch(self.architecture, self.seed)),
            InitKind::Pretrained => {
                let path = self
                    .pretrained_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("init = pretrained needs pretrained_path".into()))?;
                let mut m = EncoderModel::load(path)?;
                if m.architecture != self.architecture {
                    return Err(Error::Config(format!(
                        "pretrained weights are {} but the config asks for {}",
                        m.architecture, self.architecture
                    )));
                }
                m.head = None;
                m.store.params.retain(|p| !p.name.starts_with("head."));
                m.init = InitKind::Pretrained;
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub criterion: f64,
    /// Attack-sourced triplets built during this epoch.
    pub attack_triplets: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned weights.
    pub best_epoch: usize,
}

/// Epoch-selection criterion; higher is better in both modes.
pub fn validation_criterion(model: &EncoderModel, val: &[ClipFrames], mode: SelectionMode, margin: f32) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    match mode {
        SelectionMode::Fscore => {
            let scored = val
                .iter()
                .map(|c| Ok((video_score(&model.embed_clip(c)?)?, c.label)))
                .collect::<Result<Vec<_>>>()?;
            Ok(calibrate_threshold(&scored, Strategy::Whole)?.validation_fscore)
        }
        SelectionMode::OriginalsLoss => {
            let mut total = 0.0;
            let mut n = 0usize;
            for c in val.iter().filter(|c| c.label == Label::Original && c.frames.len() >= 2) {
                let e = model.embed_clip(c)?.vectors;
                for t in 0..e.len() - 1 {
                    total += triplet_loss(&e[t], &e[t], &e[t + 1], margin) as f64;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::Empty("original validation clips"));
            }
            Ok(-total / n as f64)
        }
    }
}

fn check_finite(loss: f32, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, batch, loss })
    }
}

/// Contrastive training with best-epoch selection on the validation set.
pub fn train(train_set: &[ClipFrames], val_set: &[ClipFrames], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let pool = TripletPool::new(train_set, cfg.train_data == TrainData::OriginalsOnly)?;
    let selection = cfg.selection_mode();
    let mut model = cfg.initial_model()?;
    model.config_hash = cfg.hash();
    model.seed = cfg.seed;
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    info!(
        "training {} on {} triplet sources ({} original), selection {:?}",
        cfg.architecture,
        pool.len(),
        pool.n_original_sources(),
        selection
    );
    for epoch in 1..=cfg.max_epochs {
        let plan = pool.plan_epoch(cfg.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        let mut attack_triplets = 0usize;
        for (bi, batch) in plan.iter().enumerate() {
            let triplets = pool.materialize_batch(batch, &cfg.augmentation)?;
            attack_triplets += triplets.iter().filter(|t| t.source_label == Label::Attack).count();
            let (loss, grads, updates) = {
                let mut g = Graph::new(&model.store, Mode::Train);
                let x = g.input(stack_triplets(&triplets), false);
                let emb = model.forward(&mut g, x);
                let l = g.triplet_loss(emb, cfg.margin);
                let loss = g.value(l).item();
                check_finite(loss, epoch, bi)?;
                let grads = g.backward(l);
                (loss, grads, std::mem::take(&mut g.bn_updates))
            };
            if !grads.all_finite() {
                return Err(Error::NonFiniteGradient);
            }
            model.store.apply_bn_updates(&updates, cfg.bn_momentum);
            opt.step(&mut model.store, &grads.params);
            debug!("epoch {epoch} batch {bi}: loss {loss:.4}");
            loss_sum += loss as f64 * triplets.len() as f64;
            count += triplets.len();
        }
        let criterion = validation_criterion(&model, val_set, selection, cfg.margin)?;
        let train_loss = loss_sum / count.max(1) as f64;
        info!("epoch {epoch}: train loss {train_loss:.4}, validation criterion {criterion:.4}");
        history.push(EpochRecord { epoch, train_loss, criterion, attack_triplets });
        if best.as_ref().is_none_or(|(c, _, _)| criterion > *c) {
            best = Some((criterion, epoch, model.store.clone()));
        }
    }
    let (_, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainOutcome { model, history, best_epoch })
}

/// Mean clip-level attack probability for each clip.
pub fn clip_probabilities(model: &EncoderModel, clips: &[ClipFrames]) -> Result<Vec<f64>> {
    clips
        .iter()
        .map(|c| mean_probability(&model.attack_probabilities(&eval_inputs(c))?))
        .collect()
}

/// Per-frame original/attack classifier trained with cross-entropy.
pub fn train_classifier(train_set: &[ClipFrames], val_set: &[ClipFrames], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<&ClipFrames> = train_set
        .iter()
        .filter(|c| c.attack_kind != AttackKind::PhotoReplacement && !c.frames.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    for label in [Label::Original, Label::Attack] {
        if !usable.iter().any(|c| c.label == label) {
            return Err(Error::SingleClass("classifier training needs both labels"));
        }
    }
    let mut model = cfg.initial_model()?.with_classifier_head(cfg.seed);
    model.config_hash = cfg.hash();
    model.seed = cfg.seed;
    let head = model.head.clone().expect("head just added");
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=cfg.max_epochs {
        let mut draws: Vec<(usize, usize, u64)> = Vec::new();
        for (ci, c) in usable.iter().enumerate() {
            for _ in 0..cfg.classifier_frames_per_clip {
                draws.push((ci, rng.random_range(0..c.frames.len()), rng.random()));
            }
        }
        draws.shuffle(&mut rng);
        let batch_images = 3 * cfg.batch_size;
        let mut loss_sum = 0.0;
        for (bi, chunk) in draws.chunks(batch_images).enumerate() {
            let images: Vec<FloatImage> = chunk
                .par_iter()
                .map(|&(ci, fi, seed)| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    let aug = &cfg.augmentation;
                    let geo = if aug.enabled { Geometric::draw(aug.geometric_p, &mut r) } else { Geometric::Identity };
                    augment_image(&geo.apply(&FloatImage::from_rgb(&usable[ci].frames[fi])), aug, &mut r)
                })
                .collect();
            let targets: Vec<usize> = chunk.iter().map(|&(ci, _, _)| (usable[ci].label == Label::Attack) as usize).collect();
            let (loss, grads, updates) = {
                let refs: Vec<&FloatImage> = images.iter().collect();
                let mut g = Graph::new(&model.store, Mode::Train);
                let x = g.input(stack_images(&refs), false);
                let emb = model.forward(&mut g, x);
                let logits = head.forward(&mut g, emb);
                let l = g.cross_entropy(logits, targets);
                let loss = g.value(l).item();
                check_finite(loss, epoch, bi)?;
                let grads = g.backward(l);
                (loss, grads, std::mem::take(&mut g.bn_updates))
            };
            if !grads.all_finite() {
                return Err(Error::NonFiniteGradient);
            }
            model.store.apply_bn_updates(&updates, cfg.bn_momentum);
            opt.step(&mut model.store, &grads.params);
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let probs = clip_probabilities(&model, val_set)?;
        let scored: Vec<(f64, Label)> = probs.into_iter().zip(val_set.iter().map(|c| c.label)).collect();
        let criterion = calibrate_classifier(&scored)?.validation_fscore;
        let train_loss = loss_sum / draws.len().max(1) as f64;
        info!("classifier epoch {epoch}: train loss {train_loss:.4}, validation F {criterion:.4}");
        history.push(EpochRecord { epoch, train_loss, criterion, attack_triplets: 0 });
        if best.as_ref().is_none_or(|(c, _, _)| criterion > *c) {
            best = Some((criterion, epoch, model.store.clone()));
        }
    }
    let (_, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainOutcome { model, history, best_epoch })
}

/// Fraction of validation frames the classifier labels correctly at probability 0.5.
pub fn frame_accuracy(model: &EncoderModel, clips: &[ClipFrames]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for c in clips {
        for p in model.attack_probabilities(&eval_inputs(c))? {
            correct += ((p >= 0.5) == (c.label == Label::Attack)) as usize;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("frames"));
    }
    Ok(correct as f64 / total as f64)
}
