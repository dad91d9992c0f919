//! Encoder model, inference helpers and the checkpoint format.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decision::EmbeddingSequence;
use crate::error::{Error, Result};
use crate::nn::layers::Linear;
use crate::nn::params::Init;
use crate::nn::{Architecture, Backbone, Graph, Mode, ParamStore, Tensor, Var};
use crate::raster::FloatImage;
use crate::triplets::augment::{normalize, AugConfig, INPUT_SIZE};
use crate::triplets::{stack_images, ClipFrames};

const MAGIC: &[u8; 4] = b"HVCK";
const FORMAT_VERSION: u32 = 1;
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Pretrained,
    Scratch,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Pretrained => "pretrained",
            InitKind::Scratch => "scratch",
        })
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(InitKind::Pretrained),
            "scratch" => Ok(InitKind::Scratch),
            other => Err(Error::Config(format!("unknown init {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    embedding_dim: usize,
    init: InitKind,
    classifier_head: bool,
    config_hash: String,
    seed: u64,
    params: Vec<TensorMeta>,
    buffers: Vec<TensorMeta>,
}

/// Backbone weights plus an optional two-way classification head.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub architecture: Architecture,
    pub init: InitKind,
    pub config_hash: String,
    pub seed: u64,
    pub store: ParamStore,
    pub backbone: Backbone,
    pub head: Option<Linear>,
}

impl EncoderModel {
    /// Seeded random initialization.
    pub fn scratch(architecture: Architecture, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let backbone = Backbone::new(architecture, &mut store, seed);
        Self {
            architecture,
            init: InitKind::Scratch,
            config_hash: String::new(),
            seed,
            store,
            backbone,
            head: None,
        }
    }

    /// Adds a freshly initialised `embedding_dim -> 2` head.
    pub fn with_classifier_head(mut self, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut init = Init {
            store: &mut self.store,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_4ead),
        };
        self.head = Some(Linear::new(&mut init, "head", self.architecture.embedding_dim(), 2, true));
        self
    }

    pub fn embedding_dim(&self) -> usize {
        self.architecture.embedding_dim()
    }

    /// Backbone forward pass on `[n, 3, h, w]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        self.backbone.forward(g, x)
    }

    /// Embeds one normalized 224x224 image in evaluation mode.
    pub fn embed_frame(&self, image: &FloatImage) -> Result<Vec<f32>> {
        Ok(self.embed_images(std::slice::from_ref(image))?.remove(0))
    }

    pub fn embed_images(&self, images: &[FloatImage]) -> Result<Vec<Vec<f32>>> {
        Ok(self.run_eval(images, false)?.0)
    }

    /// Attack probability per image; requires a classifier head.
    pub fn attack_probabilities(&self, images: &[FloatImage]) -> Result<Vec<f64>> {
        if self.head.is_none() {
            return Err(Error::Config("model has no classifier head".into()));
        }
        Ok(self.run_eval(images, true)?.1)
    }

    fn run_eval(&self, images: &[FloatImage], probs: bool) -> Result<(Vec<Vec<f32>>, Vec<f64>)> {
        for img in images {
            if (img.width, img.height) != (INPUT_SIZE, INPUT_SIZE) || img.data.len() != 3 * INPUT_SIZE * INPUT_SIZE {
                return Err(Error::Shape(format!(
                    "expected a 3x{INPUT_SIZE}x{INPUT_SIZE} input, got {}x{}",
                    img.width, img.height
                )));
            }
        }
        let mut emb = Vec::with_capacity(images.len());
        let mut p = Vec::new();
        for chunk in images.chunks(EVAL_CHUNK) {
            let refs: Vec<&FloatImage> = chunk.iter().collect();
            let mut g = Graph::new(&self.store, Mode::Eval);
            let x = g.input(stack_images(&refs), false);
            let y = self.forward(&mut g, x);
            let v = g.value(y);
            emb.extend((0..chunk.len()).map(|i| v.row(i).to_vec()));
            if probs {
                let head = self.head.as_ref().expect("checked by caller");
                let logits = head.forward(&mut g, y);
                let l = g.value(logits);
                p.extend((0..chunk.len()).map(|i| {
                    let r = l.row(i);
                    1.0 / (1.0 + ((r[0] - r[1]) as f64).exp())
                }));
            }
        }
        if emb.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEmbedding("non-finite embedding".into()));
        }
        Ok((emb, p))
    }

    /// Embeds every frame of a clip after resizing to 224 and normalizing.
    pub fn embed_clip(&self, clip: &ClipFrames) -> Result<EmbeddingSequence> {
        let images = eval_inputs(clip);
        Ok(EmbeddingSequence::new(clip.clip_id.clone(), self.embed_images(&images)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = |p: &crate::nn::params::Param| TensorMeta { name: p.name.clone(), shape: p.value.shape.clone() };
        let header = Header {
            architecture: self.architecture,
            embedding_dim: self.embedding_dim(),
            init: self.init,
            classifier_head: self.head.is_some(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            params: self.store.params.iter().map(meta).collect(),
            buffers: self.store.buffers.iter().map(meta).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.store.tensors().map(|p| p.value.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.store.tensors() {
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint { path: path.to_path_buf(), message };
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
        let mut model = Self::scratch(header.architecture, header.seed);
        if header.classifier_head {
            model = model.with_classifier_head(header.seed);
        }
        model.init = header.init;
        model.config_hash = header.config_hash.clone();
        let expected: Vec<TensorMeta> = model
            .store
            .tensors()
            .map(|p| TensorMeta { name: p.name.clone(), shape: p.value.shape.clone() })
            .collect();
        let stored: Vec<TensorMeta> = header.params.iter().chain(&header.buffers).cloned().collect();
        if expected != stored || header.embedding_dim != model.embedding_dim() {
            return Err(bad(format!("tensor layout does not match architecture {}", header.architecture)));
        }
        let mut offset = 16 + hlen;
        for p in model.store.tensors_mut() {
            let n = p.value.len() * 4;
            let raw = bytes.get(offset..offset + n).ok_or_else(|| bad("truncated weights".into()))?;
            for (v, b) in p.value.data.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().unwrap());
            }
            offset += n;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after weights".into()));
        }
        Ok(model)
    }
}

/// Evaluation-time preprocessing: 256 -> 224 resize plus normalization.
pub fn eval_input(img: &image::RgbImage) -> FloatImage {
    let cfg = AugConfig::disabled();
    let mut f = FloatImage::from_rgb(img).resize(cfg.output_size, cfg.output_size);
    normalize(&mut f, &cfg);
    f
}

pub fn eval_inputs(clip: &ClipFrames) -> Vec<FloatImage> {
    clip.frames.iter().map(eval_input).collect()
}

/// Input tensor for a single image.
pub fn image_tensor(img: &FloatImage) -> Tensor {
    stack_images(&[img])
}
