//! Backbone definitions. Every backbone maps `[n, 3, h, w]` to `[n, embedding_dim]`.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Activation, Graph, Var};
use super::layers::{fold_index, unfold_index, ConvBn, InvertedResidual, Linear, SqueezeExcite, TransformerLayer};
use super::params::{Init, ParamStore};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[serde(rename = "mobilenetv3_small050")]
    MobileNetV3Small050,
    #[serde(rename = "resnet18")]
    ResNet18,
    #[serde(rename = "mobilevit_xxs")]
    MobileVitXxs,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Self::MobileNetV3Small050, Self::ResNet18, Self::MobileVitXxs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MobileNetV3Small050 => "mobilenetv3_small050",
            Self::ResNet18 => "resnet18",
            Self::MobileVitXxs => "mobilevit_xxs",
        }
    }

    pub fn embedding_dim(self) -> usize {
        match self {
            Self::MobileNetV3Small050 => 1024,
            Self::ResNet18 => 512,
            Self::MobileVitXxs => 320,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// timm's channel rounding.
fn make_divisible(v: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let mut n = (((v + d / 2.0) / d).floor() * d).max(d);
    if n < 0.9 * v {
        n += d;
    }
    n as usize
}

#[derive(Debug, Clone)]
pub enum Backbone {
    MobileNet(MobileNetV3),
    ResNet(ResNet),
    MobileVit(MobileVit),
}

impl Backbone {
    /// Registers freshly initialised parameters in `store`.
    pub fn new(arch: Architecture, store: &mut ParamStore, seed: u64) -> Self {
        let mut init = Init { store, rng: ChaCha8Rng::seed_from_u64(seed) };
        match arch {
            Architecture::MobileNetV3Small050 => Backbone::MobileNet(MobileNetV3::new(&mut init)),
            Architecture::ResNet18 => Backbone::ResNet(ResNet::new(&mut init)),
            Architecture::MobileVitXxs => Backbone::MobileVit(MobileVit::new(&mut init)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        match self {
            Backbone::MobileNet(m) => m.forward(g, x),
            Backbone::ResNet(m) => m.forward(g, x),
            Backbone::MobileVit(m) => m.forward(g, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MobileNetV3 {
    stem: ConvBn,
    blocks: Vec<InvertedResidual>,
    final_conv: ConvBn,
    head: Linear,
}

impl MobileNetV3 {
    fn new(init: &mut Init) -> Self {
        use Activation::{HardSwish as HS, Relu as RE};
        let mult = 0.5;
        let ch = |c: usize| make_divisible(c as f64 * mult, 8);
        let stem_c = ch(16);
        let stem = ConvBn::new(init, "conv_stem", 3, stem_c, 3, 2, 1, Some(HS));
        // (kernel, stride, expansion, out channels before scaling, se, activation)
        let defs: [(usize, usize, f64, usize, bool, Activation); 11] = [
            (3, 2, 1.0, 16, true, RE),
            (3, 2, 4.5, 24, false, RE),
            (3, 1, 3.67, 24, false, RE),
            (5, 2, 4.0, 40, true, HS),
            (5, 1, 6.0, 40, true, HS),
            (5, 1, 6.0, 40, true, HS),
            (5, 1, 3.0, 48, true, HS),
            (5, 1, 3.0, 48, true, HS),
            (5, 2, 6.0, 96, true, HS),
            (5, 1, 6.0, 96, true, HS),
            (5, 1, 6.0, 96, true, HS),
        ];
        let mut cin = stem_c;
        let mut blocks = Vec::new();
        for (i, &(k, s, e, c, se, act)) in defs.iter().enumerate() {
            let name = format!("blocks.{i}");
            let cout = ch(c);
            let ds = i == 0;
            let mid = if ds { cin } else { make_divisible(cin as f64 * e, 8) };
            let expand = (!ds).then(|| ConvBn::new(init, &format!("{name}.conv_pw"), cin, mid, 1, 1, 1, Some(act)));
            let dw = ConvBn::new(init, &format!("{name}.conv_dw"), mid, mid, k, s, mid, Some(act));
            let se = se.then(|| SqueezeExcite::new(init, &format!("{name}.se"), mid, make_divisible(mid as f64 * 0.25, 8)));
            let project = ConvBn::new(init, &format!("{name}.conv_pwl"), mid, cout, 1, 1, 1, None);
            blocks.push(InvertedResidual { expand, dw, se, project, residual: s == 1 && cin == cout });
            cin = cout;
        }
        let final_c = ch(576);
        let final_conv = ConvBn::new(init, "blocks.11", cin, final_c, 1, 1, 1, Some(HS));
        let head = Linear::new(init, "conv_head", final_c, Architecture::MobileNetV3Small050.embedding_dim(), true);
        Self { stem, blocks, final_conv, head }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = self.stem.forward(g, x);
        for b in &self.blocks {
            y = b.forward(g, y);
        }
        y = self.final_conv.forward(g, y);
        y = g.global_avg_pool(y);
        y = self.head.forward(g, y);
        g.act(y, Activation::HardSwish)
    }
}

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: ConvBn,
    conv2: ConvBn,
    downsample: Option<ConvBn>,
}

#[derive(Debug, Clone)]
pub struct ResNet {
    stem: ConvBn,
    blocks: Vec<BasicBlock>,
}

impl ResNet {
    fn new(init: &mut Init) -> Self {
        let stem = ConvBn::new(init, "conv1", 3, 64, 7, 2, 1, Some(Activation::Relu));
        let mut blocks = Vec::new();
        let mut cin = 64;
        for (li, &c) in [64usize, 128, 256, 512].iter().enumerate() {
            for bi in 0..2 {
                let stride = if li > 0 && bi == 0 { 2 } else { 1 };
                let name = format!("layer{}.{bi}", li + 1);
                let downsample = (stride != 1 || cin != c).then(|| {
                    let mut d = ConvBn::new(init, &format!("{name}.downsample"), cin, c, 1, stride, 1, None);
                    d.pad = 0;
                    d
                });
                blocks.push(BasicBlock {
                    conv1: ConvBn::new(init, &format!("{name}.conv1"), cin, c, 3, stride, 1, Some(Activation::Relu)),
                    conv2: ConvBn::new(init, &format!("{name}.conv2"), c, c, 3, 1, 1, None),
                    downsample,
                });
                cin = c;
            }
        }
        Self { stem, blocks }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = self.stem.forward(g, x);
        y = g.max_pool(y, 3, 2, 1);
        for b in &self.blocks {
            let shortcut = match &b.downsample {
                Some(d) => d.forward(g, y),
                None => y,
            };
            let h = b.conv1.forward(g, y);
            let h = b.conv2.forward(g, h);
            let h = g.add(h, shortcut);
            y = g.act(h, Activation::Relu);
        }
        g.global_avg_pool(y)
    }
}

#[derive(Debug, Clone)]
struct MobileVitBlock {
    conv_kxk: ConvBn,
    conv_1x1: ConvBn,
    transformer: Vec<TransformerLayer>,
    norm: (usize, usize),
    conv_proj: ConvBn,
    conv_fusion: ConvBn,
    dim: usize,
}

const PATCH: usize = 2;

impl MobileVitBlock {
    fn new(init: &mut Init, name: &str, c: usize, dim: usize, depth: usize) -> Self {
        let mut conv_1x1 = ConvBn::new(init, &format!("{name}.conv_1x1"), c, dim, 1, 1, 1, None);
        conv_1x1.pad = 0;
        Self {
            conv_kxk: ConvBn::new(init, &format!("{name}.conv_kxk"), c, c, 3, 1, 1, Some(Activation::Silu)),
            conv_1x1,
            transformer: (0..depth)
                .map(|i| TransformerLayer::new(init, &format!("{name}.transformer.{i}"), dim, 4, 2))
                .collect(),
            norm: init.ln(&format!("{name}.norm"), dim),
            conv_proj: ConvBn::new(init, &format!("{name}.conv_proj"), dim, c, 1, 1, 1, Some(Activation::Silu)),
            conv_fusion: ConvBn::new(init, &format!("{name}.conv_fusion"), 2 * c, c, 3, 1, 1, Some(Activation::Silu)),
            dim,
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let shortcut = x;
        let y = self.conv_kxk.forward(g, x);
        let y = self.conv_1x1.forward(g, y);
        let (n, h, w) = {
            let s = g.shape(y);
            (s[0], s[2], s[3])
        };
        let (ui, us) = unfold_index(n, self.dim, h, w, PATCH);
        let mut t = g.gather(y, Rc::new(ui), us);
        for layer in &self.transformer {
            t = layer.forward(g, t);
        }
        t = g.layer_norm(t, self.norm.0, self.norm.1);
        let y = g.gather(t, Rc::new(fold_index(n, self.dim, h, w, PATCH)), vec![n, self.dim, h, w]);
        let y = self.conv_proj.forward(g, y);
        let y = g.concat_channels(shortcut, y);
        self.conv_fusion.forward(g, y)
    }
}

#[derive(Debug, Clone)]
enum VitStage {
    Conv(InvertedResidual),
    Vit(MobileVitBlock),
}

#[derive(Debug, Clone)]
pub struct MobileVit {
    stem: ConvBn,
    stages: Vec<VitStage>,
    final_conv: ConvBn,
}

impl MobileVit {
    fn new(init: &mut Init) -> Self {
        let silu = Some(Activation::Silu);
        let stem = ConvBn::new(init, "stem", 3, 16, 3, 2, 1, silu);
        let mut stages = Vec::new();
        let mut cin = 16;
        let mv2 = |init: &mut Init, stages: &mut Vec<VitStage>, cin: &mut usize, cout: usize, stride: usize| {
            let name = format!("stages.{}", stages.len());
            let mid = *cin * 2;
            stages.push(VitStage::Conv(InvertedResidual {
                expand: Some(ConvBn::new(init, &format!("{name}.conv1_1x1"), *cin, mid, 1, 1, 1, silu)),
                dw: ConvBn::new(init, &format!("{name}.conv2_kxk"), mid, mid, 3, stride, mid, silu),
                se: None,
                project: ConvBn::new(init, &format!("{name}.conv3_1x1"), mid, cout, 1, 1, 1, None),
                residual: stride == 1 && *cin == cout,
            }));
            *cin = cout;
        };
        mv2(init, &mut stages, &mut cin, 16, 1);
        mv2(init, &mut stages, &mut cin, 24, 2);
        mv2(init, &mut stages, &mut cin, 24, 1);
        mv2(init, &mut stages, &mut cin, 24, 1);
        for (c, dim, depth) in [(48, 64, 2), (64, 80, 4), (80, 96, 3)] {
            mv2(init, &mut stages, &mut cin, c, 2);
            let name = format!("stages.{}", stages.len());
            stages.push(VitStage::Vit(MobileVitBlock::new(init, &name, c, dim, depth)));
        }
        let final_conv = ConvBn::new(init, "final_conv", cin, Architecture::MobileVitXxs.embedding_dim(), 1, 1, 1, silu);
        Self { stem, stages, final_conv }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = self.stem.forward(g, x);
        for s in &self.stages {
            y = match s {
                VitStage::Conv(b) => b.forward(g, y),
                VitStage::Vit(b) => b.forward(g, y),
            };
        }
        y = self.final_conv.forward(g, y);
        g.global_avg_pool(y)
    }
}
