//! Residual pyramid backbone, UPerNet decoder and segmentation head.

use serde::{Deserialize, Serialize};

use super::params::{Init, ParamId, ParamSet, ParamSpec};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::taxonomy::NUM_CLASSES;

/// Downsampling factor of each pyramid level.
pub const STRIDES: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// GroupNorm with `norm_groups` groups (capped by the channel count).
    Group,
    /// No feature normalization; convolutions carry a bias instead.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone_channels: [usize; 4],
    pub decoder_channels: usize,
    pub psp_bin_sizes: Vec<usize>,
    pub num_classes: usize,
    pub norm_kind: NormKind,
    pub norm_groups: usize,
    /// Per-channel statistics on the unit-interval scale.
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone_channels: [32, 64, 128, 256],
            decoder_channels: 128,
            psp_bin_sizes: vec![1, 2, 3, 6],
            num_classes: NUM_CLASSES,
            norm_kind: NormKind::Group,
            norm_groups: 8,
            input_mean: [0.485, 0.456, 0.406],
            input_std: [0.229, 0.224, 0.225],
        }
    }
}

impl ModelConfig {
    /// Reduced widths for tests and toy runs.
    pub fn tiny() -> Self {
        ModelConfig {
            backbone_channels: [8, 8, 16, 16],
            decoder_channels: 8,
            psp_bin_sizes: vec![1],
            norm_groups: 4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != NUM_CLASSES {
            return Err(Error::config(
                "model.num_classes",
                format!("must be {NUM_CLASSES}"),
            ));
        }
        if self.backbone_channels.contains(&0) {
            return Err(Error::config("model.backbone_channels", "widths must be > 0"));
        }
        if self.decoder_channels == 0 {
            return Err(Error::config("model.decoder_channels", "must be > 0"));
        }
        if self.psp_bin_sizes.is_empty()
            || self.psp_bin_sizes[0] == 0
            || self.psp_bin_sizes.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::config(
                "model.psp_bin_sizes",
                "must be non-empty, positive and strictly increasing",
            ));
        }
        if self.norm_kind == NormKind::Group && self.norm_groups == 0 {
            return Err(Error::config("model.norm_groups", "must be > 0"));
        }
        if self.input_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("model.input_std", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: [Tensor; 4],
}

#[derive(Debug, Clone, Copy)]
struct ConvUnit {
    weight: ParamId,
    bias: Option<ParamId>,
    norm: Option<(ParamId, ParamId, usize)>,
    stride: usize,
    pad: usize,
    relu: bool,
}

impl ConvUnit {
    fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let mut y = tape.conv(x, self.weight, self.bias, self.stride, self.pad)?;
        if let Some((gamma, beta, groups)) = self.norm {
            y = tape.group_norm(y, gamma, beta, groups)?;
        }
        if self.relu {
            y = tape.relu(y);
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    first: ConvUnit,
    second: ConvUnit,
}

impl ResBlock {
    fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let h = self.first.apply(tape, x)?;
        let h = self.second.apply(tape, h)?;
        let sum = tape.add(x, h)?;
        Ok(tape.relu(sum))
    }
}

struct Builder<'a> {
    cfg: &'a ModelConfig,
    specs: Vec<ParamSpec>,
}

impl Builder<'_> {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        self.specs.push(ParamSpec { name, shape, init });
        ParamId(self.specs.len() - 1)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, relu: bool) -> ConvUnit {
        let weight = self.param(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            Init::Kaiming { fan_in: cin * k * k },
        );
        let (bias, norm) = match self.cfg.norm_kind {
            NormKind::Group => {
                let groups = self.cfg.norm_groups.min(cout);
                let groups = (1..=groups).rev().find(|g| cout % g == 0).unwrap_or(1);
                let gamma = self.param(format!("{name}.norm.weight"), vec![cout], Init::Constant(1.0));
                let beta = self.param(format!("{name}.norm.bias"), vec![cout], Init::Constant(0.0));
                (None, Some((gamma, beta, groups)))
            }
            NormKind::None => {
                let bias = self.param(format!("{name}.bias"), vec![cout], Init::Constant(0.0));
                (Some(bias), None)
            }
        };
        ConvUnit {
            weight,
            bias,
            norm,
            stride,
            pad: k / 2,
            relu,
        }
    }

    fn res_block(&mut self, name: &str, ch: usize) -> ResBlock {
        ResBlock {
            first: self.conv(&format!("{name}.conv1"), ch, ch, 3, 1, true),
            second: self.conv(&format!("{name}.conv2"), ch, ch, 3, 1, false),
        }
    }
}

/// Segmentation network: four-stage residual backbone with strides
/// 4/8/16/32, UPerNet decoder (pyramid pooling on the deepest level plus a
/// top-down feature pyramid) and a 1×1 classifier whose logits are
/// bilinearly upsampled to the input size.
#[derive(Debug, Clone)]
pub struct SegNet {
    cfg: ModelConfig,
    specs: Vec<ParamSpec>,
    stem: [ConvUnit; 2],
    stages: [(Option<ConvUnit>, ResBlock); 4],
    psp_branches: Vec<ConvUnit>,
    psp_bottleneck: ConvUnit,
    laterals: [ConvUnit; 3],
    fpn_convs: [ConvUnit; 3],
    fpn_bottleneck: ConvUnit,
    classifier: ConvUnit,
}

impl SegNet {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder {
            cfg,
            specs: Vec::new(),
        };
        let c = cfg.backbone_channels;
        let d = cfg.decoder_channels;

        let stem = [
            b.conv("backbone.stem.0", 3, c[0], 3, 2, true),
            b.conv("backbone.stem.1", c[0], c[0], 3, 2, true),
        ];
        let stage = |b: &mut Builder, i: usize| {
            let down = (i > 0).then(|| b.conv(&format!("backbone.stage{i}.down"), c[i - 1], c[i], 3, 2, true));
            (down, b.res_block(&format!("backbone.stage{i}.block"), c[i]))
        };
        let stages = [stage(&mut b, 0), stage(&mut b, 1), stage(&mut b, 2), stage(&mut b, 3)];

        let psp_branches = cfg
            .psp_bin_sizes
            .iter()
            .map(|bins| b.conv(&format!("decoder.psp.pool{bins}"), c[3], d, 1, 1, true))
            .collect();
        let psp_in = c[3] + cfg.psp_bin_sizes.len() * d;
        let psp_bottleneck = b.conv("decoder.psp.bottleneck", psp_in, d, 3, 1, true);
        let laterals = [0, 1, 2].map(|i| b.conv(&format!("decoder.lateral{i}"), c[i], d, 1, 1, true));
        let fpn_convs = [0, 1, 2].map(|i| b.conv(&format!("decoder.fpn{i}"), d, d, 3, 1, true));
        let fpn_bottleneck = b.conv("decoder.fpn_bottleneck", 4 * d, d, 3, 1, true);

        let classifier = ConvUnit {
            weight: b.param(
                "head.classifier.weight".into(),
                vec![cfg.num_classes, d, 1, 1],
                Init::Normal { std: 0.01 },
            ),
            bias: Some(b.param("head.classifier.bias".into(), vec![cfg.num_classes], Init::Constant(0.0))),
            norm: None,
            stride: 1,
            pad: 0,
            relu: false,
        };

        Ok(SegNet {
            cfg: cfg.clone(),
            specs: b.specs,
            stem,
            stages,
            psp_branches,
            psp_bottleneck,
            laterals,
            fpn_convs,
            fpn_bottleneck,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        ParamSet::init(&self.specs, seed)
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let ok = params.len() == self.specs.len()
            && params
                .iter()
                .zip(&self.specs)
                .all(|(p, s)| p.name == s.name && p.shape == s.shape);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("parameters do not match the model configuration".into()))
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let [_, c, h, w] = input.shape();
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 input channels, got {c}")));
        }
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} is not divisible by 32"
            )));
        }
        let deepest = (h / 32).min(w / 32);
        if let Some(&b) = self.cfg.psp_bin_sizes.iter().find(|&&b| b > deepest) {
            return Err(Error::Shape(format!(
                "pooling bin size {b} exceeds the {}x{} deepest feature map",
                h / 32,
                w / 32
            )));
        }
        Ok(())
    }

    fn backbone_nodes(&self, tape: &mut Tape, x: NodeId) -> Result<[NodeId; 4]> {
        let mut h = self.stem[0].apply(tape, x)?;
        h = self.stem[1].apply(tape, h)?;
        let mut levels = [h; 4];
        for (i, (down, block)) in self.stages.iter().enumerate() {
            if let Some(down) = down {
                h = down.apply(tape, h)?;
            }
            h = block.apply(tape, h)?;
            levels[i] = h;
        }
        Ok(levels)
    }

    fn decoder_nodes(&self, tape: &mut Tape, levels: [NodeId; 4]) -> Result<NodeId> {
        // pyramid pooling on the deepest level replaces it
        let top = levels[3];
        let (th, tw) = (tape.value(top).height(), tape.value(top).width());
        let mut parts = vec![top];
        for (bins, branch) in self.cfg.psp_bin_sizes.iter().zip(&self.psp_branches) {
            let pooled = tape.adaptive_avg_pool(top, *bins)?;
            let projected = branch.apply(tape, pooled)?;
            parts.push(tape.resize(projected, th, tw));
        }
        let cat = tape.concat(&parts)?;
        let psp = self.psp_bottleneck.apply(tape, cat)?;

        let mut lat = [psp; 4];
        for i in 0..3 {
            lat[i] = self.laterals[i].apply(tape, levels[i])?;
        }
        for i in (1..4).rev() {
            let target = tape.value(lat[i - 1]);
            let (h, w) = (target.height(), target.width());
            let up = tape.resize(lat[i], h, w);
            lat[i - 1] = tape.add(lat[i - 1], up)?;
        }
        let mut outs = lat;
        for i in 0..3 {
            outs[i] = self.fpn_convs[i].apply(tape, lat[i])?;
        }
        let (h0, w0) = (tape.value(outs[0]).height(), tape.value(outs[0]).width());
        for out in outs.iter_mut().skip(1) {
            *out = tape.resize(*out, h0, w0);
        }
        let cat = tape.concat(&outs)?;
        self.fpn_bottleneck.apply(tape, cat)
    }

    fn record(&self, tape: &mut Tape, input: Tensor) -> Result<NodeId> {
        self.check_input(&input)?;
        let (h, w) = (input.height(), input.width());
        let x = tape.input(input);
        let levels = self.backbone_nodes(tape, x)?;
        let fused = self.decoder_nodes(tape, levels)?;
        let logits = self.classifier.apply(tape, fused)?;
        Ok(tape.resize(logits, h, w))
    }

    /// Records a full forward pass; the returned node holds `N × K × H × W`
    /// raw logits.
    pub fn forward<'p>(&self, params: &'p ParamSet, input: Tensor) -> Result<(Tape<'p>, NodeId)> {
        self.check_params(params)?;
        let mut tape = Tape::new(params);
        let out = self.record(&mut tape, input)?;
        Ok((tape, out))
    }

    pub fn segment(&self, params: &ParamSet, input: Tensor) -> Result<Tensor> {
        let (tape, out) = self.forward(params, input)?;
        Ok(tape.into_value(out))
    }

    pub fn backbone_forward(&self, params: &ParamSet, input: Tensor) -> Result<FeaturePyramid> {
        self.check_params(params)?;
        let [_, c, h, w] = input.shape();
        if c != 3 || h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} with {c} channels: need 3 channels and sides divisible by 32"
            )));
        }
        let mut tape = Tape::new(params);
        let x = tape.input(input);
        let levels = self.backbone_nodes(&mut tape, x)?;
        Ok(FeaturePyramid {
            levels: levels.map(|id| tape.value(id).clone()),
        })
    }

    /// Fused stride-4 features with `decoder_channels` channels.
    pub fn decoder_forward(&self, params: &ParamSet, pyramid: &FeaturePyramid) -> Result<Tensor> {
        self.check_params(params)?;
        for (i, level) in pyramid.levels.iter().enumerate() {
            if level.channels() != self.cfg.backbone_channels[i] {
                return Err(Error::Shape(format!(
                    "pyramid level {i} has {} channels, config says {}",
                    level.channels(),
                    self.cfg.backbone_channels[i]
                )));
            }
        }
        let mut tape = Tape::new(params);
        let ids = pyramid.levels.clone().map(|t| tape.input(t));
        let fused = self.decoder_nodes(&mut tape, ids)?;
        Ok(tape.into_value(fused))
    }
}

/// Scales images to the unit interval and applies per-channel
/// normalization, stacking them into an `N × 3 × H × W` tensor.
pub fn normalize_batch(images: &[Image], cfg: &ModelConfig) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut t = Tensor::zeros([images.len(), 3, h, w]);
    for (n, img) in images.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(Error::Shape(format!(
                "batch mixes {h}x{w} and {}x{} images",
                img.height(),
                img.width()
            )));
        }
        for (p, px) in img.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                let v = (px[c] as f64 / 255.0 - cfg.input_mean[c]) / cfg.input_std[c];
                t.data_mut()[(n * 3 + c) * h * w + p] = v;
            }
        }
    }
    Ok(t)
}
