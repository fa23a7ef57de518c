use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BatchNorm2d, Bottleneck, BottleneckSpec, Conv2d, ConvGeom, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Param, Relu};
use crate::gabor::{GaborBank, GaborConv};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Real, Result, Tensor};

/// One residual stage: `blocks` bottlenecks, the first carrying `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub width: usize,
    pub out_channels: usize,
    pub blocks: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub use_gabor: bool,
    pub use_se: bool,
    pub cardinality: usize,
    pub num_classes: usize,
    pub stem_width: usize,
    pub stages: Vec<StageSpec>,
    pub se_reduction: usize,
    pub input_size: usize,
}

impl Default for ModelConfig {
    /// The 26-layer network: 64-wide 7x7 stem, then stages Conv2..Conv5.
    fn default() -> Self {
        let stage = |width, out_channels, stride| StageSpec {
            width,
            out_channels,
            blocks: 2,
            stride,
        };
        Self {
            use_gabor: true,
            use_se: true,
            cardinality: 32,
            num_classes: 4,
            stem_width: 64,
            stages: vec![stage(128, 256, 1), stage(256, 512, 2), stage(512, 1024, 2), stage(1024, 2048, 2)],
            se_reduction: 16,
            input_size: 256,
        }
    }
}

impl ModelConfig {
    /// Same topology with every width divided by `factor` and a smaller
    /// input, for CPU-budget experiments.
    pub fn scaled(factor: usize, cardinality: usize, input_size: usize) -> Self {
        let full = Self::default();
        Self {
            cardinality,
            stem_width: full.stem_width / factor,
            stages: full
                .stages
                .iter()
                .map(|s| StageSpec {
                    width: s.width / factor,
                    out_channels: s.out_channels / factor,
                    ..*s
                })
                .collect(),
            input_size,
            ..full
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.stages.last().map_or(self.stem_width, |s| s.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if self.stem_width == 0 || self.stages.is_empty() {
            return Err(Error::invalid("model needs a stem and at least one stage"));
        }
        if self.input_size < 8 {
            return Err(Error::invalid("input size must be at least 8"));
        }
        for s in &self.stages {
            if s.blocks == 0 || s.stride == 0 {
                return Err(Error::invalid("stage blocks and stride must be positive"));
            }
            if self.cardinality == 0 || s.width % self.cardinality != 0 {
                return Err(Error::invalid(format!(
                    "cardinality {} does not divide stage width {}",
                    self.cardinality, s.width
                )));
            }
            if self.use_se && (s.out_channels % self.se_reduction != 0 || self.se_reduction > s.out_channels) {
                return Err(Error::invalid(format!(
                    "SE reduction {} does not divide stage output {}",
                    self.se_reduction, s.out_channels
                )));
            }
        }
        Ok(())
    }
}

/// First layer: learnable Gabor bank or a plain He-normal 7x7 convolution.
#[derive(Debug, Clone)]
pub enum Stem<T> {
    Gabor(GaborConv<T>),
    Plain(Conv2d<T>),
}

impl<T: Real> Stem<T> {
    fn layer(&mut self) -> &mut dyn Layer<T> {
        match self {
            Stem::Gabor(g) => g,
            Stem::Plain(c) => c,
        }
    }

    fn layer_ref(&self) -> &dyn Layer<T> {
        match self {
            Stem::Gabor(g) => g,
            Stem::Plain(c) => c,
        }
    }

    /// First-layer weights as `n x 1 x 7 x 7`.
    pub fn weights(&self) -> Tensor<T> {
        match self {
            Stem::Gabor(g) => g.weights(),
            Stem::Plain(c) => c.weight.value.clone(),
        }
    }
}

/// Name and `(channels, height, width)` of one stage output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageShape {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct GseResNeXt<T> {
    pub config: ModelConfig,
    pub stem: Stem<T>,
    stem_bn: BatchNorm2d<T>,
    stem_relu: Relu,
    pool: MaxPool2d,
    pub stages: Vec<Vec<Bottleneck<T>>>,
    gap: GlobalAvgPool,
    pub fc: Linear<T>,
}

impl<T: Real> GseResNeXt<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(derive_seed(seed, "model"));
        let stem = if config.use_gabor {
            Stem::Gabor(GaborConv::new("stem.gabor", &GaborBank::init(config.stem_width)?)?)
        } else {
            let mut c = Conv2d::he_normal("stem.conv", 1, config.stem_width, 7, ConvGeom::new(2, 3, 1), &mut rng);
            c.input_grad = false;
            Stem::Plain(c)
        };
        let mut stages = Vec::with_capacity(config.stages.len());
        let mut c_in = config.stem_width;
        for (si, s) in config.stages.iter().enumerate() {
            let mut blocks = Vec::with_capacity(s.blocks);
            for b in 0..s.blocks {
                let spec = BottleneckSpec {
                    in_channels: c_in,
                    width: s.width,
                    out_channels: s.out_channels,
                    stride: if b == 0 { s.stride } else { 1 },
                    cardinality: config.cardinality,
                    se_reduction: config.use_se.then_some(config.se_reduction),
                };
                blocks.push(Bottleneck::new(&format!("conv{}.{b}", si + 2), spec, &mut rng)?);
                c_in = s.out_channels;
            }
            stages.push(blocks);
        }
        Ok(Self {
            config: config.clone(),
            stem,
            stem_bn: BatchNorm2d::new("stem.bn", config.stem_width),
            stem_relu: Relu::new(),
            pool: MaxPool2d::new(3, 2, 1),
            stages,
            gap: GlobalAvgPool::new(),
            fc: Linear::new("fc", c_in, config.num_classes, &mut rng),
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != 1 || h < 7 || w < 7 {
            return Err(Error::shape(
                "model input",
                x.shape(),
                &[0, 1, self.config.input_size, self.config.input_size],
            ));
        }
        Ok(())
    }

    /// Runs everything up to the global average pool, calling `trace` with
    /// each stage output.
    fn features(&mut self, x: &Tensor<T>, mode: Mode, mut trace: impl FnMut(&str, &Tensor<T>)) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let h = self.stem.layer().forward(x, mode)?;
        trace("conv1", &h);
        let h = self.stem_bn.forward(&h, mode)?;
        let h = self.stem_relu.forward(&h, mode)?;
        let mut h = self.pool.forward(&h, mode)?;
        trace("maxpool", &h);
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for block in stage.iter_mut() {
                h = block.forward(&h, mode)?;
            }
            trace(&format!("conv{}", si + 2), &h);
        }
        let z = self.gap.forward(&h, mode)?;
        trace("avgpool", &z);
        Ok(z)
    }

    /// Logits `N x num_classes`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let z = self.features(x, mode, |_, _| {})?;
        self.fc.forward(&z, mode)
    }

    /// Pooled Conv5 features (`N x latent_dim`), evaluated in eval mode.
    pub fn extract_latent(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.features(x, Mode::Eval, |_, _| {})
    }

    /// Logits and latent features from one eval-mode pass.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let z = self.features(x, Mode::Eval, |_, _| {})?;
        let logits = self.fc.forward(&z, Mode::Eval)?;
        Ok((logits, z))
    }

    /// Output shapes of each stage for an eval-mode pass over `x`, ending
    /// with the logits.
    pub fn trace_shapes(&mut self, x: &Tensor<T>) -> Result<Vec<StageShape>> {
        let mut out = Vec::new();
        let z = self.features(x, Mode::Eval, |name, t| {
            let s = t.shape();
            let (h, w) = if s.len() == 4 { (s[2], s[3]) } else { (1, 1) };
            out.push(StageShape {
                name: name.into(),
                channels: s[1],
                height: h,
                width: w,
            });
        })?;
        let logits = self.fc.forward(&z, Mode::Eval)?;
        out.push(StageShape {
            name: "fc".into(),
            channels: logits.dim(1),
            height: 1,
            width: 1,
        });
        Ok(out)
    }

    /// Backward pass from `dL/dlogits`. Parameter gradients accumulate.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<()> {
        let dz = self.fc.backward(dlogits)?;
        let mut dh = self.gap.backward(&dz)?;
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                dh = block.backward(&dh)?;
            }
        }
        let dh = self.pool.backward(&dh)?;
        let dh = self.stem_relu.backward(&dh)?;
        let dh = self.stem_bn.backward(&dh)?;
        self.stem.layer().backward(&dh)?;
        Ok(())
    }

    /// Learnable scalars in the first layer.
    pub fn first_layer_learnable(&self) -> usize {
        self.stem.layer_ref().num_learnable()
    }

    pub fn param_count(&self) -> usize {
        self.num_learnable()
    }
}

impl<T: Real> Layer<T> for GseResNeXt<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        GseResNeXt::forward(self, x, mode)
    }

    /// Returns a placeholder: the input gradient of the first layer is not
    /// computed.
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        GseResNeXt::backward(self, dy)?;
        Ok(Tensor::zeros(&[1]))
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        self.stem.layer_ref().params(out);
        self.stem_bn.params(out);
        for b in self.stages.iter().flatten() {
            b.params(out);
        }
        self.fc.params(out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        match &mut self.stem {
            Stem::Gabor(g) => g.params_mut(out),
            Stem::Plain(c) => c.params_mut(out),
        }
        self.stem_bn.params_mut(out);
        for b in self.stages.iter_mut().flatten() {
            b.params_mut(out);
        }
        self.fc.params_mut(out);
    }
}
