use alloc::format;
use alloc::vec::Vec;

use super::{BatchNorm2d, Conv2d, ConvGeom, Layer, Mode, Param, Relu, SqueezeExcite};
use crate::rng::Rng;
use crate::{Error, Real, Result, Tensor};

/// Shape of one bottleneck block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BottleneckSpec {
    pub in_channels: usize,
    /// Channel count of the grouped 3x3 convolution.
    pub width: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub cardinality: usize,
    /// SE reduction ratio; `None` drops the SE gate.
    pub se_reduction: Option<usize>,
}

impl BottleneckSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.width == 0 || self.out_channels == 0 || self.stride == 0 {
            return Err(Error::invalid("bottleneck channel counts and stride must be positive"));
        }
        if self.cardinality == 0 || !self.width.is_multiple_of(self.cardinality) {
            return Err(Error::invalid(format!(
                "cardinality {} does not divide grouped width {}",
                self.cardinality, self.width
            )));
        }
        Ok(())
    }

    fn needs_projection(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }
}

#[derive(Debug, Clone)]
struct Projection<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
}

/// ResNeXt bottleneck: 1x1 reduce, grouped 3x3 (carrying the stride), 1x1
/// expand with a zero-initialised final BN scale, optional SE gate, then the
/// residual sum and a ReLU. The shortcut is the identity when shapes agree,
/// otherwise a strided 1x1 projection followed by BN.
#[derive(Debug, Clone)]
pub struct Bottleneck<T> {
    pub spec: BottleneckSpec,
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    relu2: Relu,
    conv3: Conv2d<T>,
    bn3: BatchNorm2d<T>,
    pub se: Option<SqueezeExcite<T>>,
    shortcut: Option<Projection<T>>,
    relu_out: Relu,
}

impl<T: Real> Bottleneck<T> {
    pub fn new(name: &str, spec: BottleneckSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let one = ConvGeom::new(1, 0, 1);
        let conv1 = Conv2d::he_normal(format!("{name}.conv1"), spec.in_channels, spec.width, 1, one, rng);
        let conv2 = Conv2d::he_normal(
            format!("{name}.conv2"),
            spec.width,
            spec.width,
            3,
            ConvGeom::new(spec.stride, 1, spec.cardinality),
            rng,
        );
        let conv3 = Conv2d::he_normal(format!("{name}.conv3"), spec.width, spec.out_channels, 1, one, rng);
        let se = match spec.se_reduction {
            Some(r) => Some(SqueezeExcite::new(&format!("{name}.se"), spec.out_channels, r, rng)?),
            None => None,
        };
        let shortcut = spec.needs_projection().then(|| Projection {
            conv: Conv2d::he_normal(
                format!("{name}.shortcut.conv"),
                spec.in_channels,
                spec.out_channels,
                1,
                ConvGeom::new(spec.stride, 0, 1),
                rng,
            ),
            bn: BatchNorm2d::new(&format!("{name}.shortcut.bn"), spec.out_channels),
        });
        Ok(Self {
            spec,
            conv1,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), spec.width),
            relu1: Relu::new(),
            conv2,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), spec.width),
            relu2: Relu::new(),
            conv3,
            bn3: BatchNorm2d::with_gamma(&format!("{name}.bn3"), spec.out_channels, T::zero()),
            se,
            shortcut,
            relu_out: Relu::new(),
        })
    }

    /// Final BN of the residual branch (zero scale at construction).
    pub fn last_bn_mut(&mut self) -> &mut BatchNorm2d<T> {
        &mut self.bn3
    }
}

impl<T: Real> Layer<T> for Bottleneck<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.spec.in_channels {
            return Err(Error::shape("bottleneck", x.shape(), &[0, self.spec.in_channels, 0, 0]));
        }
        let h = self.conv1.forward(x, mode)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.relu1.forward(&h, mode)?;
        let h = self.conv2.forward(&h, mode)?;
        let h = self.bn2.forward(&h, mode)?;
        let h = self.relu2.forward(&h, mode)?;
        let h = self.conv3.forward(&h, mode)?;
        let mut h = self.bn3.forward(&h, mode)?;
        if let Some(se) = &mut self.se {
            h = se.forward(&h, mode)?;
        }
        let sum = match &mut self.shortcut {
            Some(p) => {
                let s = p.conv.forward(x, mode)?;
                let s = p.bn.forward(&s, mode)?;
                h.add(&s)?
            }
            None => h.add(x)?,
        };
        self.relu_out.forward(&sum, mode)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.relu_out.backward(dy)?;
        let mut dh = d.clone();
        if let Some(se) = &mut self.se {
            dh = se.backward(&dh)?;
        }
        let dh = self.bn3.backward(&dh)?;
        let dh = self.conv3.backward(&dh)?;
        let dh = self.relu2.backward(&dh)?;
        let dh = self.bn2.backward(&dh)?;
        let dh = self.conv2.backward(&dh)?;
        let dh = self.relu1.backward(&dh)?;
        let dh = self.bn1.backward(&dh)?;
        let dx = self.conv1.backward(&dh)?;
        let ds = match &mut self.shortcut {
            Some(p) => {
                let ds = p.bn.backward(&d)?;
                p.conv.backward(&ds)?
            }
            None => d,
        };
        dx.add(&ds)
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        self.conv1.params(out);
        self.bn1.params(out);
        self.conv2.params(out);
        self.bn2.params(out);
        self.conv3.params(out);
        self.bn3.params(out);
        if let Some(se) = &self.se {
            se.params(out);
        }
        if let Some(p) = &self.shortcut {
            p.conv.params(out);
            p.bn.params(out);
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        self.conv1.params_mut(out);
        self.bn1.params_mut(out);
        self.conv2.params_mut(out);
        self.bn2.params_mut(out);
        self.conv3.params_mut(out);
        self.bn3.params_mut(out);
        if let Some(se) = &mut self.se {
            se.params_mut(out);
        }
        if let Some(p) = &mut self.shortcut {
            p.conv.params_mut(out);
            p.bn.params_mut(out);
        }
    }
}
