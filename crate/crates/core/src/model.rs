//! The four networks: source encoder, target encoder, shared classifier
//! and domain discriminator.
//!
//! Both encoders are two affine layers with a Leaky ReLU after each one and
//! map their own input width into the shared `common_dim` space. The
//! classifier and the discriminator are single affine layers over that
//! space; the discriminator is followed by a logistic squashing.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::{ops, Matrix, Tape, Var};
use crate::rng::{self, Stream};

/// Discriminator outputs are clamped to `[DISC_CLAMP, 1 - DISC_CLAMP]`.
pub const DISC_CLAMP: f64 = 1e-7;

pub const DEFAULT_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelShape {
    pub source_dim: usize,
    pub target_dim: usize,
    pub hidden: usize,
    pub common_dim: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("source_dim", self.source_dim),
            ("target_dim", self.target_dim),
            ("hidden", self.hidden),
            ("common_dim", self.common_dim),
            ("classes", self.classes),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Symmetric uniform fan-based weights, zero biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSpec {
    pub seed: u64,
}

/// Which side of the minimax game a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    EncoderClassifier,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    fn init(fan_in: usize, fan_out: usize, rng: &mut rng::Rng) -> Self {
        let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weight: Matrix::new(fan_in, fan_out, data).expect("length matches shape"),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.affine(&self.weight, &self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub first: Layer,
    pub second: Layer,
}

impl Encoder {
    fn forward(&self, x: &Matrix, slope: f64) -> Result<Matrix> {
        let h = ops::leaky_relu(&self.first.forward(x)?, slope)?;
        ops::leaky_relu(&self.second.forward(&h)?, slope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsanModel {
    shape: ModelShape,
    slope: f64,
    pub source_encoder: Encoder,
    pub target_encoder: Encoder,
    pub classifier: Layer,
    pub discriminator: Layer,
}

pub const PARAM_NAMES: [&str; 12] = [
    "classifier.bias",
    "classifier.weight",
    "discriminator.bias",
    "discriminator.weight",
    "source_encoder.0.bias",
    "source_encoder.0.weight",
    "source_encoder.1.bias",
    "source_encoder.1.weight",
    "target_encoder.0.bias",
    "target_encoder.0.weight",
    "target_encoder.1.bias",
    "target_encoder.1.weight",
];

pub fn player_of(name: &str) -> Player {
    if name.starts_with("discriminator.") {
        Player::Discriminator
    } else {
        Player::EncoderClassifier
    }
}

impl SsanModel {
    /// Draws every weight uniformly in `±sqrt(6 / (fan_in + fan_out))`,
    /// layer by layer from the seed's init stream. Biases start at zero.
    pub fn init(shape: ModelShape, init: &InitSpec) -> Result<Self> {
        shape.validate()?;
        let mut rng = rng::stream(init.seed, Stream::Init);
        let source_encoder = Encoder {
            first: Layer::init(shape.source_dim, shape.hidden, &mut rng),
            second: Layer::init(shape.hidden, shape.common_dim, &mut rng),
        };
        let target_encoder = Encoder {
            first: Layer::init(shape.target_dim, shape.hidden, &mut rng),
            second: Layer::init(shape.hidden, shape.common_dim, &mut rng),
        };
        let classifier = Layer::init(shape.common_dim, shape.classes, &mut rng);
        let discriminator = Layer::init(shape.common_dim, 1, &mut rng);
        Ok(Self {
            shape,
            slope: DEFAULT_SLOPE,
            source_encoder,
            target_encoder,
            classifier,
            discriminator,
        })
    }

    pub fn with_slope(mut self, slope: f64) -> Result<Self> {
        ops::check_slope(slope)?;
        self.slope = slope;
        Ok(self)
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Parameters in [`PARAM_NAMES`] order.
    pub fn params(&self) -> [(&'static str, &Matrix); 12] {
        [
            ("classifier.bias", &self.classifier.bias),
            ("classifier.weight", &self.classifier.weight),
            ("discriminator.bias", &self.discriminator.bias),
            ("discriminator.weight", &self.discriminator.weight),
            ("source_encoder.0.bias", &self.source_encoder.first.bias),
            ("source_encoder.0.weight", &self.source_encoder.first.weight),
            ("source_encoder.1.bias", &self.source_encoder.second.bias),
            ("source_encoder.1.weight", &self.source_encoder.second.weight),
            ("target_encoder.0.bias", &self.target_encoder.first.bias),
            ("target_encoder.0.weight", &self.target_encoder.first.weight),
            ("target_encoder.1.bias", &self.target_encoder.second.bias),
            ("target_encoder.1.weight", &self.target_encoder.second.weight),
        ]
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Matrix); 12] {
        [
            ("classifier.bias", &mut self.classifier.bias),
            ("classifier.weight", &mut self.classifier.weight),
            ("discriminator.bias", &mut self.discriminator.bias),
            ("discriminator.weight", &mut self.discriminator.weight),
            ("source_encoder.0.bias", &mut self.source_encoder.first.bias),
            ("source_encoder.0.weight", &mut self.source_encoder.first.weight),
            ("source_encoder.1.bias", &mut self.source_encoder.second.bias),
            ("source_encoder.1.weight", &mut self.source_encoder.second.weight),
            ("target_encoder.0.bias", &mut self.target_encoder.first.bias),
            ("target_encoder.0.weight", &mut self.target_encoder.first.weight),
            ("target_encoder.1.bias", &mut self.target_encoder.second.bias),
            ("target_encoder.1.weight", &mut self.target_encoder.second.weight),
        ]
    }

    /// Rebuilds a model from named parameters, checking every shape.
    pub fn from_params<'a>(
        shape: ModelShape,
        slope: f64,
        params: impl IntoIterator<Item = (&'a str, Matrix)>,
    ) -> Result<Self> {
        let mut model = Self::init(shape, &InitSpec { seed: 0 })?.with_slope(slope)?;
        let mut seen = Vec::new();
        for (name, value) in params {
            let slot = model
                .params_mut()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, m)| m)
                .ok_or_else(|| Error::Parameter(format!("unknown parameter {name:?}")))?;
            if slot.shape() != value.shape() {
                return Err(Error::Dimension {
                    op: "SsanModel::from_params",
                    lhs: slot.shape(),
                    rhs: value.shape(),
                });
            }
            *slot = value;
            seen.push(name);
        }
        for name in PARAM_NAMES {
            if !seen.contains(&name) {
                return Err(Error::Parameter(format!("missing parameter {name:?}")));
            }
        }
        Ok(model)
    }

    fn check_width(&self, x: &Matrix, width: usize, op: &'static str) -> Result<()> {
        if x.cols() != width {
            return Err(Error::Dimension {
                op,
                lhs: x.shape(),
                rhs: (x.rows(), width),
            });
        }
        Ok(())
    }

    /// `f_S`: source features into the common space.
    pub fn encode_source(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x, self.shape.source_dim, "encode_source")?;
        self.source_encoder.forward(x, self.slope)
    }

    /// `f_T`: target features into the common space.
    pub fn encode_target(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x, self.shape.target_dim, "encode_target")?;
        self.target_encoder.forward(x, self.slope)
    }

    /// Raw class logits for common-space features of either domain.
    pub fn classify(&self, z: &Matrix) -> Result<Matrix> {
        self.check_width(z, self.shape.common_dim, "classify")?;
        self.classifier.forward(z)
    }

    /// Probability that each row comes from the source domain.
    pub fn discriminate(&self, z: &Matrix) -> Result<Matrix> {
        self.check_width(z, self.shape.common_dim, "discriminate")?;
        let p = ops::sigmoid(&self.discriminator.forward(z)?);
        Ok(p.map(|v| v.clamp(DISC_CLAMP, 1.0 - DISC_CLAMP)))
    }

    /// Predicted classes for raw target features.
    pub fn predict_target(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.classify(&self.encode_target(x)?)?.argmax_rows())
    }

    /// Registers every parameter on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> Result<ModelVars> {
        let mut reg = |layer: &Layer, prefix: &str| -> Result<LayerVars> {
            Ok(LayerVars {
                weight: tape.param(&format!("{prefix}.weight"), layer.weight.clone())?,
                bias: tape.param(&format!("{prefix}.bias"), layer.bias.clone())?,
            })
        };
        Ok(ModelVars {
            shape: self.shape,
            slope: self.slope,
            source: [
                reg(&self.source_encoder.first, "source_encoder.0")?,
                reg(&self.source_encoder.second, "source_encoder.1")?,
            ],
            target: [
                reg(&self.target_encoder.first, "target_encoder.0")?,
                reg(&self.target_encoder.second, "target_encoder.1")?,
            ],
            classifier: reg(&self.classifier, "classifier")?,
            discriminator: reg(&self.discriminator, "discriminator")?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerVars {
    weight: Var,
    bias: Var,
}

impl LayerVars {
    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.affine(x, self.weight, self.bias)
    }
}

/// Tape handles for every model parameter, with differentiable forward passes.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    shape: ModelShape,
    slope: f64,
    source: [LayerVars; 2],
    target: [LayerVars; 2],
    classifier: LayerVars,
    discriminator: LayerVars,
}

impl ModelVars {
    /// Rebuilds handles from leaves registered under the canonical names.
    pub fn from_vars(shape: ModelShape, slope: f64, vars: &crate::numerics::ParamVars) -> Result<Self> {
        let get = |name: &str| -> Result<Var> {
            vars.get(name)
                .copied()
                .ok_or_else(|| Error::Parameter(format!("missing parameter {name:?}")))
        };
        let layer = |prefix: &str| -> Result<LayerVars> {
            Ok(LayerVars {
                weight: get(&format!("{prefix}.weight"))?,
                bias: get(&format!("{prefix}.bias"))?,
            })
        };
        Ok(Self {
            shape,
            slope,
            source: [layer("source_encoder.0")?, layer("source_encoder.1")?],
            target: [layer("target_encoder.0")?, layer("target_encoder.1")?],
            classifier: layer("classifier")?,
            discriminator: layer("discriminator")?,
        })
    }

    fn encode(&self, tape: &mut Tape, layers: &[LayerVars; 2], x: Var, width: usize, op: &'static str) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        if cols != width {
            return Err(Error::Dimension {
                op,
                lhs: (rows, cols),
                rhs: (rows, width),
            });
        }
        let h = layers[0].forward(tape, x)?;
        let h = tape.leaky_relu(h, self.slope)?;
        let z = layers[1].forward(tape, h)?;
        tape.leaky_relu(z, self.slope)
    }

    pub fn encode_source(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let layers = self.source;
        self.encode(tape, &layers, x, self.shape.source_dim, "encode_source")
    }

    pub fn encode_target(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let layers = self.target;
        self.encode(tape, &layers, x, self.shape.target_dim, "encode_target")
    }

    pub fn classify(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        self.classifier.forward(tape, z)
    }

    /// Clamped discriminator probabilities.
    pub fn discriminate(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let logit = self.discriminator.forward(tape, z)?;
        let p = tape.sigmoid(logit);
        Ok(tape.clamp(p, DISC_CLAMP, 1.0 - DISC_CLAMP))
    }
}
