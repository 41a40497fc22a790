//! Flat unconstrained parameter vector with a named segment layout.
//!
//! Every trainable quantity lives in one contiguous vector of raw reals; a
//! per-segment transform (softplus for non-negative weights, sigmoid for
//! probabilities, identity for everything else) maps raw values to model
//! space. Optimizers see only the raw vector.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::encoder::{Activation, EncoderParams, Layer};
use crate::error::{NorError, Result};
use crate::model::ModelParams;
use crate::tape::{softplus_inv, stable_sigmoid, stable_softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    ThetaRaw,
    Theta0Raw,
    MuRaw,
    EncoderWeight(usize),
    EncoderBias(usize),
    SviLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Softplus,
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub len: usize,
    pub transform: Transform,
    pub trainable: bool,
}

/// Segment map covering the raw vector exactly, in order, without overlap.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub total: usize,
}

impl Layout {
    pub fn push(&mut self, kind: SegmentKind, len: usize, transform: Transform, trainable: bool) {
        self.segments.push(Segment {
            kind,
            offset: self.total,
            len,
            transform,
            trainable,
        });
        self.total += len;
    }

    pub fn find(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    pub fn range(&self, kind: SegmentKind) -> Option<std::ops::Range<usize>> {
        self.find(kind).map(|s| s.offset..s.offset + s.len)
    }
}

#[derive(Debug, Clone)]
pub struct FlatParams {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl FlatParams {
    pub fn zeros(layout: Layout) -> Self {
        FlatParams {
            values: vec![0.0; layout.total],
            layout,
        }
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&[f64]> {
        self.layout.range(kind).map(|r| &self.values[r])
    }

    pub fn segment_mut(&mut self, kind: SegmentKind) -> Option<&mut [f64]> {
        self.layout.range(kind).map(|r| &mut self.values[r])
    }

    /// Zeroes gradient entries belonging to frozen segments.
    pub fn mask_frozen(&self, grads: &mut [f64]) {
        for seg in &self.layout.segments {
            if !seg.trainable {
                for g in &mut grads[seg.offset..seg.offset + seg.len] {
                    *g = 0.0;
                }
            }
        }
    }
}

pub fn apply_transform(t: Transform, raw: f64) -> f64 {
    match t {
        Transform::Softplus => stable_softplus(raw),
        Transform::Sigmoid => stable_sigmoid(raw),
        Transform::Identity => raw,
    }
}

/// Shape of the generative-parameter segments.
#[derive(Debug, Clone, Copy)]
pub struct GenShape {
    pub d: usize,
    pub k: usize,
}

/// Builds the layout for a training run. Encoder widths include input and
/// output. When `svi_rows > 0`, one K-wide logit row is appended per datum.
pub fn build_layout(
    shape: GenShape,
    encoder_widths: Option<&[usize]>,
    learn_generative: bool,
    learn_mu: bool,
    svi_rows: usize,
) -> Layout {
    let mut layout = Layout::default();
    layout.push(
        SegmentKind::ThetaRaw,
        shape.d * shape.k,
        Transform::Softplus,
        learn_generative,
    );
    layout.push(
        SegmentKind::Theta0Raw,
        shape.d,
        Transform::Softplus,
        learn_generative,
    );
    layout.push(SegmentKind::MuRaw, shape.k, Transform::Sigmoid, learn_mu);
    if let Some(widths) = encoder_widths {
        for (li, w) in widths.windows(2).enumerate() {
            layout.push(
                SegmentKind::EncoderWeight(li),
                w[0] * w[1],
                Transform::Identity,
                true,
            );
            layout.push(SegmentKind::EncoderBias(li), w[1], Transform::Identity, true);
        }
    }
    if svi_rows > 0 {
        layout.push(
            SegmentKind::SviLogits,
            svi_rows * shape.k,
            Transform::Identity,
            true,
        );
    }
    layout
}

/// Fills generative segments: couplings log-uniform in [0.05, 0.5], leaks
/// log-uniform in [0.005, 0.02] (small so the activation floor is not
/// saturated at initialization), prior probabilities at `mu_init`.
pub fn init_generative<R: Rng>(flat: &mut FlatParams, shape: GenShape, mu_init: f64, rng: &mut R) {
    let log_range = |rng: &mut R, lo: f64, hi: f64| {
        let u: f64 = rng.random();
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    };
    let theta: Vec<f64> = (0..shape.d * shape.k)
        .map(|_| softplus_inv(log_range(rng, 0.05, 0.5)))
        .collect();
    flat.segment_mut(SegmentKind::ThetaRaw)
        .expect("theta segment")
        .copy_from_slice(&theta);
    let theta0: Vec<f64> = (0..shape.d)
        .map(|_| softplus_inv(log_range(rng, 0.005, 0.02)))
        .collect();
    flat.segment_mut(SegmentKind::Theta0Raw)
        .expect("theta0 segment")
        .copy_from_slice(&theta0);
    let mu_raw = (mu_init / (1.0 - mu_init)).ln();
    for v in flat.segment_mut(SegmentKind::MuRaw).expect("mu segment") {
        *v = mu_raw;
    }
}

/// Copies true generative parameters into the raw vector through the
/// inverse transforms. Weights of exactly zero are represented by a large
/// negative raw value (softplus cannot produce 0 exactly).
pub fn load_generative(flat: &mut FlatParams, params: &ModelParams) {
    const RAW_ZERO: f64 = -40.0;
    let inv = |v: f64| if v > 0.0 { softplus_inv(v) } else { RAW_ZERO };
    let theta: Vec<f64> = params.theta.iter().map(|&v| inv(v)).collect();
    flat.segment_mut(SegmentKind::ThetaRaw)
        .expect("theta segment")
        .copy_from_slice(&theta);
    let theta0: Vec<f64> = params.theta0.iter().map(|&v| inv(v)).collect();
    flat.segment_mut(SegmentKind::Theta0Raw)
        .expect("theta0 segment")
        .copy_from_slice(&theta0);
    let mu: Vec<f64> = params.mu.iter().map(|&m| (m / (1.0 - m)).ln()).collect();
    flat.segment_mut(SegmentKind::MuRaw)
        .expect("mu segment")
        .copy_from_slice(&mu);
}

/// Fills encoder segments with Xavier-uniform weights and zero biases.
pub fn init_encoder_flat<R: Rng>(flat: &mut FlatParams, widths: &[usize], rng: &mut R) {
    for (li, w) in widths.windows(2).enumerate() {
        let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
        let weights: Vec<f64> = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect();
        flat.segment_mut(SegmentKind::EncoderWeight(li))
            .expect("encoder weights")
            .copy_from_slice(&weights);
        // biases stay zero
    }
}

/// Extracts transformed generative parameters.
pub fn params_from_flat(flat: &FlatParams, shape: GenShape) -> Result<ModelParams> {
    let theta_raw = flat
        .segment(SegmentKind::ThetaRaw)
        .ok_or_else(|| NorError::Config("layout has no theta segment".into()))?;
    let theta0_raw = flat
        .segment(SegmentKind::Theta0Raw)
        .ok_or_else(|| NorError::Config("layout has no theta0 segment".into()))?;
    let mu_raw = flat
        .segment(SegmentKind::MuRaw)
        .ok_or_else(|| NorError::Config("layout has no mu segment".into()))?;
    let theta = Array2::from_shape_vec(
        (shape.d, shape.k),
        theta_raw.iter().map(|&v| stable_softplus(v)).collect(),
    )
    .map_err(|e| NorError::DimMismatch(e.to_string()))?;
    let theta0 = Array1::from(theta0_raw.iter().map(|&v| stable_softplus(v)).collect::<Vec<_>>());
    let mu = Array1::from(mu_raw.iter().map(|&v| stable_sigmoid(v)).collect::<Vec<_>>());
    ModelParams::new(theta, theta0, mu)
}

/// Extracts the encoder described by `widths` with the given activations.
pub fn encoder_from_flat(
    flat: &FlatParams,
    widths: &[usize],
    hidden_act: Activation,
    final_act: Activation,
) -> Result<EncoderParams> {
    let n_layers = widths.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (li, w) in widths.windows(2).enumerate() {
        let weights = flat
            .segment(SegmentKind::EncoderWeight(li))
            .ok_or_else(|| NorError::Config(format!("layout has no weights for layer {li}")))?;
        let bias = flat
            .segment(SegmentKind::EncoderBias(li))
            .ok_or_else(|| NorError::Config(format!("layout has no bias for layer {li}")))?;
        layers.push(Layer {
            w: Array2::from_shape_vec((w[1], w[0]), weights.to_vec())
                .map_err(|e| NorError::DimMismatch(e.to_string()))?,
            b: Array1::from(bias.to_vec()),
            act: if li + 1 == n_layers { final_act } else { hidden_act },
        });
    }
    let enc = EncoderParams { layers };
    enc.validate()?;
    Ok(enc)
}
