//! Feed-forward inference networks mapping observations to variational
//! parameters.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NorError, Result};
use crate::model::PosteriorFactors;
use crate::tape::{stable_sigmoid, stable_softplus};

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => stable_sigmoid(x),
            Activation::Softplus => stable_softplus(x),
            Activation::Identity => x,
        }
    }
}

/// One dense layer: `act(w x + b)` with `w` stored as `out x in` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

/// Weights of an inference network.
///
/// The output width is D for a network predicting bound parameters (one
/// `psi_i` per observed dimension, softplus head) and K for a network
/// predicting posterior probabilities (sigmoid head).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
}

impl EncoderParams {
    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.ncols())
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(NorError::Config("encoder needs at least one layer".into()));
        }
        let mut width = self.in_dim();
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.w.ncols() != width {
                return Err(NorError::DimMismatch(format!(
                    "layer {li} expects input width {}, previous layer produces {width}",
                    layer.w.ncols()
                )));
            }
            if layer.b.len() != layer.w.nrows() {
                return Err(NorError::DimMismatch(format!(
                    "layer {li} bias length {} does not match {} outputs",
                    layer.b.len(),
                    layer.w.nrows()
                )));
            }
            width = layer.w.nrows();
        }
        Ok(())
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(NorError::DimMismatch(format!(
                "input has length {}, encoder expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.w.nrows());
            for (row, &b) in layer.w.rows().into_iter().zip(layer.b.iter()) {
                let mut pre = b;
                for (wj, xj) in row.iter().zip(&cur) {
                    pre += wj * xj;
                }
                next.push(layer.act.apply(pre));
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn to_json(&self) -> String {
        let file = EncoderFile {
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: l.b.to_vec(),
                    act: l.act,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("encoder serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EncoderFile =
            serde_json::from_str(text).map_err(|e| NorError::Format(e.to_string()))?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for lf in file.layers {
            let rows = lf.w.len();
            let cols = lf.w.first().map_or(0, |r| r.len());
            if lf.w.iter().any(|r| r.len() != cols) {
                return Err(NorError::Format("ragged weight matrix".into()));
            }
            let flat: Vec<f64> = lf.w.into_iter().flatten().collect();
            layers.push(Layer {
                w: Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| NorError::Format(e.to_string()))?,
                b: Array1::from(lf.b),
                act: lf.act,
            });
        }
        let enc = EncoderParams { layers };
        enc.validate()?;
        Ok(enc)
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

/// Forward pass producing one positive bound parameter per observed
/// dimension. The final nonlinearity must be softplus.
pub fn encode_acp(enc: &EncoderParams, x: &[f64]) -> Result<Vec<f64>> {
    enc.validate()?;
    if enc.layers.last().map(|l| l.act) != Some(Activation::Softplus) {
        return Err(NorError::Config(
            "bound-parameter encoder must end in a softplus layer".into(),
        ));
    }
    enc.forward(x)
}

/// Forward pass producing posterior probabilities in (0, 1). The final
/// nonlinearity must be sigmoid.
pub fn encode_avi(enc: &EncoderParams, x: &[f64]) -> Result<PosteriorFactors> {
    enc.validate()?;
    if enc.layers.last().map(|l| l.act) != Some(Activation::Sigmoid) {
        return Err(NorError::Config(
            "posterior encoder must end in a sigmoid layer".into(),
        ));
    }
    PosteriorFactors::new(Array1::from(enc.forward(x)?))
}

/// Xavier-uniform initialization for the given layer widths.
pub fn init_encoder<R: Rng>(
    widths: &[usize],
    hidden_act: Activation,
    final_act: Activation,
    rng: &mut R,
) -> EncoderParams {
    assert!(widths.len() >= 2, "need at least input and output widths");
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut weights = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            weights.push(rng.random_range(-bound..bound));
        }
        layers.push(Layer {
            w: Array2::from_shape_vec((fan_out, fan_in), weights).expect("shape"),
            b: Array1::zeros(fan_out),
            act: hidden_act,
        });
    }
    layers.last_mut().expect("nonempty").act = final_act;
    EncoderParams { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr1;

    fn const_net(d: usize, act: Activation) -> EncoderParams {
        EncoderParams {
            layers: vec![Layer {
                w: Array2::zeros((d, d)),
                b: Array1::zeros(d),
                act,
            }],
        }
    }

    #[test]
    fn zero_network_gives_softplus_of_zero() {
        let enc = const_net(3, Activation::Softplus);
        let psi = encode_acp(&enc, &[1.0, 0.0, 1.0]).unwrap();
        for p in psi {
            assert_relative_eq!(p, std::f64::consts::LN_2, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_network_gives_half_probabilities() {
        let enc = const_net(2, Activation::Sigmoid);
        let q = encode_avi(&enc, &[1.0, 0.0]).unwrap();
        assert_eq!(q.q, arr1(&[0.5, 0.5]));
    }

    #[test]
    fn identity_layer_with_bias() {
        let mut enc = const_net(2, Activation::Softplus);
        enc.layers[0].w = Array2::eye(2);
        enc.layers[0].b = arr1(&[0.3, -0.7]);
        let psi = encode_acp(&enc, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(psi[0], stable_softplus(1.3), max_relative = 1e-12);
        assert_relative_eq!(psi[1], stable_softplus(0.3), max_relative = 1e-12);
    }

    #[test]
    fn bias_only_network_reproduces_prior() {
        let mu = [0.2f64, 0.8];
        let mut enc = const_net(2, Activation::Sigmoid);
        enc.layers[0].b = arr1(&[
            (mu[0] / (1.0 - mu[0])).ln(),
            (mu[1] / (1.0 - mu[1])).ln(),
        ]);
        let q = encode_avi(&enc, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(q.q[0], mu[0], max_relative = 1e-12);
        assert_relative_eq!(q.q[1], mu[1], max_relative = 1e-12);
    }

    #[test]
    fn wrong_head_is_rejected() {
        let enc = const_net(2, Activation::Sigmoid);
        assert!(encode_acp(&enc, &[0.0, 0.0]).is_err());
        let enc = const_net(2, Activation::Softplus);
        assert!(encode_avi(&enc, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let enc = const_net(2, Activation::Softplus);
        assert!(encode_acp(&enc, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let enc = init_encoder(
            &[4, 6, 3],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        );
        let back = EncoderParams::from_json(&enc.to_json()).unwrap();
        assert_eq!(enc, back);
    }

    #[test]
    fn random_encoder_matches_straight_line_reimplementation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let enc = init_encoder(&[3, 5, 2], Activation::Tanh, Activation::Sigmoid, &mut rng);
        let x = [1.0, 0.0, 1.0];

        // independent straight-line forward pass
        let l0 = &enc.layers[0];
        let mut h = vec![0.0; 5];
        for j in 0..5 {
            let mut s = l0.b[j];
            for i in 0..3 {
                s += l0.w[(j, i)] * x[i];
            }
            h[j] = s.tanh();
        }
        let l1 = &enc.layers[1];
        let mut out = vec![0.0; 2];
        for j in 0..2 {
            let mut s = l1.b[j];
            for (i, hi) in h.iter().enumerate() {
                s += l1.w[(j, i)] * hi;
            }
            out[j] = 1.0 / (1.0 + (-s).exp());
        }

        let q = encode_avi(&enc, &x).unwrap();
        for j in 0..2 {
            assert_relative_eq!(q.q[j], out[j], max_relative = 1e-12);
        }
    }
}
