use serde::{Deserialize, Serialize};

use super::layers::Act;
use super::network::Model;
use super::tensor::ModelParams;
use crate::error::{Error, Result};
use crate::types::{ClassLabel, ConfidenceVector, NUM_CLASSES};

/// Probabilities are clamped here before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Per-class multipliers on the cross-entropy of samples of that class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; NUM_CLASSES]", into = "[f64; NUM_CLASSES]")]
pub struct LossWeights([f64; NUM_CLASSES]);

impl Default for LossWeights {
    fn default() -> Self {
        Self([1.0; NUM_CLASSES])
    }
}

impl LossWeights {
    pub fn new(w: [f64; NUM_CLASSES]) -> Result<Self> {
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be positive: {w:?}")));
        }
        Ok(Self(w))
    }

    /// Unit weights except `jellyfish` and `seaweed`.
    pub fn jellyfish_seaweed(jellyfish: f64, seaweed: f64) -> Result<Self> {
        let mut w = [1.0; NUM_CLASSES];
        w[ClassLabel::Jellyfish.index()] = jellyfish;
        w[ClassLabel::Seaweed.index()] = seaweed;
        Self::new(w)
    }

    pub fn get(&self, label: ClassLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> [f64; NUM_CLASSES] {
        self.0
    }
}

impl TryFrom<[f64; NUM_CLASSES]> for LossWeights {
    type Error = Error;

    fn try_from(w: [f64; NUM_CLASSES]) -> Result<Self> {
        Self::new(w)
    }
}

impl From<LossWeights> for [f64; NUM_CLASSES] {
    fn from(w: LossWeights) -> Self {
        w.0
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN logit".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn softmax_confidence(logits: &[f64]) -> Result<ConfidenceVector> {
    let p = softmax(logits)?;
    let arr: [f64; NUM_CLASSES] = p
        .try_into()
        .map_err(|p: Vec<f64>| Error::ShapeMismatch { expected: vec![NUM_CLASSES], actual: vec![p.len()] })?;
    ConfidenceVector::new(arr)
}

/// `-w[target] * ln(max(probs[target], 1e-12))`.
pub fn weighted_cross_entropy(probs: &ConfidenceVector, target: ClassLabel, weights: &LossWeights) -> f64 {
    -weights.get(target) * probs.get(target).max(LOG_CLAMP).ln()
}

/// Loss and gradient with respect to the logits of the weighted softmax
/// cross-entropy, `w[t] * (softmax(z) - onehot(t))`.
pub fn weighted_xent_with_grad(logits: &[f64], target: ClassLabel, weights: &LossWeights) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits)?;
    let w = weights.get(target);
    let loss = -w * p[target.index()].max(LOG_CLAMP).ln();
    let mut g: Vec<f64> = p.iter().map(|v| w * v).collect();
    g[target.index()] -= w;
    Ok((loss, g))
}

/// Gradient of the single-sample weighted loss with respect to every
/// parameter of `model`.
pub fn backward(model: &Model, input: &Act, target: ClassLabel, weights: &LossWeights) -> Result<ModelParams<f64>> {
    let trace = model.trace(input)?;
    let (_, g) = weighted_xent_with_grad(trace.output().data(), target, weights)?;
    let mut grads = model.zero_grads();
    model.backward(&trace, &g, &mut grads)?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 6]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let p = softmax(&[1000.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(p[0] >= 1.0 - 1e-6);
        assert!(p.iter().all(|v| v.is_finite()));
        let q = softmax(&[1e4, -1e4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_hand_case() {
        let p = softmax(&[2f64.ln(), 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [2.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }

    fn probs_with(target: ClassLabel, p: f64) -> ConfidenceVector {
        let mut v = [(1.0 - p) / 5.0; 6];
        v[target.index()] = p;
        ConfidenceVector::new(v).unwrap()
    }

    #[test]
    fn weighted_cross_entropy_hand_cases() {
        let t = ClassLabel::Jellyfish;
        let unit = LossWeights::default();
        assert_eq!(weighted_cross_entropy(&probs_with(t, 1.0), t, &unit), 0.0);
        let half = probs_with(t, 0.5);
        assert!((weighted_cross_entropy(&half, t, &unit) - 0.693_147_180_6).abs() < 1e-9);
        let doubled = LossWeights::jellyfish_seaweed(2.0, 1.0).unwrap();
        assert!((weighted_cross_entropy(&half, t, &doubled) - 1.386_294_361_1).abs() < 1e-9);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = ConfidenceVector::one_hot(ClassLabel::Fish);
        let loss = weighted_cross_entropy(&p, ClassLabel::Jellyfish, &LossWeights::default());
        assert!((loss - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn unit_weights_equal_plain_cross_entropy() {
        let logits = [0.3, -1.2, 2.0, 0.0, 0.5, -0.7];
        let p = softmax_confidence(&logits).unwrap();
        for t in ClassLabel::ALL {
            let plain = -p.get(t).ln();
            assert_eq!(weighted_cross_entropy(&p, t, &LossWeights::default()), plain);
        }
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(LossWeights::jellyfish_seaweed(0.0, 1.0).is_err());
        assert!(LossWeights::new([1.0, 1.0, 1.0, -1.0, 1.0, 1.0]).is_err());
    }
}
