use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{Linear, VarBuilder};
use serde::{Deserialize, Serialize};

use super::fusion::FusedRepresentation;
use crate::corpus::{CognitiveLevel, NUM_LEVELS};
use crate::nn;
use crate::{Error, Result};

/// Softmax output over the six cognitive levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub probs: [f64; NUM_LEVELS],
    /// Log-probabilities computed directly from the logits, so a
    /// probability that underflows to zero still has a finite log.
    #[serde(skip)]
    log_probs: [f64; NUM_LEVELS],
    pub predicted: CognitiveLevel,
}

impl ClassDistribution {
    /// Numerically stable softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() != NUM_LEVELS {
            return Err(Error::DimensionMismatch {
                what: "logits".into(),
                expected: NUM_LEVELS,
                found: logits.len(),
            });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logits {logits:?}")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let mut log_probs = [0.0; NUM_LEVELS];
        let mut probs = [0.0; NUM_LEVELS];
        for c in 0..NUM_LEVELS {
            log_probs[c] = logits[c] - lse;
            probs[c] = log_probs[c].exp();
        }
        Ok(Self {
            predicted: argmax(&probs),
            probs,
            log_probs,
        })
    }

    /// Wrap an already-normalised distribution (e.g. ensemble vote fractions).
    pub fn from_probs(probs: [f64; NUM_LEVELS]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("not a distribution: {probs:?}")));
        }
        Ok(Self {
            predicted: argmax(&probs),
            log_probs: probs.map(f64::ln),
            probs,
        })
    }

    /// A distribution with all mass on `level`.
    pub fn certain(level: CognitiveLevel) -> Self {
        let mut probs = [0.0; NUM_LEVELS];
        probs[level.ordinal()] = 1.0;
        Self::from_probs(probs).expect("one-hot is a distribution")
    }

    pub fn log_probs(&self) -> &[f64; NUM_LEVELS] {
        &self.log_probs
    }

    pub fn prob(&self, level: CognitiveLevel) -> f64 {
        self.probs[level.ordinal()]
    }
}

/// Index of the largest probability; the lowest ordinal wins ties.
fn argmax(probs: &[f64; NUM_LEVELS]) -> CognitiveLevel {
    let mut best = 0;
    for c in 1..NUM_LEVELS {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    CognitiveLevel::from_ordinal(best).expect("ordinal in range")
}

/// Cross-entropy of one prediction: `-log probs[y]`.
pub fn loss(dist: &ClassDistribution, y: CognitiveLevel) -> f64 {
    -dist.log_probs[y.ordinal()]
}

/// Mean cross-entropy of a `(batch, 6)` logit tensor against labels,
/// computed through log-softmax.
pub fn batch_loss(logits: &Tensor, labels: &[CognitiveLevel]) -> Result<Tensor> {
    let targets: Vec<u32> = labels.iter().map(|l| l.ordinal() as u32).collect();
    let targets = Tensor::from_vec(targets, labels.len(), logits.device())?;
    Ok(candle_nn::loss::cross_entropy(logits, &targets)?)
}

/// Rows of a `(batch, 6)` logit tensor as distributions.
pub fn distributions(logits: &Tensor) -> Result<Vec<ClassDistribution>> {
    nn::rows_f64(logits)?
        .iter()
        .map(|row| ClassDistribution::from_logits(row))
        .collect()
}

/// The linear softmax classifier: `weight` is `6 x D`, `bias` has 6 entries.
pub struct ClassifierHead {
    linear: Linear,
    input_dim: usize,
}

impl ClassifierHead {
    pub fn new(input_dim: usize, vb: VarBuilder) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("classifier input width must be positive".into()));
        }
        Ok(Self {
            linear: candle_nn::linear(input_dim, NUM_LEVELS, vb)?,
            input_dim,
        })
    }

    /// A head with fixed weights, mainly for inspection and tests.
    pub fn from_weights(weight: &[Vec<f64>], bias: &[f64], dtype: DType, device: &Device) -> Result<Self> {
        if weight.len() != NUM_LEVELS || bias.len() != NUM_LEVELS {
            return Err(Error::DimensionMismatch {
                what: "classifier rows".into(),
                expected: NUM_LEVELS,
                found: if weight.len() != NUM_LEVELS { weight.len() } else { bias.len() },
            });
        }
        let input_dim = weight[0].len();
        if input_dim == 0 || weight.iter().any(|r| r.len() != input_dim) {
            return Err(Error::InvalidArgument("classifier weight rows must share a positive width".into()));
        }
        let w = Tensor::from_vec(weight.concat(), (NUM_LEVELS, input_dim), device)?.to_dtype(dtype)?;
        let b = Tensor::from_vec(bias.to_vec(), NUM_LEVELS, device)?.to_dtype(dtype)?;
        Ok(Self {
            linear: Linear::new(w, Some(b)),
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weight(&self) -> &Tensor {
        self.linear.weight()
    }

    pub fn bias(&self) -> &Tensor {
        self.linear.bias().expect("head has a bias")
    }

    /// `(batch, D)` fused rows to `(batch, 6)` logits.
    pub fn logits(&self, fused: &Tensor) -> Result<Tensor> {
        let width = fused.dim(candle_core::D::Minus1)?;
        if width != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "classifier input width".into(),
                expected: self.input_dim,
                found: width,
            });
        }
        Ok(self.linear.forward(fused)?)
    }
}

/// `softmax(weight · H + bias)` for one fused vector.
pub fn classify(fused: &FusedRepresentation, head: &ClassifierHead) -> Result<ClassDistribution> {
    let w = head.weight();
    let h = Tensor::from_vec(fused.vector().to_vec(), (1, fused.dim()), w.device())?.to_dtype(w.dtype())?;
    let logits = head.logits(&h)?;
    ClassDistribution::from_logits(&nn::rows_f64(&logits)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{Branch, PooledRepresentation};
    use crate::model::fusion::{fuse, FusionLayout};
    use proptest::prelude::*;

    fn fused(v: Vec<f64>) -> FusedRepresentation {
        let layout = FusionLayout::new(vec![(Branch::Rep, v.len())]).unwrap();
        let rep = PooledRepresentation::new(Branch::Rep, v).unwrap();
        fuse(&layout, &[&rep]).unwrap()
    }

    fn head(weight: Vec<Vec<f64>>, bias: Vec<f64>) -> ClassifierHead {
        ClassifierHead::from_weights(&weight, &bias, DType::F64, &Device::Cpu).unwrap()
    }

    #[test]
    fn zero_head_is_uniform_and_breaks_ties_low() {
        let h = head(vec![vec![0.0; 3]; 6], vec![0.0; 6]);
        let c = classify(&fused(vec![1.0, -2.0, 0.5]), &h).unwrap();
        for p in c.probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
        assert_eq!(c.predicted, CognitiveLevel::Knowledge);
        assert!((loss(&c, CognitiveLevel::Analysis) - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_bias() {
        let h = head(vec![vec![0.0; 2]; 6], vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = classify(&fused(vec![3.0, 4.0]), &h).unwrap();
        assert_eq!(c.predicted, CognitiveLevel::Knowledge);
        assert!(c.probs[0] > 0.99);
    }

    #[test]
    fn width_mismatch_rejected() {
        let h = head(vec![vec![0.0; 2]; 6], vec![0.0; 6]);
        assert!(matches!(
            classify(&fused(vec![1.0; 3]), &h),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ClassifierHead::from_weights(&vec![vec![0.0; 2]; 5], &[0.0; 6], DType::F64, &Device::Cpu).is_err());
    }

    #[test]
    fn extreme_logits_keep_finite_loss() {
        let c = ClassDistribution::from_logits(&[1000.0, -1000.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.probs[1], 0.0);
        assert!((loss(&c, CognitiveLevel::Comprehension) - 2000.0).abs() < 1e-9);
        assert_eq!(loss(&c, CognitiveLevel::Knowledge), 0.0);
        assert!(ClassDistribution::from_logits(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn batch_loss_matches_per_example() {
        let rows = [[0.3, -1.0, 2.0, 0.0, 0.5, 0.1], [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]];
        let t = Tensor::from_vec(rows.concat(), (2, 6), &Device::Cpu).unwrap();
        let labels = [CognitiveLevel::Application, CognitiveLevel::Evaluation];
        let got = nn::scalar_f64(&batch_loss(&t, &labels).unwrap()).unwrap();
        let want = (loss(&ClassDistribution::from_logits(&rows[0]).unwrap(), labels[0])
            + loss(&ClassDistribution::from_logits(&rows[1]).unwrap(), labels[1]))
            / 2.0;
        assert!((got - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn distribution_invariants(logits in proptest::array::uniform6(-50.0f64..50.0), shift in -100.0f64..100.0) {
            let c = ClassDistribution::from_logits(&logits).unwrap();
            prop_assert!(c.probs.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((c.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let best = c.probs[c.predicted.ordinal()];
            prop_assert!(c.probs.iter().all(|p| *p <= best));
            prop_assert!(c.probs[..c.predicted.ordinal()].iter().all(|p| *p < best));
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let d = ClassDistribution::from_logits(&shifted).unwrap();
            for (a, b) in c.probs.iter().zip(&d.probs) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
