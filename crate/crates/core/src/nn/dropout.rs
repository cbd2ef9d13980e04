use std::cell::RefCell;

use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Source of dropout masks for one training run.
pub struct DropoutRng(RefCell<ChaCha8Rng>);

impl DropoutRng {
    pub fn new(seed: u64) -> Self {
        Self(RefCell::new(ChaCha8Rng::seed_from_u64(seed)))
    }
}

/// Forward-pass mode. Evaluation is deterministic; training samples dropout
/// masks from the run's dropout stream.
#[derive(Clone, Copy)]
pub enum Mode<'a> {
    Eval,
    Train(&'a DropoutRng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Inverted dropout: zero each entry with probability `p` and scale the
/// survivors by `1 / (1 - p)`. Identity in eval mode or when `p == 0`.
pub fn dropout(x: &Tensor, p: f64, mode: Mode<'_>) -> Result<Tensor> {
    let rng = match mode {
        Mode::Train(rng) if p > 0.0 => rng,
        _ => return Ok(x.clone()),
    };
    let scale = 1.0 / (1.0 - p);
    let n = x.elem_count();
    let mut rng = rng.0.borrow_mut();
    let keep: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect();
    let mask = Tensor::from_vec(keep, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}
