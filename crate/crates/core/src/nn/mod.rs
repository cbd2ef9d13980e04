//! Neural plumbing shared by every trainable model: seeded parameter
//! stores, dropout driven by an explicit RNG, parameter checksums and
//! snapshots, and a few tensor helpers.

mod dropout;
mod params;

pub use dropout::{dropout, DropoutRng, Mode};
pub(crate) use params::hex;
pub use params::{checksum_tensors, checksum_vars, restore, snapshot, ParamStore, Snapshot};

use candle_core::{DType, Device, Tensor, D};

use crate::{Error, Result};

/// Large negative score used in place of -inf for masked positions.
pub const MASK_FILL: f64 = -1.0e9;

/// Replace entries where `mask == 0` with [`MASK_FILL`]. `mask` is u8 and
/// must broadcast to `scores`.
pub fn masked_fill(scores: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let mask = mask.broadcast_as(scores.shape())?;
    let fill = Tensor::new(MASK_FILL, scores.device())?
        .to_dtype(scores.dtype())?
        .broadcast_as(scores.shape())?;
    Ok(mask.where_cond(scores, &fill)?)
}

/// Softmax over the last axis restricted to `mask == 1`; masked entries
/// come out exactly zero.
pub fn masked_softmax(scores: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let filled = masked_fill(scores, mask)?;
    Ok(candle_nn::ops::softmax(&filled, D::Minus1)?)
}

/// Right-pad id sequences into a `(batch, len)` u32 tensor and a matching u8
/// mask. `min_len` forces a minimum padded width.
pub fn pad_batch(
    seqs: &[&[u32]],
    pad_id: u32,
    min_len: usize,
    device: &Device,
) -> Result<(Tensor, Tensor)> {
    if seqs.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0).max(min_len);
    let mut ids = Vec::with_capacity(seqs.len() * width);
    let mut mask = Vec::with_capacity(seqs.len() * width);
    for s in seqs {
        ids.extend_from_slice(s);
        mask.extend(std::iter::repeat_n(1u8, s.len()));
        ids.extend(std::iter::repeat_n(pad_id, width - s.len()));
        mask.extend(std::iter::repeat_n(0u8, width - s.len()));
    }
    Ok((
        Tensor::from_vec(ids, (seqs.len(), width), device)?,
        Tensor::from_vec(mask, (seqs.len(), width), device)?,
    ))
}

/// Mean over the sequence axis of `(batch, len, dim)` restricted to the mask.
pub fn masked_mean(hidden: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let m = mask.to_dtype(hidden.dtype())?.unsqueeze(2)?;
    let summed = hidden.broadcast_mul(&m)?.sum(1)?;
    let counts = m.sum(1)?.clamp(1.0, f64::MAX)?;
    Ok(summed.broadcast_div(&counts)?)
}

/// Rows of a 2-d tensor as f64 vectors.
pub fn rows_f64(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

pub fn scalar_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub(crate) fn dtype_name(dtype: DType) -> &'static str {
    match dtype {
        DType::F64 => "f64",
        _ => "f32",
    }
}

pub fn parse_dtype(name: &str) -> Result<DType> {
    match name {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        other => Err(Error::InvalidArgument(format!("unsupported dtype {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_softmax_zeroes_padding() {
        let dev = Device::Cpu;
        let scores = Tensor::new(&[[1.0f32, 2.0, 3.0], [0.5, 0.5, 9.0]], &dev).unwrap();
        let mask = Tensor::new(&[[1u8, 1, 0], [1, 1, 0]], &dev).unwrap();
        let p = rows_f64(&masked_softmax(&scores, &mask).unwrap()).unwrap();
        assert_eq!(p[0][2], 0.0);
        assert_eq!(p[1][2], 0.0);
        assert!((p[1][0] - 0.5).abs() < 1e-7);
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pad_and_mean() {
        let dev = Device::Cpu;
        let (ids, mask) = pad_batch(&[&[5, 6], &[7]], 0, 3, &dev).unwrap();
        assert_eq!(ids.to_vec2::<u32>().unwrap(), vec![vec![5, 6, 0], vec![7, 0, 0]]);
        assert_eq!(mask.to_vec2::<u8>().unwrap(), vec![vec![1, 1, 0], vec![1, 0, 0]]);
        let h = Tensor::new(
            &[[[1.0f64], [3.0], [100.0]], [[2.0], [50.0], [60.0]]],
            &dev,
        )
        .unwrap();
        let m = rows_f64(&masked_mean(&h, &mask).unwrap()).unwrap();
        assert_eq!(m, vec![vec![2.0], vec![2.0]]);
    }
}

/// Layer normalisation built from differentiable primitives (candle's fused
/// kernel has no backward pass).
#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(size: usize, eps: f64, vb: candle_nn::VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get_with_hints(size, "weight", candle_nn::Init::Const(1.0))?,
            bias: vb.get_with_hints(size, "bias", candle_nn::Init::Const(0.0))?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::layer_norm_slow(
            x,
            &self.weight,
            &self.bias,
            self.eps as f32,
        )?)
    }
}
