use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Shape, Tensor, Var};
use candle_nn::init::{FanInOut, NormalOrUniform};
use candle_nn::{Init, VarBuilder, VarMap};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::seed;
use crate::{Error, Result};

/// Trainable parameters of one model component, initialised from a seed.
///
/// Each variable draws its initial values from a stream keyed by the store
/// seed and the variable path, so initial values depend neither on
/// construction order nor on the process-global RNG. Two stores built with
/// the same seed and paths hold identical parameters.
#[derive(Clone)]
pub struct ParamStore {
    varmap: VarMap,
    seed: u64,
    dtype: DType,
    device: Device,
}

struct SeededBackend {
    varmap: VarMap,
    seed: u64,
}

impl SeededBackend {
    fn init_tensor(&self, shape: &Shape, path: &str, init: Init, dtype: DType, dev: &Device) -> Result<Tensor> {
        let n = shape.elem_count();
        let mut rng = seed::rng(self.seed, path);
        let values: Vec<f64> = match init {
            Init::Const(c) => vec![c; n],
            Init::Uniform { lo, up } => (0..n).map(|_| rng.random_range(lo..up)).collect(),
            Init::Randn { mean, stdev } => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + stdev * z
                })
                .collect(),
            Init::Kaiming {
                dist,
                fan,
                non_linearity,
            } => {
                let fan = match fan {
                    FanInOut::FanIn => FanInOut::FanIn.for_shape(shape),
                    FanInOut::FanOut => FanInOut::FanOut.for_shape(shape),
                };
                let std = non_linearity.gain() / (fan.max(1) as f64).sqrt();
                match dist {
                    NormalOrUniform::Uniform => {
                        let bound = 3f64.sqrt() * std;
                        (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                    }
                    NormalOrUniform::Normal => (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            std * z
                        })
                        .collect(),
                }
            }
        };
        Ok(Tensor::from_vec(values, shape.clone(), dev)?.to_dtype(dtype)?)
    }
}

impl candle_nn::var_builder::SimpleBackend for SeededBackend {
    fn get(
        &self,
        s: Shape,
        name: &str,
        h: Init,
        dtype: DType,
        dev: &Device,
    ) -> candle_core::Result<Tensor> {
        let mut data = self.varmap.data().lock().expect("varmap lock");
        if let Some(var) = data.get(name) {
            if var.shape() != &s {
                candle_core::bail!("shape mismatch on {name}: {s:?} <> {:?}", var.shape());
            }
            return Ok(var.as_tensor().clone());
        }
        let t = self
            .init_tensor(&s, name, h, dtype, dev)
            .map_err(|e| candle_core::Error::Msg(e.to_string()))?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        data.insert(name.to_string(), var);
        Ok(out)
    }

    fn get_unchecked(&self, name: &str, _dtype: DType, _dev: &Device) -> candle_core::Result<Tensor> {
        candle_core::bail!("variable {name} must be created with an explicit shape")
    }

    fn contains_tensor(&self, name: &str) -> bool {
        self.varmap.data().lock().expect("varmap lock").contains_key(name)
    }
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            varmap: VarMap::new(),
            seed,
            dtype,
            device: device.clone(),
        }
    }

    pub fn var_builder(&self) -> VarBuilder<'static> {
        let backend = SeededBackend {
            varmap: self.varmap.clone(),
            seed: self.seed,
        };
        VarBuilder::from_backend(Box::new(backend), self.dtype, self.device.clone())
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Variables sorted by path.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut out: Vec<_> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn vars(&self) -> Vec<Var> {
        self.named_vars().into_iter().map(|(_, v)| v).collect()
    }

    /// Detached copies of every parameter, keyed by path.
    pub fn tensors(&self) -> Result<HashMap<String, Tensor>> {
        self.named_vars()
            .into_iter()
            .map(|(k, v)| Ok((k, v.as_tensor().detach().copy()?)))
            .collect()
    }

    pub fn checksum(&self) -> String {
        checksum_vars(&self.named_vars())
    }

    /// Overwrite existing variables from `source`. Every variable must be
    /// present with the same shape; extra entries in `source` are ignored.
    pub fn assign_from(&self, source: &HashMap<String, Tensor>) -> Result<()> {
        for (name, var) in self.named_vars() {
            let t = source
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(var.dtype())?.to_device(var.device())?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self.tensors()?;
        candle_core::safetensors::save(&tensors, path)?;
        Ok(())
    }

    pub fn load_into(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        self.assign_from(&tensors)
    }
}

fn hash_tensor(hasher: &mut Sha256, t: &Tensor) {
    let flat = t.flatten_all().expect("flatten");
    match t.dtype() {
        DType::F64 => {
            for v in flat.to_vec1::<f64>().expect("f64 data") {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        DType::F32 => {
            for v in flat.to_vec1::<f32>().expect("f32 data") {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        _ => {
            for v in flat
                .to_dtype(DType::F64)
                .and_then(|f| f.to_vec1::<f64>())
                .expect("convertible data")
            {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
    }
}

/// SHA-256 over names, shapes and exact bit patterns, hex encoded.
pub fn checksum_vars(named: &[(String, Var)]) -> String {
    let mut hasher = Sha256::new();
    for (name, var) in named {
        hasher.update(name.as_bytes());
        hasher.update(format!("{:?}", var.dims()).as_bytes());
        hash_tensor(&mut hasher, var.as_tensor());
    }
    hex(&hasher.finalize())
}

pub fn checksum_tensors(tensors: &HashMap<String, Tensor>) -> String {
    let mut names: Vec<_> = tensors.keys().collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        let t = &tensors[name];
        hasher.update(name.as_bytes());
        hasher.update(format!("{:?}", t.dims()).as_bytes());
        hash_tensor(&mut hasher, t);
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Copies of the current values of `vars`.
pub struct Snapshot(Vec<(Var, Tensor)>);

pub fn snapshot(vars: &[Var]) -> Result<Snapshot> {
    vars.iter()
        .map(|v| Ok((v.clone(), v.as_tensor().detach().copy()?)))
        .collect::<Result<Vec<_>>>()
        .map(Snapshot)
}

pub fn restore(snap: &Snapshot) -> Result<()> {
    for (var, value) in &snap.0 {
        var.set(value)?;
    }
    Ok(())
}
