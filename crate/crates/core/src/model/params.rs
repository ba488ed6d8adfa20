use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::autodiff::softplus_inverse;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Named parameter tensors, kept in name order.
///
/// Tensors are reference counted so a forward graph can borrow them without
/// copying; mutation goes through [`ModelParameters::get_mut`], which copies
/// only while a graph still holds a reference.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    tensors: BTreeMap<String, Arc<Tensor>>,
}

impl ModelParameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name).map(|t| t.as_ref())
    }

    pub(crate) fn shared(&self, name: &str) -> Option<Arc<Tensor>> {
        self.tensors.get(name).cloned()
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors
            .remove(name)
            .map(|t| Arc::try_unwrap(t).unwrap_or_else(|t| (*t).clone()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }
}

/// Names of the future pathway: its projection and its fusion input block.
pub fn is_future_param(name: &str) -> bool {
    name.starts_with("future.") || name.starts_with("fusion.future.")
}

/// Patch embedding, positional embedding and transformer layers of a scale
/// branch. The branch's horizon map is not part of the encoder.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("scale") && !name.contains(".horizon.")
}

pub(crate) fn scale_prefix(s: usize) -> String {
    format!("scale{s}")
}

pub(crate) fn layer_prefix(s: usize, l: usize) -> String {
    format!("scale{s}.layer{l}")
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// `U(-b, b)` with `b = 1/sqrt(fan_in)`; fan-in is the first axis.
    FanIn,
    Constant(f64),
}

/// Shapes and initializers of every parameter a configuration needs.
fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.d_model;
    let mut out = Vec::new();
    let linear = |out: &mut Vec<_>, name: String, fan_in: usize, fan_out: usize| {
        out.push((format!("{name}.weight"), vec![fan_in, fan_out], Init::FanIn));
        out.push((format!("{name}.bias"), vec![fan_out], Init::Zeros));
    };
    for (s, spec) in config.scales.iter().enumerate() {
        let p = scale_prefix(s);
        let n = config.n_patches(s);
        linear(&mut out, format!("{p}.embed"), spec.patch_len, d);
        out.push((format!("{p}.pos"), vec![n, d], Init::FanIn));
        for l in 0..config.n_layers {
            let lp = layer_prefix(s, l);
            for norm in ["norm1", "norm2"] {
                out.push((format!("{lp}.{norm}.gain"), vec![d], Init::Ones));
                out.push((format!("{lp}.{norm}.bias"), vec![d], Init::Zeros));
            }
            for proj in ["q", "k", "v", "out"] {
                linear(&mut out, format!("{lp}.attn.{proj}"), d, d);
            }
            linear(&mut out, format!("{lp}.ff1"), d, config.ff_dim);
            linear(&mut out, format!("{lp}.ff2"), config.ff_dim, d);
        }
        linear(&mut out, format!("{p}.horizon"), n * d, config.horizon * d);
    }
    if config.has_future() {
        linear(&mut out, "future".into(), config.future_channels, d);
        out.push(("fusion.future.weight".into(), vec![d, d], Init::FanIn));
    }
    for s in 0..config.n_scales() {
        out.push((format!("fusion.scale{s}.weight"), vec![d, d], Init::FanIn));
    }
    out.push(("fusion.bias".into(), vec![d], Init::Zeros));
    linear(&mut out, "head.mean".into(), d, 1);
    out.push(("head.var.weight".into(), vec![d, 1], Init::FanIn));
    out.push((
        "head.var.bias".into(),
        vec![1],
        Init::Constant(softplus_inverse(1.0 - config.variance_floor)),
    ));
    out
}

fn init_tensor(seed: u64, name: &str, shape: &[usize], init: Init) -> Tensor {
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::full(shape, 1.0),
        Init::Constant(c) => Tensor::full(shape, c),
        Init::FanIn => {
            let bound = 1.0 / (shape[0] as f64).sqrt();
            let mut r = rng::labeled(seed, name);
            let n = shape.iter().product();
            let data = (0..n).map(|_| r.gen_range(-bound..bound)).collect();
            Tensor::new(shape.to_vec(), data).expect("layout shapes are positive")
        }
    }
}

/// Draws every parameter for `config`. Each tensor has its own random stream
/// keyed by its name, so parameters shared between two configurations
/// (say, with and without the future pathway) are initialized identically.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParameters> {
    config.validate()?;
    let mut params = ModelParameters::new();
    for (name, shape, init) in layout(config) {
        let t = init_tensor(seed, &name, &shape, init);
        params.insert(name, t);
    }
    Ok(params)
}

/// Names and shapes a configuration requires.
pub fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Adapts `params` to `config`: parameters the configuration does not use
/// are dropped, and parameters of the future pathway that are missing are
/// freshly initialized. Any other missing or mis-shaped tensor is an error.
pub fn adapt_parameters(params: &ModelParameters, config: &ModelConfig, seed: u64) -> Result<ModelParameters> {
    config.validate()?;
    let mut out = ModelParameters::new();
    let mut problems = Vec::new();
    for (name, shape, init) in layout(config) {
        match params.shared(&name) {
            Some(t) if t.shape() == shape.as_slice() => {
                out.tensors.insert(name, t);
            }
            Some(t) => problems.push(format!("{name}: shape {:?} vs expected {shape:?}", t.shape())),
            None if is_future_param(&name) => {
                let t = init_tensor(seed, &name, &shape, init);
                out.insert(name, t);
            }
            None => problems.push(format!("{name}: missing")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Checkpoint(format!(
            "parameters incompatible with configuration: {}",
            problems.join("; ")
        )));
    }
    Ok(out)
}
