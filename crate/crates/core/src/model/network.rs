//! Forward pass of the forecaster.
//!
//! Each target channel goes through the same weights on its own:
//! scale transform → patchify → patch projection + positional embedding →
//! pre-norm transformer layers → horizon map (flattened `N_s` tokens to `H`
//! tokens). The `S` scale features and the projected future covariates are
//! fused per horizon step by a one-hidden-layer network feeding a mean head
//! and a variance head `softplus(raw) + ε`.

use std::collections::HashMap;

use super::{params::layer_prefix, GaussianForecast, ModelConfig, ModelParameters};
use crate::autodiff::{Graph, Mode, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::patching::{patchify, scale_transform};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Parameters registered as leaves of one graph, created on first use.
pub struct Bindings<'a> {
    params: &'a ModelParameters,
    vars: HashMap<String, Var>,
    trainable: bool,
}

impl<'a> Bindings<'a> {
    /// `trainable` controls whether gradients are accumulated for the
    /// parameters; inference graphs skip that bookkeeping.
    pub fn new(params: &'a ModelParameters, trainable: bool) -> Self {
        Self {
            params,
            vars: HashMap::new(),
            trainable,
        }
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(v) = self.vars.get(name) {
            return Ok(*v);
        }
        let t = self
            .params
            .shared(name)
            .ok_or_else(|| Error::Config(format!("model parameter `{name}` is missing")))?;
        let v = g.leaf(t, self.trainable);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Uses `var` for parameter `name` instead of the stored tensor.
    pub fn bind(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    /// Bound parameters and their graph handles.
    pub fn bound(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Per-call switches of the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Scales whose fusion inputs are replaced by zeros.
    pub zeroed_scales: Vec<usize>,
}

impl ForwardOptions {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            zeroed_scales: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval)
    }

    pub fn train() -> Self {
        Self::new(Mode::Train)
    }
}

fn linear(g: &mut Graph, b: &mut Bindings, x: Var, name: &str) -> Result<Var> {
    let w = b.get(g, &format!("{name}.weight"))?;
    let bias = b.get(g, &format!("{name}.bias"))?;
    let h = g.matmul(x, w)?;
    g.add(h, bias)
}

fn attention(g: &mut Graph, b: &mut Bindings, cfg: &ModelConfig, x: Var, prefix: &str) -> Result<Var> {
    let q = linear(g, b, x, &format!("{prefix}.q"))?;
    let k = linear(g, b, x, &format!("{prefix}.k"))?;
    let v = linear(g, b, x, &format!("{prefix}.v"))?;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let (qh, kh, vh) = if cfg.n_heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * hd, hd)?,
                g.slice_cols(k, h * hd, hd)?,
                g.slice_cols(v, h * hd, hd)?,
            )
        };
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let weights = g.softmax(scores, 1)?;
        heads.push(g.matmul(weights, vh)?);
    }
    let merged = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    linear(g, b, merged, &format!("{prefix}.out"))
}

/// Encodes one channel at one scale: `patches` is `N_s × P_s`; the result is
/// `H × d_model`.
pub fn encode_scale(
    g: &mut Graph,
    b: &mut Bindings,
    cfg: &ModelConfig,
    scale: usize,
    patches: &Tensor,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let n = cfg.n_patches(scale);
    let p = cfg.scales[scale].patch_len;
    if patches.shape() != [n, p] {
        return Err(Error::dim(format!(
            "scale {scale} encoder expects patches of shape [{n}, {p}], got {:?}",
            patches.shape()
        )));
    }
    let d = cfg.d_model;
    let x = g.constant(patches.clone());
    let mut h = linear(g, b, x, &format!("scale{scale}.embed"))?;
    let pos = b.get(g, &format!("scale{scale}.pos"))?;
    h = g.add(h, pos)?;
    h = g.dropout(h, cfg.dropout, mode, rng)?;
    for l in 0..cfg.n_layers {
        let lp = layer_prefix(scale, l);
        let n1g = b.get(g, &format!("{lp}.norm1.gain"))?;
        let n1b = b.get(g, &format!("{lp}.norm1.bias"))?;
        let a = g.layer_norm(h, n1g, n1b, 1e-5)?;
        let a = attention(g, b, cfg, a, &format!("{lp}.attn"))?;
        let a = g.dropout(a, cfg.dropout, mode, rng)?;
        h = g.add(h, a)?;

        let n2g = b.get(g, &format!("{lp}.norm2.gain"))?;
        let n2b = b.get(g, &format!("{lp}.norm2.bias"))?;
        let f = g.layer_norm(h, n2g, n2b, 1e-5)?;
        let f = linear(g, b, f, &format!("{lp}.ff1"))?;
        let f = g.gelu(f);
        let f = linear(g, b, f, &format!("{lp}.ff2"))?;
        let f = g.dropout(f, cfg.dropout, mode, rng)?;
        h = g.add(h, f)?;
    }
    let flat = g.reshape(h, &[1, n * d])?;
    let out = linear(g, b, flat, &format!("scale{scale}.horizon"))?;
    g.reshape(out, &[cfg.horizon, d])
}

/// Per-step affine map of the `H × E` future covariates to `H × d_model`.
pub fn project_future(g: &mut Graph, b: &mut Bindings, cfg: &ModelConfig, z: &Tensor) -> Result<Var> {
    if z.shape() != [cfg.horizon, cfg.future_channels] {
        return Err(Error::dim(format!(
            "future projection expects covariates of shape [{}, {}], got {:?}",
            cfg.horizon,
            cfg.future_channels,
            z.shape()
        )));
    }
    let zv = g.constant(z.clone());
    linear(g, b, zv, "future")
}

/// Fuses the scale features (each `H × d_model`) and the optional future
/// embedding, returning `H × 1` mean and variance for one channel.
#[allow(clippy::too_many_arguments)]
pub fn fuse_and_head(
    g: &mut Graph,
    b: &mut Bindings,
    cfg: &ModelConfig,
    per_scale: &[Var],
    future: Option<Var>,
    opts: &ForwardOptions,
    rng: &mut Rng,
) -> Result<(Var, Var)> {
    let expect = [cfg.horizon, cfg.d_model];
    for &v in per_scale.iter().chain(future.as_ref()) {
        if g.shape(v) != expect {
            return Err(Error::dim(format!(
                "fusion inputs must be {expect:?}, got {:?}",
                g.shape(v)
            )));
        }
    }
    let mut acc: Option<Var> = None;
    let add = |g: &mut Graph, acc: &mut Option<Var>, t: Var| -> Result<()> {
        *acc = Some(match *acc {
            Some(a) => g.add(a, t)?,
            None => t,
        });
        Ok(())
    };
    for (s, &h) in per_scale.iter().enumerate() {
        if opts.zeroed_scales.contains(&s) {
            continue;
        }
        let w = b.get(g, &format!("fusion.scale{s}.weight"))?;
        let t = g.matmul(h, w)?;
        add(g, &mut acc, t)?;
    }
    if let Some(z) = future {
        let w = b.get(g, "fusion.future.weight")?;
        let t = g.matmul(z, w)?;
        add(g, &mut acc, t)?;
    }
    let bias = b.get(g, "fusion.bias")?;
    let pre = match acc {
        Some(a) => g.add(a, bias)?,
        None => {
            let zeros = g.constant(Tensor::zeros(&expect));
            g.add(zeros, bias)?
        }
    };
    let hidden = g.gelu(pre);
    let hidden = g.dropout(hidden, cfg.dropout, opts.mode, rng)?;
    let mean = linear(g, b, hidden, "head.mean")?;
    let raw = linear(g, b, hidden, "head.var")?;
    let var = g.softplus(raw);
    let var = g.shift(var, cfg.variance_floor);
    Ok((mean, var))
}

/// Builds the forward graph for one window. `input` is the `L × D`
/// instance-normalized lookback, `z` the `H × E` covariates. Returns
/// `H × D` mean and variance handles.
#[allow(clippy::too_many_arguments)]
pub fn forward_graph(
    g: &mut Graph,
    b: &mut Bindings,
    cfg: &ModelConfig,
    input: &Tensor,
    z: Option<&Tensor>,
    opts: &ForwardOptions,
    rng: &mut Rng,
) -> Result<(Var, Var)> {
    if input.shape() != [cfg.lookback, cfg.channels] {
        return Err(Error::dim(format!(
            "input stage: lookback must be [{}, {}], got {:?}",
            cfg.lookback,
            cfg.channels,
            input.shape()
        )));
    }
    let future = if cfg.has_future() {
        let z = z.ok_or_else(|| {
            Error::dim(format!(
                "future projection stage: model expects {} future channels but the sample has none",
                cfg.future_channels
            ))
        })?;
        Some(project_future(g, b, cfg, z)?)
    } else {
        None
    };
    let mut means = Vec::with_capacity(cfg.channels);
    let mut vars = Vec::with_capacity(cfg.channels);
    for c in 0..cfg.channels {
        let series = input.column(c)?;
        let mut feats = Vec::with_capacity(cfg.n_scales());
        for (s, spec) in cfg.scales.iter().enumerate() {
            let scaled = scale_transform(&series, spec.window)?;
            let patches = patchify(&scaled, spec.patch_len, spec.stride, s)?.channel(0);
            feats.push(encode_scale(g, b, cfg, s, &patches, opts.mode, rng)?);
        }
        let (m, v) = fuse_and_head(g, b, cfg, &feats, future, opts, rng)?;
        means.push(m);
        vars.push(v);
    }
    if cfg.channels == 1 {
        return Ok((means[0], vars[0]));
    }
    Ok((g.concat_cols(&means)?, g.concat_cols(&vars)?))
}

/// Inference on one window, in instance-normalized units.
pub fn forward(
    sample: &WindowSample,
    params: &ModelParameters,
    cfg: &ModelConfig,
    opts: &ForwardOptions,
    rng: &mut Rng,
) -> Result<GaussianForecast> {
    let mut g = Graph::new();
    let mut b = Bindings::new(params, false);
    let input = sample.model_input();
    let (m, v) = forward_graph(&mut g, &mut b, cfg, &input, sample.z.as_ref(), opts, rng)?;
    Ok(GaussianForecast {
        mean: g.value(m).clone(),
        variance: g.value(v).clone(),
    })
}
